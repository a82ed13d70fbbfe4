#include "fairrank/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fairrank/errors.hpp"

namespace fairrank::losses {

bias::Group ScoredPair::clicked_group() const {
  if (clicked >= bias_labels.size()) return bias::Group::neutral;
  const int label = bias_labels[clicked];
  return label > 0 ? bias::Group::male
                   : (label < 0 ? bias::Group::female : bias::Group::neutral);
}

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) {
  if (y <= 0.0) throw FormatError("inverse_softplus needs y > 0");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

void FairnessConfig::validate() const {
  if (lambda_value < 0.0) throw FormatError("lambda must be >= 0");
  if (!(denom_epsilon > 0.0)) throw FormatError("denom_epsilon must be > 0");
}

ValueGrad ranking_loss(const ScoredPair& sp) {
  const std::size_t k = sp.k();
  if (k < 2) throw FormatError("ranking_loss needs K >= 2");
  if (sp.clicked >= k) throw FormatError("clicked index out of range");
  ValueGrad out;
  out.grad.assign(k, 0.0);
  const double mx = *std::max_element(sp.scores.begin(), sp.scores.end());
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j) z += std::exp(sp.scores[j] - mx);
  out.value = std::log(z) - (sp.scores[sp.clicked] - mx);
  for (std::size_t j = 0; j < k; ++j) out.grad[j] = std::exp(sp.scores[j] - mx) / z;
  out.grad[sp.clicked] -= 1.0;
  return out;
}

ValueGrad nprf(const ScoredPair& sp) {
  const std::size_t k = sp.k();
  if (k < 2) throw FormatError("nprf needs K >= 2");
  if (sp.clicked >= k) throw FormatError("clicked index out of range");
  ValueGrad out;
  out.grad.assign(k, 0.0);
  const double rj = sp.scores[sp.clicked];
  const double rj2 = rj * rj;
  double acc = 0.0;
  std::size_t m = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (j == sp.clicked) continue;
    if (rj >= sp.scores[j]) {
      acc += rj2;  // one term per fired indicator, candidate order
      ++m;
    }
  }
  const double n0 = static_cast<double>(k - 1);
  out.value = std::sqrt(acc / n0);
  if (out.value > 0.0)
    out.grad[sp.clicked] = rj * static_cast<double>(m) / (n0 * out.value);
  return out;
}

GroupGrads pd_loss(const BatchFairnessState& state) {
  GroupGrads out;
  const std::size_t nm = state.n_m(), nf = state.n_f();
  out.male.assign(nm, 0.0);
  out.female.assign(nf, 0.0);
  if (nm == 0 || nf == 0) return out;
  const double denom = static_cast<double>(nm) * static_cast<double>(nf);
  double acc = 0.0;
  for (std::size_t c = 0; c < nm; ++c) {
    double gsum = 0.0;
    for (std::size_t d = 0; d < nf; ++d) {
      const double diff = state.male_nprfs[c] - state.female_nprfs[d];
      acc += diff * diff;
      gsum += diff;
      out.female[d] -= 2.0 * diff / denom;
    }
    out.male[c] = 2.0 * gsum / denom;
  }
  out.value = acc / denom;
  return out;
}

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population (1/n)
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / n;
  double v = 0.0;
  for (double x : xs) {
    const double d = x - m.mean;
    v += d * d;
  }
  m.var = v / n;
  return m;
}

}  // namespace

GroupGrads ts_loss(const BatchFairnessState& state, const FairnessConfig& cfg) {
  GroupGrads out;
  const std::size_t nm = state.n_m(), nf = state.n_f();
  out.male.assign(nm, 0.0);
  out.female.assign(nf, 0.0);
  if (nm == 0 || nf == 0) return out;

  const auto mm = moments(state.male_nprfs);
  const auto mf = moments(state.female_nprfs);
  const double dnm = static_cast<double>(nm), dnf = static_cast<double>(nf);
  const double delta = mm.mean - mf.mean;
  const double num = delta * delta;
  const double denom = mm.var / dnm + mf.var / dnf + cfg.denom_epsilon;

  double dv_dnum, dv_ddenom;
  if (cfg.ts_formula == TsFormula::standard_t_squared) {
    out.value = num / denom;
    dv_dnum = 1.0 / denom;
    dv_ddenom = -num / (denom * denom);
  } else {
    const double q = num / std::sqrt(denom);
    out.value = q * q;
    dv_dnum = 2.0 * q / std::sqrt(denom);
    dv_ddenom = -q * num / (denom * std::sqrt(denom));
  }

  // num = (mu_m - mu_f)^2; d mu_m/d a_c = 1/n_m. var terms: d var/d x_c =
  // 2(x_c - mu)/n, so d denom/d a_c = 2(a_c - mu_m)/n_m^2.
  for (std::size_t c = 0; c < nm; ++c) {
    const double dnum = 2.0 * delta / dnm;
    const double ddenom = 2.0 * (state.male_nprfs[c] - mm.mean) / (dnm * dnm);
    out.male[c] = dv_dnum * dnum + dv_ddenom * ddenom;
  }
  for (std::size_t d = 0; d < nf; ++d) {
    const double dnum = -2.0 * delta / dnf;
    const double ddenom = 2.0 * (state.female_nprfs[d] - mf.mean) / (dnf * dnf);
    out.female[d] = dv_dnum * dnum + dv_ddenom * ddenom;
  }
  return out;
}

BatchFairnessState collect_nprfs(const std::vector<ScoredPair>& batch,
                                 std::vector<ValueGrad>* nprf_grads) {
  BatchFairnessState state;
  if (nprf_grads) nprf_grads->assign(batch.size(), ValueGrad{});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto g = batch[i].clicked_group();
    if (g == bias::Group::neutral) continue;
    auto vg = nprf(batch[i]);
    if (g == bias::Group::male) {
      state.male_nprfs.push_back(vg.value);
      state.male_from.push_back(i);
    } else {
      state.female_nprfs.push_back(vg.value);
      state.female_from.push_back(i);
    }
    if (nprf_grads) (*nprf_grads)[i] = std::move(vg);
  }
  return state;
}

TotalLoss total_loss(const std::vector<ScoredPair>& batch, const FairnessConfig& cfg,
                     double lambda_theta) {
  if (batch.empty()) throw FormatError("total_loss needs a non-empty batch");
  cfg.validate();

  TotalLoss out;
  out.score_grads.resize(batch.size());

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double nll_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto vg = ranking_loss(batch[i]);
    nll_sum += vg.value;
    out.score_grads[i] = std::move(vg.grad);
    for (auto& g : out.score_grads[i]) g *= inv_b;
  }
  out.ranking = nll_sum * inv_b;
  out.value = out.ranking;

  out.lambda = cfg.lambda_mode == LambdaMode::trainable ? softplus(lambda_theta)
                                                        : cfg.lambda_value;
  if (cfg.regularizer == Regularizer::none) return out;

  std::vector<ValueGrad> nprf_grads;
  auto state = collect_nprfs(batch, &nprf_grads);
  if (state.n_m() < cfg.min_group_size || state.n_f() < cfg.min_group_size) return out;

  GroupGrads fair = cfg.regularizer == Regularizer::pd ? pd_loss(state) : ts_loss(state, cfg);
  out.fairness = fair.value;
  out.value = out.ranking + out.lambda * out.fairness;

  auto chain = [&](const std::vector<std::size_t>& from, const std::vector<double>& grads) {
    for (std::size_t c = 0; c < from.size(); ++c) {
      const std::size_t i = from[c];
      const auto& ng = nprf_grads[i].grad;
      const double coeff = out.lambda * grads[c];
      for (std::size_t j = 0; j < ng.size(); ++j) out.score_grads[i][j] += coeff * ng[j];
    }
  };
  chain(state.male_from, fair.male);
  chain(state.female_from, fair.female);

  if (cfg.lambda_mode == LambdaMode::trainable)
    out.lambda_theta_grad = out.fairness * sigmoid(lambda_theta);
  return out;
}

}  // namespace fairrank::losses
