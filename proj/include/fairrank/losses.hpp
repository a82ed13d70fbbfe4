#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fairrank/bias.hpp"

namespace fairrank::losses {

/// A data pair annotated with ranking scores R(p) and per-candidate bias
/// labels. Input to every loss and metric.
struct ScoredPair {
  std::string qid;
  std::vector<double> scores;    // R(p), one per candidate
  std::size_t clicked = 0;
  std::vector<int> bias_labels;  // d(p) in {-1, 0, +1}, aligned with scores

  std::size_t k() const { return scores.size(); }
  bias::Group clicked_group() const;
};

struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;  // d value / d scores[j]
};

/// Softmax NLL of the clicked candidate, max-subtracted for stability.
/// grad = softmax(scores) - onehot(clicked).
ValueGrad ranking_loss(const ScoredPair& sp);

/// Normed pairwise ranking fairness of one pair:
///   value = sqrt( (1/n_0) sum_k R+^2 * 1[R+ >= R_k] ),  n_0 = K-1.
/// The sum accumulates one R+^2 term per fired indicator, in candidate
/// order, so the value is bitwise-reproducible against a naive double loop.
/// Indicators are held fixed in the backward pass; the gradient lives only
/// on the clicked score: d value / d R+ = R+ * m / (n_0 * value), and is 0
/// when value = 0. Throws FormatError when K < 2.
ValueGrad nprf(const ScoredPair& sp);

/// Per-group nPRF values of one batch, with indices back into the batch.
struct BatchFairnessState {
  std::vector<double> male_nprfs;
  std::vector<double> female_nprfs;
  std::vector<std::size_t> male_from;
  std::vector<std::size_t> female_from;

  std::size_t n_m() const { return male_nprfs.size(); }
  std::size_t n_f() const { return female_nprfs.size(); }
};

struct GroupGrads {
  double value = 0.0;
  std::vector<double> male;    // d value / d male_nprfs[c]
  std::vector<double> female;  // d value / d female_nprfs[d]
};

/// Pairwise-difference loss: (1/(n_m n_f)) sum_c sum_d (a_c - b_d)^2,
/// accumulated male-major. Zero with zero grads when either group is empty.
GroupGrads pd_loss(const BatchFairnessState& state);

enum class TsFormula { standard_t_squared, literal_paper };

enum class Regularizer { none, pd, ts };
enum class LambdaMode { fixed, trainable };

struct FairnessConfig {
  Regularizer regularizer = Regularizer::none;
  LambdaMode lambda_mode = LambdaMode::fixed;
  double lambda_value = 0.0;
  TsFormula ts_formula = TsFormula::standard_t_squared;
  double denom_epsilon = 1e-8;
  /// Batches where either group has fewer pairs than this contribute zero
  /// fairness loss in total_loss. Direct pd_loss/ts_loss calls are not
  /// gated beyond non-emptiness.
  std::size_t min_group_size = 2;

  void validate() const;  // throws FormatError
};

/// Squared two-sample t statistic between the group nPRF samples. Means and
/// population variances (1/n) are two-pass sums in index order; denom =
/// var_m/n_m + var_f/n_f + eps. standard_t_squared: delta^2 / denom.
/// literal_paper: (delta^2 / sqrt(denom))^2. Zero when a group is empty.
GroupGrads ts_loss(const BatchFairnessState& state, const FairnessConfig& cfg);

/// Collects nPRFs of non-neutral-clicked pairs in batch order. When
/// nprf_grads is non-null it receives each collected pair's nprf gradient,
/// indexed like the batch (neutral slots left empty).
BatchFairnessState collect_nprfs(const std::vector<ScoredPair>& batch,
                                 std::vector<ValueGrad>* nprf_grads = nullptr);

struct TotalLoss {
  double value = 0.0;
  double ranking = 0.0;   // mean NLL over the batch
  double fairness = 0.0;  // regularizer value before lambda
  double lambda = 0.0;    // lambda actually applied
  std::vector<std::vector<double>> score_grads;  // per pair, per candidate
  double lambda_theta_grad = 0.0;  // d value / d theta, trainable mode only
};

/// value = mean ranking NLL + lambda * fairness(nPRFs of gendered pairs).
/// lambda = cfg.lambda_value (fixed) or softplus(lambda_theta) (trainable).
/// The fairness term is zero when either group is smaller than
/// cfg.min_group_size. Score grads compose the regularizer grads through
/// the nprf grads. Throws FormatError on an empty batch.
TotalLoss total_loss(const std::vector<ScoredPair>& batch, const FairnessConfig& cfg,
                     double lambda_theta = 0.0);

double softplus(double x);
double sigmoid(double x);
/// theta with softplus(theta) = y, y > 0.
double inverse_softplus(double y);

}  // namespace fairrank::losses
