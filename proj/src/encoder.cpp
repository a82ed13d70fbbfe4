#include "fairrank/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fairrank/errors.hpp"

namespace fairrank::encoder {

std::size_t Params::num_values() const {
  std::size_t n = query.embedding.data.size() + query.projection.data.size();
  if (!config.shared_towers) n += passage.embedding.data.size() + passage.projection.data.size();
  return n;
}

namespace {

void fill_embedding(Matrix& m, Rng& rng) {
  for (auto& x : m.data) x = rng.uniform(-0.05, 0.05);
}

void identity_projection(Matrix& m) {
  m.zero();
  std::size_t diag = std::min(m.rows, m.cols);
  for (std::size_t i = 0; i < diag; ++i) m.at(i, i) = 1.0;
}

Tower make_tower(const Config& c, Rng rng) {
  Tower t;
  t.embedding = Matrix(c.vocab_buckets, c.d_emb);
  t.projection = Matrix(c.d_emb, c.d);
  fill_embedding(t.embedding, rng);
  identity_projection(t.projection);
  return t;
}

}  // namespace

Params init_params(const Config& config) {
  if (config.d == 0 || config.d_emb == 0 || config.vocab_buckets == 0)
    throw FormatError("encoder dimensions must be positive");
  Params p;
  p.config = config;
  Rng root(config.seed);
  p.query = make_tower(config, root.fork(0));
  if (!config.shared_towers) p.passage = make_tower(config, root.fork(1));
  return p;
}

std::uint64_t token_bucket(std::string_view token, std::size_t vocab_buckets) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h % vocab_buckets;
}

namespace {

// mean embedding over buckets; out_mean has size d_emb
void mean_embedding(const Tower& tower, const std::vector<std::uint64_t>& buckets,
                    double* out_mean, std::size_t d_emb) {
  std::fill(out_mean, out_mean + d_emb, 0.0);
  if (buckets.empty()) return;
  for (auto b : buckets) {
    const double* row = tower.embedding.row(b);
    for (std::size_t i = 0; i < d_emb; ++i) out_mean[i] += row[i];
  }
  const double inv = 1.0 / static_cast<double>(buckets.size());
  for (std::size_t i = 0; i < d_emb; ++i) out_mean[i] *= inv;
}

void project(const Tower& tower, const double* mean, double* out, std::size_t d_emb,
             std::size_t d) {
  std::fill(out, out + d, 0.0);
  for (std::size_t i = 0; i < d_emb; ++i) {
    const double m = mean[i];
    if (m == 0.0) continue;
    const double* row = tower.projection.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] += m * row[j];
  }
}

std::vector<std::uint64_t> bucketize(const std::vector<std::string>& tokens,
                                     std::size_t vocab_buckets) {
  std::vector<std::uint64_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(token_bucket(t, vocab_buckets));
  return out;
}

}  // namespace

void encode(const Params& params, const Tower& tower,
            const std::vector<std::string>& tokens, double* out) {
  const auto& c = params.config;
  std::vector<double> mean(c.d_emb);
  mean_embedding(tower, bucketize(tokens, c.vocab_buckets), mean.data(), c.d_emb);
  project(tower, mean.data(), out, c.d_emb, c.d);
}

double sim(const Params& params, const std::vector<std::string>& query_tokens,
           const std::vector<std::string>& passage_tokens) {
  const auto& c = params.config;
  std::vector<double> zq(c.d), zp(c.d);
  encode(params, params.query, query_tokens, zq.data());
  encode(params, params.passage_tower(), passage_tokens, zp.data());
  double s = 0.0;
  for (std::size_t j = 0; j < c.d; ++j) s += zq[j] * zp[j];
  return s;
}

void score_pair(const Params& params, const corpus::Collection& coll,
                const corpus::QuerySet& qs, const corpus::BoundPair& pair,
                std::vector<double>& out) {
  const auto& c = params.config;
  const auto& q = qs.items[pair.query];
  std::vector<double> zq(c.d), zp(c.d);
  encode(params, params.query, q.tokens, zq.data());
  out.resize(pair.candidates.size());
  for (std::size_t j = 0; j < pair.candidates.size(); ++j) {
    encode(params, params.passage_tower(), coll.items[pair.candidates[j]].tokens, zp.data());
    double s = 0.0;
    for (std::size_t t = 0; t < c.d; ++t) s += zq[t] * zp[t];
    out[j] = s;
  }
}

std::vector<std::vector<double>> score_pairs(const Params& params,
                                             const corpus::Collection& coll,
                                             const corpus::QuerySet& qs,
                                             const std::vector<corpus::BoundPair>& pairs,
                                             Exec exec) {
  std::vector<std::vector<double>> scores(pairs.size());
  for_each_index(exec, pairs.size(), [&](std::size_t i) {
    score_pair(params, coll, qs, pairs[i], scores[i]);
  });
  return scores;
}

GradBuffer::GradBuffer(const Params& params) : shared(params.config.shared_towers) {
  const auto& c = params.config;
  query.embedding = Matrix(c.vocab_buckets, c.d_emb);
  query.projection = Matrix(c.d_emb, c.d);
  if (!shared) {
    passage.embedding = Matrix(c.vocab_buckets, c.d_emb);
    passage.projection = Matrix(c.d_emb, c.d);
  }
}

void GradBuffer::zero() {
  query.embedding.zero();
  query.projection.zero();
  if (!shared) {
    passage.embedding.zero();
    passage.projection.zero();
  }
}

void backward_sim(const Params& params, const std::vector<std::string>& query_tokens,
                  const std::vector<std::string>& passage_tokens, double coeff,
                  GradBuffer& grads) {
  if (coeff == 0.0) return;
  const auto& c = params.config;
  const Tower& qt = params.query;
  const Tower& pt = params.passage_tower();
  Tower& gq = grads.query;
  Tower& gp = grads.passage_tower();

  auto qb = bucketize(query_tokens, c.vocab_buckets);
  auto pb = bucketize(passage_tokens, c.vocab_buckets);

  std::vector<double> mq(c.d_emb), mp(c.d_emb), zq(c.d), zp(c.d);
  mean_embedding(qt, qb, mq.data(), c.d_emb);
  mean_embedding(pt, pb, mp.data(), c.d_emb);
  project(qt, mq.data(), zq.data(), c.d_emb, c.d);
  project(pt, mp.data(), zp.data(), c.d_emb, c.d);

  // d sim / d P_q = mq^T zp ; d sim / d P_p = mp^T zq
  for (std::size_t i = 0; i < c.d_emb; ++i) {
    double* gq_row = gq.projection.row(i);
    const double cm = coeff * mq[i];
    if (cm != 0.0)
      for (std::size_t j = 0; j < c.d; ++j) gq_row[j] += cm * zp[j];
  }
  for (std::size_t i = 0; i < c.d_emb; ++i) {
    double* gp_row = gp.projection.row(i);
    const double cm = coeff * mp[i];
    if (cm != 0.0)
      for (std::size_t j = 0; j < c.d; ++j) gp_row[j] += cm * zq[j];
  }

  // d sim / d mean_q = P_q zp, spread over the query's token rows; same for
  // the passage side with P_p zq.
  if (!qb.empty()) {
    std::vector<double> dmq(c.d_emb);
    for (std::size_t i = 0; i < c.d_emb; ++i) {
      const double* row = qt.projection.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < c.d; ++j) s += row[j] * zp[j];
      dmq[i] = s;
    }
    const double scale = coeff / static_cast<double>(qb.size());
    for (auto b : qb) {
      double* grow = gq.embedding.row(b);
      for (std::size_t i = 0; i < c.d_emb; ++i) grow[i] += scale * dmq[i];
    }
  }
  if (!pb.empty()) {
    std::vector<double> dmp(c.d_emb);
    for (std::size_t i = 0; i < c.d_emb; ++i) {
      const double* row = pt.projection.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < c.d; ++j) s += row[j] * zq[j];
      dmp[i] = s;
    }
    const double scale = coeff / static_cast<double>(pb.size());
    for (auto b : pb) {
      double* grow = gp.embedding.row(b);
      for (std::size_t i = 0; i < c.d_emb; ++i) grow[i] += scale * dmp[i];
    }
  }
}

namespace {

constexpr char kMagic[4] = {'F', 'R', 'N', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError(path + ": truncated checkpoint");
  return v;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  put<std::uint64_t>(out, m.rows);
  put<std::uint64_t>(out, m.cols);
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

Matrix get_matrix(std::istream& in, const std::string& path) {
  auto rows = get<std::uint64_t>(in, path);
  auto cols = get<std::uint64_t>(in, path);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!in) throw FormatError(path + ": truncated checkpoint");
  for (double x : m.data)
    if (!std::isfinite(x)) throw FormatError(path + ": non-finite parameter");
  return m;
}

}  // namespace

void write_params(std::ostream& out, const Params& params) {
  out.write(kMagic, 4);
  put(out, kVersion);
  put<std::uint64_t>(out, params.config.vocab_buckets);
  put<std::uint64_t>(out, params.config.d_emb);
  put<std::uint64_t>(out, params.config.d);
  put<std::uint8_t>(out, params.config.shared_towers ? 1 : 0);
  put<std::uint64_t>(out, params.config.seed);
  put_matrix(out, params.query.embedding);
  put_matrix(out, params.query.projection);
  if (!params.config.shared_towers) {
    put_matrix(out, params.passage.embedding);
    put_matrix(out, params.passage.projection);
  }
}

Params read_params(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": not a checkpoint file");
  auto version = get<std::uint32_t>(in, path);
  if (version != kVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  Params p;
  p.config.vocab_buckets = get<std::uint64_t>(in, path);
  p.config.d_emb = get<std::uint64_t>(in, path);
  p.config.d = get<std::uint64_t>(in, path);
  p.config.shared_towers = get<std::uint8_t>(in, path) != 0;
  p.config.seed = get<std::uint64_t>(in, path);
  p.query.embedding = get_matrix(in, path);
  p.query.projection = get_matrix(in, path);
  if (!p.config.shared_towers) {
    p.passage.embedding = get_matrix(in, path);
    p.passage.projection = get_matrix(in, path);
  }
  return p;
}

void save_params(const Params& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_params(out, params);
  if (!out) throw FormatError("failed writing " + path);
}

Params load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_params(in, path);
}

}  // namespace fairrank::encoder
