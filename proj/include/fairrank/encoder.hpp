#pragma once

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fairrank/corpus.hpp"
#include "fairrank/parallel.hpp"
#include "fairrank/rng.hpp"

namespace fairrank::encoder {

/// Row-major dense matrix, float64 throughout.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

struct Config {
  std::size_t vocab_buckets = 1u << 16;
  std::size_t d_emb = 64;
  std::size_t d = 128;   // output dimension
  bool shared_towers = true;
  std::uint64_t seed = 1;
};

/// One tower: hashed-BoW embedding table + linear projection.
struct Tower {
  Matrix embedding;   // vocab_buckets x d_emb
  Matrix projection;  // d_emb x d
};

struct Params {
  Config config;
  Tower query;
  Tower passage;  // aliases `query` logically when shared_towers

  Tower& passage_tower() { return config.shared_towers ? query : passage; }
  const Tower& passage_tower() const { return config.shared_towers ? query : passage; }
  std::size_t num_values() const;
};

/// Embeddings uniform(-0.05, 0.05) from a seeded stream; projection is the
/// identity truncated/padded to d_emb x d. Separate towers consume two
/// distinct streams of the same seed.
Params init_params(const Config& config);

/// FNV-1a 64-bit of the token bytes, mod vocab_buckets.
std::uint64_t token_bucket(std::string_view token, std::size_t vocab_buckets);

/// Mean of embedding rows over tokens, then projection. Empty token lists
/// encode to the zero vector. Output has size config.d.
void encode(const Params& params, const Tower& tower,
            const std::vector<std::string>& tokens, double* out);

/// Dot product of query and passage encodings.
double sim(const Params& params, const std::vector<std::string>& query_tokens,
           const std::vector<std::string>& passage_tokens);

/// Scores one bound pair: out[i] = sim(query, candidate i).
void score_pair(const Params& params, const corpus::Collection& coll,
                const corpus::QuerySet& qs, const corpus::BoundPair& pair,
                std::vector<double>& out);

/// Scores every pair. Parallel over pairs with per-pair output slots.
std::vector<std::vector<double>> score_pairs(const Params& params,
                                             const corpus::Collection& coll,
                                             const corpus::QuerySet& qs,
                                             const std::vector<corpus::BoundPair>& pairs,
                                             Exec exec = Exec::parallel);

/// Gradient accumulator shaped like Params.
struct GradBuffer {
  Tower query;
  Tower passage;
  bool shared = true;

  explicit GradBuffer(const Params& params);
  void zero();
  Tower& passage_tower() { return shared ? query : passage; }
};

/// Accumulates d(sim)/d(params) * coeff into grads for one (query, passage)
/// pair. Token bucket collisions accumulate; each token contributes its
/// 1/n_tokens share of the mean.
void backward_sim(const Params& params, const std::vector<std::string>& query_tokens,
                  const std::vector<std::string>& passage_tokens, double coeff,
                  GradBuffer& grads);

// Binary checkpoint: magic "FRNK", format version, config, then row-major
// little-endian float64 matrices. The stream forms let the trainer embed
// params inside its own state files.
void save_params(const Params& params, const std::string& path);
Params load_params(const std::string& path);
void write_params(std::ostream& out, const Params& params);
Params read_params(std::istream& in, const std::string& path);

}  // namespace fairrank::encoder
