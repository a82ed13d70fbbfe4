#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fairrank::trainer {

struct GradCheckEntry {
  std::string name;           // which loss / gradient path
  std::size_t checked = 0;    // fixtures evaluated
  std::size_t skipped = 0;    // fixtures rejected near indicator flips
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  double tolerance = 1e-5;
  std::vector<GradCheckEntry> entries;

  bool all_ok() const;
  double worst() const;
};

/// Compares every analytic gradient (encoder sim, ranking loss, nPRF, PD,
/// TS in both formulas, total loss, trainable lambda) against central
/// finite differences (h = 1e-5) on random fixtures. Fixtures where any
/// (R+, R_k) sits within 1e-3 of an indicator flip, or |R+| < 1e-3, are
/// regenerated. Relative error uses max(|analytic|, |numeric|, 1e-2) as
/// denominator. Deterministic per seed.
GradCheckReport grad_check(std::uint64_t seed, std::size_t fixtures_per_loss = 120);

void print_report(const GradCheckReport& report, std::ostream& out);

}  // namespace fairrank::trainer
