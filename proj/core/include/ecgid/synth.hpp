#pragma once

#include <cstdint>
#include <vector>

#include "ecgid/embedding.hpp"
#include "ecgid/pipeline.hpp"

namespace ecgid {

/// Ground-truth-controlled gallery generator: per subject a random unit
/// prototype, per exam a drifted and noise-perturbed copy.
struct SynthConfig {
  std::size_t n_subjects = 100;
  std::size_t exams_min = 2;
  std::size_t exams_max = 5;
  Eigen::Index dim = 64;
  double intra_noise = 0.05;      // gaussian perturbation scale per component
  double drift_per_year = 0.0;    // tangent random-walk step per sqrt(year)
  Date start_date = Date{16436};  // 2015-01-01
  std::int64_t span_days = 2000;  // exam dates drawn within this window
  std::uint64_t seed = 42;

  void validate() const;
};

struct SynthOutput {
  std::vector<EmbeddingRecord> records;
  std::vector<ExamMeta> meta;
};

/// Deterministic for a given config at any thread count: each subject owns a
/// generator derived from (seed, subject index) and writes to its own slot.
SynthOutput generate(const SynthConfig& config, int threads = 1);

}  // namespace ecgid
