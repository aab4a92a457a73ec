#include "ecgid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ecgid/parallel.hpp"
#include "ecgid/prng.hpp"

namespace ecgid {
namespace {

constexpr std::int64_t kMinSpacingDays = 30;
constexpr double kDaysPerYear = 365.25;

std::string padded_id(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

Vector gaussian_vector(Rng& rng, Eigen::Index dim) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = gaussian(rng);
  return v;
}

/// Exam days within the span with a guaranteed >= 30-day spacing: sorted
/// uniform draws over the slack, plus a fixed 30-day stride per position.
std::vector<std::int64_t> spaced_days(Rng& rng, std::size_t n,
                                      std::int64_t span_days) {
  const std::int64_t slack =
      span_days - kMinSpacingDays * static_cast<std::int64_t>(n - 1);
  std::vector<std::int64_t> offsets(n);
  for (auto& o : offsets) {
    o = static_cast<std::int64_t>(
        uniform_below(rng, static_cast<std::uint64_t>(slack + 1)));
  }
  std::sort(offsets.begin(), offsets.end());
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i] += kMinSpacingDays * static_cast<std::int64_t>(i);
  }
  return offsets;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects == 0) throw ConfigError("synth: n_subjects must be >= 1");
  if (dim < 2) throw ConfigError("synth: dim must be >= 2");
  if (exams_min < 1 || exams_max < exams_min) {
    throw ConfigError("synth: invalid exams_per_subject range");
  }
  if (intra_noise < 0 || drift_per_year < 0) {
    throw ConfigError("synth: noise and drift must be non-negative");
  }
  const auto needed =
      kMinSpacingDays * static_cast<std::int64_t>(exams_max - 1);
  if (span_days < needed) {
    throw ConfigError("synth: span_days too small for " +
                      std::to_string(exams_max) +
                      " exams at 30-day spacing (need >= " +
                      std::to_string(needed) + ")");
  }
}

SynthOutput generate(const SynthConfig& config, int threads) {
  config.validate();
  const int subject_width =
      std::max(4, static_cast<int>(std::to_string(config.n_subjects).size()));

  std::vector<std::vector<EmbeddingRecord>> per_subject(config.n_subjects);
  parallel_for(0, config.n_subjects, threads, [&](std::size_t s) {
    Rng rng = make_rng(config.seed, {static_cast<std::uint64_t>(s)});
    const std::string subject_id = padded_id("S", s, subject_width);

    const Vector prototype = l2_normalize(gaussian_vector(rng, config.dim));
    const std::size_t n_exams =
        config.exams_min +
        static_cast<std::size_t>(uniform_below(
            rng, config.exams_max - config.exams_min + 1));
    const auto days = spaced_days(rng, n_exams, config.span_days);

    Vector walk = Vector::Zero(config.dim);
    std::vector<EmbeddingRecord>& out = per_subject[s];
    out.reserve(n_exams);
    for (std::size_t e = 0; e < n_exams; ++e) {
      if (e > 0 && config.drift_per_year > 0.0) {
        // Brownian-style drift: one tangent step per exam, scaled by the
        // square root of the elapsed years so dispersion grows linearly in
        // time regardless of how the span is partitioned.
        const double gap_years =
            static_cast<double>(days[e] - days[e - 1]) / kDaysPerYear;
        Vector dir = gaussian_vector(rng, config.dim);
        dir -= dir.dot(prototype) * prototype;
        const double norm = dir.norm();
        if (norm > 0) {
          walk += (config.drift_per_year * std::sqrt(gap_years) / norm) * dir;
        }
      }
      Vector v = prototype + walk;
      if (config.intra_noise > 0.0) {
        v += config.intra_noise * gaussian_vector(rng, config.dim);
      }
      EmbeddingRecord rec;
      rec.subject_id = subject_id;
      rec.exam_id = subject_id + padded_id("E", e, 2);
      rec.date = Date{static_cast<std::int32_t>(config.start_date.days +
                                                days[e])};
      rec.embedding = l2_normalize(v);
      out.push_back(std::move(rec));
    }
  });

  SynthOutput result;
  for (auto& list : per_subject) {
    for (auto& rec : list) {
      ExamMeta meta;
      meta.subject_id = rec.subject_id;
      meta.exam_id = rec.exam_id;
      meta.timestamp = rec.date;
      result.meta.push_back(std::move(meta));
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

}  // namespace ecgid
