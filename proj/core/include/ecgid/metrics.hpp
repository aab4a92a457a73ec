#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ecgid/errors.hpp"
#include "ecgid/outcome.hpp"

namespace ecgid {

/// Fraction of queries whose first same-subject candidate ranks within the
/// top K. Queries without a genuine mate are excluded from the denominator.
/// Throws EmptyOutcomeSet when no query has a genuine mate.
double rank_at_k(const std::vector<QueryOutcome>& outcomes, std::uint32_t k);

struct TarResult {
  double tar = 0.0;
  double threshold = 0.0;
  double achieved_far = 0.0;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
};

/// Acceptance threshold for a target false-accept rate: the smallest observed
/// impostor score t such that the fraction of impostor scores >= t is <= far
/// (score >= threshold counts as accept). When even the maximum impostor
/// score admits too many ties, t moves just above the maximum. Throws
/// InsufficientImpostors when fewer than 1/far impostor scores exist.
double far_threshold(const ScoreTail& impostors, double far);

/// TAR at the far_threshold: fraction of genuine scores >= t.
TarResult tar_at_far(const std::vector<double>& genuine_scores,
                     const ScoreTail& impostor_scores, double far);
TarResult tar_at_far(const std::vector<double>& genuine_scores,
                     const std::vector<double>& impostor_scores, double far);

struct IntervalEstimate {
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n_seeds = 0;
  double level = 0.95;

  double lower() const { return mean - half_width; }
  double upper() const { return mean + half_width; }
};

/// Two-sided t-based confidence interval over per-seed values:
/// mean +/- t_{(1+level)/2, n-1} * sd / sqrt(n), sample (n-1) sd.
/// Throws InsufficientSeeds when fewer than two values are given.
IntervalEstimate t_interval(const std::vector<double>& values,
                            double level = 0.95);

/// Retention capacity that keeps far-threshold selection exact for every
/// requested FAR given `n_impostors` total scores.
std::size_t score_tail_capacity(std::size_t n_impostors,
                                const std::vector<double>& fars);

struct MetricBundle {
  std::map<std::uint32_t, double> rank_at;
  std::map<double, TarResult> tar_at;
  std::size_t n_queries = 0;
  std::size_t n_genuine_scores = 0;
  std::size_t n_impostor_scores = 0;
  std::size_t n_no_genuine_mate = 0;
};

MetricBundle compute_metrics(const OutcomeSet& set,
                             const std::vector<std::uint32_t>& ks,
                             const std::vector<double>& fars);

}  // namespace ecgid
