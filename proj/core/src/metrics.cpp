#include "ecgid/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace ecgid {

void ScoreTail::evict(double s) {
  if (s > evicted_max_) {
    evicted_max_ = s;
    evicted_max_count_ = 1;
  } else if (s == evicted_max_) {
    ++evicted_max_count_;
  }
}

void ScoreTail::add(double s) {
  ++total_;
  if (heap_.size() < capacity_) {
    heap_.push_back(s);
    std::push_heap(heap_.begin(), heap_.end(), std::greater<double>{});
    return;
  }
  if (capacity_ == 0 || s <= heap_.front()) {
    evict(s);
    return;
  }
  std::pop_heap(heap_.begin(), heap_.end(), std::greater<double>{});
  evict(heap_.back());
  heap_.back() = s;
  std::push_heap(heap_.begin(), heap_.end(), std::greater<double>{});
}

void ScoreTail::merge(const ScoreTail& other) {
  // Kept values re-added one by one; other's evicted multiset is summarized
  // by (max, multiplicity), which folds exactly because every value this
  // side later evicts is >= other's evicted maximum or compared against it.
  for (double s : other.heap_) add(s);
  total_ += other.total_ - other.heap_.size();
  if (other.evicted_max_ > evicted_max_) {
    evicted_max_ = other.evicted_max_;
    evicted_max_count_ = other.evicted_max_count_;
  } else if (other.evicted_max_ == evicted_max_ &&
             other.evicted_max_count_ > 0) {
    evicted_max_count_ += other.evicted_max_count_;
  }
}

std::vector<double> ScoreTail::sorted() const {
  std::vector<double> v = heap_;
  std::sort(v.begin(), v.end());
  return v;
}

std::size_t ScoreTail::count_at_or_above(double t) const {
  std::size_t n = 0;
  for (double s : heap_) {
    if (s >= t) ++n;
  }
  if (t <= evicted_max_) {
    // Valid only at or above the retention boundary, where evicted values can
    // tie the boundary but never exceed it.
    n += evicted_max_count_;
  }
  return n;
}

double rank_at_k(const std::vector<QueryOutcome>& outcomes, std::uint32_t k) {
  std::size_t with_mate = 0;
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    if (!o.rank_of_first_genuine) continue;
    ++with_mate;
    if (*o.rank_of_first_genuine <= k) ++hits;
  }
  if (with_mate == 0) {
    throw EmptyOutcomeSet("rank_at_k: no query has a genuine mate");
  }
  return static_cast<double>(hits) / static_cast<double>(with_mate);
}

double far_threshold(const ScoreTail& impostors, double far) {
  const std::size_t m_total = impostors.total();
  if (m_total == 0) throw EmptyInput("far_threshold: no impostor scores");
  const double scaled = far * static_cast<double>(m_total);
  // Tiny nudge so a product that is mathematically integral is not floored
  // down by floating-point rounding.
  const auto allowed = static_cast<std::size_t>(std::floor(scaled + 1e-9));
  if (allowed < 1) {
    throw InsufficientImpostors(
        "far_threshold: " + std::to_string(m_total) +
        " impostor scores cannot resolve FAR " + std::to_string(far));
  }

  const std::vector<double> kept = impostors.sorted();
  if (kept.size() < allowed + 1 && !impostors.complete()) {
    throw Error("far_threshold: retention capacity too small for FAR " +
                std::to_string(far));
  }

  // Candidate: the allowed-th largest score. Accepting at it admits exactly
  // `allowed` impostors unless ties spill past the boundary.
  std::size_t idx = kept.size() >= allowed ? kept.size() - allowed : 0;
  double t = kept[idx];
  if (impostors.count_at_or_above(t) > allowed) {
    // Ties cross the boundary: move to the next strictly greater observed
    // score, which admits at most allowed-1 impostors.
    while (idx < kept.size() && kept[idx] == t) ++idx;
    t = idx < kept.size()
            ? kept[idx]
            : std::nextafter(kept.back(),
                             std::numeric_limits<double>::infinity());
  }
  return t;
}

TarResult tar_at_far(const std::vector<double>& genuine_scores,
                     const ScoreTail& impostor_scores, double far) {
  if (genuine_scores.empty()) {
    throw EmptyInput("tar_at_far: no genuine scores");
  }
  TarResult r;
  r.threshold = far_threshold(impostor_scores, far);
  r.n_genuine = genuine_scores.size();
  r.n_impostor = impostor_scores.total();
  std::size_t accepted = 0;
  for (double s : genuine_scores) {
    if (s >= r.threshold) ++accepted;
  }
  r.tar = static_cast<double>(accepted) / static_cast<double>(r.n_genuine);
  r.achieved_far =
      static_cast<double>(impostor_scores.count_at_or_above(r.threshold)) /
      static_cast<double>(r.n_impostor);
  return r;
}

TarResult tar_at_far(const std::vector<double>& genuine_scores,
                     const std::vector<double>& impostor_scores, double far) {
  ScoreTail tail;
  for (double s : impostor_scores) tail.add(s);
  return tar_at_far(genuine_scores, tail, far);
}

IntervalEstimate t_interval(const std::vector<double>& values, double level) {
  if (values.size() < 2) {
    throw InsufficientSeeds("t_interval: need >= 2 values, got " +
                            std::to_string(values.size()));
  }
  const auto n = static_cast<double>(values.size());
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  boost::math::students_t_distribution<double> dist(n - 1.0);
  const double tq = boost::math::quantile(dist, 0.5 + level / 2.0);
  IntervalEstimate e;
  e.mean = mean;
  e.half_width = tq * sd / std::sqrt(n);
  e.n_seeds = values.size();
  e.level = level;
  return e;
}

std::size_t score_tail_capacity(std::size_t n_impostors,
                                const std::vector<double>& fars) {
  std::size_t need = 2;
  for (double far : fars) {
    const double scaled = far * static_cast<double>(n_impostors);
    const auto allowed = static_cast<std::size_t>(std::floor(scaled + 1e-9));
    need = std::max(need, allowed + 2);
  }
  return std::min(need, n_impostors > 0 ? n_impostors : need);
}

MetricBundle compute_metrics(const OutcomeSet& set,
                             const std::vector<std::uint32_t>& ks,
                             const std::vector<double>& fars) {
  MetricBundle b;
  b.n_queries = set.outcomes.size();
  b.n_genuine_scores = set.genuine_scores.size();
  b.n_impostor_scores = set.impostor_scores.total();
  b.n_no_genuine_mate = set.n_no_genuine_mate;
  for (std::uint32_t k : ks) b.rank_at[k] = rank_at_k(set.outcomes, k);
  for (double far : fars) {
    b.tar_at[far] = tar_at_far(set.genuine_scores, set.impostor_scores, far);
  }
  return b;
}

}  // namespace ecgid
