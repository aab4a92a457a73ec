#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ecgid {

/// Result of one leave-one-out query: where the first same-subject candidate
/// landed, plus the top-two ranked scores (calibrator features) and the
/// top-ranked candidate's subject.
struct QueryOutcome {
  std::string query_exam_id;
  std::string query_subject_id;
  /// Rank (1-based) of the highest-ranked same-subject candidate; empty when
  /// the query subject has no other exam in the candidate set.
  std::optional<std::uint32_t> rank_of_first_genuine;
  double s1 = std::numeric_limits<double>::quiet_NaN();
  double s2 = std::numeric_limits<double>::quiet_NaN();
  std::string top1_subject_id;

  bool top1_correct() const { return top1_subject_id == query_subject_id; }
};

/// Exact upper tail of a large score multiset under a retention capacity.
/// Keeps the `capacity` largest values verbatim and enough bookkeeping about
/// evicted values (their maximum and its multiplicity) that upper-quantile
/// thresholds with tie handling stay exact. Merging is a pure function of the
/// combined multiset, so chunked parallel accumulation is deterministic.
class ScoreTail {
 public:
  ScoreTail() : ScoreTail(std::numeric_limits<std::size_t>::max()) {}
  explicit ScoreTail(std::size_t capacity) : capacity_(capacity) {}

  void add(double s);
  void merge(const ScoreTail& other);

  std::size_t total() const { return total_; }
  std::size_t capacity() const { return capacity_; }
  double evicted_max() const { return evicted_max_; }
  std::size_t evicted_max_count() const { return evicted_max_count_; }
  bool complete() const { return total_ <= capacity_; }

  /// Retained values sorted ascending.
  std::vector<double> sorted() const;

  /// Exact number of accumulated values >= t; t must be at least the smallest
  /// retained value (guaranteed for upper-quantile thresholds).
  std::size_t count_at_or_above(double t) const;

 private:
  void evict(double s);

  std::size_t capacity_;
  std::size_t total_ = 0;
  std::vector<double> heap_;  // min-heap of retained values
  double evicted_max_ = -std::numeric_limits<double>::infinity();
  std::size_t evicted_max_count_ = 0;
};

/// Everything a protocol run produces for one candidate set: per-query
/// outcomes plus the genuine/impostor score pools feeding TAR@FAR.
struct OutcomeSet {
  std::vector<QueryOutcome> outcomes;
  std::vector<double> genuine_scores;
  ScoreTail impostor_scores;
  std::size_t n_no_genuine_mate = 0;
};

}  // namespace ecgid
