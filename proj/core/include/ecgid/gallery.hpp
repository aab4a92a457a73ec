#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "ecgid/embedding.hpp"

namespace ecgid {

/// One shortlist row: candidate identity plus the raw retrieval score and the
/// score currently used for ordering (rerankers rewrite current_score only).
struct ShortlistEntry {
  std::size_t gallery_index = 0;
  std::string exam_id;
  std::string subject_id;
  double raw_score = 0.0;
  double current_score = 0.0;
};

/// Top-K candidates for one query, kept sorted by current_score descending
/// with ties broken by ascending candidate exam_id.
struct Shortlist {
  std::string query_exam_id;
  std::vector<ShortlistEntry> entries;
};

/// Orders a before b when a outranks b: higher score first, then lexically
/// smaller exam_id. A total order, so results never depend on scan order.
inline bool shortlist_less(const ShortlistEntry& a, const ShortlistEntry& b) {
  if (a.current_score != b.current_score) return a.current_score > b.current_score;
  return a.exam_id < b.exam_id;
}

/// Re-establishes the Shortlist ordering invariant after scores change.
void sort_shortlist(Shortlist& s);

/// Immutable store of unit-norm embeddings with exact cosine search.
class Gallery {
 public:
  Gallery() = default;

  /// Takes ownership of records; normalizes every vector, checks dimension
  /// uniformity and exam_id uniqueness.
  explicit Gallery(std::vector<EmbeddingRecord> records);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  Eigen::Index dim() const { return dim_; }

  const EmbeddingRecord& record(std::size_t i) const { return records_[i]; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }

  /// dim x size column-major matrix of unit vectors (column i = record i).
  const Matrix& matrix() const { return matrix_; }

  /// Position of exam_id, or npos when absent.
  std::size_t find(const std::string& exam_id) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Exact top-K cosine search for a unit-norm query vector. exclude_index
  /// (pass npos to disable) removes one gallery position from the candidate
  /// set — leave-one-out by exam identity, not vector value.
  Shortlist top_k(const Vector& query_unit, const std::string& query_exam_id,
                  std::size_t k, std::size_t exclude_index = npos) const;

  /// Convenience overload: query by a record, excluding its own exam_id when
  /// exclude_self is set and the exam is present in the gallery.
  Shortlist top_k(const EmbeddingRecord& query, std::size_t k,
                  bool exclude_self) const;

 private:
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  Matrix matrix_;
  Eigen::Index dim_ = 0;
};

}  // namespace ecgid
