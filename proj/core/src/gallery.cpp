#include "ecgid/gallery.hpp"

#include <algorithm>
#include <cmath>

namespace ecgid {

void sort_shortlist(Shortlist& s) {
  std::sort(s.entries.begin(), s.entries.end(), shortlist_less);
}

Gallery::Gallery(std::vector<EmbeddingRecord> records)
    : records_(std::move(records)) {
  if (records_.empty()) return;
  dim_ = records_[0].embedding.size();
  matrix_.resize(dim_, static_cast<Eigen::Index>(records_.size()));
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto& r = records_[i];
    if (r.embedding.size() != dim_) {
      throw DimensionError("gallery: record " + r.exam_id + " has dimension " +
                           std::to_string(r.embedding.size()) + ", expected " +
                           std::to_string(dim_));
    }
    const double norm = r.embedding.norm();
    if (std::abs(norm - 1.0) > 1e-6) r.embedding = l2_normalize(r.embedding);
    if (!index_.emplace(r.exam_id, i).second) {
      throw ParseError("gallery: duplicate exam_id " + r.exam_id);
    }
    matrix_.col(static_cast<Eigen::Index>(i)) = r.embedding;
  }
}

std::size_t Gallery::find(const std::string& exam_id) const {
  auto it = index_.find(exam_id);
  return it == index_.end() ? npos : it->second;
}

Shortlist Gallery::top_k(const Vector& query_unit,
                         const std::string& query_exam_id, std::size_t k,
                         std::size_t exclude_index) const {
  const std::size_t eligible =
      records_.size() - (exclude_index < records_.size() ? 1 : 0);
  if (eligible == 0) {
    throw EmptyGalleryError("top_k: no eligible candidates for query " +
                            query_exam_id);
  }
  if (query_unit.size() != dim_) {
    throw DimensionError("top_k: query dimension " +
                         std::to_string(query_unit.size()) + " vs gallery " +
                         std::to_string(dim_));
  }
  if (k == 0) k = 1;

  const Vector scores = matrix_.transpose() * query_unit;

  // Selection: keep the K best under the (score desc, exam_id asc) order in a
  // heap whose top is the currently-worst kept entry.
  auto worse = [this](const std::pair<double, std::size_t>& a,
                      const std::pair<double, std::size_t>& b) {
    // true when a outranks b, so the heap top is the weakest element.
    if (a.first != b.first) return a.first > b.first;
    return records_[a.second].exam_id < records_[b.second].exam_id;
  };
  std::vector<std::pair<double, std::size_t>> heap;
  const std::size_t keep = std::min(k, eligible);
  heap.reserve(keep + 1);
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (i == exclude_index) continue;
    const std::pair<double, std::size_t> cand{
        scores[static_cast<Eigen::Index>(i)], i};
    if (heap.size() < keep) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), worse);
    } else if (worse(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), worse);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), worse);
    }
  }

  Shortlist out;
  out.query_exam_id = query_exam_id;
  out.entries.resize(heap.size());
  for (std::size_t i = 0; i < heap.size(); ++i) {
    const auto& [score, idx] = heap[i];
    const auto& r = records_[idx];
    out.entries[i] = ShortlistEntry{idx, r.exam_id, r.subject_id, score, score};
  }
  sort_shortlist(out);
  return out;
}

Shortlist Gallery::top_k(const EmbeddingRecord& query, std::size_t k,
                         bool exclude_self) const {
  const std::size_t self = exclude_self ? find(query.exam_id) : npos;
  return top_k(query.embedding, query.exam_id, k, self);
}

}  // namespace ecgid
