#pragma once

#include <Eigen/Dense>
#include <string>

#include "ecgid/date.hpp"
#include "ecgid/errors.hpp"

namespace ecgid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One embedded recording: identity key, recording key, acquisition date,
/// and the embedding vector.
struct EmbeddingRecord {
  std::string subject_id;
  std::string exam_id;
  Date date;
  Vector embedding;
};

/// Returns v / ||v||_2. Throws NormalizationError when the norm is not a
/// positive finite number (zero vectors, NaN/Inf components).
inline Vector l2_normalize(const Vector& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw NormalizationError("cannot normalize vector with norm " +
                             std::to_string(norm));
  }
  return v / norm;
}

/// Cosine similarity of two equal-dimension vectors.
inline double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: dimension mismatch " +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0) || !std::isfinite(na) || !std::isfinite(nb)) {
    throw NormalizationError("cosine: degenerate input norm");
  }
  return a.dot(b) / (na * nb);
}

/// Dot product of two unit vectors (callers guarantee normalization).
inline double unit_dot(const Vector& a, const Vector& b) { return a.dot(b); }

}  // namespace ecgid
