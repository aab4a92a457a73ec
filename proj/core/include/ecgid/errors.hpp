#pragma once

#include <stdexcept>
#include <string>

namespace ecgid {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define ECGID_ERROR_CLASS(Name)                                 \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(what) {}     \
  }

// gallery
ECGID_ERROR_CLASS(NormalizationError);
ECGID_ERROR_CLASS(DimensionError);
ECGID_ERROR_CLASS(EmptyGalleryError);

// pipeline
ECGID_ERROR_CLASS(InsufficientSubjects);
ECGID_ERROR_CLASS(DegenerateDistribution);

// metrics
ECGID_ERROR_CLASS(EmptyOutcomeSet);
ECGID_ERROR_CLASS(InsufficientImpostors);
ECGID_ERROR_CLASS(InsufficientSeeds);

// rerank
ECGID_ERROR_CLASS(DegenerateCohort);
ECGID_ERROR_CLASS(AdaptiveCohortTooSmall);

// confidence
ECGID_ERROR_CLASS(SingleClassError);
ECGID_ERROR_CLASS(InsufficientData);
ECGID_ERROR_CLASS(EmptyInput);

// resample
ECGID_ERROR_CLASS(FilterSpecError);
ECGID_ERROR_CLASS(ResampleError);
ECGID_ERROR_CLASS(DegenerateChannel);

// configuration / IO
ECGID_ERROR_CLASS(ConfigError);
ECGID_ERROR_CLASS(ParseError);
ECGID_ERROR_CLASS(IoError);

#undef ECGID_ERROR_CLASS

}  // namespace ecgid
