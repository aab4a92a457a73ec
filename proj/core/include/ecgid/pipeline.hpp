#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ecgid/date.hpp"
#include "ecgid/errors.hpp"

namespace ecgid {

/// Metadata for one recording: identity, acquisition date, and optional
/// per-recording measurements (rate, intervals, axes) used by range filters.
struct ExamMeta {
  std::string subject_id;
  std::string exam_id;
  Date timestamp;
  std::map<std::string, double> fiducials;
  std::string device;        // empty = unknown
  double sample_rate = 0.0;  // Hz; 0 = unknown
};

/// Inclusive per-feature admissible ranges for fiducial measurements.
struct FiducialRanges {
  std::map<std::string, std::pair<double, double>> bounds;

  /// Extended physiological ranges: intentionally broader than normal values
  /// so diseased-but-real recordings survive while gross measurement errors
  /// are removed.
  static FiducialRanges defaults();

  void validate() const;  // min < max for every feature
};

struct AttritionStep {
  std::string name;
  std::size_t n_exams = 0;
  std::size_t n_subjects = 0;
};

/// Per-filter-step record of surviving exams and subjects.
struct AttritionReport {
  std::vector<AttritionStep> steps;

  void add(std::string name, const std::vector<ExamMeta>& exams);
  std::string to_text() const;
};

/// One same-subject exam pair hitting a calendar-gap target.
struct TemporalPair {
  std::string subject_id;
  std::string exam_a;  // earlier exam
  std::string exam_b;  // later exam
  std::int64_t gap_days = 0;
  int target_years = 0;
};

/// Core eligibility pipeline: per subject, sort chronologically, enforce a
/// >= 30-day spacing between consecutive retained exams (greedy scan keeping
/// the first exam), drop subjects left with fewer than 2 exams, then cap each
/// subject at their 10 earliest exams. Output sorted by subject then date.
std::pair<std::vector<ExamMeta>, AttritionReport> apply_common_pipeline(
    std::vector<ExamMeta> exams);

/// Keeps an exam iff every fiducial it reports lies inside its bound.
/// Missing measurements never exclude. Input order preserved.
std::vector<ExamMeta> apply_fiducial_filter(const std::vector<ExamMeta>& exams,
                                            const FiducialRanges& ranges);

/// At most one pair per subject for the given target (in years): among all
/// chronologically ordered exam pairs whose gap lies within
/// target*365.25 +/- tolerance days, the pair with gap closest to the target
/// wins; ties go to the earlier first exam, then the earlier second exam.
std::vector<TemporalPair> build_temporal_pairs(
    const std::vector<ExamMeta>& exams, int target_years,
    int tolerance_days = 91);

/// Cuts every target's pair list down to exactly `subjects` entries by seeded
/// uniform sampling without replacement (selection independent of input
/// order). Throws InsufficientSubjects when any target has fewer.
std::map<int, std::vector<TemporalPair>> fix_gallery_size(
    const std::map<int, std::vector<TemporalPair>>& pairs_by_target,
    std::size_t subjects, std::uint64_t seed);

/// Proportional stratified subject sampling where a stratum is the number of
/// exams a subject owns. Per-stratum quotas follow exact integer
/// largest-remainder rounding (sum is exactly target_patients); subjects are
/// drawn without replacement with a per-stratum seeded generator. All exams
/// of selected subjects are returned, sorted by subject then date.
std::vector<ExamMeta> stratified_sample(const std::vector<ExamMeta>& exams,
                                        std::size_t target_patients,
                                        std::uint64_t seed);

/// Population moments of a distribution (for exam-count-per-subject checks):
/// mean, biased variance m2, skewness m3/m2^1.5, kurtosis m4/m2^2, and
/// excess kurtosis. Throws DegenerateDistribution when the variance is zero.
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
  double excess = 0.0;
};
Moments distribution_moments(const std::vector<double>& values);

/// Exam counts per subject, for feeding distribution_moments.
std::vector<double> exam_counts_per_subject(const std::vector<ExamMeta>& exams);

/// Metadata file: one record per line,
/// `subject_id<TAB>exam_id<TAB>YYYY-MM-DD<TAB>key=value;...` where the
/// semicolon list carries fiducial measurements plus the reserved keys
/// `device` (string) and `sample_rate` (Hz). The fourth field may be empty.
std::vector<ExamMeta> load_exam_meta(const std::string& path);
void save_exam_meta(const std::string& path,
                    const std::vector<ExamMeta>& exams);

/// Range file: `feature<TAB>min<TAB>max` per line; '#' comments allowed.
FiducialRanges load_fiducial_ranges(const std::string& path);

}  // namespace ecgid
