#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ecgid/errors.hpp"
#include "ecgid/outcome.hpp"

namespace ecgid {

/// One labeled sample for confidence calibration: the top-two ranked scores of
/// a query and whether its top-1 candidate had the right identity.
struct CalibrationSample {
  std::string subject_id;
  double s1 = 0.0;
  double s2 = 0.0;
  bool y = false;
};

/// Two-feature logistic model mapping (s1, s2) to P(top-1 correct).
/// Features are standardized with statistics estimated on the calibration
/// subset only; the bias is not regularized.
struct Calibrator {
  std::array<double, 2> mu{0.0, 0.0};
  std::array<double, 2> sigma{1.0, 1.0};
  std::array<double, 2> w{0.0, 0.0};
  double b = 0.0;
  double l2_lambda = 1e-2;
  std::uint64_t split_seed = 0;
  int ece_bins = 15;
};

/// Coverage/error at one confidence threshold. `error` is NaN when nothing is
/// covered: the conditional error rate has an empty denominator.
struct SelectivePoint {
  double tau = 0.0;
  double coverage = 0.0;
  double error = 0.0;
};

/// Full confidence evaluation of one (p, y) set.
struct ConfidenceReport {
  double acc_at_half = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  double conf_mean = 0.0;
  double conf_mean_y1 = 0.0;  ///< mean confidence on correct decisions
  double conf_mean_y0 = 0.0;  ///< mean confidence on incorrect decisions
  double delta = 0.0;         ///< conf_mean_y1 - conf_mean_y0
  std::vector<SelectivePoint> selective;
};

/// Converts per-query outcomes into calibration samples. Outcomes whose
/// top-two scores are not finite (queries that faced fewer than two
/// candidates) are skipped.
std::vector<CalibrationSample> to_samples(
    const std::vector<QueryOutcome>& outcomes);

/// Deterministic subject-disjoint stratified split into (calibration,
/// evaluation). Subjects are stratified by whether the majority of their
/// queries were correct, shuffled with a seed-derived generator per stratum,
/// and divided so each side keeps roughly `calibration_fraction` of every
/// stratum (at least one subject per stratum per side). Sample order within
/// each half follows the input order.
/// Throws InsufficientData when a non-empty stratum has fewer than 2 subjects.
std::pair<std::vector<CalibrationSample>, std::vector<CalibrationSample>>
split_calibration(const std::vector<CalibrationSample>& samples,
                  std::uint64_t seed, double calibration_fraction = 0.5);

std::pair<std::vector<CalibrationSample>, std::vector<CalibrationSample>>
split_calibration(const std::vector<QueryOutcome>& outcomes,
                  std::uint64_t seed, double calibration_fraction = 0.5);

/// Regularized mean cross-entropy of `cal` on `samples`:
///   (1/n) sum CE_i + l2_lambda * (w1^2 + w2^2).
/// Evaluated at the calibrator's current parameters, standardizing with its
/// stored mu/sigma. Throws EmptyInput on an empty sample list.
double calibration_objective(const std::vector<CalibrationSample>& samples,
                             const Calibrator& cal);

/// Gradient of calibration_objective with respect to (w1, w2, b).
std::array<double, 3> calibration_gradient(
    const std::vector<CalibrationSample>& samples, const Calibrator& cal);

/// Fits the calibrator on `samples` by full-batch Newton descent with
/// backtracking, run to gradient norm <= 1e-8. Standardization statistics are
/// estimated on `samples` (population standard deviation); a feature with
/// vanishing spread keeps sigma = 1 so its standardized value is exactly zero
/// and its weight is driven to zero by the penalty.
/// Throws SingleClassError unless both labels are present.
Calibrator fit(const std::vector<CalibrationSample>& samples,
               double l2_lambda = 1e-2);

/// P(top-1 correct) = sigmoid(w . standardized(s1, s2) + b).
double predict(const Calibrator& cal, double s1, double s2);

std::vector<double> predict(const Calibrator& cal,
                            const std::vector<CalibrationSample>& samples);

/// Mean squared gap between confidence and correctness. Throws EmptyInput.
double brier(const std::vector<double>& p, const std::vector<bool>& y);

/// Expected calibration error over `bins` equal-width right-closed bins on
/// [0,1] (the first bin also includes 0); empty bins are skipped.
/// Throws EmptyInput on empty lists, ConfigError when bins < 1.
double ece(const std::vector<double>& p, const std::vector<bool>& y,
           int bins = 15);

/// Coverage (fraction with p >= tau) and conditional error among the covered
/// (NaN at zero coverage). Throws ConfigError unless tau is in (0,1).
SelectivePoint selective(const std::vector<double>& p,
                         const std::vector<bool>& y, double tau);

/// Conditional confidence means and their difference:
/// (mean p | y=1, mean p | y=0, delta). Throws SingleClassError unless both
/// labels are present.
struct Separation {
  double conf_mean_y1 = 0.0;
  double conf_mean_y0 = 0.0;
  double delta = 0.0;
};
Separation separation(const std::vector<double>& p, const std::vector<bool>& y);

/// Builds the full report at thresholds {0.70, 0.80, 0.90, 0.95} by default.
ConfidenceReport confidence_report(
    const std::vector<double>& p, const std::vector<bool>& y, int bins = 15,
    const std::vector<double>& taus = {0.70, 0.80, 0.90, 0.95});

/// JSON round-trip so a fitted calibrator can re-score reports without
/// refitting.
std::string calibrator_to_json(const Calibrator& cal);
Calibrator calibrator_from_json(const std::string& text);
void save_calibrator(const std::string& path, const Calibrator& cal);
Calibrator load_calibrator(const std::string& path);

}  // namespace ecgid
