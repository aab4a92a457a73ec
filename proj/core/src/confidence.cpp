#include "ecgid/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "ecgid/prng.hpp"

namespace ecgid {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Cross-entropy of sigmoid(z) against y, evaluated without forming p.
double cross_entropy(double z, bool y) {
  return std::max(z, 0.0) - (y ? z : 0.0) + std::log1p(std::exp(-std::abs(z)));
}

std::array<double, 2> standardized(const Calibrator& cal,
                                   const CalibrationSample& s) {
  return {(s.s1 - cal.mu[0]) / cal.sigma[0],
          (s.s2 - cal.mu[1]) / cal.sigma[1]};
}

double logit(const Calibrator& cal, const CalibrationSample& s) {
  const auto x = standardized(cal, s);
  return cal.w[0] * x[0] + cal.w[1] * x[1] + cal.b;
}

void check_lengths(const std::vector<double>& p, const std::vector<bool>& y) {
  if (p.empty()) throw EmptyInput("confidence metrics need at least one sample");
  if (p.size() != y.size()) {
    throw DimensionError("confidence/label lists differ in length: " +
                         std::to_string(p.size()) + " vs " +
                         std::to_string(y.size()));
  }
}

}  // namespace

std::vector<CalibrationSample> to_samples(
    const std::vector<QueryOutcome>& outcomes) {
  std::vector<CalibrationSample> samples;
  samples.reserve(outcomes.size());
  for (const auto& o : outcomes) {
    if (!std::isfinite(o.s1) || !std::isfinite(o.s2)) continue;
    samples.push_back({o.query_subject_id, o.s1, o.s2, o.top1_correct()});
  }
  return samples;
}

std::pair<std::vector<CalibrationSample>, std::vector<CalibrationSample>>
split_calibration(const std::vector<CalibrationSample>& samples,
                  std::uint64_t seed, double calibration_fraction) {
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
    throw ConfigError("calibration_fraction must lie in (0,1), got " +
                      std::to_string(calibration_fraction));
  }
  if (samples.empty()) throw InsufficientData("no calibration samples");

  // Subject-level majority label decides the stratum; ties count as correct.
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& s : samples) {
    auto& c = counts[s.subject_id];
    ++c.first;
    if (s.y) ++c.second;
  }
  std::array<std::vector<std::string>, 2> strata;
  for (const auto& [subject, c] : counts) {
    strata[2 * c.second >= c.first ? 1 : 0].push_back(subject);
  }

  std::vector<std::string> calibration_subjects;
  for (std::size_t label = 0; label < 2; ++label) {
    auto& subjects = strata[label];
    if (subjects.empty()) continue;
    if (subjects.size() < 2) {
      throw InsufficientData(
          "stratum y=" + std::to_string(label) +
          " has a single subject; a disjoint split needs at least 2");
    }
    // `counts` is an ordered map, so `subjects` is already sorted; shuffling
    // a sorted list makes the split independent of input order.
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(label)});
    shuffle(subjects, rng);
    const double target =
        calibration_fraction * static_cast<double>(subjects.size());
    std::size_t quota = static_cast<std::size_t>(std::floor(target + 0.5));
    quota = std::clamp<std::size_t>(quota, 1, subjects.size() - 1);
    calibration_subjects.insert(calibration_subjects.end(), subjects.begin(),
                                subjects.begin() + quota);
  }
  std::sort(calibration_subjects.begin(), calibration_subjects.end());

  std::pair<std::vector<CalibrationSample>, std::vector<CalibrationSample>> out;
  for (const auto& s : samples) {
    const bool in_cal = std::binary_search(calibration_subjects.begin(),
                                           calibration_subjects.end(),
                                           s.subject_id);
    (in_cal ? out.first : out.second).push_back(s);
  }
  return out;
}

std::pair<std::vector<CalibrationSample>, std::vector<CalibrationSample>>
split_calibration(const std::vector<QueryOutcome>& outcomes,
                  std::uint64_t seed, double calibration_fraction) {
  return split_calibration(to_samples(outcomes), seed, calibration_fraction);
}

double calibration_objective(const std::vector<CalibrationSample>& samples,
                             const Calibrator& cal) {
  if (samples.empty()) throw EmptyInput("objective needs at least one sample");
  double total = 0.0;
  for (const auto& s : samples) total += cross_entropy(logit(cal, s), s.y);
  return total / static_cast<double>(samples.size()) +
         cal.l2_lambda * (cal.w[0] * cal.w[0] + cal.w[1] * cal.w[1]);
}

std::array<double, 3> calibration_gradient(
    const std::vector<CalibrationSample>& samples, const Calibrator& cal) {
  if (samples.empty()) throw EmptyInput("gradient needs at least one sample");
  std::array<double, 3> g{0.0, 0.0, 0.0};
  for (const auto& s : samples) {
    const auto x = standardized(cal, s);
    const double r = sigmoid(logit(cal, s)) - (s.y ? 1.0 : 0.0);
    g[0] += r * x[0];
    g[1] += r * x[1];
    g[2] += r;
  }
  const double n = static_cast<double>(samples.size());
  g[0] = g[0] / n + 2.0 * cal.l2_lambda * cal.w[0];
  g[1] = g[1] / n + 2.0 * cal.l2_lambda * cal.w[1];
  g[2] /= n;
  return g;
}

Calibrator fit(const std::vector<CalibrationSample>& samples,
               double l2_lambda) {
  if (samples.empty()) throw InsufficientData("cannot fit on no samples");
  if (l2_lambda < 0.0) throw ConfigError("l2_lambda must be non-negative");
  bool any_pos = false, any_neg = false;
  for (const auto& s : samples) (s.y ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg) {
    throw SingleClassError("fit needs both correct and incorrect outcomes");
  }

  Calibrator cal;
  cal.l2_lambda = l2_lambda;
  const double n = static_cast<double>(samples.size());
  for (int j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (const auto& s : samples) mean += (j == 0 ? s.s1 : s.s2);
    mean /= n;
    double ss = 0.0;
    for (const auto& s : samples) {
      const double d = (j == 0 ? s.s1 : s.s2) - mean;
      ss += d * d;
    }
    cal.mu[j] = mean;
    const double sd = std::sqrt(ss / n);
    // A spread-free feature keeps sigma = 1: its standardized value is then
    // exactly zero and the penalty parks its weight at zero.
    cal.sigma[j] = sd > 1e-12 ? sd : 1.0;
  }

  constexpr double kTol = 1e-8;
  constexpr int kMaxIter = 500;
  double value = calibration_objective(samples, cal);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const auto g = calibration_gradient(samples, cal);
    const double gnorm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    if (gnorm <= kTol) return cal;

    Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
    for (const auto& s : samples) {
      const auto x = standardized(cal, s);
      const double p = sigmoid(logit(cal, s));
      const double wgt = p * (1.0 - p);
      const Eigen::Vector3d xv(x[0], x[1], 1.0);
      H.noalias() += wgt * xv * xv.transpose();
    }
    H /= n;
    H(0, 0) += 2.0 * l2_lambda;
    H(1, 1) += 2.0 * l2_lambda;

    const Eigen::Vector3d grad(g[0], g[1], g[2]);
    Eigen::Vector3d dir = H.ldlt().solve(-grad);
    double slope = grad.dot(dir);
    if (!dir.allFinite() || slope >= 0.0) {
      dir = -grad;  // Newton direction unusable; steepest descent still works
      slope = -grad.squaredNorm();
    }

    double step = 1.0;
    Calibrator trial = cal;
    for (;;) {
      trial.w[0] = cal.w[0] + step * dir[0];
      trial.w[1] = cal.w[1] + step * dir[1];
      trial.b = cal.b + step * dir[2];
      const double trial_value = calibration_objective(samples, trial);
      if (trial_value <= value + 1e-4 * step * slope) {
        value = trial_value;
        break;
      }
      step *= 0.5;
      if (step < 1e-14) {
        // No descent at machine precision: we are at the optimum.
        return cal;
      }
    }
    cal.w = trial.w;
    cal.b = trial.b;
  }
  throw Error("calibrator fit did not reach gradient tolerance");
}

double predict(const Calibrator& cal, double s1, double s2) {
  return sigmoid(logit(cal, {"", s1, s2, false}));
}

std::vector<double> predict(const Calibrator& cal,
                            const std::vector<CalibrationSample>& samples) {
  std::vector<double> p;
  p.reserve(samples.size());
  for (const auto& s : samples) p.push_back(predict(cal, s.s1, s.s2));
  return p;
}

double brier(const std::vector<double>& p, const std::vector<bool>& y) {
  check_lengths(p, y);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - (y[i] ? 1.0 : 0.0);
    total += d * d;
  }
  return total / static_cast<double>(p.size());
}

double ece(const std::vector<double>& p, const std::vector<bool>& y,
           int bins) {
  check_lengths(p, y);
  if (bins < 1) throw ConfigError("ece needs at least one bin");
  std::vector<std::size_t> n_b(static_cast<std::size_t>(bins), 0);
  std::vector<std::size_t> n_correct(static_cast<std::size_t>(bins), 0);
  // Running means keep a constant predictor's bin confidence exactly equal to
  // the constant (a plain sum/n can be one ulp off), so a flat predictor's
  // gap reduces to |accuracy - constant| with no rounding residue.
  std::vector<double> mean_p(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    // Right-closed bins ((b-1)/B, b/B]; the first also takes p = 0.
    long idx = static_cast<long>(
        std::ceil(p[i] * static_cast<double>(bins))) - 1;
    idx = std::clamp<long>(idx, 0, bins - 1);
    const auto b = static_cast<std::size_t>(idx);
    ++n_b[b];
    if (y[i]) ++n_correct[b];
    mean_p[b] += (p[i] - mean_p[b]) / static_cast<double>(n_b[b]);
  }
  double total = 0.0;
  for (std::size_t b = 0; b < n_b.size(); ++b) {
    if (n_b[b] == 0) continue;
    const double nb = static_cast<double>(n_b[b]);
    const double acc_b = static_cast<double>(n_correct[b]) / nb;
    total += nb / static_cast<double>(p.size()) * std::abs(acc_b - mean_p[b]);
  }
  return total;
}

SelectivePoint selective(const std::vector<double>& p,
                         const std::vector<bool>& y, double tau) {
  check_lengths(p, y);
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("selective threshold must lie in (0,1), got " +
                      std::to_string(tau));
  }
  std::size_t covered = 0, wrong = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= tau) {
      ++covered;
      if (!y[i]) ++wrong;
    }
  }
  SelectivePoint out;
  out.tau = tau;
  out.coverage = static_cast<double>(covered) / static_cast<double>(p.size());
  out.error = covered == 0
                  ? std::numeric_limits<double>::quiet_NaN()
                  : static_cast<double>(wrong) / static_cast<double>(covered);
  return out;
}

Separation separation(const std::vector<double>& p,
                      const std::vector<bool>& y) {
  check_lengths(p, y);
  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i]) {
      sum1 += p[i];
      ++n1;
    } else {
      sum0 += p[i];
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) {
    throw SingleClassError("separation needs both correct and incorrect outcomes");
  }
  Separation out;
  out.conf_mean_y1 = sum1 / static_cast<double>(n1);
  out.conf_mean_y0 = sum0 / static_cast<double>(n0);
  out.delta = out.conf_mean_y1 - out.conf_mean_y0;
  return out;
}

ConfidenceReport confidence_report(const std::vector<double>& p,
                                   const std::vector<bool>& y, int bins,
                                   const std::vector<double>& taus) {
  check_lengths(p, y);
  ConfidenceReport report;
  std::size_t correct_at_half = 0;
  double conf_total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if ((p[i] >= 0.5) == y[i]) ++correct_at_half;
    conf_total += p[i];
  }
  report.acc_at_half =
      static_cast<double>(correct_at_half) / static_cast<double>(p.size());
  report.conf_mean = conf_total / static_cast<double>(p.size());
  report.brier = brier(p, y);
  report.ece = ece(p, y, bins);
  const Separation sep = separation(p, y);
  report.conf_mean_y1 = sep.conf_mean_y1;
  report.conf_mean_y0 = sep.conf_mean_y0;
  report.delta = sep.delta;
  for (double tau : taus) report.selective.push_back(selective(p, y, tau));
  return report;
}

std::string calibrator_to_json(const Calibrator& cal) {
  nlohmann::ordered_json j;
  j["mu"] = cal.mu;
  j["sigma"] = cal.sigma;
  j["w"] = cal.w;
  j["b"] = cal.b;
  j["l2_lambda"] = cal.l2_lambda;
  j["split_seed"] = cal.split_seed;
  j["ece_bins"] = cal.ece_bins;
  return j.dump(2) + "\n";
}

Calibrator calibrator_from_json(const std::string& text) {
  Calibrator cal;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    cal.mu = j.at("mu").get<std::array<double, 2>>();
    cal.sigma = j.at("sigma").get<std::array<double, 2>>();
    cal.w = j.at("w").get<std::array<double, 2>>();
    cal.b = j.at("b").get<double>();
    cal.l2_lambda = j.at("l2_lambda").get<double>();
    cal.split_seed = j.at("split_seed").get<std::uint64_t>();
    cal.ece_bins = j.at("ece_bins").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid calibrator document: ") + e.what());
  }
  for (double v : {cal.mu[0], cal.mu[1], cal.w[0], cal.w[1], cal.b}) {
    if (!std::isfinite(v)) throw ParseError("calibrator parameter not finite");
  }
  if (!(cal.sigma[0] > 0.0) || !(cal.sigma[1] > 0.0)) {
    throw ParseError("calibrator sigma components must be positive");
  }
  return cal;
}

void save_calibrator(const std::string& path, const Calibrator& cal) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << calibrator_to_json(cal);
  if (!out) throw IoError("failed writing: " + path);
}

Calibrator load_calibrator(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return calibrator_from_json(buf.str());
}

}  // namespace ecgid
