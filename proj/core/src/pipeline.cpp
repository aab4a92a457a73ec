#include "ecgid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ecgid/prng.hpp"

namespace ecgid {
namespace {

constexpr std::int64_t kMinSpacingDays = 30;
constexpr std::size_t kMaxExamsPerSubject = 10;
constexpr double kDaysPerYear = 365.25;

bool exam_before(const ExamMeta& a, const ExamMeta& b) {
  if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.exam_id < b.exam_id;
}

std::size_t count_subjects(const std::vector<ExamMeta>& exams) {
  std::set<std::string> subjects;
  for (const auto& e : exams) subjects.insert(e.subject_id);
  return subjects.size();
}

/// Groups exams by subject, each group chronologically sorted.
std::map<std::string, std::vector<ExamMeta>> group_by_subject(
    std::vector<ExamMeta> exams) {
  std::sort(exams.begin(), exams.end(), exam_before);
  std::map<std::string, std::vector<ExamMeta>> groups;
  for (auto& e : exams) groups[e.subject_id].push_back(std::move(e));
  return groups;
}

std::string format_double_meta(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FiducialRanges FiducialRanges::defaults() {
  FiducialRanges r;
  r.bounds = {
      {"VentricularRate", {40, 120}}, {"PRInterval", {100, 240}},
      {"QRSDuration", {60, 150}},     {"QTInterval", {300, 500}},
      {"QTCorrected", {300, 500}},    {"PAxis", {-30, 90}},
      {"RAxis", {-90, 120}},          {"TAxis", {-30, 120}},
      {"POnset", {50, 500}},          {"POffset", {150, 550}},
      {"QOnset", {200, 650}},         {"QOffset", {300, 750}},
      {"TOffset", {500, 1200}},
  };
  return r;
}

void FiducialRanges::validate() const {
  for (const auto& [name, mm] : bounds) {
    if (!(mm.first < mm.second)) {
      throw ConfigError("fiducial range " + name + ": min must be < max");
    }
  }
}

void AttritionReport::add(std::string name,
                          const std::vector<ExamMeta>& exams) {
  steps.push_back(
      {std::move(name), exams.size(), count_subjects(exams)});
}

std::string AttritionReport::to_text() const {
  std::ostringstream os;
  os << "step\texams\tsubjects\n";
  for (const auto& s : steps) {
    os << s.name << '\t' << s.n_exams << '\t' << s.n_subjects << '\n';
  }
  return os.str();
}

std::pair<std::vector<ExamMeta>, AttritionReport> apply_common_pipeline(
    std::vector<ExamMeta> exams) {
  AttritionReport report;
  report.add("input", exams);

  auto groups = group_by_subject(std::move(exams));

  // Greedy chronological scan: keep the first exam, then each next exam only
  // when it falls at least 30 days after the last kept one.
  std::vector<ExamMeta> spaced;
  for (auto& [subject, list] : groups) {
    bool have_last = false;
    Date last_kept{};
    for (auto& e : list) {
      if (!have_last ||
          days_between(last_kept, e.timestamp) >= kMinSpacingDays) {
        last_kept = e.timestamp;
        have_last = true;
        spaced.push_back(std::move(e));
      }
    }
  }
  report.add("min_spacing_30d", spaced);

  // Subjects must still own at least two exams after spacing.
  std::map<std::string, std::size_t> per_subject;
  for (const auto& e : spaced) ++per_subject[e.subject_id];
  std::vector<ExamMeta> eligible;
  for (auto& e : spaced) {
    if (per_subject[e.subject_id] >= 2) eligible.push_back(std::move(e));
  }
  report.add("min_2_exams", eligible);

  // Cap: the 10 earliest exams per subject (input is subject-then-date
  // sorted, so a running counter suffices).
  std::vector<ExamMeta> capped;
  std::string current;
  std::size_t kept_for_current = 0;
  for (auto& e : eligible) {
    if (e.subject_id != current) {
      current = e.subject_id;
      kept_for_current = 0;
    }
    if (kept_for_current < kMaxExamsPerSubject) {
      capped.push_back(std::move(e));
      ++kept_for_current;
    }
  }
  report.add("cap_10_exams", capped);

  return {std::move(capped), std::move(report)};
}

std::vector<ExamMeta> apply_fiducial_filter(const std::vector<ExamMeta>& exams,
                                            const FiducialRanges& ranges) {
  ranges.validate();
  std::vector<ExamMeta> kept;
  kept.reserve(exams.size());
  for (const auto& e : exams) {
    bool ok = true;
    for (const auto& [name, value] : e.fiducials) {
      auto it = ranges.bounds.find(name);
      if (it == ranges.bounds.end()) continue;  // unconstrained feature
      if (value < it->second.first || value > it->second.second) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(e);
  }
  return kept;
}

std::vector<TemporalPair> build_temporal_pairs(
    const std::vector<ExamMeta>& exams, int target_years,
    int tolerance_days) {
  const double target_days = kDaysPerYear * target_years;
  auto groups = group_by_subject(exams);

  std::vector<TemporalPair> pairs;
  for (const auto& [subject, list] : groups) {
    bool found = false;
    TemporalPair best;
    double best_dev = 0.0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        if (!(list[i].timestamp < list[j].timestamp)) continue;
        const std::int64_t gap =
            days_between(list[i].timestamp, list[j].timestamp);
        const double dev = std::abs(static_cast<double>(gap) - target_days);
        if (dev > tolerance_days) continue;
        // Scan order is (earlier a, then earlier b), so strict improvement
        // keeps the earliest pair among deviation ties.
        if (!found || dev < best_dev) {
          found = true;
          best_dev = dev;
          best = TemporalPair{subject, list[i].exam_id, list[j].exam_id, gap,
                              target_years};
        }
      }
    }
    if (found) pairs.push_back(std::move(best));
  }
  return pairs;
}

std::map<int, std::vector<TemporalPair>> fix_gallery_size(
    const std::map<int, std::vector<TemporalPair>>& pairs_by_target,
    std::size_t subjects, std::uint64_t seed) {
  for (const auto& [target, pairs] : pairs_by_target) {
    if (pairs.size() < subjects) {
      throw InsufficientSubjects(
          "fix_gallery_size: target " + std::to_string(target) + " has " +
          std::to_string(pairs.size()) + " subjects, need " +
          std::to_string(subjects));
    }
  }
  std::map<int, std::vector<TemporalPair>> out;
  for (const auto& [target, pairs] : pairs_by_target) {
    std::vector<TemporalPair> sorted = pairs;
    std::sort(sorted.begin(), sorted.end(),
              [](const TemporalPair& a, const TemporalPair& b) {
                return a.subject_id < b.subject_id;
              });
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(target)});
    auto chosen =
        sample_without_replacement(sorted.size(), subjects, rng);
    std::sort(chosen.begin(), chosen.end());
    std::vector<TemporalPair> picked;
    picked.reserve(subjects);
    for (std::size_t idx : chosen) picked.push_back(sorted[idx]);
    out[target] = std::move(picked);
  }
  return out;
}

std::vector<ExamMeta> stratified_sample(const std::vector<ExamMeta>& exams,
                                        std::size_t target_patients,
                                        std::uint64_t seed) {
  auto groups = group_by_subject(exams);
  // Stratum = number of exams a subject owns; subjects listed sorted by id.
  std::map<std::size_t, std::vector<const std::string*>> strata;
  for (const auto& [subject, list] : groups) {
    strata[list.size()].push_back(&subject);
  }
  const std::size_t n_total = groups.size();
  if (target_patients > n_total) {
    throw InsufficientSubjects("stratified_sample: requested " +
                               std::to_string(target_patients) +
                               " subjects from " + std::to_string(n_total));
  }

  // Exact integer largest-remainder quotas: base = floor(P*n_s/N), then
  // leftovers go to the largest remainders (ties to the smaller stratum).
  struct Quota {
    std::size_t stratum;
    std::size_t available;
    std::size_t quota;
    std::uint64_t remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [stratum, members] : strata) {
    const std::uint64_t num =
        static_cast<std::uint64_t>(target_patients) * members.size();
    Quota q{stratum, members.size(), static_cast<std::size_t>(num / n_total),
            num % n_total};
    assigned += q.quota;
    quotas.push_back(q);
  }
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (quotas[a].remainder != quotas[b].remainder) {
      return quotas[a].remainder > quotas[b].remainder;
    }
    return quotas[a].stratum < quotas[b].stratum;
  });
  std::size_t leftover = target_patients - assigned;
  while (leftover > 0) {
    bool progressed = false;
    for (std::size_t i : order) {
      if (leftover == 0) break;
      if (quotas[i].quota < quotas[i].available) {
        ++quotas[i].quota;
        --leftover;
        progressed = true;
      }
    }
    if (!progressed) {
      throw InsufficientSubjects(
          "stratified_sample: quotas cannot reach the requested count");
    }
  }

  // Draw each stratum with its own derived generator so results do not
  // depend on stratum iteration order.
  std::set<std::string> selected;
  for (const auto& q : quotas) {
    const auto& members = strata[q.stratum];
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(q.stratum)});
    auto chosen = sample_without_replacement(members.size(), q.quota, rng);
    for (std::size_t idx : chosen) selected.insert(*members[idx]);
  }

  std::vector<ExamMeta> out;
  for (const auto& subject : selected) {
    const auto& list = groups.at(subject);
    out.insert(out.end(), list.begin(), list.end());
  }
  return out;
}

Moments distribution_moments(const std::vector<double>& values) {
  if (values.size() < 2) {
    throw InsufficientData("distribution_moments: need >= 2 values");
  }
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 <= 0.0) {
    throw DegenerateDistribution(
        "distribution_moments: zero variance, shape moments undefined");
  }
  Moments m;
  m.mean = mean;
  m.variance = m2;
  m.skewness = m3 / std::pow(m2, 1.5);
  m.kurtosis = m4 / (m2 * m2);
  m.excess = m.kurtosis - 3.0;
  return m;
}

std::vector<double> exam_counts_per_subject(
    const std::vector<ExamMeta>& exams) {
  std::map<std::string, std::size_t> counts;
  for (const auto& e : exams) ++counts[e.subject_id];
  std::vector<double> out;
  out.reserve(counts.size());
  for (const auto& [subject, c] : counts) {
    out.push_back(static_cast<double>(c));
  }
  return out;
}

std::vector<ExamMeta> load_exam_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metadata file " + path);
  std::vector<ExamMeta> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ExamMeta e;
    std::string date_str, kv;
    if (!std::getline(ls, e.subject_id, '\t') ||
        !std::getline(ls, e.exam_id, '\t') ||
        !std::getline(ls, date_str, '\t')) {
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected at least 3 tab-separated fields");
    }
    e.timestamp = parse_date(date_str);
    std::getline(ls, kv);  // optional fourth field
    std::istringstream kvs(kv);
    std::string item;
    while (std::getline(kvs, item, ';')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": malformed key=value item '" + item + "'");
      }
      const std::string key = item.substr(0, eq);
      const std::string value = item.substr(eq + 1);
      if (key == "device") {
        e.device = value;
      } else if (key == "sample_rate") {
        e.sample_rate = std::strtod(value.c_str(), nullptr);
      } else {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (end == value.c_str() || *end != '\0' || !std::isfinite(v)) {
          throw ParseError(path + ":" + std::to_string(lineno) +
                           ": non-finite or malformed value for " + key);
        }
        e.fiducials[key] = v;
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

void save_exam_meta(const std::string& path,
                    const std::vector<ExamMeta>& exams) {
  std::ofstream outf(path, std::ios::trunc);
  if (!outf) throw IoError("cannot write metadata file " + path);
  for (const auto& e : exams) {
    outf << e.subject_id << '\t' << e.exam_id << '\t'
         << format_date(e.timestamp) << '\t';
    bool first = true;
    for (const auto& [key, value] : e.fiducials) {
      if (!first) outf << ';';
      outf << key << '=' << format_double_meta(value);
      first = false;
    }
    if (!e.device.empty()) {
      if (!first) outf << ';';
      outf << "device=" << e.device;
      first = false;
    }
    if (e.sample_rate > 0.0) {
      if (!first) outf << ';';
      outf << "sample_rate=" << format_double_meta(e.sample_rate);
    }
    outf << '\n';
  }
  if (!outf) throw IoError("write failed for " + path);
}

FiducialRanges load_fiducial_ranges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ranges file " + path);
  FiducialRanges r;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, lo, hi;
    if (!std::getline(ls, name, '\t') || !std::getline(ls, lo, '\t') ||
        !std::getline(ls, hi, '\t')) {
      // Third field may be the remainder of the line.
      std::istringstream retry(line);
      retry >> name >> lo >> hi;
      if (name.empty() || lo.empty() || hi.empty()) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": expected 'feature min max'");
      }
    }
    r.bounds[name] = {std::strtod(lo.c_str(), nullptr),
                      std::strtod(hi.c_str(), nullptr)};
  }
  r.validate();
  return r;
}

}  // namespace ecgid
