#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "ecgid/pipeline.hpp"
#include "ecgid/prng.hpp"

using namespace ecgid;

namespace {

ExamMeta mk(std::string subject, std::string exam, std::int32_t day) {
  ExamMeta e;
  e.subject_id = std::move(subject);
  e.exam_id = std::move(exam);
  e.timestamp = Date{day};
  return e;
}

std::vector<std::string> exam_ids(const std::vector<ExamMeta>& exams) {
  std::vector<std::string> ids;
  for (const auto& e : exams) ids.push_back(e.exam_id);
  return ids;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("a subject with exams 10 days apart is dropped") {
  const auto [kept, report] =
      apply_common_pipeline({mk("s1", "a", 0), mk("s1", "b", 10)});
  CHECK(kept.empty());
  REQUIRE(report.steps.size() == 4);
  CHECK(report.steps[0].n_exams == 2);
  CHECK(report.steps[1].n_exams == 1);  // spacing keeps only day 0
  CHECK(report.steps[2].n_exams == 0);  // then the 2-exam rule drops s1
}

TEST_CASE("greedy spacing keeps days 0, 40, 100 out of 0, 40, 45, 100") {
  const auto [kept, report] = apply_common_pipeline(
      {mk("s1", "d000", 0), mk("s1", "d040", 40), mk("s1", "d045", 45),
       mk("s1", "d100", 100)});
  CHECK(exam_ids(kept) == std::vector<std::string>{"d000", "d040", "d100"});
}

TEST_CASE("a subject with 14 valid-spaced exams keeps the 10 earliest") {
  std::vector<ExamMeta> exams;
  for (int i = 0; i < 14; ++i) {
    exams.push_back(mk("s1", "e" + std::to_string(10 + i), 40 * i));
  }
  const auto [kept, report] = apply_common_pipeline(std::move(exams));
  REQUIRE(kept.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(kept[i].exam_id == "e" + std::to_string(10 + i));
  }
}

TEST_CASE("retained exams are never closer than 30 days within a subject") {
  Rng rng = make_rng(211);
  std::vector<ExamMeta> exams;
  for (int s = 0; s < 40; ++s) {
    const int n = 2 + static_cast<int>(uniform_below(rng, 20));
    for (int i = 0; i < n; ++i) {
      exams.push_back(mk("s" + std::to_string(s),
                         "s" + std::to_string(s) + "e" + std::to_string(i),
                         static_cast<std::int32_t>(uniform_below(rng, 2000))));
    }
  }
  const auto [kept, report] = apply_common_pipeline(std::move(exams));
  for (std::size_t i = 1; i < kept.size(); ++i) {
    if (kept[i].subject_id != kept[i - 1].subject_id) continue;
    CHECK(days_between(kept[i - 1].timestamp, kept[i].timestamp) >= 30);
  }
  // Attrition counts only shrink along filter steps.
  for (std::size_t i = 1; i < report.steps.size(); ++i) {
    CHECK(report.steps[i].n_exams <= report.steps[i - 1].n_exams);
    CHECK(report.steps[i].n_subjects <= report.steps[i - 1].n_subjects);
  }
}

TEST_CASE("fiducial filter keeps in-range and drops out-of-range values") {
  const FiducialRanges ranges = FiducialRanges::defaults();
  ExamMeta in_range = mk("s1", "a", 0);
  in_range.fiducials["VentricularRate"] = 75;
  ExamMeta out_of_range = mk("s1", "b", 40);
  out_of_range.fiducials["QTInterval"] = 600;
  ExamMeta no_fiducials = mk("s1", "c", 80);

  const auto kept =
      apply_fiducial_filter({in_range, out_of_range, no_fiducials}, ranges);
  CHECK(exam_ids(kept) == std::vector<std::string>{"a", "c"});
}

TEST_CASE("missing measurements never exclude an exam") {
  const FiducialRanges ranges = FiducialRanges::defaults();
  ExamMeta partial = mk("s1", "a", 0);
  partial.fiducials["PRInterval"] = 160;  // QTInterval absent
  const auto kept = apply_fiducial_filter({partial}, ranges);
  CHECK(kept.size() == 1);
}

TEST_CASE("range bounds are inclusive at both ends") {
  const FiducialRanges ranges = FiducialRanges::defaults();
  ExamMeta lo = mk("s1", "lo", 0);
  lo.fiducials["VentricularRate"] = 40;
  ExamMeta hi = mk("s1", "hi", 0);
  hi.fiducials["VentricularRate"] = 120;
  ExamMeta below = mk("s1", "below", 0);
  below.fiducials["VentricularRate"] = 39.999;
  const auto kept = apply_fiducial_filter({lo, hi, below}, ranges);
  CHECK(exam_ids(kept) == std::vector<std::string>{"lo", "hi"});
}

TEST_CASE("filtering commutes with subject partitioning") {
  Rng rng = make_rng(223);
  const FiducialRanges ranges = FiducialRanges::defaults();
  std::vector<ExamMeta> part_a, part_b, all;
  for (int s = 0; s < 30; ++s) {
    for (int i = 0; i < 4; ++i) {
      ExamMeta e = mk("s" + std::to_string(s),
                      "s" + std::to_string(s) + "e" + std::to_string(i),
                      static_cast<std::int32_t>(uniform_below(rng, 1000)));
      e.fiducials["VentricularRate"] =
          20.0 + static_cast<double>(uniform_below(rng, 140));
      (s < 15 ? part_a : part_b).push_back(e);
      all.push_back(e);
    }
  }
  auto joined = apply_fiducial_filter(part_a, ranges);
  const auto fb = apply_fiducial_filter(part_b, ranges);
  joined.insert(joined.end(), fb.begin(), fb.end());
  const auto whole = apply_fiducial_filter(all, ranges);
  CHECK(exam_ids(joined) == exam_ids(whole));
}

TEST_CASE("a 369-day gap satisfies the 1-year target") {
  const auto pairs = build_temporal_pairs(
      {mk("s1", "a", parse_date("2015-01-01").days),
       mk("s1", "b", parse_date("2016-01-05").days)},
      1);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].exam_a == "a");
  CHECK(pairs[0].exam_b == "b");
  CHECK(pairs[0].gap_days == 369);
}

TEST_CASE("a 547-day gap misses the 1-year tolerance") {
  const auto pairs = build_temporal_pairs(
      {mk("s1", "a", parse_date("2015-01-01").days),
       mk("s1", "b", parse_date("2016-07-01").days)},
      1);
  CHECK(pairs.empty());
}

TEST_CASE("among admissible pairings the gap closest to 730.5 days wins") {
  // Gaps: a->b 700, a->c 745, b->c 45. Deviations from 730.5: 30.5 vs 14.5.
  const auto pairs = build_temporal_pairs(
      {mk("s1", "a", 0), mk("s1", "b", 700), mk("s1", "c", 745)}, 2);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].exam_a == "a");
  CHECK(pairs[0].exam_b == "c");
  CHECK(pairs[0].gap_days == 745);
}

TEST_CASE("pair selection matches an exhaustive enumeration oracle") {
  Rng rng = make_rng(227);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ExamMeta> exams;
    const int n = 2 + static_cast<int>(uniform_below(rng, 6));
    for (int i = 0; i < n; ++i) {
      exams.push_back(mk("s", "e" + std::to_string(i),
                         static_cast<std::int32_t>(uniform_below(rng, 1200))));
    }
    const int target = 1 + static_cast<int>(uniform_below(rng, 3));
    const auto pairs = build_temporal_pairs(exams, target);

    // Oracle: enumerate every ordered pair, keep admissible ones, pick the
    // minimum (deviation, date_a, exam_a, date_b, exam_b).
    const double target_days = 365.25 * target;
    bool found = false;
    std::tuple<double, std::int32_t, std::string, std::int32_t, std::string>
        best;
    for (const auto& a : exams) {
      for (const auto& b : exams) {
        if (!(a.timestamp < b.timestamp)) continue;
        const auto gap = days_between(a.timestamp, b.timestamp);
        const double dev = std::abs(static_cast<double>(gap) - target_days);
        if (dev > 91) continue;
        auto key = std::make_tuple(dev, a.timestamp.days, a.exam_id,
                                   b.timestamp.days, b.exam_id);
        if (!found || key < best) {
          best = key;
          found = true;
        }
      }
    }
    REQUIRE(pairs.size() == (found ? 1 : 0));
    if (found) {
      CHECK(pairs[0].exam_a == std::get<2>(best));
      CHECK(pairs[0].exam_b == std::get<4>(best));
      CHECK(std::abs(static_cast<double>(pairs[0].gap_days) - target_days) <=
            91.0);
    }
  }
}

TEST_CASE("fix_gallery_size is the identity when every target already has P") {
  std::map<int, std::vector<TemporalPair>> by_target;
  for (int t = 1; t <= 3; ++t) {
    for (int s = 0; s < 4; ++s) {
      by_target[t].push_back(
          TemporalPair{"s" + std::to_string(s), "a", "b", 365 * t, t});
    }
  }
  const auto cut = fix_gallery_size(by_target, 4, 42);
  for (int t = 1; t <= 3; ++t) CHECK(cut.at(t).size() == 4);
}

TEST_CASE("fix_gallery_size cuts all targets to P and is seed-deterministic") {
  std::map<int, std::vector<TemporalPair>> by_target;
  for (int t = 1; t <= 5; ++t) {
    for (int s = 0; s < 20 + 5 * t; ++s) {
      by_target[t].push_back(
          TemporalPair{"s" + std::to_string(s), "a", "b", 365 * t, t});
    }
  }
  const auto once = fix_gallery_size(by_target, 20, 42);
  const auto twice = fix_gallery_size(by_target, 20, 42);
  const auto other_seed = fix_gallery_size(by_target, 20, 43);
  bool any_difference = false;
  for (int t = 1; t <= 5; ++t) {
    CHECK(once.at(t).size() == 20);
    REQUIRE(twice.at(t).size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(once.at(t)[i].subject_id == twice.at(t)[i].subject_id);
      if (once.at(t)[i].subject_id != other_seed.at(t)[i].subject_id) {
        any_difference = true;
      }
    }
  }
  CHECK(any_difference);  // different seeds pick different subjects
  CHECK_THROWS_AS(fix_gallery_size(by_target, 26, 42), InsufficientSubjects);
}

TEST_CASE("sampling every subject returns the full population") {
  std::vector<ExamMeta> exams;
  for (int s = 0; s < 25; ++s) {
    for (int i = 0; i < 2 + s % 3; ++i) {
      exams.push_back(mk("s" + std::to_string(s),
                         "s" + std::to_string(s) + "e" + std::to_string(i),
                         40 * i));
    }
  }
  const auto sampled = stratified_sample(exams, 25, 42);
  CHECK(sampled.size() == exams.size());
}

TEST_CASE("two strata at 90 and 10 percent with P=10 yield 9 and 1 subjects") {
  std::vector<ExamMeta> exams;
  for (int s = 0; s < 90; ++s) {  // stratum: 2 exams each
    exams.push_back(mk("a" + std::to_string(s), "a" + std::to_string(s) + "x", 0));
    exams.push_back(mk("a" + std::to_string(s), "a" + std::to_string(s) + "y", 40));
  }
  for (int s = 0; s < 10; ++s) {  // stratum: 3 exams each
    exams.push_back(mk("b" + std::to_string(s), "b" + std::to_string(s) + "x", 0));
    exams.push_back(mk("b" + std::to_string(s), "b" + std::to_string(s) + "y", 40));
    exams.push_back(mk("b" + std::to_string(s), "b" + std::to_string(s) + "z", 80));
  }
  const auto sampled = stratified_sample(exams, 10, 42);
  std::map<std::size_t, std::size_t> per_stratum;
  std::map<std::string, std::size_t> per_subject;
  for (const auto& e : sampled) ++per_subject[e.subject_id];
  for (const auto& [subject, n] : per_subject) ++per_stratum[n];
  CHECK(per_subject.size() == 10);
  CHECK(per_stratum[2] == 9);
  CHECK(per_stratum[3] == 1);
}

TEST_CASE("stratified sampling is deterministic and order-independent") {
  Rng rng = make_rng(229);
  std::vector<ExamMeta> exams;
  for (int s = 0; s < 200; ++s) {
    const int n = 2 + static_cast<int>(uniform_below(rng, 9));
    for (int i = 0; i < n; ++i) {
      exams.push_back(mk("s" + std::to_string(s),
                         "s" + std::to_string(s) + "e" + std::to_string(i),
                         40 * i));
    }
  }
  const auto a = stratified_sample(exams, 60, 42);
  std::vector<ExamMeta> shuffled = exams;
  shuffle(shuffled, rng);
  const auto b = stratified_sample(shuffled, 60, 42);
  CHECK(exam_ids(a) == exam_ids(b));
}

TEST_CASE("moments of counts 2, 2, 10") {
  const Moments m = distribution_moments({2, 2, 10});
  CHECK(m.mean == doctest::Approx(4.6667).epsilon(1e-4));
  CHECK(m.variance == doctest::Approx(384.0 / 27.0).epsilon(1e-12));
  CHECK(m.skewness == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  CHECK(m.kurtosis == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(m.excess == doctest::Approx(-1.5).epsilon(1e-9));
}

TEST_CASE("constant counts have undefined shape moments") {
  CHECK_THROWS_AS(distribution_moments({3, 3, 3, 3}), DegenerateDistribution);
  CHECK_THROWS_AS(distribution_moments({1}), InsufficientData);
}

TEST_CASE("a large standard-normal sample has near-zero excess kurtosis") {
  Rng rng = make_rng(233);
  std::vector<double> sample(100000);
  for (auto& v : sample) v = gaussian(rng);
  const Moments m = distribution_moments(sample);
  CHECK(std::abs(m.mean) <= 0.02);
  CHECK(m.variance == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::abs(m.skewness) <= 0.05);
  CHECK(std::abs(m.excess) <= 0.1);
}

TEST_CASE("metadata files round-trip with fiducials, device, and rate") {
  std::vector<ExamMeta> exams;
  ExamMeta a = mk("s1", "a", parse_date("2013-03-05").days);
  a.fiducials["VentricularRate"] = 71.5;
  a.fiducials["QTInterval"] = 412.25;
  a.device = "devA";
  a.sample_rate = 500;
  ExamMeta b = mk("s2", "b", parse_date("2014-11-30").days);
  exams.push_back(a);
  exams.push_back(b);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ecgid_pipeline_io_test";
  fs::create_directories(dir);
  const std::string path = (dir / "meta.tsv").string();
  save_exam_meta(path, exams);
  const auto loaded = load_exam_meta(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].subject_id == "s1");
  CHECK(loaded[0].fiducials.at("VentricularRate") == 71.5);
  CHECK(loaded[0].fiducials.at("QTInterval") == 412.25);
  CHECK(loaded[0].device == "devA");
  CHECK(loaded[0].sample_rate == 500);
  CHECK(loaded[1].fiducials.empty());
  CHECK(loaded[1].device.empty());
  fs::remove_all(dir);
}

TEST_CASE("range files parse and reject inverted bounds") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ecgid_ranges_test";
  fs::create_directories(dir);
  const std::string path = (dir / "ranges.tsv").string();
  {
    std::ofstream out(path);
    out << "# feature min max\n";
    out << "VentricularRate\t40\t120\n";
    out << "PAxis\t-30\t90\n";
  }
  const FiducialRanges r = load_fiducial_ranges(path);
  CHECK(r.bounds.at("VentricularRate") == std::pair<double, double>{40, 120});
  CHECK(r.bounds.at("PAxis") == std::pair<double, double>{-30, 90});

  {
    std::ofstream out(path);
    out << "QTInterval\t500\t300\n";
  }
  CHECK_THROWS_AS(load_fiducial_ranges(path), ConfigError);
  fs::remove_all(dir);
}

}  // TEST_SUITE
