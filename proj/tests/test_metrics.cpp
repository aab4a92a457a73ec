#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ecgid/metrics.hpp"
#include "ecgid/prng.hpp"

using namespace ecgid;

namespace {

#include "data/t_interval_cases.inc"

QueryOutcome outcome_with_rank(std::uint32_t r) {
  QueryOutcome o;
  o.rank_of_first_genuine = r;
  return o;
}

QueryOutcome outcome_without_mate() { return QueryOutcome{}; }

/// Reference threshold: scan observed scores ascending, return the first one
/// admitting at most floor(far*M) impostors; sentinel above max if none.
double naive_far_threshold(std::vector<double> imp, double far) {
  std::sort(imp.begin(), imp.end());
  const std::size_t m_total = imp.size();
  const auto allowed = static_cast<std::size_t>(
      std::floor(far * static_cast<double>(m_total) + 1e-9));
  for (std::size_t i = 0; i < m_total; ++i) {
    if (i > 0 && imp[i] == imp[i - 1]) continue;
    if (m_total - i <= allowed) return imp[i];
  }
  return std::nextafter(imp.back(), std::numeric_limits<double>::infinity());
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("rank_at_k is 1 when every query ranks its mate first") {
  std::vector<QueryOutcome> v(10, outcome_with_rank(1));
  CHECK(rank_at_k(v, 1) == 1.0);
}

TEST_CASE("ranks 1, 3, 11 give two thirds at K=10") {
  std::vector<QueryOutcome> v{outcome_with_rank(1), outcome_with_rank(3),
                              outcome_with_rank(11)};
  CHECK(rank_at_k(v, 10) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(rank_at_k(v, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("rank_at_k is non-decreasing in K") {
  Rng rng = make_rng(101);
  std::vector<QueryOutcome> v;
  for (int i = 0; i < 200; ++i) {
    v.push_back(outcome_with_rank(1 + static_cast<std::uint32_t>(
                                          uniform_below(rng, 50))));
  }
  double prev = 0.0;
  for (std::uint32_t k = 1; k <= 50; ++k) {
    const double r = rank_at_k(v, k);
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("queries without a genuine mate are excluded from the denominator") {
  std::vector<QueryOutcome> v{outcome_with_rank(1), outcome_without_mate(),
                              outcome_with_rank(2)};
  CHECK(rank_at_k(v, 1) == doctest::Approx(0.5));

  std::vector<QueryOutcome> none{outcome_without_mate()};
  CHECK_THROWS_AS(rank_at_k(none, 1), EmptyOutcomeSet);
  CHECK_THROWS_AS(rank_at_k({}, 1), EmptyOutcomeSet);
}

TEST_CASE("perfectly separated scores give TAR 1 at FAR 1e-3") {
  std::vector<double> gen(100, 0.9);
  std::vector<double> imp(10000, 0.1);
  const TarResult r = tar_at_far(gen, imp, 1e-3);
  CHECK(r.tar == 1.0);
  CHECK(r.achieved_far <= 1e-3);
}

TEST_CASE("1000 impostors at FAR 1e-3 select the maximum impostor score") {
  Rng rng = make_rng(103);
  std::vector<double> imp(1000);
  for (auto& s : imp) s = uniform01(rng);
  const double max_imp = *std::max_element(imp.begin(), imp.end());
  ScoreTail tail;
  for (double s : imp) tail.add(s);
  CHECK(far_threshold(tail, 1e-3) == max_imp);
}

TEST_CASE("identically distributed genuines and impostors give TAR near FAR") {
  Rng rng = make_rng(107);
  std::vector<double> gen(100000), imp(100000);
  for (auto& s : gen) s = gaussian(rng);
  for (auto& s : imp) s = gaussian(rng);
  const double far = 1e-2;
  const TarResult r = tar_at_far(gen, imp, far);
  CHECK(r.tar >= 0.7 * far);
  CHECK(r.tar <= 1.3 * far);
  CHECK(r.achieved_far <= far);
}

TEST_CASE("threshold selection matches the naive scan oracle with heavy ties") {
  Rng rng = make_rng(109);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m_total = 1000 + uniform_below(rng, 9000);
    const std::size_t levels = 2 + uniform_below(rng, 40);
    std::vector<double> imp(m_total);
    for (auto& s : imp) {
      // Quantized scores force ties across the acceptance boundary.
      s = static_cast<double>(uniform_below(rng, levels)) /
          static_cast<double>(levels);
    }
    for (double far : {1e-1, 1e-2, 1e-3}) {
      ScoreTail tail;
      for (double s : imp) tail.add(s);
      const double got = far_threshold(tail, far);
      CHECK(got == naive_far_threshold(imp, far));
      const double achieved =
          static_cast<double>(tail.count_at_or_above(got)) /
          static_cast<double>(m_total);
      CHECK(achieved <= far);
    }
  }
}

TEST_CASE("TAR is non-increasing as FAR decreases") {
  Rng rng = make_rng(113);
  std::vector<double> gen(5000), imp(200000);
  for (auto& s : gen) s = 0.3 + 0.2 * gaussian(rng);
  for (auto& s : imp) s = 0.2 * gaussian(rng);
  double prev = 1.0;
  for (double far : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const TarResult r = tar_at_far(gen, imp, far);
    CHECK(r.tar <= prev);
    prev = r.tar;
  }
}

TEST_CASE("too few impostors for the requested FAR raise InsufficientImpostors") {
  std::vector<double> gen(10, 0.9);
  std::vector<double> imp(999, 0.1);
  CHECK_THROWS_AS(tar_at_far(gen, imp, 1e-3), InsufficientImpostors);
  std::vector<double> imp5k(5000, 0.1);
  CHECK_THROWS_AS(tar_at_far(gen, imp5k, 1e-4), InsufficientImpostors);
  CHECK_NOTHROW(tar_at_far(gen, imp5k, 1e-3));
}

TEST_CASE("bounded score tail reproduces the complete-pool threshold") {
  Rng rng = make_rng(127);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m_total = 20000 + uniform_below(rng, 30000);
    std::vector<double> imp(m_total);
    for (auto& s : imp) {
      s = trial % 2 == 0 ? gaussian(rng)
                         : static_cast<double>(uniform_below(rng, 17)) / 17.0;
    }
    const std::vector<double> fars{1e-2, 1e-3};
    ScoreTail bounded(score_tail_capacity(m_total, fars));
    ScoreTail complete;
    for (double s : imp) {
      bounded.add(s);
      complete.add(s);
    }
    for (double far : fars) {
      CHECK(far_threshold(bounded, far) == far_threshold(complete, far));
      CHECK(bounded.count_at_or_above(far_threshold(bounded, far)) ==
            complete.count_at_or_above(far_threshold(complete, far)));
    }
  }
}

TEST_CASE("score tail merging is chunk-order independent") {
  Rng rng = make_rng(131);
  const std::size_t m_total = 30000;
  std::vector<double> imp(m_total);
  for (auto& s : imp) {
    s = static_cast<double>(uniform_below(rng, 23)) / 23.0;
  }
  const std::size_t cap = score_tail_capacity(m_total, {1e-3});

  ScoreTail serial(cap);
  for (double s : imp) serial.add(s);

  for (std::size_t n_chunks : {std::size_t{2}, std::size_t{7}}) {
    std::vector<ScoreTail> parts;
    const std::size_t chunk = (m_total + n_chunks - 1) / n_chunks;
    for (std::size_t c = 0; c < n_chunks; ++c) {
      ScoreTail part(cap);
      for (std::size_t i = c * chunk; i < std::min(m_total, (c + 1) * chunk);
           ++i) {
        part.add(imp[i]);
      }
      parts.push_back(part);
    }
    ScoreTail merged(cap);
    for (const auto& p : parts) merged.merge(p);
    CHECK(merged.total() == serial.total());
    CHECK(far_threshold(merged, 1e-3) == far_threshold(serial, 1e-3));
    CHECK(merged.count_at_or_above(far_threshold(merged, 1e-3)) ==
          serial.count_at_or_above(far_threshold(serial, 1e-3)));
  }
}

TEST_CASE("identical per-seed values give a zero-width interval") {
  const IntervalEstimate e = t_interval({0.83, 0.83, 0.83, 0.83});
  CHECK(e.mean == doctest::Approx(0.83));
  CHECK(e.half_width == 0.0);
}

TEST_CASE("two seeds at 0 and 1 give half-width 6.3531") {
  const IntervalEstimate e = t_interval({0.0, 1.0});
  CHECK(e.mean == doctest::Approx(0.5));
  CHECK(std::abs(e.half_width - 6.3531) <= 1e-3);
  CHECK(e.half_width == doctest::Approx(6.3531023682).epsilon(1e-9));
  CHECK(e.n_seeds == 2);
}

TEST_CASE("fewer than two seeds raise InsufficientSeeds") {
  CHECK_THROWS_AS(t_interval({0.5}), InsufficientSeeds);
  CHECK_THROWS_AS(t_interval({}), InsufficientSeeds);
}

TEST_CASE("intervals match the frozen reference table to 1e-9") {
  REQUIRE(kTIntervalCases.size() == 100);
  for (const auto& c : kTIntervalCases) {
    const IntervalEstimate e = t_interval(c.values);
    CHECK(std::abs(e.mean - c.mean) <=
          1e-9 * std::max(1.0, std::abs(c.mean)));
    CHECK(std::abs(e.half_width - c.half_width) <=
          1e-9 * std::max(1.0, std::abs(c.half_width)));
  }
}

TEST_CASE("compute_metrics assembles rank and TAR tables") {
  OutcomeSet set;
  Rng rng = make_rng(137);
  for (int i = 0; i < 50; ++i) {
    set.outcomes.push_back(outcome_with_rank(
        1 + static_cast<std::uint32_t>(uniform_below(rng, 8))));
  }
  set.outcomes.push_back(outcome_without_mate());
  set.n_no_genuine_mate = 1;
  for (int i = 0; i < 500; ++i) set.genuine_scores.push_back(0.5 + 0.1 * gaussian(rng));
  for (int i = 0; i < 20000; ++i) set.impostor_scores.add(0.1 * gaussian(rng));

  const MetricBundle b = compute_metrics(set, {1, 5, 10}, {1e-2, 1e-3});
  CHECK(b.n_queries == 51);
  CHECK(b.n_no_genuine_mate == 1);
  CHECK(b.rank_at.at(1) <= b.rank_at.at(5));
  CHECK(b.rank_at.at(5) <= b.rank_at.at(10));
  CHECK(b.tar_at.at(1e-2).tar >= b.tar_at.at(1e-3).tar);
  CHECK(b.n_impostor_scores == 20000);
}

}  // TEST_SUITE
