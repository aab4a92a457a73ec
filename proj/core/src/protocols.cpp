#include "ecgid/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "ecgid/parallel.hpp"
#include "ecgid/prng.hpp"

namespace ecgid {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

void validate_rank_ks(const std::vector<std::uint32_t>& ks) {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw ConfigError("Rank@K list entries must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1]) {
      throw ConfigError("Rank@K list must be strictly ascending");
    }
  }
}

void validate_fars(const std::vector<double>& fars) {
  for (double far : fars) {
    if (!(far > 0.0 && far < 1.0)) {
      throw ConfigError("FAR values must lie in (0,1)");
    }
  }
}

std::size_t tail_capacity(const std::vector<double>& fars,
                          std::size_t max_impostors) {
  return fars.empty() ? 0 : score_tail_capacity(max_impostors, fars);
}

/// Exact impostor-comparison count for leave-one-out over the gallery.
std::size_t impostor_total(const Gallery& gallery) {
  std::map<std::string, std::size_t> per_subject;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    ++per_subject[gallery.record(i).subject_id];
  }
  const std::size_t n = gallery.size();
  std::size_t same = 0;
  for (const auto& [subject, c] : per_subject) same += c * (c - 1);
  return n * (n - 1) - same;
}

struct ParallelOutcomeBuffers {
  std::vector<QueryOutcome> outcomes;
  std::vector<std::vector<double>> genuine_slots;
  std::vector<ScoreTail> tails;
  std::vector<std::size_t> no_mate;

  ParallelOutcomeBuffers(std::size_t n_queries, int threads, std::size_t cap) {
    outcomes.resize(n_queries);
    genuine_slots.resize(n_queries);
    const auto workers = static_cast<std::size_t>(resolve_threads(threads));
    tails.assign(workers, ScoreTail(cap));
    no_mate.assign(workers, 0);
  }

  OutcomeSet gather(std::size_t cap) {
    OutcomeSet set;
    set.outcomes = std::move(outcomes);
    for (auto& slot : genuine_slots) {
      set.genuine_scores.insert(set.genuine_scores.end(), slot.begin(),
                                slot.end());
    }
    set.impostor_scores = ScoreTail(cap);
    for (const auto& t : tails) set.impostor_scores.merge(t);
    for (std::size_t c : no_mate) set.n_no_genuine_mate += c;
    return set;
  }
};

}  // namespace

OutcomeSet run_gc(const Gallery& gallery, const std::vector<double>& fars,
                  int threads) {
  validate_fars(fars);
  const std::size_t n = gallery.size();
  if (n < 2) {
    throw EmptyGalleryError("leave-one-out needs at least two gallery exams");
  }
  const std::size_t cap = tail_capacity(fars, impostor_total(gallery));

  ParallelOutcomeBuffers buf(n, threads, cap);
  const Matrix& m = gallery.matrix();

  parallel_chunks(0, n, threads, buf.tails.size(), [&](std::size_t slot,
                                                       std::size_t lo,
                                                       std::size_t hi) {
    Vector scores(m.cols());
    for (std::size_t i = lo; i < hi; ++i) {
      const EmbeddingRecord& query = gallery.record(i);
      scores.noalias() = m.transpose() * m.col(static_cast<Eigen::Index>(i));

      // Candidate a ranks before candidate b: higher score, ties by exam id.
      const auto before = [&](std::size_t a, std::size_t b) {
        const double sa = scores[static_cast<Eigen::Index>(a)];
        const double sb = scores[static_cast<Eigen::Index>(b)];
        if (sa != sb) return sa > sb;
        return gallery.record(a).exam_id < gallery.record(b).exam_id;
      };

      std::size_t top1 = kNone, top2 = kNone, best_genuine = kNone;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (top1 == kNone || before(j, top1)) {
          top2 = top1;
          top1 = j;
        } else if (top2 == kNone || before(j, top2)) {
          top2 = j;
        }
        if (gallery.record(j).subject_id == query.subject_id) {
          buf.genuine_slots[i].push_back(scores[static_cast<Eigen::Index>(j)]);
          if (best_genuine == kNone || before(j, best_genuine)) {
            best_genuine = j;
          }
        } else {
          buf.tails[slot].add(scores[static_cast<Eigen::Index>(j)]);
        }
      }

      QueryOutcome& o = buf.outcomes[i];
      o.query_exam_id = query.exam_id;
      o.query_subject_id = query.subject_id;
      o.s1 = scores[static_cast<Eigen::Index>(top1)];
      if (top2 != kNone) o.s2 = scores[static_cast<Eigen::Index>(top2)];
      o.top1_subject_id = gallery.record(top1).subject_id;
      if (best_genuine == kNone) {
        ++buf.no_mate[slot];
      } else {
        std::size_t ahead = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i || j == best_genuine) continue;
          if (before(j, best_genuine)) ++ahead;
        }
        o.rank_of_first_genuine = static_cast<std::uint32_t>(ahead + 1);
      }
    }
  });

  return buf.gather(cap);
}

ScaleResult run_scale(const std::vector<EmbeddingRecord>& pool,
                      const ScaleConfig& config) {
  validate_rank_ks(config.rank_ks);
  validate_fars(config.fars);
  if (config.gallery_sizes.empty() || config.exams_per_subject.empty()) {
    throw ConfigError("scale grid must have at least one G and one E value");
  }
  if (config.seeds.empty()) throw ConfigError("scale run needs seeds");
  for (std::size_t g : config.gallery_sizes) {
    if (g < 2) throw ConfigError("gallery size must be >= 2 subjects");
  }
  for (std::size_t e : config.exams_per_subject) {
    if (e < 2) {
      throw ConfigError("exams per subject must be >= 2 (each query needs a mate)");
    }
  }

  // Subjects with date-ordered exams, keyed and ordered by subject id.
  std::map<std::string, std::vector<const EmbeddingRecord*>> by_subject;
  for (const auto& r : pool) by_subject[r.subject_id].push_back(&r);
  struct Subject {
    const std::string* id;
    std::vector<const EmbeddingRecord*> exams;
  };
  std::vector<Subject> subjects;
  subjects.reserve(by_subject.size());
  for (auto& [id, exams] : by_subject) {
    std::sort(exams.begin(), exams.end(),
              [](const EmbeddingRecord* a, const EmbeddingRecord* b) {
                if (a->date.days != b->date.days) {
                  return a->date.days < b->date.days;
                }
                return a->exam_id < b->exam_id;
              });
    subjects.push_back({&id, std::move(exams)});
  }

  const auto eligible_for = [&](std::size_t e) {
    std::vector<std::size_t> idx;
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      if (subjects[s].exams.size() >= e) idx.push_back(s);
    }
    return idx;
  };

  // Fail fast on any infeasible cell before running work.
  for (std::size_t g : config.gallery_sizes) {
    for (std::size_t e : config.exams_per_subject) {
      const std::size_t eligible = eligible_for(e).size();
      if (eligible < g) {
        throw InsufficientSubjects(
            "cell G=" + std::to_string(g) + " E=" + std::to_string(e) +
            " needs " + std::to_string(g) + " subjects with >= " +
            std::to_string(e) + " exams, pool has " +
            std::to_string(eligible));
      }
    }
  }

  ScaleResult result;
  for (std::size_t g : config.gallery_sizes) {
    for (std::size_t e : config.exams_per_subject) {
      const std::vector<std::size_t> eligible = eligible_for(e);
      ScaleCell cell;
      cell.gallery_size = g;
      cell.exams_per_subject = e;
      for (std::uint64_t seed : config.seeds) {
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(g),
                                  static_cast<std::uint64_t>(e)});
        std::vector<std::size_t> chosen =
            sample_without_replacement(eligible.size(), g, rng);
        std::sort(chosen.begin(), chosen.end());
        std::vector<EmbeddingRecord> records;
        records.reserve(g * e);
        for (std::size_t c : chosen) {
          const Subject& subject = subjects[eligible[c]];
          for (std::size_t x = 0; x < e; ++x) {
            records.push_back(*subject.exams[x]);
          }
        }
        const Gallery gallery(std::move(records));
        OutcomeSet set = run_gc(gallery, config.fars, config.threads);
        cell.per_seed.push_back(
            compute_metrics(set, config.rank_ks, config.fars));
        if (config.keep_outcomes) {
          cell.per_seed_outcomes.push_back(std::move(set));
        }
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

std::vector<double> seed_rank_values(const ScaleCell& cell, std::uint32_t k) {
  std::vector<double> values;
  values.reserve(cell.per_seed.size());
  for (const auto& b : cell.per_seed) values.push_back(b.rank_at.at(k));
  return values;
}

std::vector<double> seed_tar_values(const ScaleCell& cell, double far) {
  std::vector<double> values;
  values.reserve(cell.per_seed.size());
  for (const auto& b : cell.per_seed) values.push_back(b.tar_at.at(far).tar);
  return values;
}

std::vector<TstTargetResult> run_tst(
    const std::map<int, std::vector<TstPair>>& pairs_by_target,
    const TstConfig& config) {
  validate_rank_ks(config.rank_ks);
  validate_fars(config.fars);
  if (pairs_by_target.empty()) {
    throw ConfigError("temporal stress test needs at least one target");
  }
  const std::size_t p_subjects = pairs_by_target.begin()->second.size();
  if (p_subjects < 2) {
    throw ConfigError("temporal stress test needs at least two pairs");
  }
  for (const auto& [target, pairs] : pairs_by_target) {
    if (pairs.size() != p_subjects) {
      throw ConfigError("target " + std::to_string(target) + " holds " +
                        std::to_string(pairs.size()) + " pairs, expected " +
                        std::to_string(p_subjects) +
                        " (gallery size must be constant)");
    }
    std::set<std::string> seen;
    for (const auto& pair : pairs) {
      if (!seen.insert(pair.subject_id).second) {
        throw ConfigError("duplicate subject " + pair.subject_id +
                          " in target " + std::to_string(target));
      }
      if (pair.early.subject_id != pair.subject_id ||
          pair.late.subject_id != pair.subject_id) {
        throw ConfigError("pair exams must belong to subject " +
                          pair.subject_id);
      }
      if (pair.late.date.days < pair.early.date.days) {
        throw ConfigError("pair for subject " + pair.subject_id +
                          " is not date-ordered");
      }
    }
  }

  std::vector<TstTargetResult> results;
  for (const auto& [target, pairs_input] : pairs_by_target) {
    // Gallery order independent of input order.
    std::vector<const TstPair*> pairs;
    pairs.reserve(pairs_input.size());
    for (const auto& pair : pairs_input) pairs.push_back(&pair);
    std::sort(pairs.begin(), pairs.end(),
              [](const TstPair* a, const TstPair* b) {
                return a->subject_id < b->subject_id;
              });

    std::vector<EmbeddingRecord> records;
    records.reserve(2 * pairs.size());
    for (const TstPair* pair : pairs) {
      records.push_back(pair->early);
      records.push_back(pair->late);
    }
    const Gallery gallery(std::move(records));

    TstTargetResult r;
    r.target_years = target;
    if (config.scope == TstImpostorScope::both_exams) {
      // Every other subject contributes both paired exams; this is exactly
      // leave-one-out over the 2P exams.
      r.outcomes = run_gc(gallery, config.fars, config.threads);
    } else {
      const std::size_t n = gallery.size();
      const std::size_t m_impostor = n * (p_subjects - 1);
      const std::size_t cap = tail_capacity(config.fars, m_impostor);
      ParallelOutcomeBuffers buf(n, config.threads, cap);
      const Matrix& m = gallery.matrix();

      parallel_chunks(0, n, config.threads, buf.tails.size(),
                      [&](std::size_t slot, std::size_t lo, std::size_t hi) {
        Vector scores(m.cols());
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t own_pair = i / 2;
          const std::size_t mate = i ^ 1;
          scores.noalias() = m.transpose() * m.col(static_cast<Eigen::Index>(i));

          const auto before = [&](std::size_t a, std::size_t b) {
            const double sa = scores[static_cast<Eigen::Index>(a)];
            const double sb = scores[static_cast<Eigen::Index>(b)];
            if (sa != sb) return sa > sb;
            return gallery.record(a).exam_id < gallery.record(b).exam_id;
          };

          // Candidates: own mate, plus the later exam of each other subject.
          std::size_t top1 = kNone, top2 = kNone, ahead = 0;
          const auto consider = [&](std::size_t j) {
            if (top1 == kNone || before(j, top1)) {
              top2 = top1;
              top1 = j;
            } else if (top2 == kNone || before(j, top2)) {
              top2 = j;
            }
            if (j != mate && before(j, mate)) ++ahead;
          };
          consider(mate);
          for (std::size_t pair = 0; pair < p_subjects; ++pair) {
            if (pair == own_pair) continue;
            const std::size_t j = 2 * pair + 1;
            consider(j);
            buf.tails[slot].add(scores[static_cast<Eigen::Index>(j)]);
          }
          buf.genuine_slots[i].push_back(
              scores[static_cast<Eigen::Index>(mate)]);

          QueryOutcome& o = buf.outcomes[i];
          o.query_exam_id = gallery.record(i).exam_id;
          o.query_subject_id = gallery.record(i).subject_id;
          o.s1 = scores[static_cast<Eigen::Index>(top1)];
          if (top2 != kNone) o.s2 = scores[static_cast<Eigen::Index>(top2)];
          o.top1_subject_id = gallery.record(top1).subject_id;
          o.rank_of_first_genuine = static_cast<std::uint32_t>(ahead + 1);
        }
      });
      r.outcomes = buf.gather(cap);
    }
    r.metrics = compute_metrics(r.outcomes, config.rank_ks, config.fars);
    results.push_back(std::move(r));
  }
  return results;
}

namespace {

/// Exam-level outcomes from processed shortlists. A mate that exists in the
/// gallery but not in the shortlist counts as a miss at depth len+1.
OutcomeSet outcomes_from_shortlists(const Gallery& gallery,
                                    const std::vector<Shortlist>& shortlists,
                                    const std::vector<double>& fars,
                                    std::size_t shortlist_k, int threads) {
  std::map<std::string, std::size_t> subject_exams;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    ++subject_exams[gallery.record(i).subject_id];
  }
  const std::size_t n = shortlists.size();
  const std::size_t cap = tail_capacity(fars, n * shortlist_k);
  ParallelOutcomeBuffers buf(n, threads, cap);

  parallel_chunks(0, n, threads, buf.tails.size(), [&](std::size_t slot,
                                                       std::size_t lo,
                                                       std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Shortlist& s = shortlists[i];
      const EmbeddingRecord& query = gallery.record(i);
      QueryOutcome& o = buf.outcomes[i];
      o.query_exam_id = query.exam_id;
      o.query_subject_id = query.subject_id;
      std::size_t first_genuine = kNone;
      for (std::size_t e = 0; e < s.entries.size(); ++e) {
        const ShortlistEntry& entry = s.entries[e];
        if (entry.subject_id == query.subject_id) {
          if (first_genuine == kNone) first_genuine = e;
          buf.genuine_slots[i].push_back(entry.current_score);
        } else {
          buf.tails[slot].add(entry.current_score);
        }
      }
      if (!s.entries.empty()) {
        o.s1 = s.entries[0].current_score;
        o.top1_subject_id = s.entries[0].subject_id;
        if (s.entries.size() > 1) o.s2 = s.entries[1].current_score;
      }
      if (first_genuine != kNone) {
        o.rank_of_first_genuine =
            static_cast<std::uint32_t>(first_genuine + 1);
      } else if (subject_exams.at(query.subject_id) >= 2) {
        o.rank_of_first_genuine =
            static_cast<std::uint32_t>(s.entries.size() + 1);
      } else {
        ++buf.no_mate[slot];
      }
    }
  });
  return buf.gather(cap);
}

/// Identity-level outcomes for max-score fusion.
OutcomeSet outcomes_from_identities(const Gallery& gallery,
                                    const std::vector<Shortlist>& shortlists,
                                    const std::vector<double>& fars,
                                    std::size_t shortlist_k, int threads) {
  std::map<std::string, std::size_t> subject_exams;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    ++subject_exams[gallery.record(i).subject_id];
  }
  const std::size_t n = shortlists.size();
  const std::size_t cap = tail_capacity(fars, n * shortlist_k);
  ParallelOutcomeBuffers buf(n, threads, cap);

  parallel_chunks(0, n, threads, buf.tails.size(), [&](std::size_t slot,
                                                       std::size_t lo,
                                                       std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const EmbeddingRecord& query = gallery.record(i);
      const std::vector<IdentityScore> ranking = best_of_k(shortlists[i]);
      QueryOutcome& o = buf.outcomes[i];
      o.query_exam_id = query.exam_id;
      o.query_subject_id = query.subject_id;
      std::size_t own = kNone;
      for (std::size_t e = 0; e < ranking.size(); ++e) {
        if (ranking[e].subject_id == query.subject_id) {
          own = e;
          buf.genuine_slots[i].push_back(ranking[e].score);
        } else {
          buf.tails[slot].add(ranking[e].score);
        }
      }
      if (!ranking.empty()) {
        o.s1 = ranking[0].score;
        o.top1_subject_id = ranking[0].subject_id;
        if (ranking.size() > 1) o.s2 = ranking[1].score;
      }
      if (own != kNone) {
        o.rank_of_first_genuine = static_cast<std::uint32_t>(own + 1);
      } else if (subject_exams.at(query.subject_id) >= 2) {
        o.rank_of_first_genuine =
            static_cast<std::uint32_t>(ranking.size() + 1);
      } else {
        ++buf.no_mate[slot];
      }
    }
  });
  return buf.gather(cap);
}

}  // namespace

RrResult run_rr(const Gallery& gallery, const RerankSpec& spec,
                const RrConfig& config,
                const std::vector<EmbeddingRecord>* external_cohort_pool) {
  validate_rank_ks(config.rank_ks);
  validate_fars(config.fars);
  spec.validate();
  if (!config.rank_ks.empty() && spec.shortlist_k < config.rank_ks.back()) {
    throw ConfigError("shortlist depth K=" + std::to_string(spec.shortlist_k) +
                      " is smaller than the deepest requested Rank@" +
                      std::to_string(config.rank_ks.back()));
  }

  RrResult result;
  result.baseline = run_gc(gallery, config.fars, config.threads);
  result.baseline_metrics =
      compute_metrics(result.baseline, config.rank_ks, config.fars);

  const std::size_t n = gallery.size();
  std::vector<Shortlist> base(n);
  parallel_for(0, n, config.threads, [&](std::size_t i) {
    base[i] = gallery.top_k(gallery.record(i), spec.shortlist_k, true);
  });

  const bool needs_cohort =
      spec.method == RerankMethod::znorm || spec.method == RerankMethod::tnorm ||
      spec.method == RerankMethod::snorm || spec.method == RerankMethod::cnorm ||
      spec.method == RerankMethod::asnorm;
  Cohort cohort;
  if (needs_cohort) {
    if (spec.cohort_external) {
      if (external_cohort_pool == nullptr) {
        throw ConfigError("configuration '" + spec.code +
                          "' needs an external cohort pool");
      }
      cohort = make_external_cohort(*external_cohort_pool, spec.cohort_label,
                                    spec.cohort_size, spec.cohort_seed,
                                    gallery);
    } else {
      cohort = make_internal_cohort(gallery, spec.cohort_size,
                                    spec.cohort_seed);
    }
  }

  std::vector<Shortlist> processed;
  switch (spec.method) {
    case RerankMethod::bestofk: {
      result.reranked = outcomes_from_identities(
          gallery, base, config.fars, spec.shortlist_k, config.threads);
      result.reranked_metrics =
          compute_metrics(result.reranked, config.rank_ks, config.fars);
      return result;
    }
    case RerankMethod::znorm:
    case RerankMethod::tnorm:
    case RerankMethod::snorm:
    case RerankMethod::cnorm: {
      const bool query_side =
          config.convention == SideConvention::znorm_query_side;
      const bool need_candidate =
          spec.method == RerankMethod::snorm ||
          spec.method == RerankMethod::cnorm ||
          (spec.method == RerankMethod::znorm && !query_side) ||
          (spec.method == RerankMethod::tnorm && query_side);
      const bool need_query =
          spec.method == RerankMethod::snorm ||
          spec.method == RerankMethod::cnorm ||
          (spec.method == RerankMethod::znorm && query_side) ||
          (spec.method == RerankMethod::tnorm && !query_side);
      std::vector<NormStats> cstats;
      if (need_candidate) {
        cstats = candidate_side_stats(gallery, cohort, config.threads);
      }
      processed.resize(n);
      parallel_for(0, n, config.threads, [&](std::size_t i) {
        NormStats qstats;
        if (need_query) {
          qstats = side_stats(
              gallery.matrix().col(static_cast<Eigen::Index>(i)), cohort);
        }
        processed[i] = normalize_scores(base[i], spec.method, qstats, cstats,
                                        config.convention);
      });
      break;
    }
    case RerankMethod::asnorm: {
      const std::vector<NormStats> cache = adaptive_candidate_stats(
          gallery, cohort, spec.n_top, spec.scan, config.threads);
      processed.resize(n);
      parallel_for(0, n, config.threads, [&](std::size_t i) {
        processed[i] = as_norm(
            base[i], gallery.matrix().col(static_cast<Eigen::Index>(i)),
            gallery.record(i).subject_id, gallery, cohort, spec, &cache);
      });
      break;
    }
    case RerankMethod::diffusion: {
      processed = diffuse(base, gallery, spec, config.threads);
      break;
    }
    case RerankMethod::aqe: {
      processed.resize(n);
      parallel_for(0, n, config.threads, [&](std::size_t i) {
        processed[i] = alpha_qe(
            gallery.matrix().col(static_cast<Eigen::Index>(i)),
            gallery.record(i).exam_id, base[i], gallery, spec.qe_k,
            spec.qe_alpha, 0, i);
      });
      break;
    }
  }

  result.reranked = outcomes_from_shortlists(
      gallery, processed, config.fars, spec.shortlist_k, config.threads);
  result.reranked_metrics =
      compute_metrics(result.reranked, config.rank_ks, config.fars);
  return result;
}

}  // namespace ecgid
