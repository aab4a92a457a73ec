#include "engine/engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ecgid/gallery_io.hpp"
#include "ecgid/resample.hpp"
#include "ecgid/synth.hpp"
#include "engine/digest.hpp"
#include "json.hpp"

#ifndef ECGID_VERSION
#define ECGID_VERSION "0.0.0"
#endif

namespace ecgid::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

/// Shortest round-trip decimal form; the one number format used in every
/// CSV cell, column label, and JSON metric key.
std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("read error on " + path);
  return buffer.str();
}

struct TstPlan {
  std::size_t subjects = 0;
  std::map<int, std::vector<TemporalPair>> pairs;
};

TstPlan plan_tst(const TstSection& cfg, const std::vector<ExamMeta>& meta) {
  if (cfg.targets.empty()) {
    throw ConfigError("protocols.tst.targets must not be empty");
  }
  if (cfg.seeds.empty()) {
    throw ConfigError("protocols.tst.seeds must not be empty");
  }
  if (cfg.tolerance_days < 0) {
    throw ConfigError("protocols.tst.tolerance_days must be >= 0");
  }
  TstPlan plan;
  std::size_t min_available = std::numeric_limits<std::size_t>::max();
  for (int target : cfg.targets) {
    if (target < 1) {
      throw ConfigError("protocols.tst.targets entries must be >= 1 year");
    }
    if (plan.pairs.count(target) != 0) {
      throw ConfigError("protocols.tst.targets repeats target " +
                        std::to_string(target));
    }
    std::vector<TemporalPair> pairs =
        build_temporal_pairs(meta, target, cfg.tolerance_days);
    min_available = std::min(min_available, pairs.size());
    plan.pairs[target] = std::move(pairs);
  }
  plan.subjects = cfg.subjects > 0 ? cfg.subjects : min_available;
  for (const auto& [target, pairs] : plan.pairs) {
    if (pairs.size() < plan.subjects || plan.subjects < 2) {
      throw InsufficientSubjects(
          "temporal target " + std::to_string(target) + " offers " +
          std::to_string(pairs.size()) + " pairs, need " +
          std::to_string(std::max<std::size_t>(plan.subjects, 2)));
    }
  }
  return plan;
}

std::map<int, std::vector<TstPair>> resolve_tst_pairs(
    const std::map<int, std::vector<TemporalPair>>& fixed,
    const std::vector<EmbeddingRecord>& records) {
  std::map<std::string, const EmbeddingRecord*> by_exam;
  for (const auto& r : records) by_exam[r.exam_id] = &r;
  std::map<int, std::vector<TstPair>> out;
  for (const auto& [target, pairs] : fixed) {
    std::vector<TstPair> resolved;
    resolved.reserve(pairs.size());
    for (const auto& p : pairs) {
      const auto a = by_exam.find(p.exam_a);
      const auto b = by_exam.find(p.exam_b);
      if (a == by_exam.end() || b == by_exam.end()) {
        throw ConfigError("temporal pair exam lacks an embedding: " +
                          (a == by_exam.end() ? p.exam_a : p.exam_b));
      }
      TstPair t;
      t.subject_id = p.subject_id;
      t.early = *a->second;
      t.late = *b->second;
      resolved.push_back(std::move(t));
    }
    out[target] = std::move(resolved);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

void append_bundle_header(std::string& h, const std::vector<std::uint32_t>& ks,
                          const std::vector<double>& fars) {
  for (std::uint32_t k : ks) h += ",rank@" + std::to_string(k);
  for (double far : fars) {
    const std::string label = fmt(far);
    h += ",tar@" + label + ",threshold@" + label + ",achieved_far@" + label;
  }
}

void append_bundle_row(std::string& r, const MetricBundle& b,
                       const std::vector<std::uint32_t>& ks,
                       const std::vector<double>& fars) {
  for (std::uint32_t k : ks) r += "," + fmt(b.rank_at.at(k));
  for (double far : fars) {
    const TarResult& t = b.tar_at.at(far);
    r += "," + fmt(t.tar) + "," + fmt(t.threshold) + "," + fmt(t.achieved_far);
  }
}

std::string csv_gc(const MetricBundle& b, const std::vector<std::uint32_t>& ks,
                   const std::vector<double>& fars) {
  std::string out =
      "n_queries,n_ranked,n_no_genuine_mate,n_genuine_scores,n_impostor_scores";
  append_bundle_header(out, ks, fars);
  out += "\n";
  out += std::to_string(b.n_queries) + "," +
         std::to_string(b.n_queries - b.n_no_genuine_mate) + "," +
         std::to_string(b.n_no_genuine_mate) + "," +
         std::to_string(b.n_genuine_scores) + "," +
         std::to_string(b.n_impostor_scores);
  append_bundle_row(out, b, ks, fars);
  out += "\n";
  return out;
}

/// Mean and CI half-width columns over per-seed values; the CI cell is empty
/// with a single seed (no interval is defined there).
void append_interval_cells(std::string& r, const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  r += "," + fmt(mean) + ",";
  if (values.size() >= 2) r += fmt(t_interval(values).half_width);
}

std::string csv_scale(const ScaleResult& result,
                      const std::vector<std::uint32_t>& ks,
                      const std::vector<double>& fars) {
  std::string out = "gallery_size,exams_per_subject,n_seeds";
  for (std::uint32_t k : ks) {
    out += ",rank@" + std::to_string(k) + "_mean,rank@" + std::to_string(k) +
           "_ci95";
  }
  for (double far : fars) {
    out += ",tar@" + fmt(far) + "_mean,tar@" + fmt(far) + "_ci95";
  }
  out += "\n";
  for (const ScaleCell& cell : result.cells) {
    out += std::to_string(cell.gallery_size) + "," +
           std::to_string(cell.exams_per_subject) + "," +
           std::to_string(cell.per_seed.size());
    for (std::uint32_t k : ks) {
      append_interval_cells(out, seed_rank_values(cell, k));
    }
    for (double far : fars) {
      append_interval_cells(out, seed_tar_values(cell, far));
    }
    out += "\n";
  }
  return out;
}

std::string csv_tst(const RunArtifacts& art,
                    const std::vector<std::uint32_t>& ks,
                    const std::vector<double>& fars) {
  std::string out = "target_years,subjects,n_seeds,n_queries";
  for (std::uint32_t k : ks) {
    out += ",rank@" + std::to_string(k) + "_mean,rank@" + std::to_string(k) +
           "_ci95";
  }
  for (double far : fars) {
    out += ",tar@" + fmt(far) + "_mean,tar@" + fmt(far) + "_ci95";
  }
  out += "\n";
  const std::size_t n_seeds = art.tst_per_seed.size();
  const std::size_t n_targets = n_seeds ? art.tst_per_seed[0].size() : 0;
  for (std::size_t t = 0; t < n_targets; ++t) {
    const TstTargetResult& first = art.tst_per_seed[0][t];
    out += std::to_string(first.target_years) + "," +
           std::to_string(art.tst_subjects) + "," + std::to_string(n_seeds) +
           "," + std::to_string(first.metrics.n_queries);
    for (std::uint32_t k : ks) {
      std::vector<double> values;
      for (std::size_t s = 0; s < n_seeds; ++s) {
        values.push_back(art.tst_per_seed[s][t].metrics.rank_at.at(k));
      }
      append_interval_cells(out, values);
    }
    for (double far : fars) {
      std::vector<double> values;
      for (std::size_t s = 0; s < n_seeds; ++s) {
        values.push_back(art.tst_per_seed[s][t].metrics.tar_at.at(far).tar);
      }
      append_interval_cells(out, values);
    }
    out += "\n";
  }
  return out;
}

void append_confidence_cells(std::string& r,
                             const ConfidenceArtifacts& art) {
  for (const SelectivePoint& p : art.report.selective) {
    r += "," + fmt(p.coverage) + "," + fmt(p.error);
  }
}

std::string csv_rerank(const RunConfig& config, const RunArtifacts& art) {
  const auto& ks = config.rank_ks;
  const auto& fars = config.fars;
  std::string out = "config";
  append_bundle_header(out, ks, fars);
  if (config.confidence.enabled) {
    for (double tau : config.confidence.taus) {
      out += ",cov@" + fmt(tau) + ",err@" + fmt(tau);
    }
  }
  out += "\n";
  if (!art.rr_results.empty()) {
    out += "baseline";
    append_bundle_row(out, art.rr_results[0].baseline_metrics, ks, fars);
    if (config.confidence.enabled) {
      append_confidence_cells(out, *art.rr_baseline_confidence);
    }
    out += "\n";
  }
  for (std::size_t i = 0; i < art.rr_results.size(); ++i) {
    out += config.rerank.specs[i].emit();
    append_bundle_row(out, art.rr_results[i].reranked_metrics, ks, fars);
    if (config.confidence.enabled) {
      append_confidence_cells(out, *art.rr_confidence[i]);
    }
    out += "\n";
  }
  return out;
}

std::string csv_confidence(const ConfidenceArtifacts& art,
                           const std::vector<double>& taus) {
  std::string out =
      "n_calibration,n_evaluation,acc@0.5,brier,ece,conf_mean,conf_correct,"
      "conf_incorrect,delta";
  for (double tau : taus) out += ",cov@" + fmt(tau) + ",err@" + fmt(tau);
  out += "\n";
  const ConfidenceReport& r = art.report;
  out += std::to_string(art.n_calibration) + "," +
         std::to_string(art.n_evaluation) + "," + fmt(r.acc_at_half) + "," +
         fmt(r.brier) + "," + fmt(r.ece) + "," + fmt(r.conf_mean) + "," +
         fmt(r.conf_mean_y1) + "," + fmt(r.conf_mean_y0) + "," + fmt(r.delta);
  append_confidence_cells(out, art);
  out += "\n";
  return out;
}

std::string csv_outcomes(const OutcomeSet& set) {
  std::string out =
      "query_exam_id,query_subject_id,rank,s1,s2,top1_subject_id,top1_correct\n";
  for (const QueryOutcome& o : set.outcomes) {
    out += o.query_exam_id + "," + o.query_subject_id + ",";
    if (o.rank_of_first_genuine.has_value()) {
      out += std::to_string(*o.rank_of_first_genuine);
    }
    out += "," + fmt(o.s1) + "," + fmt(o.s2) + "," + o.top1_subject_id + "," +
           (o.top1_correct() ? "1" : "0") + "\n";
  }
  return out;
}

/// Genuine pool in full plus the retained (exact upper) impostor tail; the
/// total impostor count lives in the metric tables.
std::string csv_scores(const OutcomeSet& set) {
  std::string out = "kind,score\n";
  for (double s : set.genuine_scores) out += "genuine," + fmt(s) + "\n";
  for (double s : set.impostor_scores.sorted()) {
    out += "impostor," + fmt(s) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structured report
// ---------------------------------------------------------------------------

ojson bundle_to_json(const MetricBundle& b) {
  ojson out;
  out["n_queries"] = b.n_queries;
  out["n_no_genuine_mate"] = b.n_no_genuine_mate;
  out["n_genuine_scores"] = b.n_genuine_scores;
  out["n_impostor_scores"] = b.n_impostor_scores;
  ojson rank;
  for (const auto& [k, v] : b.rank_at) rank[std::to_string(k)] = v;
  out["rank_at"] = std::move(rank);
  ojson tar;
  for (const auto& [far, t] : b.tar_at) {
    ojson cell;
    cell["tar"] = t.tar;
    cell["threshold"] = t.threshold;
    cell["achieved_far"] = t.achieved_far;
    cell["n_genuine"] = t.n_genuine;
    cell["n_impostor"] = t.n_impostor;
    tar[fmt(far)] = std::move(cell);
  }
  out["tar_at"] = std::move(tar);
  return out;
}

ojson confidence_to_json(const ConfidenceArtifacts& art) {
  ojson out;
  out["n_calibration"] = art.n_calibration;
  out["n_evaluation"] = art.n_evaluation;
  const ConfidenceReport& r = art.report;
  out["acc_at_half"] = r.acc_at_half;
  out["brier"] = r.brier;
  out["ece"] = r.ece;
  out["conf_mean"] = r.conf_mean;
  out["conf_mean_correct"] = r.conf_mean_y1;
  out["conf_mean_incorrect"] = r.conf_mean_y0;
  out["delta"] = r.delta;
  ojson selective = ojson::array();
  for (const SelectivePoint& p : r.selective) {
    ojson point;
    point["tau"] = p.tau;
    point["coverage"] = p.coverage;
    point["error"] = p.error;
    selective.push_back(std::move(point));
  }
  out["selective"] = std::move(selective);
  return out;
}

ojson seeds_to_json(const RunConfig& c) {
  ojson seeds;
  if (c.dataset.stratified_patients > 0) {
    seeds["stratified"] = c.dataset.stratified_seed;
  }
  if (c.scale.enabled) seeds["scale"] = c.scale.seeds;
  if (c.tst.enabled) seeds["tst"] = c.tst.seeds;
  if (c.rerank.enabled) {
    std::vector<std::uint64_t> cohort_seeds;
    for (const auto& spec : c.rerank.specs) {
      if (spec.has_cohort_seed) cohort_seeds.push_back(spec.cohort_seed);
    }
    seeds["rerank_cohorts"] = cohort_seeds;
  }
  if (c.confidence.enabled) {
    seeds["confidence_split"] = c.confidence.split_seed;
  }
  return seeds;
}

ojson intervals_to_json(const std::vector<double>& values) {
  ojson out;
  out["per_seed"] = values;
  double mean = 0.0;
  for (double v : values) mean += v;
  out["mean"] = mean / static_cast<double>(values.size());
  if (values.size() >= 2) {
    out["ci95_half_width"] = t_interval(values).half_width;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public engine pieces
// ---------------------------------------------------------------------------

void apply_overrides(RunConfig& config, const CliOptions& opts) {
  if (opts.threads > 0) config.threads = opts.threads;
  if (!opts.output_dir_override.empty()) {
    config.output_dir = opts.output_dir_override;
  }
  if (opts.seed_override.has_value()) {
    if (opts.seed_override->empty()) {
      throw ConfigError("--seed-override needs at least one seed");
    }
    if (config.scale.enabled) config.scale.seeds = *opts.seed_override;
    if (config.tst.enabled) config.tst.seeds = *opts.seed_override;
  }
}

Dataset build_dataset(const RunConfig& config) {
  if (config.dataset.embeddings.empty()) {
    throw ConfigError("dataset.embeddings is required");
  }
  Dataset ds;
  std::vector<EmbeddingRecord> records =
      load_embeddings(config.dataset.embeddings);

  std::vector<ExamMeta> meta;
  if (!config.dataset.meta.empty()) {
    ds.meta_loaded = true;
    meta = load_exam_meta(config.dataset.meta);
  } else {
    meta.reserve(records.size());
    for (const auto& r : records) {
      ExamMeta m;
      m.subject_id = r.subject_id;
      m.exam_id = r.exam_id;
      m.timestamp = r.date;
      meta.push_back(std::move(m));
    }
  }
  ds.attrition.add("input", meta);

  if (config.dataset.fiducial_filter) {
    const FiducialRanges ranges =
        config.dataset.fiducial_ranges.empty()
            ? FiducialRanges::defaults()
            : load_fiducial_ranges(config.dataset.fiducial_ranges);
    meta = apply_fiducial_filter(meta, ranges);
    ds.attrition.add("fiducial_filter", meta);
  }
  if (config.dataset.apply_pipeline) {
    auto [kept, report] = apply_common_pipeline(std::move(meta));
    meta = std::move(kept);
    // Skip the pipeline's own "input" step; counts were just recorded.
    for (std::size_t i = 1; i < report.steps.size(); ++i) {
      ds.attrition.steps.push_back(report.steps[i]);
    }
  }
  if (config.dataset.stratified_patients > 0) {
    meta = stratified_sample(meta, config.dataset.stratified_patients,
                             config.dataset.stratified_seed);
    ds.attrition.add("stratified_sample", meta);
  }

  std::map<std::string, const EmbeddingRecord*> by_exam;
  for (const auto& r : records) by_exam[r.exam_id] = &r;
  for (const auto& m : meta) {
    const auto it = by_exam.find(m.exam_id);
    if (it == by_exam.end()) continue;  // metadata without an embedding
    EmbeddingRecord r = *it->second;
    ds.meta.push_back(m);
    ds.records.push_back(std::move(r));
  }
  ds.attrition.add("embedding_join", ds.meta);
  return ds;
}

ConfidenceArtifacts fit_confidence(const OutcomeSet& set,
                                   const ConfidenceSection& cfg) {
  const std::vector<CalibrationSample> samples = to_samples(set.outcomes);
  auto [calibration, evaluation] =
      split_calibration(samples, cfg.split_seed, cfg.calibration_fraction);
  ConfidenceArtifacts art;
  art.n_calibration = calibration.size();
  art.n_evaluation = evaluation.size();
  art.calibrator = fit(calibration, cfg.l2_lambda);
  art.calibrator.split_seed = cfg.split_seed;
  art.calibrator.ece_bins = cfg.ece_bins;
  const std::vector<double> p = predict(art.calibrator, evaluation);
  std::vector<bool> y;
  y.reserve(evaluation.size());
  for (const auto& s : evaluation) y.push_back(s.y);
  art.report = confidence_report(p, y, cfg.ece_bins, cfg.taus);
  return art;
}

RunArtifacts execute_protocols(const RunConfig& config, const Dataset& dataset,
                               bool keep_scale_outcomes) {
  RunArtifacts art;
  const int threads = config.threads;

  std::optional<Gallery> gallery;
  if (config.gc.enabled || config.rerank.enabled) {
    gallery.emplace(std::vector<EmbeddingRecord>(dataset.records));
  }

  if (config.gc.enabled) {
    art.gc_outcomes = run_gc(*gallery, config.fars, threads);
    art.gc_metrics =
        compute_metrics(*art.gc_outcomes, config.rank_ks, config.fars);
    if (config.confidence.enabled) {
      art.gc_confidence = fit_confidence(*art.gc_outcomes, config.confidence);
    }
  }

  if (config.scale.enabled) {
    ScaleConfig sc;
    sc.gallery_sizes = config.scale.gallery_sizes;
    sc.exams_per_subject = config.scale.exams_per_subject;
    sc.seeds = config.scale.seeds;
    sc.rank_ks = config.rank_ks;
    sc.fars = config.fars;
    sc.threads = threads;
    sc.keep_outcomes = keep_scale_outcomes;
    art.scale = run_scale(dataset.records, sc);
  }

  if (config.tst.enabled) {
    const TstPlan plan = plan_tst(config.tst, dataset.meta);
    art.tst_subjects = plan.subjects;
    TstConfig tc;
    tc.scope = config.tst.scope;
    tc.rank_ks = config.rank_ks;
    tc.fars = config.fars;
    tc.threads = threads;
    for (std::uint64_t seed : config.tst.seeds) {
      const auto fixed = fix_gallery_size(plan.pairs, plan.subjects, seed);
      art.tst_per_seed.push_back(
          run_tst(resolve_tst_pairs(fixed, dataset.records), tc));
    }
  }

  if (config.rerank.enabled) {
    std::optional<std::vector<EmbeddingRecord>> pool;
    if (!config.rerank.external_cohort.empty()) {
      pool = load_embeddings(config.rerank.external_cohort);
    }
    RrConfig rc;
    rc.rank_ks = config.rank_ks;
    rc.fars = config.fars;
    rc.convention = config.rerank.convention;
    rc.threads = threads;
    for (const RerankSpec& spec : config.rerank.specs) {
      art.rr_results.push_back(
          run_rr(*gallery, spec, rc, pool ? &*pool : nullptr));
    }
    if (config.confidence.enabled && !art.rr_results.empty()) {
      art.rr_baseline_confidence =
          fit_confidence(art.rr_results[0].baseline, config.confidence);
      for (const RrResult& r : art.rr_results) {
        art.rr_confidence.push_back(
            fit_confidence(r.reranked, config.confidence));
      }
    }
  }
  return art;
}

std::vector<ReportFile> render_reports(
    const RunConfig& config, const Dataset& dataset,
    const RunArtifacts& artifacts, bool dump_outcomes,
    const std::string& run_id, const std::string& config_file_digest,
    const std::vector<std::pair<std::string, std::string>>& input_digests) {
  std::vector<ReportFile> files;
  const auto& ks = config.rank_ks;
  const auto& fars = config.fars;

  ojson report;
  report["run_id"] = run_id;
  report["engine_version"] = ECGID_VERSION;
  report["config_digest"] = config_file_digest;
  ojson inputs;
  for (const auto& [path, digest] : input_digests) inputs[path] = digest;
  report["inputs"] = std::move(inputs);
  report["seeds"] = seeds_to_json(config);
  report["config"] = ojson::parse(run_identity_json(config));

  ojson tables;
  const auto dump_set = [&](const std::string& name, const OutcomeSet& set) {
    files.push_back({"outcomes_" + name + ".csv", csv_outcomes(set)});
    files.push_back({"scores_" + name + ".csv", csv_scores(set)});
  };

  if (artifacts.gc_metrics.has_value()) {
    files.push_back({"gc_summary.csv", csv_gc(*artifacts.gc_metrics, ks, fars)});
    ojson table;
    table["provenance"] = {{"protocol", "gc"}};
    table["metrics"] = bundle_to_json(*artifacts.gc_metrics);
    tables["gc"] = std::move(table);
    if (dump_outcomes) dump_set("gc", *artifacts.gc_outcomes);
  }

  if (artifacts.scale.has_value()) {
    files.push_back({"scale_grid.csv", csv_scale(*artifacts.scale, ks, fars)});
    ojson table;
    table["provenance"] = {{"protocol", "scale"},
                           {"seeds", config.scale.seeds}};
    ojson cells = ojson::array();
    for (const ScaleCell& cell : artifacts.scale->cells) {
      ojson c;
      c["gallery_size"] = cell.gallery_size;
      c["exams_per_subject"] = cell.exams_per_subject;
      ojson per_seed = ojson::array();
      for (const MetricBundle& b : cell.per_seed) {
        per_seed.push_back(bundle_to_json(b));
      }
      c["per_seed"] = std::move(per_seed);
      ojson rank_intervals;
      for (std::uint32_t k : ks) {
        rank_intervals[std::to_string(k)] =
            intervals_to_json(seed_rank_values(cell, k));
      }
      c["rank_intervals"] = std::move(rank_intervals);
      ojson tar_intervals;
      for (double far : fars) {
        tar_intervals[fmt(far)] = intervals_to_json(seed_tar_values(cell, far));
      }
      c["tar_intervals"] = std::move(tar_intervals);
      cells.push_back(std::move(c));
    }
    table["cells"] = std::move(cells);
    tables["scale"] = std::move(table);
    if (dump_outcomes) {
      for (const ScaleCell& cell : artifacts.scale->cells) {
        for (std::size_t s = 0; s < cell.per_seed_outcomes.size(); ++s) {
          dump_set("scale_G" + std::to_string(cell.gallery_size) + "_E" +
                       std::to_string(cell.exams_per_subject) + "_seed" +
                       std::to_string(config.scale.seeds[s]),
                   cell.per_seed_outcomes[s]);
        }
      }
    }
  }

  if (!artifacts.tst_per_seed.empty()) {
    files.push_back({"tst_targets.csv", csv_tst(artifacts, ks, fars)});
    ojson table;
    table["provenance"] = {{"protocol", "tst"},
                           {"seeds", config.tst.seeds},
                           {"subjects", artifacts.tst_subjects},
                           {"impostor_scope",
                            config.tst.scope == TstImpostorScope::both_exams
                                ? "both_exams"
                                : "later_exams_only"}};
    ojson targets = ojson::array();
    const std::size_t n_targets = artifacts.tst_per_seed[0].size();
    for (std::size_t t = 0; t < n_targets; ++t) {
      ojson entry;
      entry["target_years"] = artifacts.tst_per_seed[0][t].target_years;
      ojson per_seed = ojson::array();
      for (const auto& seed_results : artifacts.tst_per_seed) {
        per_seed.push_back(bundle_to_json(seed_results[t].metrics));
      }
      entry["per_seed"] = std::move(per_seed);
      targets.push_back(std::move(entry));
    }
    table["targets"] = std::move(targets);
    tables["tst"] = std::move(table);
    if (dump_outcomes) {
      for (std::size_t s = 0; s < artifacts.tst_per_seed.size(); ++s) {
        for (const TstTargetResult& r : artifacts.tst_per_seed[s]) {
          dump_set("tst_target" + std::to_string(r.target_years) + "_seed" +
                       std::to_string(config.tst.seeds[s]),
                   r.outcomes);
        }
      }
    }
  }

  if (!artifacts.rr_results.empty()) {
    files.push_back({"rerank_summary.csv", csv_rerank(config, artifacts)});
    ojson table;
    table["provenance"] = {{"protocol", "rerank"},
                           {"convention",
                            config.rerank.convention ==
                                    SideConvention::znorm_query_side
                                ? "znorm_query_side"
                                : "znorm_gallery_side"}};
    ojson rows = ojson::array();
    {
      ojson row;
      row["config"] = "baseline";
      row["metrics"] = bundle_to_json(artifacts.rr_results[0].baseline_metrics);
      if (artifacts.rr_baseline_confidence.has_value()) {
        row["confidence"] = confidence_to_json(*artifacts.rr_baseline_confidence);
      }
      rows.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < artifacts.rr_results.size(); ++i) {
      ojson row;
      row["config"] = config.rerank.specs[i].emit();
      row["method"] = rerank_method_name(config.rerank.specs[i].method);
      row["metrics"] = bundle_to_json(artifacts.rr_results[i].reranked_metrics);
      if (!artifacts.rr_confidence.empty()) {
        row["confidence"] = confidence_to_json(*artifacts.rr_confidence[i]);
      }
      rows.push_back(std::move(row));
    }
    table["rows"] = std::move(rows);
    tables["rerank"] = std::move(table);
    if (dump_outcomes) {
      dump_set("rerank_baseline", artifacts.rr_results[0].baseline);
      for (std::size_t i = 0; i < artifacts.rr_results.size(); ++i) {
        dump_set("rerank_" + config.rerank.specs[i].emit(),
                 artifacts.rr_results[i].reranked);
      }
    }
  }

  if (artifacts.gc_confidence.has_value()) {
    files.push_back({"confidence.csv", csv_confidence(*artifacts.gc_confidence,
                                                      config.confidence.taus)});
    files.push_back({"calibrator_gc.json",
                     calibrator_to_json(artifacts.gc_confidence->calibrator)});
    ojson table;
    table["provenance"] = {{"protocol", "confidence"},
                           {"source", "gc"},
                           {"split_seed", config.confidence.split_seed}};
    table["evaluation"] = confidence_to_json(*artifacts.gc_confidence);
    tables["confidence"] = std::move(table);
  }

  report["tables"] = std::move(tables);

  if (dataset.meta_loaded || config.dataset.apply_pipeline ||
      config.dataset.fiducial_filter || config.dataset.stratified_patients > 0) {
    files.push_back({"attrition.txt", dataset.attrition.to_text()});
  }

  files.push_back({"report.json", report.dump(2) + "\n"});
  return files;
}

std::string render_manifest(
    const RunConfig& config, const std::string& run_id,
    const std::string& config_file_digest,
    const std::vector<std::pair<std::string, std::string>>& input_digests,
    double wall_clock_seconds) {
  ojson manifest;
  manifest["run_id"] = run_id;
  manifest["engine_version"] = ECGID_VERSION;
  manifest["config_digest"] = config_file_digest;
  ojson inputs;
  for (const auto& [path, digest] : input_digests) inputs[path] = digest;
  manifest["inputs"] = std::move(inputs);
  manifest["seeds"] = seeds_to_json(config);
  manifest["config"] = ojson::parse(canonical_config_json(config));
  manifest["wall_clock_seconds"] = wall_clock_seconds;
  return manifest.dump(2) + "\n";
}

std::string derive_run_id(const RunConfig& config) {
  return sha256_hex(run_identity_json(config)).substr(0, 12);
}

namespace {

bool is_report_artifact(const std::string& name) {
  static const std::set<std::string> fixed = {
      "gc_summary.csv", "scale_grid.csv",  "tst_targets.csv",
      "rerank_summary.csv", "confidence.csv", "attrition.txt",
      "report.json", "manifest.json"};
  if (fixed.count(name) != 0) return true;
  for (const char* prefix : {"outcomes_", "scores_", "calibrator_"}) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

}  // namespace

void install_reports(const std::string& output_dir,
                     const std::vector<ReportFile>& files,
                     const ReportFile& manifest) {
  const fs::path out(output_dir);
  fs::create_directories(out);
  const fs::path staging = out / ".staging";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging);

  const auto write = [](const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) throw IoError("write failed on " + path.string());
  };
  for (const ReportFile& f : files) write(staging / f.name, f.content);
  write(staging / manifest.name, manifest.content);

  // Everything staged; only now does the prior report stop being the current
  // one. Dropping its manifest first means a crash mid-install leaves a
  // directory that is visibly incomplete rather than a silent mixture.
  fs::remove(out / manifest.name, ec);
  for (const auto& entry : fs::directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (is_report_artifact(name)) fs::remove(entry.path(), ec);
  }
  for (const ReportFile& f : files) fs::rename(staging / f.name, out / f.name);
  fs::rename(staging / manifest.name, out / manifest.name);
  fs::remove_all(staging, ec);
}

// ---------------------------------------------------------------------------
// Static validation
// ---------------------------------------------------------------------------

std::vector<Diagnostic> validate_run(const RunConfig& config) {
  std::vector<Diagnostic> out;
  const auto fatal = [&](std::string m) { out.push_back({true, std::move(m)}); };
  const auto warn = [&](std::string m) { out.push_back({false, std::move(m)}); };

  if (config.rank_ks.empty()) {
    fatal("rank_ks must not be empty");
  } else {
    for (std::size_t i = 0; i < config.rank_ks.size(); ++i) {
      if (config.rank_ks[i] < 1 ||
          (i > 0 && config.rank_ks[i] <= config.rank_ks[i - 1])) {
        fatal("rank_ks must be strictly ascending and >= 1");
        break;
      }
    }
  }
  double min_far = 1.0;
  for (double far : config.fars) {
    if (!(far > 0.0 && far < 1.0)) {
      fatal("fars entries must lie in (0,1); got " + fmt(far));
    } else {
      min_far = std::min(min_far, far);
    }
  }

  if (config.confidence.enabled) {
    if (!(config.confidence.calibration_fraction > 0.0 &&
          config.confidence.calibration_fraction < 1.0)) {
      fatal("confidence.calibration_fraction must lie in (0,1)");
    }
    if (config.confidence.ece_bins < 1) {
      fatal("confidence.ece_bins must be >= 1");
    }
    if (config.confidence.l2_lambda < 0.0) {
      fatal("confidence.l2_lambda must be >= 0");
    }
    for (double tau : config.confidence.taus) {
      if (!(tau > 0.0 && tau < 1.0)) {
        fatal("confidence.taus entries must lie in (0,1)");
      }
    }
    if (!config.gc.enabled && !config.rerank.enabled) {
      fatal("confidence needs gc or rerank outcomes to calibrate on");
    }
  }

  if (config.dataset.embeddings.empty()) {
    fatal("dataset.embeddings is required");
    return out;
  }
  for (const std::string& path :
       {config.dataset.embeddings, config.dataset.meta,
        config.dataset.fiducial_ranges, config.rerank.external_cohort}) {
    if (!path.empty() && !fs::exists(path)) {
      fatal("input file does not exist: " + path);
    }
  }
  if (std::any_of(out.begin(), out.end(),
                  [](const Diagnostic& d) { return d.fatal; })) {
    return out;
  }

  Dataset ds;
  try {
    ds = build_dataset(config);
  } catch (const Error& e) {
    fatal(std::string("dataset construction failed: ") + e.what());
    return out;
  }

  std::map<std::string, std::size_t> exams_per_subject;
  for (const auto& r : ds.records) ++exams_per_subject[r.subject_id];
  const std::size_t n = ds.records.size();
  const std::size_t n_subjects = exams_per_subject.size();
  std::size_t max_exams = 0;
  std::size_t same_pairs = 0;
  for (const auto& [id, c] : exams_per_subject) {
    max_exams = std::max(max_exams, c);
    same_pairs += c * (c - 1);
  }

  if (!config.gc.enabled && !config.scale.enabled && !config.tst.enabled &&
      !config.rerank.enabled) {
    warn("no protocols enabled; the run would produce an empty report");
  }

  const auto check_impostors = [&](std::size_t m, const std::string& where) {
    if (!config.fars.empty() && min_far * static_cast<double>(m) < 1.0) {
      fatal(where + ": " + std::to_string(m) +
            " impostor scores cannot resolve FAR " + fmt(min_far) +
            " (needs at least " + fmt(1.0 / min_far) + ")");
    }
  };

  if (config.gc.enabled || config.rerank.enabled) {
    if (n < 2) {
      fatal("identification needs at least 2 exams; dataset has " +
            std::to_string(n));
    } else if (config.gc.enabled) {
      check_impostors(n * (n - 1) - same_pairs, "gc");
    }
  }

  if (config.scale.enabled) {
    const auto& s = config.scale;
    if (s.gallery_sizes.empty() || s.exams_per_subject.empty() ||
        s.seeds.empty()) {
      fatal("scale needs gallery_sizes, exams_per_subject, and seeds");
    }
    for (std::size_t g : s.gallery_sizes) {
      if (g < 2) fatal("scale gallery_sizes entries must be >= 2");
    }
    for (std::size_t e : s.exams_per_subject) {
      if (e < 2) fatal("scale exams_per_subject entries must be >= 2");
    }
    for (std::size_t e : s.exams_per_subject) {
      if (e < 2) continue;
      std::size_t eligible = 0;
      for (const auto& [id, c] : exams_per_subject) eligible += c >= e ? 1 : 0;
      for (std::size_t g : s.gallery_sizes) {
        if (g >= 2 && eligible < g) {
          fatal("scale cell G=" + std::to_string(g) + " E=" +
                std::to_string(e) + " needs " + std::to_string(g) +
                " subjects with >= " + std::to_string(e) + " exams; pool has " +
                std::to_string(eligible));
        } else if (g >= 2) {
          check_impostors(g * e * e * (g - 1),
                          "scale cell G=" + std::to_string(g) + " E=" +
                              std::to_string(e));
        }
      }
    }
  }

  if (config.tst.enabled) {
    try {
      const TstPlan plan = plan_tst(config.tst, ds.meta);
      const std::size_t p = plan.subjects;
      const std::size_t m = config.tst.scope == TstImpostorScope::both_exams
                                ? 2 * p * (2 * p - 2)
                                : 2 * p * (p - 1);
      check_impostors(m, "tst");
    } catch (const Error& e) {
      fatal(std::string("tst: ") + e.what());
    }
  }

  if (config.rerank.enabled) {
    if (config.rerank.specs.empty()) {
      warn("rerank enabled with no specs; only the baseline row would appear");
    }
    std::set<std::string> gallery_subjects;
    for (const auto& r : ds.records) gallery_subjects.insert(r.subject_id);
    std::vector<EmbeddingRecord> pool;
    bool pool_loaded = false;
    if (!config.rerank.external_cohort.empty()) {
      try {
        pool = load_embeddings(config.rerank.external_cohort);
        pool_loaded = true;
        std::size_t overlap = 0;
        for (const auto& r : pool) overlap += gallery_subjects.count(r.subject_id);
        if (overlap > 0) {
          fatal("external cohort shares " + std::to_string(overlap) +
                " exam(s) of gallery subjects; cohorts must be subject-disjoint");
        }
      } catch (const Error& e) {
        fatal(std::string("external cohort: ") + e.what());
      }
    }
    const std::uint32_t max_k = config.rank_ks.empty() ? 0 : config.rank_ks.back();
    for (const auto& spec : config.rerank.specs) {
      const std::string label = "rerank '" + spec.emit() + "'";
      try {
        spec.validate();
      } catch (const Error& e) {
        fatal(label + ": " + e.what());
        continue;
      }
      if (spec.shortlist_k < max_k) {
        fatal(label + ": shortlist depth " + std::to_string(spec.shortlist_k) +
              " is smaller than the deepest requested rank " +
              std::to_string(max_k));
      }
      if (spec.cohort_external) {
        if (config.rerank.external_cohort.empty()) {
          fatal(label + ": external cohort file required "
                        "(protocols.rerank.external_cohort)");
        } else if (pool_loaded && spec.cohort_size > pool.size()) {
          fatal(label + ": cohort size " + std::to_string(spec.cohort_size) +
                " exceeds external pool of " + std::to_string(pool.size()));
        }
      } else if (spec.cohort_size > n) {
        fatal(label + ": cohort size " + std::to_string(spec.cohort_size) +
              " exceeds gallery of " + std::to_string(n));
      }
      if (n >= 2 && max_exams > 0) {
        const std::size_t per_query_impostors =
            spec.shortlist_k > max_exams - 1 ? spec.shortlist_k - (max_exams - 1)
                                             : 0;
        if (!config.fars.empty() &&
            min_far * static_cast<double>(n * per_query_impostors) < 1.0) {
          warn(label + ": shortlist impostor pool may be too small for FAR " +
               fmt(min_far));
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, std::string>> digest_inputs(
    const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> digests;
  for (const std::string& path :
       {config.dataset.embeddings, config.dataset.meta,
        config.dataset.fiducial_ranges, config.rerank.external_cohort}) {
    if (!path.empty()) digests.emplace_back(path, sha256_file(path));
  }
  return digests;
}

}  // namespace

int command_run(const std::string& config_path, const CliOptions& opts) {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string config_bytes = read_file(config_path);
    RunConfig config = parse_run_config(config_bytes);
    apply_overrides(config, opts);

    // Inputs are fingerprinted before any of them is opened for real work.
    const std::string config_digest = sha256_hex(config_bytes);
    const auto input_digests = digest_inputs(config);
    const std::string run_id = derive_run_id(config);

    const Dataset dataset = build_dataset(config);
    const RunArtifacts artifacts =
        execute_protocols(config, dataset, opts.dump_outcomes);
    const std::vector<ReportFile> files =
        render_reports(config, dataset, artifacts, opts.dump_outcomes, run_id,
                       config_digest, input_digests);

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const ReportFile manifest{
        "manifest.json",
        render_manifest(config, run_id, config_digest, input_digests, elapsed)};
    install_reports(config.output_dir, files, manifest);

    std::cout << "run " << run_id << " complete: " << config.output_dir << "/ ("
              << files.size() + 1 << " files, " << dataset.records.size()
              << " exams)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int command_validate(const std::string& config_path) {
  try {
    const std::string config_bytes = read_file(config_path);
    std::vector<std::string> warnings;
    const RunConfig config = parse_run_config(config_bytes, &warnings);
    std::vector<Diagnostic> diagnostics = validate_run(config);
    for (const std::string& w : warnings) {
      diagnostics.push_back({false, w});
    }
    bool any_fatal = false;
    for (const Diagnostic& d : diagnostics) {
      std::cout << (d.fatal ? "FATAL: " : "WARN: ") << d.message << "\n";
      any_fatal = any_fatal || d.fatal;
    }
    if (diagnostics.empty()) std::cout << "configuration OK\n";
    return any_fatal ? 1 : 0;
  } catch (const std::exception& e) {
    std::cout << "FATAL: " << e.what() << "\n";
    return 1;
  }
}

int command_synth(const std::string& config_path, int threads) {
  try {
    const SynthFileConfig config = parse_synth_config(read_file(config_path));
    const SynthOutput output = generate(config.synth, threads);
    if (config.format == "binary") {
      save_embeddings_binary(config.out_embeddings, output.records);
    } else {
      save_embeddings_text(config.out_embeddings, output.records);
    }
    if (!config.out_meta.empty()) save_exam_meta(config.out_meta, output.meta);
    std::cout << "wrote " << output.records.size() << " embeddings ("
              << config.synth.n_subjects << " subjects) to "
              << config.out_embeddings << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int command_resample(const std::string& in_path, const std::string& out_path,
                     double source_hz, double target_hz, int threads) {
  try {
    const MultiLeadSignal in = load_signal(in_path, source_hz);
    const MultiLeadSignal out = resample(in, target_hz, threads);
    save_signal(out_path, out);
    std::cout << "resampled " << in.channels.rows() << " channel(s), "
              << in.channels.cols() << " -> " << out.channels.cols()
              << " samples at " << fmt(target_hz) << " Hz\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ecgid::cli
