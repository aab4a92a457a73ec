// In-process tests of the run orchestration layer: configuration parsing,
// override application, dataset construction, static validation, report
// rendering, and the report installation protocol.
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ecgid/gallery_io.hpp"
#include "ecgid/pipeline.hpp"
#include "ecgid/synth.hpp"
#include "engine/digest.hpp"
#include "engine/engine.hpp"
#include "engine/run_config.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using namespace ecgid;
using namespace ecgid::cli;
using ojson = nlohmann::ordered_json;

namespace {

/// Unique scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("ecgid_engine_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  REQUIRE(out.good());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

/// Small generated pool saved to disk; returns the embeddings path.
std::string make_pool(const TempDir& dir, std::size_t subjects,
                      std::size_t exams, std::uint64_t seed,
                      std::vector<ExamMeta>* meta_out = nullptr) {
  SynthConfig cfg;
  cfg.n_subjects = subjects;
  cfg.exams_min = exams;
  cfg.exams_max = exams;
  cfg.dim = 12;
  cfg.intra_noise = 0.25;
  cfg.seed = seed;
  SynthOutput out = generate(cfg);
  std::string path = dir.file("pool_" + std::to_string(seed) + ".tsv");
  save_embeddings_text(path, out.records);
  if (meta_out != nullptr) *meta_out = out.meta;
  return path;
}

std::string full_config_doc(const std::string& embeddings) {
  ojson doc;
  doc["dataset"]["embeddings"] = embeddings;
  doc["output_dir"] = "reports";
  doc["threads"] = 3;
  doc["rank_ks"] = {1, 3, 5};
  doc["fars"] = {1e-2};
  doc["protocols"]["gc"] = ojson::object();
  doc["protocols"]["scale"] = {{"gallery_sizes", {6, 10}},
                               {"exams_per_subject", {2}},
                               {"seeds", {1, 2}}};
  doc["protocols"]["tst"] = {{"targets", {1, 2}},
                             {"seeds", {0}},
                             {"tolerance_days", 400},
                             {"impostor_scope", "later_exams_only"}};
  doc["protocols"]["rerank"] = {
      {"specs",
       {{{"method", "bestofk"}, {"code", "K5"}},
        {{"method", "znorm"}, {"code", "K5_C10_S3"}}}},
      {"convention", "znorm_query_side"}};
  doc["protocols"]["confidence"] = {{"split_seed", 9},
                                    {"calibration_fraction", 0.4},
                                    {"l2_lambda", 0.05},
                                    {"ece_bins", 10},
                                    {"taus", {0.6, 0.9}}};
  return doc.dump(2);
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("configuration parsing covers every section") {
  TempDir dir("parse");
  std::string pool = make_pool(dir, 12, 2, 1);
  std::vector<std::string> warnings;
  RunConfig cfg = parse_run_config(full_config_doc(pool), &warnings);
  CHECK(warnings.empty());

  CHECK(cfg.dataset.embeddings == pool);
  CHECK(cfg.output_dir == "reports");
  CHECK(cfg.threads == 3);
  CHECK(cfg.rank_ks == std::vector<std::uint32_t>{1, 3, 5});
  REQUIRE(cfg.fars.size() == 1);
  CHECK(cfg.fars[0] == doctest::Approx(1e-2));
  CHECK(cfg.gc.enabled);
  CHECK(cfg.scale.enabled);
  CHECK(cfg.scale.gallery_sizes == std::vector<std::size_t>{6, 10});
  CHECK(cfg.scale.exams_per_subject == std::vector<std::size_t>{2});
  CHECK(cfg.scale.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(cfg.tst.enabled);
  CHECK(cfg.tst.targets == std::vector<int>{1, 2});
  CHECK(cfg.tst.tolerance_days == 400);
  CHECK(cfg.tst.scope == TstImpostorScope::later_exams_only);
  CHECK(cfg.rerank.enabled);
  REQUIRE(cfg.rerank.specs.size() == 2);
  CHECK(cfg.rerank.specs[0].method == RerankMethod::bestofk);
  CHECK(cfg.rerank.specs[1].method == RerankMethod::znorm);
  CHECK(cfg.rerank.specs[1].emit() == "K5_C10_S3");
  CHECK(cfg.confidence.enabled);
  CHECK(cfg.confidence.split_seed == 9);
  CHECK(cfg.confidence.calibration_fraction == doctest::Approx(0.4));
  CHECK(cfg.confidence.ece_bins == 10);
  CHECK(cfg.confidence.taus == std::vector<double>{0.6, 0.9});

  // Omitted sections stay disabled with documented defaults.
  RunConfig minimal = parse_run_config(R"({"dataset":{"embeddings":"x"}})");
  CHECK_FALSE(minimal.gc.enabled);
  CHECK_FALSE(minimal.scale.enabled);
  CHECK_FALSE(minimal.tst.enabled);
  CHECK_FALSE(minimal.rerank.enabled);
  CHECK_FALSE(minimal.confidence.enabled);
  CHECK(minimal.threads == 1);
  CHECK(minimal.rank_ks == std::vector<std::uint32_t>{1, 5, 10});
}

TEST_CASE("configuration parsing reports unknown keys and rejects bad values") {
  std::vector<std::string> warnings;
  parse_run_config(
      R"({"dataset":{"embeddings":"x","typo_key":1},"extra_top":true})",
      &warnings);
  REQUIRE(warnings.size() == 2);
  std::string joined = warnings[0] + "|" + warnings[1];
  CHECK(joined.find("typo_key") != std::string::npos);
  CHECK(joined.find("extra_top") != std::string::npos);

  CHECK_THROWS_AS(parse_run_config("{not json"), ParseError);
  CHECK_THROWS_AS(parse_run_config(R"({"dataset":{"embeddings":42}})"),
                  ParseError);
  CHECK_THROWS_AS(parse_run_config(R"({"threads":"many"})"), ParseError);
  CHECK_THROWS_AS(
      parse_run_config(
          R"({"protocols":{"rerank":{"specs":[{"method":"nope","code":"K5"}]}}})"),
      ParseError);
  CHECK_THROWS_AS(
      parse_run_config(
          R"({"protocols":{"rerank":{"specs":[{"method":"znorm","code":"garbage"}]}}})"),
      ParseError);
  CHECK_THROWS_AS(
      parse_run_config(R"({"protocols":{"tst":{"impostor_scope":"sometimes"}}})"),
      ConfigError);
}

TEST_CASE("run identity ignores execution details but tracks science") {
  TempDir dir("identity");
  std::string pool = make_pool(dir, 12, 2, 2);
  RunConfig cfg = parse_run_config(full_config_doc(pool));

  std::string canonical = canonical_config_json(cfg);
  CHECK(canonical.find("\"threads\"") != std::string::npos);
  CHECK(canonical.find("\"output_dir\"") != std::string::npos);

  ojson identity = ojson::parse(run_identity_json(cfg));
  CHECK_FALSE(identity.contains("threads"));
  CHECK_FALSE(identity.contains("output_dir"));

  std::string id = derive_run_id(cfg);
  CHECK(id.size() == 12);
  CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);

  RunConfig moved = cfg;
  moved.threads = 64;
  moved.output_dir = "elsewhere";
  CHECK(derive_run_id(moved) == id);

  RunConfig reseeded = cfg;
  reseeded.scale.seeds = {99};
  CHECK(derive_run_id(reseeded) != id);
  RunConfig refarred = cfg;
  refarred.fars = {1e-3};
  CHECK(derive_run_id(refarred) != id);
}

TEST_CASE("command-line overrides replace seeds and execution settings") {
  TempDir dir("override");
  std::string pool = make_pool(dir, 12, 2, 3);
  RunConfig cfg = parse_run_config(full_config_doc(pool));

  CliOptions opts;
  opts.threads = 5;
  opts.output_dir_override = "custom_out";
  opts.seed_override = std::vector<std::uint64_t>{7, 8};
  apply_overrides(cfg, opts);
  CHECK(cfg.threads == 5);
  CHECK(cfg.output_dir == "custom_out");
  CHECK(cfg.scale.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(cfg.tst.seeds == std::vector<std::uint64_t>{7, 8});

  CliOptions noop;
  RunConfig before = parse_run_config(full_config_doc(pool));
  RunConfig after = before;
  apply_overrides(after, noop);
  CHECK(canonical_config_json(after) == canonical_config_json(before));

  CliOptions empty_seeds;
  empty_seeds.seed_override = std::vector<std::uint64_t>{};
  CHECK_THROWS_AS(apply_overrides(cfg, empty_seeds), ConfigError);
}

TEST_CASE("dataset construction synthesizes metadata when none is given") {
  TempDir dir("dataset");
  std::vector<ExamMeta> meta;
  std::string pool = make_pool(dir, 15, 3, 4, &meta);

  RunConfig cfg;
  cfg.dataset.embeddings = pool;
  Dataset ds = build_dataset(cfg);
  CHECK(ds.records.size() == 45);
  CHECK_FALSE(ds.meta_loaded);
  REQUIRE(ds.meta.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(ds.meta[i].exam_id == ds.records[i].exam_id);
    CHECK(ds.meta[i].subject_id == ds.records[i].subject_id);
  }
  REQUIRE_FALSE(ds.attrition.steps.empty());
  CHECK(ds.attrition.steps.front().name == "input");
  CHECK(ds.attrition.steps.front().n_exams == 45);
}

TEST_CASE("dataset construction joins metadata and records attrition") {
  TempDir dir("join");
  std::vector<ExamMeta> meta;
  std::string pool = make_pool(dir, 15, 3, 5, &meta);

  // Drop the metadata rows of one subject: its exams must not survive the
  // join, and the attrition trail must show the loss.
  std::vector<ExamMeta> partial;
  for (const auto& m : meta)
    if (m.subject_id != meta.front().subject_id) partial.push_back(m);
  std::string meta_path = dir.file("meta.tsv");
  save_exam_meta(meta_path, partial);

  RunConfig cfg;
  cfg.dataset.embeddings = pool;
  cfg.dataset.meta = meta_path;
  Dataset ds = build_dataset(cfg);
  CHECK(ds.meta_loaded);
  CHECK(ds.records.size() == 42);
  REQUIRE(ds.meta.size() == 42);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(ds.records[i].exam_id == ds.meta[i].exam_id);
    CHECK(ds.records[i].subject_id != meta.front().subject_id);
  }
  bool saw_join = false;
  for (const auto& step : ds.attrition.steps)
    if (step.name == "embedding_join") {
      saw_join = true;
      CHECK(step.n_exams == 42);
      CHECK(step.n_subjects == 14);
    }
  CHECK(saw_join);
}

TEST_CASE("dataset construction applies stratified subsampling") {
  TempDir dir("strat");
  std::vector<ExamMeta> meta;
  std::string pool = make_pool(dir, 30, 3, 6, &meta);
  std::string meta_path = dir.file("meta.tsv");
  save_exam_meta(meta_path, meta);

  RunConfig cfg;
  cfg.dataset.embeddings = pool;
  cfg.dataset.meta = meta_path;
  cfg.dataset.stratified_patients = 12;
  cfg.dataset.stratified_seed = 3;
  Dataset ds = build_dataset(cfg);
  std::set<std::string> subjects;
  for (const auto& r : ds.records) subjects.insert(r.subject_id);
  CHECK(subjects.size() == 12);

  // Same seed reproduces the identical subset; another seed differs.
  Dataset again = build_dataset(cfg);
  REQUIRE(again.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    CHECK(again.records[i].exam_id == ds.records[i].exam_id);
  cfg.dataset.stratified_seed = 4;
  Dataset other = build_dataset(cfg);
  std::set<std::string> other_subjects;
  for (const auto& r : other.records) other_subjects.insert(r.subject_id);
  CHECK(other_subjects != subjects);
}

TEST_CASE("static validation flags infeasible requests") {
  TempDir dir("validate");
  std::string small = make_pool(dir, 8, 2, 7);  // 16 exams, 240 impostors

  auto fatal_containing = [](const std::vector<Diagnostic>& diags,
                             const std::string& needle) {
    for (const auto& d : diags)
      if (d.fatal && d.message.find(needle) != std::string::npos) return true;
    return false;
  };

  RunConfig ok;
  ok.dataset.embeddings = small;
  ok.gc.enabled = true;
  ok.fars = {1e-2};
  ok.rank_ks = {1, 5};
  CHECK(validate_run(ok).empty());

  // 1/FAR exceeds the impostor budget of this gallery.
  RunConfig tight = ok;
  tight.fars = {1e-4};
  CHECK(fatal_containing(validate_run(tight), "impostor"));

  RunConfig badks = ok;
  badks.rank_ks = {5, 5};
  CHECK_FALSE(validate_run(badks).empty());

  RunConfig missing = ok;
  missing.dataset.embeddings = dir.file("not_there.tsv");
  CHECK(fatal_containing(validate_run(missing), "not_there"));

  RunConfig scale = ok;
  scale.scale.enabled = true;
  scale.scale.gallery_sizes = {50};  // only 8 subjects exist
  scale.scale.exams_per_subject = {2};
  scale.scale.seeds = {1};
  CHECK_FALSE(validate_run(scale).empty());

  RunConfig rr = ok;
  rr.rerank.enabled = true;
  rr.rerank.specs = {RerankSpec::parse(RerankMethod::bestofk, "K3")};
  rr.rank_ks = {1, 5};  // rank 5 unreachable with a 3-deep shortlist
  CHECK(fatal_containing(validate_run(rr), "shortlist"));

  RunConfig ext = ok;
  ext.rerank.enabled = true;
  ext.rerank.specs = {
      RerankSpec::parse(RerankMethod::znorm, "ext_db_size30_K5_N10_seed1")};
  CHECK_FALSE(validate_run(ext).empty());  // no cohort file configured
}

TEST_CASE("validation rejects a cohort sharing subjects with the gallery") {
  TempDir dir("cohort");
  std::string pool = make_pool(dir, 10, 2, 8);

  RunConfig cfg;
  cfg.dataset.embeddings = pool;
  cfg.gc.enabled = true;
  cfg.fars = {1e-2};
  cfg.rank_ks = {1, 5};
  cfg.rerank.enabled = true;
  cfg.rerank.specs = {
      RerankSpec::parse(RerankMethod::znorm, "ext_db_size20_K5_N8_seed1")};
  cfg.rerank.external_cohort = pool;  // same subjects: must be rejected
  bool overlap_fatal = false;
  for (const auto& d : validate_run(cfg))
    if (d.fatal && d.message.find("disjoint") != std::string::npos)
      overlap_fatal = true;
  CHECK(overlap_fatal);

  // A relabeled copy is subject-disjoint and passes.
  std::vector<EmbeddingRecord> cohort = load_embeddings(pool);
  for (auto& r : cohort) {
    r.subject_id = "C" + r.subject_id;
    r.exam_id = "C" + r.exam_id;
  }
  std::string cohort_path = dir.file("cohort.tsv");
  save_embeddings_text(cohort_path, cohort);
  cfg.rerank.external_cohort = cohort_path;
  for (const auto& d : validate_run(cfg)) CHECK_FALSE(d.fatal);
}

TEST_CASE("confidence fitting is reproducible and honors the split") {
  TempDir dir("conf");
  std::string pool = make_pool(dir, 40, 3, 9);
  RunConfig cfg;
  cfg.dataset.embeddings = pool;
  cfg.gc.enabled = true;
  cfg.fars = {1e-2};
  cfg.confidence.enabled = true;
  cfg.confidence.split_seed = 11;
  cfg.confidence.calibration_fraction = 0.5;
  Dataset ds = build_dataset(cfg);
  RunArtifacts arts = execute_protocols(cfg, ds, false);
  REQUIRE(arts.gc_outcomes.has_value());
  REQUIRE(arts.gc_confidence.has_value());

  ConfidenceArtifacts a = fit_confidence(*arts.gc_outcomes, cfg.confidence);
  ConfidenceArtifacts b = fit_confidence(*arts.gc_outcomes, cfg.confidence);
  CHECK(a.n_calibration == b.n_calibration);
  CHECK(a.n_evaluation == b.n_evaluation);
  CHECK(a.calibrator.w == b.calibrator.w);
  CHECK(a.calibrator.b == b.calibrator.b);
  CHECK(a.report.brier == b.report.brier);
  CHECK(a.report.ece == b.report.ece);
  CHECK(a.n_calibration + a.n_evaluation ==
        to_samples(arts.gc_outcomes->outcomes).size());
  // Half split on 120 queries: the two sides differ by at most one.
  CHECK(a.n_calibration + 1 >= a.n_evaluation);
  CHECK(a.n_evaluation + 1 >= a.n_calibration);

  ConfidenceSection reseeded = cfg.confidence;
  reseeded.split_seed = 12;
  ConfidenceArtifacts c = fit_confidence(*arts.gc_outcomes, reseeded);
  CHECK((c.calibrator.w != a.calibrator.w || c.calibrator.b != a.calibrator.b));
}

TEST_CASE("executed artifacts line up with enabled sections") {
  TempDir dir("exec");
  std::string pool = make_pool(dir, 20, 3, 10);
  RunConfig cfg = parse_run_config(full_config_doc(pool));
  cfg.fars = {1e-2};
  Dataset ds = build_dataset(cfg);
  RunArtifacts arts = execute_protocols(cfg, ds, true);

  REQUIRE(arts.gc_outcomes.has_value());
  CHECK(arts.gc_outcomes->outcomes.size() == 60);
  REQUIRE(arts.gc_metrics.has_value());
  CHECK(arts.gc_confidence.has_value());

  REQUIRE(arts.scale.has_value());
  REQUIRE(arts.scale->cells.size() == 2);  // two gallery sizes x one E
  for (const auto& cell : arts.scale->cells) {
    CHECK(cell.per_seed.size() == 2);
    CHECK(cell.per_seed_outcomes.size() == 2);  // keep_scale_outcomes = true
  }

  REQUIRE(arts.tst_per_seed.size() == 1);
  CHECK(arts.tst_per_seed[0].size() == 2);  // two targets
  CHECK(arts.tst_subjects > 0);

  REQUIRE(arts.rr_results.size() == 2);
  CHECK(arts.rr_baseline_confidence.has_value());
  REQUIRE(arts.rr_confidence.size() == 2);
  CHECK(arts.rr_confidence[0].has_value());
  CHECK(arts.rr_confidence[1].has_value());
}

TEST_CASE("rendered reports are a pure function of config and data") {
  TempDir dir("render");
  std::string pool = make_pool(dir, 20, 3, 11);
  RunConfig cfg = parse_run_config(full_config_doc(pool));
  cfg.fars = {1e-2};
  Dataset ds = build_dataset(cfg);

  auto render_once = [&](bool dump) {
    RunArtifacts arts = execute_protocols(cfg, ds, dump);
    std::string run_id = derive_run_id(cfg);
    return render_reports(cfg, ds, arts, dump, run_id, "cfgdigest",
                          {{"embeddings", "deadbeef"}});
  };
  std::vector<ReportFile> a = render_once(false);
  std::vector<ReportFile> b = render_once(false);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].content == b[i].content);
  }

  std::set<std::string> names;
  for (const auto& f : a) names.insert(f.name);
  for (const char* expect :
       {"report.json", "gc_summary.csv", "scale_grid.csv", "tst_targets.csv",
        "rerank_summary.csv", "confidence.csv", "calibrator_gc.json"})
    CHECK(names.count(expect) == 1);
  CHECK(names.count("manifest.json") == 0);  // rendered separately

  std::vector<ReportFile> dumped = render_once(true);
  std::set<std::string> dump_names;
  for (const auto& f : dumped) dump_names.insert(f.name);
  CHECK(dump_names.count("outcomes_gc.csv") == 1);
  CHECK(dump_names.count("scores_gc.csv") == 1);
  CHECK(dump_names.count("outcomes_rerank_baseline.csv") == 1);
  CHECK(dump_names.count("outcomes_scale_G6_E2_seed1.csv") == 1);
  CHECK(dump_names.count("outcomes_tst_target1_seed0.csv") == 1);
  for (const auto& name : names) CHECK(dump_names.count(name) == 1);
}

TEST_CASE("report installation replaces stale artifacts, keeps foreign files") {
  TempDir dir("install");
  std::string out = dir.file("reports");

  std::vector<ReportFile> first = {
      {"report.json", "{\"v\":1}\n"},
      {"gc_summary.csv", "a,b\n1,2\n"},
      {"outcomes_gc.csv", "old dump\n"},
      {"scores_gc.csv", "old scores\n"},
  };
  install_reports(out, first, {"manifest.json", "{\"m\":1}\n"});
  CHECK(slurp(out + "/outcomes_gc.csv") == "old dump\n");
  write_text(out + "/keep.txt", "user file\n");

  // Second install without dumps: every stale generated artifact disappears,
  // user files survive, and the new content lands intact.
  std::vector<ReportFile> second = {
      {"report.json", "{\"v\":2}\n"},
      {"gc_summary.csv", "a,b\n3,4\n"},
  };
  install_reports(out, second, {"manifest.json", "{\"m\":2}\n"});
  CHECK(slurp(out + "/report.json") == "{\"v\":2}\n");
  CHECK(slurp(out + "/gc_summary.csv") == "a,b\n3,4\n");
  CHECK(slurp(out + "/manifest.json") == "{\"m\":2}\n");
  CHECK(slurp(out + "/keep.txt") == "user file\n");
  CHECK_FALSE(fs::exists(out + "/outcomes_gc.csv"));
  CHECK_FALSE(fs::exists(out + "/scores_gc.csv"));
  CHECK_FALSE(fs::exists(fs::path(out) / ".staging"));

  // Installing into a fresh nested directory creates it.
  std::string nested = dir.file("deep/nested/reports");
  install_reports(nested, second, {"manifest.json", "{\"m\":3}\n"});
  CHECK(slurp(nested + "/manifest.json") == "{\"m\":3}\n");
}

TEST_CASE("structured report carries identity, seeds, and tables") {
  TempDir dir("report");
  std::string pool = make_pool(dir, 20, 3, 12);
  RunConfig cfg = parse_run_config(full_config_doc(pool));
  cfg.fars = {1e-2};
  Dataset ds = build_dataset(cfg);
  RunArtifacts arts = execute_protocols(cfg, ds, false);
  std::string run_id = derive_run_id(cfg);
  std::vector<ReportFile> files = render_reports(
      cfg, ds, arts, false, run_id, "cfg123", {{"embeddings", "abc"}});

  const ReportFile* report = nullptr;
  for (const auto& f : files)
    if (f.name == "report.json") report = &f;
  REQUIRE(report != nullptr);
  ojson doc = ojson::parse(report->content);
  CHECK(doc.at("run_id") == run_id);
  CHECK(doc.at("config_digest") == "cfg123");
  CHECK(doc.at("inputs").at("embeddings") == "abc");
  CHECK_FALSE(doc.at("config").contains("threads"));
  CHECK(doc.at("seeds").contains("scale"));
  CHECK(doc.at("seeds").contains("tst"));
  CHECK(doc.at("seeds").contains("confidence_split"));
  for (const char* table : {"gc", "scale", "tst", "rerank", "confidence"})
    CHECK(doc.at("tables").contains(table));
  // Rerank table: baseline row plus one row per spec, codes verbatim.
  const auto& rows = doc.at("tables").at("rerank").at("rows");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].at("config") == "baseline");
  CHECK(rows[1].at("config") == "K5");
  CHECK(rows[2].at("config") == "K5_C10_S3");

  // The manifest adds execution detail on top of the same identity.
  std::string manifest =
      render_manifest(cfg, run_id, "cfg123", {{"embeddings", "abc"}}, 1.25);
  ojson mdoc = ojson::parse(manifest);
  CHECK(mdoc.at("run_id") == run_id);
  CHECK(mdoc.at("wall_clock_seconds") == 1.25);
  CHECK(mdoc.at("config").contains("threads"));
}

TEST_CASE("file digests are stable and match a known vector") {
  // SHA-256 of the empty string and of "abc" are published constants.
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir dir("digest");
  std::string p = dir.file("f.bin");
  write_text(p, "abc");
  CHECK(sha256_file(p) == sha256_hex("abc"));
  CHECK_THROWS_AS(sha256_file(dir.file("missing.bin")), IoError);
}

}  // TEST_SUITE
