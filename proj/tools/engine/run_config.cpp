#include "engine/run_config.hpp"

#include <algorithm>
#include <initializer_list>
#include <string>

#include "ecgid/date.hpp"
#include "ecgid/errors.hpp"
#include "json.hpp"

namespace ecgid::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void wrong_type(const std::string& path, const char* want) {
  throw ParseError("config field '" + path + "' must be " + want);
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) wrong_type(path, "a boolean");
  return v.get<bool>();
}

double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) wrong_type(path, "a number");
  return v.get<double>();
}

std::uint64_t as_u64(const json& v, const std::string& path) {
  if (!(v.is_number_unsigned() ||
        (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
    wrong_type(path, "a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) wrong_type(path, "an integer");
  return static_cast<int>(v.get<std::int64_t>());
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) wrong_type(path, "a string");
  return v.get<std::string>();
}

const json& require_object(const json& v, const std::string& path) {
  if (!v.is_object()) wrong_type(path, "an object");
  return v;
}

const json& require_array(const json& v, const std::string& path) {
  if (!v.is_array()) wrong_type(path, "an array");
  return v;
}

template <typename T, typename Fn>
std::vector<T> as_list(const json& v, const std::string& path, Fn&& one) {
  require_array(v, path);
  std::vector<T> out;
  out.reserve(v.size());
  std::size_t i = 0;
  for (const auto& e : v) {
    out.push_back(one(e, path + "[" + std::to_string(i) + "]"));
    ++i;
  }
  return out;
}

void scan_unknown(const json& obj, std::initializer_list<const char*> known,
                  const std::string& prefix,
                  std::vector<std::string>* warnings) {
  if (warnings == nullptr) return;
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return key == k;
        }) == known.end()) {
      warnings->push_back("unknown config key '" + prefix + key + "'");
    }
  }
}

json parse_document(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ParseError("config is not valid JSON");
  if (!doc.is_object()) throw ParseError("config root must be a JSON object");
  return doc;
}

void read_dataset(const json& node, DatasetConfig& out,
                  std::vector<std::string>* warnings) {
  require_object(node, "dataset");
  scan_unknown(node,
               {"embeddings", "meta", "fiducial_filter", "fiducial_ranges",
                "apply_pipeline", "stratified_patients", "stratified_seed"},
               "dataset.", warnings);
  if (node.contains("embeddings")) {
    out.embeddings = as_string(node.at("embeddings"), "dataset.embeddings");
  }
  if (node.contains("meta")) {
    out.meta = as_string(node.at("meta"), "dataset.meta");
  }
  if (node.contains("fiducial_filter")) {
    out.fiducial_filter =
        as_bool(node.at("fiducial_filter"), "dataset.fiducial_filter");
  }
  if (node.contains("fiducial_ranges")) {
    out.fiducial_ranges =
        as_string(node.at("fiducial_ranges"), "dataset.fiducial_ranges");
  }
  if (node.contains("apply_pipeline")) {
    out.apply_pipeline =
        as_bool(node.at("apply_pipeline"), "dataset.apply_pipeline");
  }
  if (node.contains("stratified_patients")) {
    out.stratified_patients = static_cast<std::size_t>(as_u64(
        node.at("stratified_patients"), "dataset.stratified_patients"));
  }
  if (node.contains("stratified_seed")) {
    out.stratified_seed =
        as_u64(node.at("stratified_seed"), "dataset.stratified_seed");
  }
}

void read_scale(const json& node, ScaleSection& out,
                std::vector<std::string>* warnings) {
  require_object(node, "protocols.scale");
  out.enabled = true;
  scan_unknown(node, {"gallery_sizes", "exams_per_subject", "seeds"},
               "protocols.scale.", warnings);
  if (node.contains("gallery_sizes")) {
    out.gallery_sizes = as_list<std::size_t>(
        node.at("gallery_sizes"), "protocols.scale.gallery_sizes",
        [](const json& v, const std::string& p) {
          return static_cast<std::size_t>(as_u64(v, p));
        });
  }
  if (node.contains("exams_per_subject")) {
    out.exams_per_subject = as_list<std::size_t>(
        node.at("exams_per_subject"), "protocols.scale.exams_per_subject",
        [](const json& v, const std::string& p) {
          return static_cast<std::size_t>(as_u64(v, p));
        });
  }
  if (node.contains("seeds")) {
    out.seeds = as_list<std::uint64_t>(node.at("seeds"),
                                       "protocols.scale.seeds", as_u64);
  }
}

void read_tst(const json& node, TstSection& out,
              std::vector<std::string>* warnings) {
  require_object(node, "protocols.tst");
  out.enabled = true;
  scan_unknown(
      node, {"targets", "subjects", "seeds", "tolerance_days", "impostor_scope"},
      "protocols.tst.", warnings);
  if (node.contains("targets")) {
    out.targets = as_list<int>(node.at("targets"), "protocols.tst.targets",
                               as_int);
  }
  if (node.contains("subjects")) {
    out.subjects = static_cast<std::size_t>(
        as_u64(node.at("subjects"), "protocols.tst.subjects"));
  }
  if (node.contains("seeds")) {
    out.seeds =
        as_list<std::uint64_t>(node.at("seeds"), "protocols.tst.seeds", as_u64);
  }
  if (node.contains("tolerance_days")) {
    out.tolerance_days =
        as_int(node.at("tolerance_days"), "protocols.tst.tolerance_days");
  }
  if (node.contains("impostor_scope")) {
    const std::string scope =
        as_string(node.at("impostor_scope"), "protocols.tst.impostor_scope");
    if (scope == "both_exams") {
      out.scope = TstImpostorScope::both_exams;
    } else if (scope == "later_exams_only") {
      out.scope = TstImpostorScope::later_exams_only;
    } else {
      throw ConfigError("protocols.tst.impostor_scope must be 'both_exams' or "
                        "'later_exams_only', got '" +
                        scope + "'");
    }
  }
}

void read_rerank(const json& node, RerankSection& out,
                 std::vector<std::string>* warnings) {
  require_object(node, "protocols.rerank");
  out.enabled = true;
  scan_unknown(node, {"specs", "external_cohort", "convention"},
               "protocols.rerank.", warnings);
  if (node.contains("specs")) {
    const json& specs = require_array(node.at("specs"),
                                      "protocols.rerank.specs");
    std::size_t i = 0;
    for (const auto& entry : specs) {
      const std::string path =
          "protocols.rerank.specs[" + std::to_string(i) + "]";
      require_object(entry, path);
      scan_unknown(entry, {"method", "code"}, path + ".", warnings);
      if (!entry.contains("method") || !entry.contains("code")) {
        throw ParseError(path + " needs 'method' and 'code'");
      }
      const RerankMethod method = parse_rerank_method(
          as_string(entry.at("method"), path + ".method"));
      out.specs.push_back(
          RerankSpec::parse(method, as_string(entry.at("code"),
                                              path + ".code")));
      ++i;
    }
  }
  if (node.contains("external_cohort")) {
    out.external_cohort =
        as_string(node.at("external_cohort"), "protocols.rerank.external_cohort");
  }
  if (node.contains("convention")) {
    const std::string c =
        as_string(node.at("convention"), "protocols.rerank.convention");
    if (c == "znorm_query_side") {
      out.convention = SideConvention::znorm_query_side;
    } else if (c == "znorm_gallery_side") {
      out.convention = SideConvention::znorm_gallery_side;
    } else {
      throw ConfigError("protocols.rerank.convention must be "
                        "'znorm_query_side' or 'znorm_gallery_side', got '" +
                        c + "'");
    }
  }
}

void read_confidence(const json& node, ConfidenceSection& out,
                     std::vector<std::string>* warnings) {
  require_object(node, "protocols.confidence");
  out.enabled = true;
  scan_unknown(node,
               {"split_seed", "calibration_fraction", "l2_lambda", "ece_bins",
                "taus"},
               "protocols.confidence.", warnings);
  if (node.contains("split_seed")) {
    out.split_seed =
        as_u64(node.at("split_seed"), "protocols.confidence.split_seed");
  }
  if (node.contains("calibration_fraction")) {
    out.calibration_fraction = as_double(node.at("calibration_fraction"),
                                         "protocols.confidence.calibration_fraction");
  }
  if (node.contains("l2_lambda")) {
    out.l2_lambda =
        as_double(node.at("l2_lambda"), "protocols.confidence.l2_lambda");
  }
  if (node.contains("ece_bins")) {
    out.ece_bins = as_int(node.at("ece_bins"), "protocols.confidence.ece_bins");
  }
  if (node.contains("taus")) {
    out.taus = as_list<double>(node.at("taus"), "protocols.confidence.taus",
                               as_double);
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text,
                           std::vector<std::string>* warnings) {
  const json doc = parse_document(json_text);
  scan_unknown(doc,
               {"dataset", "output_dir", "threads", "rank_ks", "fars",
                "protocols"},
               "", warnings);
  RunConfig out;
  if (doc.contains("dataset")) {
    read_dataset(doc.at("dataset"), out.dataset, warnings);
  }
  if (doc.contains("output_dir")) {
    out.output_dir = as_string(doc.at("output_dir"), "output_dir");
  }
  if (doc.contains("threads")) {
    out.threads = as_int(doc.at("threads"), "threads");
  }
  if (doc.contains("rank_ks")) {
    out.rank_ks = as_list<std::uint32_t>(
        doc.at("rank_ks"), "rank_ks", [](const json& v, const std::string& p) {
          return static_cast<std::uint32_t>(as_u64(v, p));
        });
  }
  if (doc.contains("fars")) {
    out.fars = as_list<double>(doc.at("fars"), "fars", as_double);
  }
  if (doc.contains("protocols")) {
    const json& protocols = require_object(doc.at("protocols"), "protocols");
    scan_unknown(protocols, {"gc", "scale", "tst", "rerank", "confidence"},
                 "protocols.", warnings);
    if (protocols.contains("gc")) {
      require_object(protocols.at("gc"), "protocols.gc");
      scan_unknown(protocols.at("gc"), {}, "protocols.gc.", warnings);
      out.gc.enabled = true;
    }
    if (protocols.contains("scale")) {
      read_scale(protocols.at("scale"), out.scale, warnings);
    }
    if (protocols.contains("tst")) {
      read_tst(protocols.at("tst"), out.tst, warnings);
    }
    if (protocols.contains("rerank")) {
      read_rerank(protocols.at("rerank"), out.rerank, warnings);
    }
    if (protocols.contains("confidence")) {
      read_confidence(protocols.at("confidence"), out.confidence, warnings);
    }
  }
  return out;
}

namespace {

ojson config_to_json(const RunConfig& c, bool with_execution_fields) {
  ojson doc;
  ojson dataset;
  dataset["embeddings"] = c.dataset.embeddings;
  dataset["meta"] = c.dataset.meta;
  dataset["fiducial_filter"] = c.dataset.fiducial_filter;
  dataset["fiducial_ranges"] = c.dataset.fiducial_ranges;
  dataset["apply_pipeline"] = c.dataset.apply_pipeline;
  dataset["stratified_patients"] = c.dataset.stratified_patients;
  dataset["stratified_seed"] = c.dataset.stratified_seed;
  doc["dataset"] = std::move(dataset);
  if (with_execution_fields) {
    doc["output_dir"] = c.output_dir;
    doc["threads"] = c.threads;
  }
  doc["rank_ks"] = c.rank_ks;
  doc["fars"] = c.fars;

  ojson protocols;
  if (c.gc.enabled) protocols["gc"] = ojson::object();
  if (c.scale.enabled) {
    ojson s;
    s["gallery_sizes"] = c.scale.gallery_sizes;
    s["exams_per_subject"] = c.scale.exams_per_subject;
    s["seeds"] = c.scale.seeds;
    protocols["scale"] = std::move(s);
  }
  if (c.tst.enabled) {
    ojson t;
    t["targets"] = c.tst.targets;
    t["subjects"] = c.tst.subjects;
    t["seeds"] = c.tst.seeds;
    t["tolerance_days"] = c.tst.tolerance_days;
    t["impostor_scope"] = c.tst.scope == TstImpostorScope::both_exams
                              ? "both_exams"
                              : "later_exams_only";
    protocols["tst"] = std::move(t);
  }
  if (c.rerank.enabled) {
    ojson r;
    ojson specs = ojson::array();
    for (const auto& spec : c.rerank.specs) {
      ojson s;
      s["method"] = rerank_method_name(spec.method);
      s["code"] = spec.emit();
      specs.push_back(std::move(s));
    }
    r["specs"] = std::move(specs);
    r["external_cohort"] = c.rerank.external_cohort;
    r["convention"] = c.rerank.convention == SideConvention::znorm_query_side
                          ? "znorm_query_side"
                          : "znorm_gallery_side";
    protocols["rerank"] = std::move(r);
  }
  if (c.confidence.enabled) {
    ojson f;
    f["split_seed"] = c.confidence.split_seed;
    f["calibration_fraction"] = c.confidence.calibration_fraction;
    f["l2_lambda"] = c.confidence.l2_lambda;
    f["ece_bins"] = c.confidence.ece_bins;
    f["taus"] = c.confidence.taus;
    protocols["confidence"] = std::move(f);
  }
  doc["protocols"] = std::move(protocols);
  return doc;
}

}  // namespace

std::string canonical_config_json(const RunConfig& config) {
  return config_to_json(config, true).dump(2) + "\n";
}

std::string run_identity_json(const RunConfig& config) {
  return config_to_json(config, false).dump();
}

SynthFileConfig parse_synth_config(const std::string& json_text,
                                   std::vector<std::string>* warnings) {
  const json doc = parse_document(json_text);
  scan_unknown(doc,
               {"n_subjects", "exams_min", "exams_max", "dim", "intra_noise",
                "drift_per_year", "start_date", "span_days", "seed",
                "out_embeddings", "out_meta", "format"},
               "", warnings);
  SynthFileConfig out;
  if (doc.contains("n_subjects")) {
    out.synth.n_subjects =
        static_cast<std::size_t>(as_u64(doc.at("n_subjects"), "n_subjects"));
  }
  if (doc.contains("exams_min")) {
    out.synth.exams_min =
        static_cast<std::size_t>(as_u64(doc.at("exams_min"), "exams_min"));
  }
  if (doc.contains("exams_max")) {
    out.synth.exams_max =
        static_cast<std::size_t>(as_u64(doc.at("exams_max"), "exams_max"));
  }
  if (doc.contains("dim")) {
    out.synth.dim = static_cast<Eigen::Index>(as_u64(doc.at("dim"), "dim"));
  }
  if (doc.contains("intra_noise")) {
    out.synth.intra_noise = as_double(doc.at("intra_noise"), "intra_noise");
  }
  if (doc.contains("drift_per_year")) {
    out.synth.drift_per_year =
        as_double(doc.at("drift_per_year"), "drift_per_year");
  }
  if (doc.contains("start_date")) {
    out.synth.start_date =
        parse_date(as_string(doc.at("start_date"), "start_date"));
  }
  if (doc.contains("span_days")) {
    out.synth.span_days =
        static_cast<std::int64_t>(as_u64(doc.at("span_days"), "span_days"));
  }
  if (doc.contains("seed")) out.synth.seed = as_u64(doc.at("seed"), "seed");
  if (doc.contains("out_embeddings")) {
    out.out_embeddings = as_string(doc.at("out_embeddings"), "out_embeddings");
  }
  if (doc.contains("out_meta")) {
    out.out_meta = as_string(doc.at("out_meta"), "out_meta");
  }
  if (doc.contains("format")) {
    out.format = as_string(doc.at("format"), "format");
    if (out.format != "text" && out.format != "binary") {
      throw ConfigError("format must be 'text' or 'binary', got '" +
                        out.format + "'");
    }
  }
  if (out.out_embeddings.empty()) {
    throw ConfigError("synth config needs 'out_embeddings'");
  }
  return out;
}

}  // namespace ecgid::cli
