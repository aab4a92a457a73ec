#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecgid/protocols.hpp"
#include "ecgid/rerank.hpp"
#include "ecgid/synth.hpp"

namespace ecgid::cli {

/// Where the evaluation data comes from and which construction steps run
/// before any protocol sees it.
struct DatasetConfig {
  std::string embeddings;        ///< embedding file (text or binary)
  std::string meta;              ///< optional recording-metadata file
  bool fiducial_filter = false;  ///< drop exams with out-of-range measurements
  std::string fiducial_ranges;   ///< range file; built-in defaults when empty
  bool apply_pipeline = false;   ///< spacing/min-exams/cap eligibility pipeline
  std::size_t stratified_patients = 0;  ///< 0 = no stratified subsampling
  std::uint64_t stratified_seed = 0;
};

struct GcSection {
  bool enabled = false;
};

struct ScaleSection {
  bool enabled = false;
  std::vector<std::size_t> gallery_sizes;
  std::vector<std::size_t> exams_per_subject;
  std::vector<std::uint64_t> seeds;
};

struct TstSection {
  bool enabled = false;
  std::vector<int> targets;
  std::size_t subjects = 0;  ///< constant gallery size; 0 = largest feasible
  std::vector<std::uint64_t> seeds{0};
  int tolerance_days = 91;
  TstImpostorScope scope = TstImpostorScope::both_exams;
};

struct RerankSection {
  bool enabled = false;
  std::vector<RerankSpec> specs;
  std::string external_cohort;  ///< embedding file for ext_* cohorts
  SideConvention convention = SideConvention::znorm_query_side;
};

struct ConfidenceSection {
  bool enabled = false;
  std::uint64_t split_seed = 42;
  double calibration_fraction = 0.5;
  double l2_lambda = 1e-2;
  int ece_bins = 15;
  std::vector<double> taus{0.70, 0.80, 0.90, 0.95};
};

struct RunConfig {
  DatasetConfig dataset;
  std::string output_dir = "reports";
  int threads = 1;
  std::vector<std::uint32_t> rank_ks{1, 5, 10};
  std::vector<double> fars{1e-3, 1e-4};
  GcSection gc;
  ScaleSection scale;
  TstSection tst;
  RerankSection rerank;
  ConfidenceSection confidence;
};

/// Parses the run configuration document. Unknown keys are reported through
/// `warnings` (when given) rather than rejected. Throws ParseError on
/// malformed JSON, wrong value types, unknown method names, or malformed
/// configuration codes, and ConfigError on semantically invalid values
/// (unknown enum choices, out-of-range settings).
RunConfig parse_run_config(const std::string& json_text,
                           std::vector<std::string>* warnings = nullptr);

/// Deterministic normalized snapshot of an (override-applied) configuration:
/// every field materialized, fixed key order. This is what the manifest
/// records and what the run id is derived from (threads excluded there, since
/// thread count never changes results).
std::string canonical_config_json(const RunConfig& config);

/// Same snapshot without execution-only fields; its digest names the run.
std::string run_identity_json(const RunConfig& config);

/// Synthetic-dataset generation config: generator parameters plus output
/// destinations.
struct SynthFileConfig {
  SynthConfig synth;
  std::string out_embeddings;
  std::string out_meta;          ///< empty = don't write metadata
  std::string format = "text";   ///< "text" | "binary"
};

SynthFileConfig parse_synth_config(const std::string& json_text,
                                   std::vector<std::string>* warnings = nullptr);

}  // namespace ecgid::cli
