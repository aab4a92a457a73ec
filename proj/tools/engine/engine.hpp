#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecgid/confidence.hpp"
#include "ecgid/pipeline.hpp"
#include "ecgid/protocols.hpp"
#include "engine/run_config.hpp"

namespace ecgid::cli {

/// Command-line overrides layered on top of the configuration file.
struct CliOptions {
  int threads = 0;  ///< > 0 replaces config threads
  std::optional<std::vector<std::uint64_t>> seed_override;  ///< scale+tst seeds
  bool dump_outcomes = false;
  std::string output_dir_override;
};

void apply_overrides(RunConfig& config, const CliOptions& opts);

/// Protocol-ready dataset: embedding records joined with (possibly
/// synthesized) recording metadata after the configured construction steps.
struct Dataset {
  std::vector<EmbeddingRecord> records;
  std::vector<ExamMeta> meta;  ///< same exams as `records`, same order
  AttritionReport attrition;
  bool meta_loaded = false;
};

Dataset build_dataset(const RunConfig& config);

struct Diagnostic {
  bool fatal = false;
  std::string message;
};

/// Static feasibility checks: inputs are loaded and counted but no protocol
/// executes. Parse-level problems surface as fatal diagnostics, not throws.
std::vector<Diagnostic> validate_run(const RunConfig& config);

/// Calibrator fit + held-out evaluation for one outcome set.
struct ConfidenceArtifacts {
  std::size_t n_calibration = 0;
  std::size_t n_evaluation = 0;
  Calibrator calibrator;
  ConfidenceReport report;
};

ConfidenceArtifacts fit_confidence(const OutcomeSet& set,
                                   const ConfidenceSection& cfg);

/// Everything `run` computed, before report emission.
struct RunArtifacts {
  std::optional<OutcomeSet> gc_outcomes;
  std::optional<MetricBundle> gc_metrics;
  std::optional<ConfidenceArtifacts> gc_confidence;

  std::optional<ScaleResult> scale;

  std::vector<std::vector<TstTargetResult>> tst_per_seed;  ///< [seed][target]
  std::size_t tst_subjects = 0;  ///< resolved constant gallery size

  std::vector<RrResult> rr_results;  ///< aligned with config rerank specs
  std::optional<ConfidenceArtifacts> rr_baseline_confidence;
  std::vector<std::optional<ConfidenceArtifacts>> rr_confidence;
};

RunArtifacts execute_protocols(const RunConfig& config, const Dataset& dataset,
                               bool keep_scale_outcomes);

/// One report file ready for installation.
struct ReportFile {
  std::string name;
  std::string content;
};

/// Renders every report file (CSV tables, structured report, calibrators,
/// optional outcome/score dumps) except the manifest. All content is a pure
/// function of (config, inputs), so reruns are byte-identical.
std::vector<ReportFile> render_reports(
    const RunConfig& config, const Dataset& dataset,
    const RunArtifacts& artifacts, bool dump_outcomes,
    const std::string& run_id, const std::string& config_file_digest,
    const std::vector<std::pair<std::string, std::string>>& input_digests);

/// Manifest content; `wall_clock_seconds` is the only non-deterministic field
/// in any emitted file.
std::string render_manifest(const RunConfig& config, const std::string& run_id,
                            const std::string& config_file_digest,
                            const std::vector<std::pair<std::string, std::string>>& input_digests,
                            double wall_clock_seconds);

/// Stages all files and moves them into `output_dir`, manifest last, so a
/// failed run can never masquerade as a complete report and partial output
/// never replaces a complete prior one.
void install_reports(const std::string& output_dir,
                     const std::vector<ReportFile>& files,
                     const ReportFile& manifest);

/// Twelve hex digits naming the run, derived from the effective configuration
/// (threads excluded).
std::string derive_run_id(const RunConfig& config);

int command_run(const std::string& config_path, const CliOptions& opts);
int command_validate(const std::string& config_path);
int command_synth(const std::string& config_path, int threads);
int command_resample(const std::string& in_path, const std::string& out_path,
                     double source_hz, double target_hz, int threads);

}  // namespace ecgid::cli
