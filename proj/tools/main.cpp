#include <charconv>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "engine/engine.hpp"

namespace {

/// "1,2,42" -> {1, 2, 42}; empty pieces and junk are rejected.
bool parse_seed_list(const std::string& text,
                     std::vector<std::uint64_t>& out) {
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    std::uint64_t value = 0;
    const char* first = text.data() + start;
    const char* last = text.data() + end;
    const auto result = std::from_chars(first, last, value);
    if (result.ec != std::errc{} || result.ptr != last || first == last) {
      return false;
    }
    out.push_back(value);
    start = end + 1;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic evaluation engine for embedding-based "
               "1:N identification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string in_path;
  std::string out_path;
  std::string seed_csv;
  std::string out_dir;
  int threads = 0;
  double source_hz = 0.0;
  double target_hz = 0.0;
  bool dump = false;

  CLI::App* run = app.add_subcommand(
      "run", "Execute the configured protocols and write report files");
  run->add_option("config", config_path, "JSON run configuration file")
      ->required();
  run->add_option("--threads", threads,
                  "Worker threads (0 = all hardware threads)");
  run->add_option("--seed-override", seed_csv,
                  "Comma-separated seeds replacing the scale and tst seed "
                  "lists");
  run->add_flag("--dump-outcomes", dump,
                "Also write per-query outcome and score-pool dumps");
  run->add_option("--out", out_dir, "Override the configured output directory");

  CLI::App* validate = app.add_subcommand(
      "validate", "Static feasibility checks; nothing is executed");
  validate->add_option("config", config_path, "JSON run configuration file")
      ->required();

  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a synthetic embedding dataset");
  synth->add_option("config", config_path, "JSON generator configuration file")
      ->required();
  synth->add_option("--threads", threads,
                    "Worker threads (0 = all hardware threads)");

  CLI::App* resample = app.add_subcommand(
      "resample", "Low-pass filter and decimate a multi-channel signal file");
  resample->add_option("input", in_path, "Input signal file")->required();
  resample->add_option("output", out_path, "Output signal file")->required();
  resample->add_option("--source-hz", source_hz,
                       "Sample rate of the input (stored out of band)")
      ->required();
  resample->add_option("--target-hz", target_hz, "Requested output rate")
      ->required();
  resample->add_option("--threads", threads,
                       "Worker threads (0 = all hardware threads)");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    ecgid::cli::CliOptions opts;
    opts.threads = threads;
    opts.dump_outcomes = dump;
    opts.output_dir_override = out_dir;
    if (run->count("--seed-override") > 0) {
      std::vector<std::uint64_t> seeds;
      if (!parse_seed_list(seed_csv, seeds)) {
        std::cerr << "error: --seed-override expects comma-separated "
                     "non-negative integers\n";
        return 2;
      }
      opts.seed_override = std::move(seeds);
    }
    return ecgid::cli::command_run(config_path, opts);
  }
  if (validate->parsed()) {
    return ecgid::cli::command_validate(config_path);
  }
  if (synth->parsed()) {
    return ecgid::cli::command_synth(config_path, threads);
  }
  if (resample->parsed()) {
    return ecgid::cli::command_resample(in_path, out_path, source_hz,
                                        target_hz, threads);
  }
  return 2;
}
