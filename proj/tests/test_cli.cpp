// End-to-end tests of the installed command-line binary: each case launches
// the real executable and inspects its exit status, console output, and the
// files it writes.
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ecgid/gallery_io.hpp"
#include "ecgid/resample.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

#ifndef ECGID_CLI_PATH
#error "ECGID_CLI_PATH must point at the built executable"
#endif

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CliResult run_cli(const std::string& args) {
  std::string cmd = std::string(ECGID_CLI_PATH) + " " + args + " 2>&1";
  std::FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult result;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0)
    result.output.append(buf.data(), n);
  int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("ecgid_cli_" + tag + "_" + std::to_string(::getpid()));
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

bool same_bytes(const std::string& a, const std::string& b) {
  return slurp(a) == slurp(b);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synthesize, validate, and run produce identical reports twice") {
  TempDir dir("roundtrip");

  ojson synth = {{"n_subjects", 24}, {"exams_min", 3}, {"exams_max", 3},
                 {"dim", 12},        {"intra_noise", 0.3}, {"seed", 5}};
  synth["out_embeddings"] = dir.file("pool.tsv");
  synth["out_meta"] = dir.file("meta.tsv");
  write_text(dir.file("synth.json"), synth.dump());
  CliResult s = run_cli("synth " + dir.file("synth.json"));
  CHECK(s.exit_code == 0);
  REQUIRE(fs::exists(dir.file("pool.tsv")));
  REQUIRE(fs::exists(dir.file("meta.tsv")));
  CHECK(ecgid::load_embeddings(dir.file("pool.tsv")).size() == 72);

  ojson run;
  run["dataset"] = {{"embeddings", dir.file("pool.tsv")},
                    {"meta", dir.file("meta.tsv")}};
  run["output_dir"] = dir.file("out_a");
  run["rank_ks"] = {1, 5};
  run["fars"] = {1e-2};
  run["protocols"]["gc"] = ojson::object();
  run["protocols"]["scale"] = {{"gallery_sizes", {8, 16}},
                               {"exams_per_subject", {2}},
                               {"seeds", {1, 2}}};
  run["protocols"]["rerank"] = {
      {"specs", {{{"method", "bestofk"}, {"code", "K5"}}}}};
  run["protocols"]["confidence"] = {{"split_seed", 3}};
  write_text(dir.file("run.json"), run.dump());

  CliResult v = run_cli("validate " + dir.file("run.json"));
  CHECK(v.exit_code == 0);
  CHECK(v.output.find("configuration OK") != std::string::npos);

  CliResult r1 = run_cli("run " + dir.file("run.json") + " --dump-outcomes");
  INFO(r1.output);
  CHECK(r1.exit_code == 0);
  CHECK(r1.output.find("complete") != std::string::npos);

  CliResult r2 = run_cli("run " + dir.file("run.json") + " --dump-outcomes" +
                         " --out " + dir.file("out_b") + " --threads 4");
  CHECK(r2.exit_code == 0);

  // Every file except the manifest must be byte-identical across the rerun,
  // regardless of destination directory or thread count.
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir.file("out_a"))) {
    std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    CAPTURE(name);
    CHECK(same_bytes(entry.path().string(),
                     (fs::path(dir.file("out_b")) / name).string()));
    ++compared;
  }
  CHECK(compared >= 8);

  ojson report = ojson::parse(slurp(dir.file("out_a") + "/report.json"));
  ojson manifest = ojson::parse(slurp(dir.file("out_a") + "/manifest.json"));
  CHECK(report.at("run_id") == manifest.at("run_id"));
  CHECK(manifest.at("wall_clock_seconds").is_number());
  CHECK(r1.output.find(report.at("run_id").get<std::string>()) !=
        std::string::npos);
}

TEST_CASE("validate prints fatal diagnostics and fails loudly") {
  TempDir dir("diag");
  ojson run;
  run["dataset"] = {{"embeddings", dir.file("absent.tsv")}};
  run["protocols"]["gc"] = ojson::object();
  write_text(dir.file("bad.json"), run.dump());

  CliResult v = run_cli("validate " + dir.file("bad.json"));
  CHECK(v.exit_code == 1);
  CHECK(v.output.find("FATAL") != std::string::npos);

  CliResult missing = run_cli("validate " + dir.file("never_written.json"));
  CHECK(missing.exit_code == 1);

  CliResult r = run_cli("run " + dir.file("bad.json"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("error") != std::string::npos);
}

TEST_CASE("seed override changes the run identity") {
  TempDir dir("seeds");
  ojson synth = {{"n_subjects", 16}, {"exams_min", 2}, {"exams_max", 2},
                 {"dim", 8},         {"seed", 6}};
  synth["out_embeddings"] = dir.file("pool.tsv");
  write_text(dir.file("synth.json"), synth.dump());
  REQUIRE(run_cli("synth " + dir.file("synth.json")).exit_code == 0);

  ojson run;
  run["dataset"] = {{"embeddings", dir.file("pool.tsv")}};
  run["output_dir"] = dir.file("out1");
  run["fars"] = {1e-2};
  run["protocols"]["scale"] = {{"gallery_sizes", {8}},
                               {"exams_per_subject", {2}},
                               {"seeds", {1, 2, 3}}};
  write_text(dir.file("run.json"), run.dump());

  REQUIRE(run_cli("run " + dir.file("run.json")).exit_code == 0);
  CliResult o = run_cli("run " + dir.file("run.json") + " --seed-override 9 " +
                        "--out " + dir.file("out2"));
  REQUIRE(o.exit_code == 0);

  ojson a = ojson::parse(slurp(dir.file("out1") + "/report.json"));
  ojson b = ojson::parse(slurp(dir.file("out2") + "/report.json"));
  CHECK(a.at("run_id") != b.at("run_id"));
  CHECK(b.at("seeds").at("scale") == ojson::array({9}));

  CliResult bad = run_cli("run " + dir.file("run.json") + " --seed-override x");
  CHECK(bad.exit_code != 0);
}

TEST_CASE("resample halves the length of a stored recording") {
  TempDir dir("resample");
  // Two-lead 1 kHz recording: one slow sine per lead, one second long.
  ecgid::MultiLeadSignal sig;
  sig.sample_rate = 1000.0;
  sig.channels.resize(2, 1000);
  for (int t = 0; t < 1000; ++t) {
    sig.channels(0, t) = std::sin(2.0 * M_PI * 7.0 * t / 1000.0);
    sig.channels(1, t) = std::cos(2.0 * M_PI * 4.0 * t / 1000.0);
  }
  ecgid::save_signal(dir.file("in.sig"), sig);

  CliResult r = run_cli("resample " + dir.file("in.sig") + " " +
                        dir.file("out.sig") +
                        " --source-hz 1000 --target-hz 500");
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  ecgid::MultiLeadSignal out = ecgid::load_signal(dir.file("out.sig"), 500.0);
  CHECK(out.channels.rows() == 2);
  CHECK(out.channels.cols() == 500);
  // Midpoint of lead 0 should still track the 7 Hz sine.
  double expect = std::sin(2.0 * M_PI * 7.0 * 250.0 / 500.0);
  CHECK(out.channels(0, 250) == doctest::Approx(expect).epsilon(0.02));

  CliResult missing = run_cli("resample " + dir.file("in.sig") + " " +
                              dir.file("out2.sig") + " --target-hz 500");
  CHECK(missing.exit_code != 0);  // --source-hz is mandatory
}

TEST_CASE("usage errors exit with a distinct status") {
  CHECK(run_cli("").exit_code != 0);
  CHECK(run_cli("frobnicate").exit_code != 0);
  CHECK(run_cli("run").exit_code != 0);  // config path required
}

}  // TEST_SUITE
