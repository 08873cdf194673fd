#include "cli/internal.hpp"
#include "ogd/cli.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace ogd;
using namespace ogd::cli;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "ogd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("ogd-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("sample twice with the same flags writes identical CSV bytes") {
  TempDir tmp;
  const std::vector<std::string> common{"sample", "--mode", "oracle", "--scale", "1e-4", "--seed", "7", "--n", "100"};
  auto a = common;
  a.insert(a.end(), {"--out", tmp / "a"});
  auto b = common;
  b.insert(b.end(), {"--out", tmp / "b", "--jobs", "3"});
  REQUIRE(invoke(a).code == kExitOk);
  REQUIRE(invoke(b).code == kExitOk);
  const std::string csv = slurp(tmp / "a/samples.csv");
  CHECK(csv == slurp(tmp / "b/samples.csv"));
  CHECK(csv.rfind("# ogd-samples v1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5 + 100);
}

TEST_CASE("every output file carries the config hash") {
  TempDir tmp;
  REQUIRE(invoke({"sample", "--mode", "noisy", "--scale", "5", "--n", "8", "--dump-xyz", "--out", tmp / "r"}).code ==
          kExitOk);
  const LoadedRun run = load_run(tmp / "r");
  CHECK(run.records.size() == 8);
  for (const char* name : {"samples.csv", "summary.json", "manifest.yaml", "hist_force_rms.csv",
                           "hist_energy_above_gs.csv", "samples.xyz"}) {
    CAPTURE(name);
    CHECK(slurp(fs::path(tmp / "r") / name).find(run.hashes.config) != std::string::npos);
  }
  CHECK(parse_xyz(slurp(tmp / "r/samples.xyz")).size() == 8);
}

TEST_CASE("histogram files have 50 rows whose counts sum to n") {
  TempDir tmp;
  REQUIRE(invoke({"sample", "--n", "12", "--out", tmp / "r"}).code == kExitOk);
  std::istringstream in(slurp(tmp / "r/hist_force_rms.csv"));
  int rows = 0;
  long total = 0;
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      CHECK(line == "bin_lower,count");
      header = true;
      continue;
    }
    ++rows;
    total += std::stol(line.substr(line.find(',') + 1));
  }
  CHECK(rows == 50);
  CHECK(total == 12);
}

TEST_CASE("the manifest reloads as a config with the same hash") {
  TempDir tmp;
  REQUIRE(invoke({"sample", "--mode", "bilevel-noisy", "--scale", "0.5", "--property-scale", "50", "--skip", "3",
                  "--target", "0.8", "--n", "3", "--seed", "11", "--out", tmp / "r"})
              .code == kExitOk);
  const ExperimentConfig cfg = load_config(tmp / "r/manifest.yaml");
  CHECK(cfg.mode == Mode::bilevel_noisy);
  CHECK(cfg.guidance.property_scale == 50.0);
  CHECK(cfg.guidance.skip == 3);
  CHECK_FALSE(cfg.target_from_testbed);
  CHECK(cfg.guidance.target == 0.8);
  CHECK(hex(fnv1a(canonical_yaml(cfg))) == load_run(tmp / "r").hashes.config);

  REQUIRE(invoke({"sample", "--config", tmp / "r/manifest.yaml", "--out", tmp / "again"}).code == kExitOk);
  CHECK(slurp(tmp / "r/samples.csv") == slurp(tmp / "again/samples.csv"));
}

TEST_CASE("flags override config values") {
  TempDir tmp;
  {
    std::ofstream f(tmp / "c.yaml");
    f << "mode: oracle\nn: 5\nguidance:\n  scale: 0.25\n  window: 10\n";
  }
  REQUIRE(invoke({"sample", "--config", tmp / "c.yaml", "--scale", "0.5", "--out", tmp / "r"}).code == kExitOk);
  const ExperimentConfig cfg = load_config(tmp / "r/manifest.yaml");
  CHECK(cfg.guidance.scale == 0.5);
  CHECK(cfg.guidance.window == 10);
  CHECK(cfg.n_samples == 5);
}

TEST_CASE("sweep writes one run per scale and a comparison summary") {
  TempDir tmp;
  const Result r = invoke({"sweep", "--n", "4", "--out", tmp / "s"});
  REQUIRE(r.code == kExitOk);
  int runs = 0;
  for (const auto& entry : fs::directory_iterator(tmp / "s")) {
    if (entry.is_directory()) {
      ++runs;
      CHECK(fs::exists(entry.path() / "samples.csv"));
      CHECK(fs::exists(entry.path() / "summary.json"));
    }
  }
  CHECK(runs == 5);
  const auto summary = nlohmann::json::parse(slurp(tmp / "s/comparison.json"));
  CHECK(summary.at("runs").size() == 5);
  CHECK(summary.at("mode") == "oracle");
  CHECK(fs::exists(tmp / "s/comparison.csv"));
}

TEST_CASE("config errors exit with status 2 and name the line and field") {
  TempDir tmp;
  {
    std::ofstream f(tmp / "bad.yaml");
    f << "mode: oracle\nguidance:\n  scael: 1\n";
  }
  Result r = invoke({"sample", "--config", tmp / "bad.yaml", "--out", tmp / "r"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("line 3") != std::string::npos);
  CHECK(r.err.find("guidance.scael") != std::string::npos);

  {
    std::ofstream f(tmp / "bad2.yaml");
    f << "n: many\n";
  }
  r = invoke({"sample", "--config", tmp / "bad2.yaml"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("line 1") != std::string::npos);

  {
    std::ofstream f(tmp / "bad3.yaml");
    f << "mode: [oracle\n";
  }
  CHECK(invoke({"sample", "--config", tmp / "bad3.yaml"}).code == kExitConfig);

  CHECK(invoke({"sample", "--mode", "sideways"}).code == kExitConfig);
  CHECK(invoke({"sample", "--window", "5000"}).code == kExitConfig);
  CHECK(invoke({"sample", "--skip", "0"}).code == kExitConfig);
  CHECK(invoke({"sample", "--no-such-flag"}).code == kExitConfig);
  CHECK(invoke({"sample", "--config", tmp / "missing.yaml"}).code == kExitConfig);
  CHECK(invoke({}).code == kExitConfig);
}

TEST_CASE("an xtb oracle without an executable is a config error") {
  TempDir tmp;
  {
    std::ofstream f(tmp / "x.yaml");
    f << "oracle:\n  kind: xtb\n  xtb:\n    path: " << (tmp / "nowhere/xtb") << "\n";
  }
  const char* saved = std::getenv(kXtbPathEnv);
  std::string keep = saved ? saved : "";
  unsetenv(kXtbPathEnv);
  CHECK(invoke({"sample", "--config", tmp / "x.yaml", "--n", "1", "--out", tmp / "r"}).code == kExitConfig);
  if (saved) setenv(kXtbPathEnv, keep.c_str(), 1);
}

TEST_CASE("report merges runs and refuses mismatched schedules") {
  TempDir tmp;
  REQUIRE(invoke({"sample", "--n", "4", "--seed", "1", "--out", tmp / "a"}).code == kExitOk);
  REQUIRE(invoke({"sample", "--n", "6", "--seed", "2", "--out", tmp / "b"}).code == kExitOk);
  Result r = invoke({"report", tmp / "a", tmp / "b", "--out", tmp / "m"});
  REQUIRE(r.code == kExitOk);
  const LoadedRun merged = load_run(tmp / "m");
  CHECK(merged.records.size() == 10);

  {
    std::ofstream f(tmp / "short.yaml");
    f << "schedule:\n  steps: 100\nguidance:\n  window: 50\n";
  }
  REQUIRE(invoke({"sample", "--config", tmp / "short.yaml", "--n", "2", "--out", tmp / "c"}).code == kExitOk);
  r = invoke({"report", tmp / "a", tmp / "c", "--out", tmp / "m2"});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("refusing") != std::string::npos);
  CHECK_FALSE(fs::exists(tmp / "m2"));

  CHECK(invoke({"report", tmp / "nothing-here"}).code == kExitRuntime);
}

TEST_CASE("gradcheck on the quadratic fixture reaches cosine above 0.99") {
  TempDir tmp;
  const Result r = invoke({"gradcheck", "--probes", "100000", "--out", tmp / "g"});
  REQUIRE(r.code == kExitOk);
  const auto summary = nlohmann::json::parse(slurp(tmp / "g/gradcheck.json"));
  CHECK(summary.at("mean_estimate_cosine").get<double>() > 0.99);
  CHECK(summary.contains("config_hash"));
  CHECK(r.out.find("mean_estimate_cosine") != std::string::npos);
}

TEST_CASE("relax brings stretched rings back to the testbed minimum") {
  TempDir tmp;
  const Testbed tb = ring_testbed();
  std::string xyz;
  for (double edge : {1.2, 1.5}) {
    xyz += write_xyz(AtomLabels::uniform(4), ring_geometry(4, edge).positions, "ring");
  }
  {
    std::ofstream f(tmp / "in.xyz");
    f << xyz;
  }
  REQUIRE(invoke({"relax", "--input", tmp / "in.xyz", "--out", tmp / "rel"}).code == kExitOk);
  const auto frames = parse_xyz(slurp(tmp / "rel/relaxed.xyz"));
  REQUIRE(frames.size() == 2);
  std::istringstream csv(slurp(tmp / "rel/relax.csv"));
  int rows = 0;
  for (std::string line; std::getline(csv, line);) {
    if (line.empty() || line[0] == '#' || line.rfind("frame", 0) == 0) continue;
    ++rows;
    CHECK(line.back() == '1');
  }
  CHECK(rows == 2);
  for (const auto& f : frames) {
    CHECK(evaluate(tb.potential, f.positions).energy == doctest::Approx(tb.relaxed_energy).epsilon(1e-6));
  }
  CHECK(invoke({"relax", "--input", tmp / "absent.xyz"}).code == kExitConfig);
}

TEST_CASE("bundled configs parse and validate") {
  for (const auto& entry : fs::directory_iterator(OGD_CONFIG_DIR)) {
    CAPTURE(entry.path().string());
    const ExperimentConfig cfg = load_config(entry.path());
    CHECK_NOTHROW(validate(cfg));
  }
  const ExperimentConfig b = load_config(fs::path(OGD_CONFIG_DIR) / "bilevel_ring.yaml");
  CHECK(b.mode == Mode::bilevel_noisy);
  CHECK(b.target_from_testbed);
  const ExperimentConfig x = load_config(fs::path(OGD_CONFIG_DIR) / "xtb.yaml");
  CHECK(x.oracle == OracleKind::xtb);
  CHECK(x.xtb.extra_args == std::vector<std::string>{"--gfn", "2"});
}
