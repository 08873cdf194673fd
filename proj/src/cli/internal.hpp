#pragma once

#include "ogd/metrics.hpp"
#include "ogd/sampler.hpp"
#include "ogd/testbed.hpp"
#include "ogd/xtb_bridge.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ogd::cli {

/// Configuration problem tied to a field (and a line when it came from a file).
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message, int line = 0);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

enum class OracleKind { toy, xtb };

struct XtbSettings {
  std::string path = "xtb";
  double timeout = 60.0;
  std::vector<std::string> extra_args;
  std::string element = "C";
};

/// File form of a run: RunConfig plus the testbed, oracle and output settings.
struct ExperimentConfig {
  Mode mode = Mode::unguided;
  int n_samples = 100;
  int n_atoms = 4;
  std::uint64_t seed = 0;
  int jobs = 1;

  ScheduleSpec schedule;
  RingSpec testbed;
  GuidanceConfig guidance;
  bool target_from_testbed = true;  // y defaults to the relaxed ring's radius of gyration
  EvoConfig evo;

  OracleKind oracle = OracleKind::toy;
  XtbSettings xtb;

  RelaxOptions relax;
  double validity_tol = 1e-6;
  double min_dist = 0.5;
  bool relax_samples = true;

  std::filesystem::path out = "ogd-out";
  bool dump_xyz = false;
};

/// Reads a YAML config; unknown keys and bad values raise ConfigError with the line.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");

/// Checks cross-field constraints; throws ConfigError.
void validate(const ExperimentConfig& cfg);

/// Canonical YAML of everything that determines the samples (output paths excluded).
std::string canonical_yaml(const ExperimentConfig& cfg);

std::uint64_t fnv1a(std::string_view text);
std::string hex(std::uint64_t v);

struct Hashes {
  std::string config;
  std::string schedule;
  std::string oracle;
};

/// Objects built from a config, ready to sample.
struct Experiment {
  ExperimentConfig cfg;
  Testbed testbed;
  RunConfig run;
  ReportOptions report;
  Hashes hashes;
};

Experiment build_experiment(const ExperimentConfig& cfg);

// Report files.
struct RunOutput {
  std::vector<SampleRecord> records;
  Aggregates aggregates;
};

/// Measures every decoded sample against the run's oracle, using cfg.jobs threads.
RunOutput measure_all(const Experiment& ex, const std::vector<PointState>& samples);

nlohmann::json aggregates_json(const Aggregates& a);
void write_run(const Experiment& ex, const RunOutput& output, const std::vector<PointState>& samples);
void write_histogram(const std::filesystem::path& path, const Histogram& h, const std::string& quantity,
                     const Hashes& hashes);
std::string samples_csv(const std::vector<SampleRecord>& records, const Hashes& hashes);

struct LoadedRun {
  std::filesystem::path dir;
  Hashes hashes;
  std::vector<SampleRecord> records;
  double target = 0.0;
};

/// Reads samples.csv and summary.json of a run directory. Throws Error when malformed.
LoadedRun load_run(const std::filesystem::path& dir);

std::string format_double(double v);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ogd::cli
