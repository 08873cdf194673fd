#include "internal.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ogd::cli {

namespace {

constexpr const char* kSamplesHeader = "# ogd-samples v1";
constexpr const char* kSamplesColumns =
    "sample,force_rms,energy,energy_above_gs,property_value,valid,relax_converged";

std::string hash_comments(const Hashes& h) {
  return "# config_hash " + h.config + "\n# schedule_hash " + h.schedule + "\n# oracle_hash " + h.oracle + "\n";
}

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double parse_number(const std::string& field, const std::string& where) {
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || end != field.data() + field.size()) throw Error(where + ": bad number '" + field + "'");
  return v;
}

nlohmann::json histogram_json(const Histogram& h) {
  return {{"edges", h.edges}, {"counts", h.counts}};
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string samples_csv(const std::vector<SampleRecord>& records, const Hashes& hashes) {
  std::string out = std::string(kSamplesHeader) + "\n" + hash_comments(hashes) + kSamplesColumns + "\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SampleRecord& r = records[i];
    out += std::to_string(i) + ',' + format_double(r.force_rms) + ',' + format_double(r.energy) + ',' +
           format_double(r.energy_above_gs) + ',' + format_double(r.property_value) + ',' + (r.valid ? "1" : "0") +
           ',' + (r.relax_converged ? "1" : "0") + '\n';
  }
  return out;
}

void write_histogram(const std::filesystem::path& path, const Histogram& h, const std::string& quantity,
                     const Hashes& hashes) {
  std::string out = "# ogd-histogram v1\n" + hash_comments(hashes) + "# quantity " + quantity + "\n";
  out += "# top edge " + format_double(h.edges.empty() ? 0.0 : h.edges.back()) + "\n";
  out += "bin_lower,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out += format_double(h.edges[b]) + ',' + std::to_string(h.counts[b]) + '\n';
  }
  write_text(path, out);
}

nlohmann::json aggregates_json(const Aggregates& a) {
  return {{"n_samples", a.n_samples},
          {"n_valid", a.n_valid},
          {"valid_fraction", a.n_samples > 0 ? static_cast<double>(a.n_valid) / a.n_samples : 0.0},
          {"mean_force_rms", number(a.mean_force_rms)},
          {"median_force_rms", number(a.median_force_rms)},
          {"pooled_force_rms", number(a.pooled_force_rms)},
          {"mean_energy_above_gs", number(a.mean_energy_above_gs)},
          {"median_energy_above_gs", number(a.median_energy_above_gs)},
          {"mean_property", number(a.mean_property)},
          {"property_mae", number(a.property_mae)},
          {"force_rms_hist", histogram_json(a.force_rms_hist)},
          {"energy_above_gs_hist", histogram_json(a.energy_above_gs_hist)}};
}

void write_run(const Experiment& ex, const RunOutput& output, const std::vector<PointState>& samples) {
  const auto& dir = ex.cfg.out;
  std::filesystem::create_directories(dir);
  write_text(dir / "samples.csv", samples_csv(output.records, ex.hashes));

  nlohmann::json summary = {
      {"format", "ogd-summary v1"},
      {"config_hash", ex.hashes.config},
      {"schedule_hash", ex.hashes.schedule},
      {"oracle_hash", ex.hashes.oracle},
      {"mode", to_string(ex.run.mode)},
      {"scale", ex.run.guidance.scale},
      {"property_scale", ex.run.guidance.property_scale},
      {"target", ex.run.guidance.target},
      {"seed", ex.run.seed},
      {"aggregates", aggregates_json(output.aggregates)},
  };
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::string manifest = "# ogd-manifest v1\n" + hash_comments(ex.hashes);
  manifest += "# resolved target " + format_double(ex.run.guidance.target) + "\n";
  manifest += canonical_yaml(ex.cfg);
  write_text(dir / "manifest.yaml", manifest);

  write_histogram(dir / "hist_force_rms.csv", output.aggregates.force_rms_hist, "force_rms", ex.hashes);
  write_histogram(dir / "hist_energy_above_gs.csv", output.aggregates.energy_above_gs_hist, "energy_above_gs",
                  ex.hashes);

  if (ex.cfg.dump_xyz) {
    const AtomLabels labels = AtomLabels::uniform(ex.run.n_atoms, ex.cfg.xtb.element);
    std::string xyz;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      xyz += write_xyz(labels, samples[i].positions,
                       "sample " + std::to_string(i) + " config_hash " + ex.hashes.config);
    }
    write_text(dir / "samples.xyz", xyz);
  }
}

LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun run;
  run.dir = dir;

  std::ifstream js(dir / "summary.json", std::ios::binary);
  if (!js) throw Error("missing " + (dir / "summary.json").string());
  try {
    const nlohmann::json summary = nlohmann::json::parse(js);
    run.hashes.config = summary.at("config_hash").get<std::string>();
    run.hashes.schedule = summary.at("schedule_hash").get<std::string>();
    run.hashes.oracle = summary.at("oracle_hash").get<std::string>();
    run.target = summary.at("target").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error((dir / "summary.json").string() + ": " + e.what());
  }

  const auto csv_path = dir / "samples.csv";
  std::ifstream csv(csv_path, std::ios::binary);
  if (!csv) throw Error("missing " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line) || line != kSamplesHeader) throw Error(csv_path.string() + ": unknown format");
  bool columns_seen = false;
  int line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    const std::string where = csv_path.string() + ":" + std::to_string(line_no);
    if (line.empty() || line[0] == '#') continue;
    if (!columns_seen) {
      if (line != kSamplesColumns) throw Error(where + ": unexpected columns");
      columns_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw Error(where + ": expected 7 fields");
    SampleRecord r;
    r.force_rms = parse_number(f[1], where);
    r.energy = parse_number(f[2], where);
    r.energy_above_gs = parse_number(f[3], where);
    r.property_value = parse_number(f[4], where);
    r.valid = f[5] == "1";
    r.relax_converged = f[6] == "1";
    run.records.push_back(r);
  }
  if (!columns_seen) throw Error(csv_path.string() + ": no column header");
  return run;
}

}  // namespace ogd::cli
