#include "internal.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace ogd::cli {

namespace {

std::string describe_location(const std::string& field, int line) {
  std::string out = "field '" + field + "'";
  if (line > 0) out = "line " + std::to_string(line) + ", " + out;
  return out;
}

int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

// Typed accessors that report the offending field and line.
class Reader {
 public:
  Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.IsMap()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a mapping", line_of(node_));
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const YAML::Node v = node_[key];
    if (!v) return;
    const std::string field = join(key);
    if (!v.IsScalar()) throw ConfigError(field, "expected a scalar value", line_of(v));
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field, "cannot read '" + v.Scalar() + "'", line_of(v));
    }
  }

  void get_with(const std::string& key, const std::function<void(const std::string&)>& parse) {
    seen_.insert(key);
    const YAML::Node v = node_[key];
    if (!v) return;
    if (!v.IsScalar()) throw ConfigError(join(key), "expected a scalar value", line_of(v));
    try {
      parse(v.Scalar());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(join(key), e.what(), line_of(v));
    }
  }

  void get_list(const std::string& key, std::vector<std::string>& out) {
    seen_.insert(key);
    const YAML::Node v = node_[key];
    if (!v) return;
    if (!v.IsSequence()) throw ConfigError(join(key), "expected a list", line_of(v));
    out.clear();
    for (const auto& item : v) {
      if (!item.IsScalar()) throw ConfigError(join(key), "expected a list of strings", line_of(item));
      out.push_back(item.Scalar());
    }
  }

  std::optional<Reader> section(const std::string& key) {
    seen_.insert(key);
    const YAML::Node v = node_[key];
    if (!v || v.IsNull()) return std::nullopt;
    return Reader(v, join(key));
  }

  /// Rejects keys nobody asked for.
  void finish() const {
    for (const auto& kv : node_) {
      const std::string key = kv.first.Scalar();
      if (!seen_.count(key)) throw ConfigError(join(key), "unknown key", line_of(kv.first));
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

ExperimentConfig from_yaml(const YAML::Node& root) {
  ExperimentConfig cfg;
  if (!root || root.IsNull()) return cfg;
  Reader r(root, "");
  r.get_with("mode", [&](const std::string& s) { cfg.mode = parse_mode(s); });
  r.get("n", cfg.n_samples);
  r.get("atoms", cfg.n_atoms);
  r.get("seed", cfg.seed);
  r.get("jobs", cfg.jobs);

  if (auto s = r.section("schedule")) {
    s->get_with("kind", [&](const std::string& v) { cfg.schedule.kind = parse_schedule_kind(v); });
    s->get("steps", cfg.schedule.steps);
    s->get("beta_start", cfg.schedule.beta_start);
    s->get("beta_end", cfg.schedule.beta_end);
    s->get("power", cfg.schedule.power);
    s->finish();
  }
  if (auto s = r.section("testbed")) {
    s->get("bond_k", cfg.testbed.bond_k);
    s->get("r0", cfg.testbed.r0);
    s->get("lj_epsilon", cfg.testbed.lj_epsilon);
    s->get("lj_sigma", cfg.testbed.lj_sigma);
    s->get("lj_cutoff", cfg.testbed.lj_cutoff);
    s->get("stretch", cfg.testbed.stretch);
    s->get("target_scale", cfg.testbed.target_scale);
    s->get("feature_dim", cfg.testbed.feature_dim);
    s->finish();
  }
  if (auto s = r.section("guidance")) {
    GuidanceConfig& g = cfg.guidance;
    s->get("scale", g.scale);
    s->get("property_scale", g.property_scale);
    s->get("zeta", g.zeta);
    s->get("window", g.window);
    s->get("skip", g.skip);
    s->get("clean_steps", g.clean_steps);
    s->get("clean_lr", g.clean_lr);
    s->get_with("target", [&](const std::string& v) {
      if (v == "auto") {
        cfg.target_from_testbed = true;
        return;
      }
      g.target = YAML::Node(v).as<double>();
      cfg.target_from_testbed = false;
    });
    s->get_with("scalarization", [&](const std::string& v) { g.scalarization = parse_scalarization(v); });
    s->get("probes", g.probes);
    s->get_with("max_norm", [&](const std::string& v) {
      if (v == "none" || v.empty() || v == "~" || v == "null") g.max_norm.reset();
      else g.max_norm = YAML::Node(v).as<double>();
    });
    s->get("center_perturbation", g.center_perturbation);
    s->finish();
  }
  if (auto s = r.section("evo")) {
    s->get("variant_size", cfg.evo.variant_size);
    s->get("interval", cfg.evo.interval);
    s->get("variant_scale", cfg.evo.variant_scale);
    s->finish();
  }
  if (auto s = r.section("oracle")) {
    s->get_with("kind", [&](const std::string& v) {
      if (v == "toy") cfg.oracle = OracleKind::toy;
      else if (v == "xtb") cfg.oracle = OracleKind::xtb;
      else throw InvalidParameter("unknown oracle '" + v + "' (expected toy or xtb)");
    });
    if (auto x = s->section("xtb")) {
      x->get("path", cfg.xtb.path);
      x->get("timeout", cfg.xtb.timeout);
      x->get_list("extra_args", cfg.xtb.extra_args);
      x->get("element", cfg.xtb.element);
      x->finish();
    }
    s->finish();
  }
  if (auto s = r.section("relax")) {
    s->get("max_iters", cfg.relax.max_iters);
    s->get("tol", cfg.relax.tol);
    s->get("initial_step", cfg.relax.initial_step);
    s->finish();
  }
  if (auto s = r.section("report")) {
    s->get("validity_tol", cfg.validity_tol);
    s->get("min_dist", cfg.min_dist);
    s->get("relax_samples", cfg.relax_samples);
    s->finish();
  }
  if (auto s = r.section("output")) {
    std::string dir = cfg.out.string();
    s->get("dir", dir);
    cfg.out = dir;
    s->get("dump_xyz", cfg.dump_xyz);
    s->finish();
  }
  r.finish();
  return cfg;
}

void emit_double(YAML::Emitter& e, const char* key, double v) { e << YAML::Key << key << YAML::Value << format_double(v); }

}  // namespace

ConfigError::ConfigError(std::string field, const std::string& message, int line)
    : Error(describe_location(field, line) + ": " + message), field_(std::move(field)), line_(line) {}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, e.msg, e.mark.line + 1);
  }
  return from_yaml(root);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

void validate(const ExperimentConfig& cfg) {
  auto require = [](bool ok, const char* field, const std::string& msg) {
    if (!ok) throw ConfigError(field, msg);
  };
  require(cfg.n_samples >= 1, "n", "must be >= 1");
  require(cfg.n_atoms >= 1, "atoms", "must be >= 1");
  require(cfg.jobs >= 1, "jobs", "must be >= 1");
  require(cfg.testbed.feature_dim >= 0, "testbed.feature_dim", "must be >= 0");
  require(cfg.testbed.stretch > 0.0, "testbed.stretch", "must be > 0");
  require(cfg.relax.max_iters >= 0, "relax.max_iters", "must be >= 0");
  require(cfg.relax.tol > 0.0, "relax.tol", "must be > 0");
  require(cfg.xtb.timeout > 0.0, "oracle.xtb.timeout", "must be > 0");
  try {
    build_schedule(cfg.schedule);
  } catch (const Error& e) {
    throw ConfigError("schedule", e.what());
  }
  const GuidanceConfig& g = cfg.guidance;
  require(std::isfinite(g.scale) && g.scale >= 0.0, "guidance.scale", "must be >= 0");
  require(std::isfinite(g.property_scale) && g.property_scale >= 0.0, "guidance.property_scale", "must be >= 0");
  require(g.zeta > 0.0, "guidance.zeta", "must be > 0");
  require(g.window >= 0 && g.window <= cfg.schedule.steps, "guidance.window", "must lie in [0, schedule.steps]");
  require(g.skip >= 1, "guidance.skip", "must be >= 1");
  require(g.clean_steps >= 1, "guidance.clean_steps", "must be >= 1");
  require(g.clean_lr >= 0.0, "guidance.clean_lr", "must be >= 0");
  require(g.probes >= 1, "guidance.probes", "must be >= 1");
  require(!g.max_norm || *g.max_norm > 0.0, "guidance.max_norm", "must be > 0");
  require(cfg.evo.variant_size >= 1, "evo.variant_size", "must be >= 1");
  require(cfg.evo.interval >= 1, "evo.interval", "must be >= 1");
  require(cfg.evo.variant_scale > 0.0, "evo.variant_scale", "must be > 0");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

std::string canonical_yaml(const ExperimentConfig& cfg) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "mode" << YAML::Value << to_string(cfg.mode);
  e << YAML::Key << "n" << YAML::Value << cfg.n_samples;
  e << YAML::Key << "atoms" << YAML::Value << cfg.n_atoms;
  e << YAML::Key << "seed" << YAML::Value << cfg.seed;

  e << YAML::Key << "schedule" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << to_string(cfg.schedule.kind);
  e << YAML::Key << "steps" << YAML::Value << cfg.schedule.steps;
  emit_double(e, "beta_start", cfg.schedule.beta_start);
  emit_double(e, "beta_end", cfg.schedule.beta_end);
  emit_double(e, "power", cfg.schedule.power);
  e << YAML::EndMap;

  e << YAML::Key << "testbed" << YAML::Value << YAML::BeginMap;
  emit_double(e, "bond_k", cfg.testbed.bond_k);
  emit_double(e, "r0", cfg.testbed.r0);
  emit_double(e, "lj_epsilon", cfg.testbed.lj_epsilon);
  emit_double(e, "lj_sigma", cfg.testbed.lj_sigma);
  emit_double(e, "lj_cutoff", cfg.testbed.lj_cutoff);
  emit_double(e, "stretch", cfg.testbed.stretch);
  emit_double(e, "target_scale", cfg.testbed.target_scale);
  e << YAML::Key << "feature_dim" << YAML::Value << cfg.testbed.feature_dim;
  e << YAML::EndMap;

  const GuidanceConfig& g = cfg.guidance;
  e << YAML::Key << "guidance" << YAML::Value << YAML::BeginMap;
  emit_double(e, "scale", g.scale);
  emit_double(e, "property_scale", g.property_scale);
  emit_double(e, "zeta", g.zeta);
  e << YAML::Key << "window" << YAML::Value << g.window;
  e << YAML::Key << "skip" << YAML::Value << g.skip;
  e << YAML::Key << "clean_steps" << YAML::Value << g.clean_steps;
  emit_double(e, "clean_lr", g.clean_lr);
  if (cfg.target_from_testbed) e << YAML::Key << "target" << YAML::Value << "auto";
  else emit_double(e, "target", g.target);
  e << YAML::Key << "scalarization" << YAML::Value << to_string(g.scalarization);
  e << YAML::Key << "probes" << YAML::Value << g.probes;
  if (g.max_norm) emit_double(e, "max_norm", *g.max_norm);
  else e << YAML::Key << "max_norm" << YAML::Value << "none";
  e << YAML::Key << "center_perturbation" << YAML::Value << g.center_perturbation;
  e << YAML::EndMap;

  e << YAML::Key << "evo" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "variant_size" << YAML::Value << cfg.evo.variant_size;
  e << YAML::Key << "interval" << YAML::Value << cfg.evo.interval;
  emit_double(e, "variant_scale", cfg.evo.variant_scale);
  e << YAML::EndMap;

  e << YAML::Key << "oracle" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << (cfg.oracle == OracleKind::toy ? "toy" : "xtb");
  if (cfg.oracle == OracleKind::xtb) {
    e << YAML::Key << "xtb" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "path" << YAML::Value << cfg.xtb.path;
    emit_double(e, "timeout", cfg.xtb.timeout);
    e << YAML::Key << "extra_args" << YAML::Value << YAML::Flow << cfg.xtb.extra_args;
    e << YAML::Key << "element" << YAML::Value << cfg.xtb.element;
    e << YAML::EndMap;
  }
  e << YAML::EndMap;

  e << YAML::Key << "relax" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "max_iters" << YAML::Value << cfg.relax.max_iters;
  emit_double(e, "tol", cfg.relax.tol);
  emit_double(e, "initial_step", cfg.relax.initial_step);
  e << YAML::EndMap;

  e << YAML::Key << "report" << YAML::Value << YAML::BeginMap;
  emit_double(e, "validity_tol", cfg.validity_tol);
  emit_double(e, "min_dist", cfg.min_dist);
  e << YAML::Key << "relax_samples" << YAML::Value << cfg.relax_samples;
  e << YAML::EndMap;

  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

Experiment build_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  RingSpec ring = cfg.testbed;
  ring.n_atoms = cfg.n_atoms;
  Experiment ex{cfg, ring_testbed(ring), RunConfig{}, ReportOptions{}, Hashes{}};

  RunConfig& run = ex.run;
  run.n_samples = cfg.n_samples;
  run.n_atoms = cfg.n_atoms;
  run.feature_dim = cfg.testbed.feature_dim;
  run.seed = cfg.seed;
  run.jobs = cfg.jobs;
  run.mode = cfg.mode;
  run.schedule = std::make_shared<NoiseSchedule>(build_schedule(cfg.schedule));
  run.denoiser = std::make_shared<Denoiser>(ex.testbed.denoiser());
  if (cfg.oracle == OracleKind::toy) {
    run.oracle = std::make_shared<ToyOracle>(ex.testbed.potential);
  } else {
    XtbConfig x;
    x.executable_path = cfg.xtb.path;
    x.timeout = cfg.xtb.timeout;
    x.extra_args = cfg.xtb.extra_args;
    run.oracle = std::make_shared<XtbOracle>(x, AtomLabels::uniform(cfg.n_atoms, cfg.xtb.element));
  }
  run.guidance = cfg.guidance;
  if (cfg.target_from_testbed) run.guidance.target = ex.testbed.relaxed_rg;
  run.evo = cfg.evo;

  ex.report.target = run.guidance.target;
  ex.report.relax = cfg.relax;
  ex.report.validity_tol = cfg.validity_tol;
  ex.report.min_dist = cfg.min_dist;
  ex.report.relax_samples = cfg.relax_samples;

  std::ostringstream sched;
  sched << to_string(cfg.schedule.kind) << ';' << cfg.schedule.steps << ';' << format_double(cfg.schedule.beta_start)
        << ';' << format_double(cfg.schedule.beta_end) << ';' << format_double(cfg.schedule.power);
  ex.hashes.config = hex(fnv1a(canonical_yaml(cfg)));
  ex.hashes.schedule = hex(fnv1a(sched.str()));
  ex.hashes.oracle = hex(fnv1a(run.oracle->describe()));
  return ex;
}

}  // namespace ogd::cli
