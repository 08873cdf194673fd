#include "ogd/cli.hpp"

#include "internal.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <sstream>
#include <thread>

namespace ogd::cli {

namespace {

// Flag values; unset flags leave the config file (or default) value alone.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> mode;
  std::optional<double> scale;
  std::optional<double> property_scale;
  std::optional<double> zeta;
  std::optional<int> window;
  std::optional<int> skip;
  std::optional<int> clean_steps;
  std::optional<double> clean_lr;
  std::optional<std::string> target;
  std::optional<int> n;
  std::optional<int> atoms;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> oracle;
  std::optional<std::string> out;
  bool dump_xyz = false;
};

void add_run_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "YAML experiment config");
  app->add_option("--mode", o.mode,
                  "unguided, oracle, noisy, clean, bilevel-noisy, bilevel-clean or evolutionary");
  app->add_option("--scale", o.scale, "guidance scale s (oracle scale in bilevel modes)");
  app->add_option("--property-scale", o.property_scale, "property scale of the bilevel modes");
  app->add_option("--zeta", o.zeta, "SPSA perturbation size");
  app->add_option("--window", o.window, "guide steps t <= window");
  app->add_option("--skip", o.skip, "guide every skip-th step of the window");
  app->add_option("--clean-steps", o.clean_steps, "gradient steps of the clean-space update");
  app->add_option("--clean-lr", o.clean_lr, "learning rate of the clean-space update");
  app->add_option("--target", o.target, "property target y, or 'auto' for the relaxed testbed value");
  app->add_option("--n", o.n, "number of samples");
  app->add_option("--atoms", o.atoms, "atoms per sample");
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--jobs", o.jobs, "worker threads");
  app->add_option("--oracle", o.oracle, "toy or xtb");
  app->add_option("--out", o.out, "output directory");
  app->add_flag("--dump-xyz", o.dump_xyz, "also write samples.xyz");
}

template <class T>
T parse_flag(const std::string& flag, const std::string& text) {
  try {
    std::size_t used = 0;
    T v{};
    if constexpr (std::is_same_v<T, double>) v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(flag, "cannot read '" + text + "'");
  }
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = o.config ? load_config(*o.config) : ExperimentConfig{};
  auto wrap = [](const char* flag, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(flag, e.what());
    }
  };
  if (o.mode) wrap("--mode", [&] { cfg.mode = parse_mode(*o.mode); });
  if (o.scale) cfg.guidance.scale = *o.scale;
  if (o.property_scale) cfg.guidance.property_scale = *o.property_scale;
  if (o.zeta) cfg.guidance.zeta = *o.zeta;
  if (o.window) cfg.guidance.window = *o.window;
  if (o.skip) cfg.guidance.skip = *o.skip;
  if (o.clean_steps) cfg.guidance.clean_steps = *o.clean_steps;
  if (o.clean_lr) cfg.guidance.clean_lr = *o.clean_lr;
  if (o.target) {
    if (*o.target == "auto") {
      cfg.target_from_testbed = true;
    } else {
      cfg.guidance.target = parse_flag<double>("--target", *o.target);
      cfg.target_from_testbed = false;
    }
  }
  if (o.n) cfg.n_samples = *o.n;
  if (o.atoms) cfg.n_atoms = *o.atoms;
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.oracle) {
    if (*o.oracle == "toy") cfg.oracle = OracleKind::toy;
    else if (*o.oracle == "xtb") cfg.oracle = OracleKind::xtb;
    else throw ConfigError("--oracle", "unknown oracle '" + *o.oracle + "' (expected toy or xtb)");
  }
  if (o.out) cfg.out = *o.out;
  if (o.dump_xyz) cfg.dump_xyz = true;
  validate(cfg);
  return cfg;
}

// Building the testbed and oracle can still reject parameter combinations; those
// count as configuration problems.
Experiment prepare(const ExperimentConfig& cfg) {
  try {
    return build_experiment(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config", e.what());
  }
}

RunOutput execute(const Experiment& ex, std::vector<PointState>& samples) {
  samples = sample(ex.run);
  return measure_all(ex, samples);
}

void print_aggregates(std::ostream& out, const std::string& label, const Aggregates& a) {
  out << label << ": n=" << a.n_samples << " valid=" << a.n_valid
      << " force_rms=" << format_double(a.mean_force_rms)
      << " energy_above_gs=" << format_double(a.mean_energy_above_gs)
      << " property_mae=" << format_double(a.property_mae) << '\n';
}

int cmd_sample(const Overrides& o, std::ostream& out) {
  const Experiment ex = prepare(resolve(o));
  std::vector<PointState> samples;
  const RunOutput result = execute(ex, samples);
  write_run(ex, result, samples);
  print_aggregates(out, to_string(ex.run.mode) + " -> " + ex.cfg.out.string(), result.aggregates);
  return kExitOk;
}

int cmd_sweep(Overrides o, const std::vector<double>& scales, std::ostream& out) {
  if (!o.mode && !o.config) o.mode = "oracle";
  const ExperimentConfig base = resolve(o);
  if (scales.empty()) throw ConfigError("--scales", "needs at least one value");

  nlohmann::json runs = nlohmann::json::array();
  std::string csv = "# ogd-sweep v1\n# config_hash " + hex(fnv1a(canonical_yaml(base))) + "\n";
  csv += "scale,dir,n_samples,n_valid,mean_force_rms,pooled_force_rms,mean_energy_above_gs,property_mae\n";
  for (double s : scales) {
    ExperimentConfig cfg = base;
    cfg.guidance.scale = s;
    cfg.out = base.out / ("scale_" + format_double(s));
    const Experiment ex = prepare(cfg);
    std::vector<PointState> samples;
    const RunOutput result = execute(ex, samples);
    write_run(ex, result, samples);
    print_aggregates(out, "scale " + format_double(s), result.aggregates);

    const Aggregates& a = result.aggregates;
    runs.push_back({{"scale", s},
                    {"dir", cfg.out.filename().string()},
                    {"config_hash", ex.hashes.config},
                    {"aggregates", aggregates_json(a)}});
    csv += format_double(s) + ',' + cfg.out.filename().string() + ',' + std::to_string(a.n_samples) + ',' +
           std::to_string(a.n_valid) + ',' + format_double(a.mean_force_rms) + ',' +
           format_double(a.pooled_force_rms) + ',' + format_double(a.mean_energy_above_gs) + ',' +
           format_double(a.property_mae) + '\n';
  }
  const nlohmann::json summary = {{"format", "ogd-sweep v1"},
                                  {"config_hash", hex(fnv1a(canonical_yaml(base)))},
                                  {"mode", to_string(base.mode)},
                                  {"runs", runs}};
  write_text(base.out / "comparison.json", summary.dump(2) + "\n");
  write_text(base.out / "comparison.csv", csv);
  return kExitOk;
}

struct GradcheckOptions {
  int probes = 10000;
  int states = 4;
  int atoms = 4;
  double zeta = 1e-6;
  std::uint64_t seed = 0;
  bool uncentered = false;
  std::optional<std::string> out;
};

// Bundled fixture: F(x) = sum of squared coordinates, gradient 2x, evaluated on
// centred Gaussian states so the gradient lies in the zero-CoG subspace.
int cmd_gradcheck(const GradcheckOptions& g, std::ostream& out) {
  if (g.probes < 1) throw ConfigError("--probes", "must be >= 1");
  if (g.states < 1) throw ConfigError("--states", "must be >= 1");
  if (g.atoms < 1) throw ConfigError("--atoms", "must be >= 1");
  if (!(g.zeta > 0.0)) throw ConfigError("--zeta", "must be > 0");

  const StateObjective quadratic = [](const PointState& s) {
    return ObjectiveValue{s.positions.squaredNorm(), true};
  };
  const GradientSource analytic = [](const PointState& s) -> Positions { return 2.0 * s.positions; };

  RngNoiseStream state_rng(derive_seed(g.seed, 0));
  std::vector<PointState> states;
  for (int i = 0; i < g.states; ++i) states.emplace_back(project_zero_cog(state_rng.positions(g.atoms)));
  RngNoiseStream probe_rng(derive_seed(g.seed, 1));
  const CosineDiagnostic d =
      spsa_cosine_diagnostic(quadratic, analytic, states, g.probes, g.zeta, probe_rng, !g.uncentered);

  std::ostringstream params;
  params << "gradcheck;quadratic;" << g.probes << ';' << g.states << ';' << g.atoms << ';' << format_double(g.zeta)
         << ';' << g.seed << ';' << (g.uncentered ? "uncentered" : "centered");
  const nlohmann::json summary = {{"format", "ogd-gradcheck v1"},
                                  {"config_hash", hex(fnv1a(params.str()))},
                                  {"fixture", "quadratic"},
                                  {"probes", g.probes},
                                  {"states", g.states},
                                  {"atoms", g.atoms},
                                  {"zeta", g.zeta},
                                  {"seed", g.seed},
                                  {"centered", !g.uncentered},
                                  {"mean_estimate_cosine", d.mean_estimate_cosine},
                                  {"max_relative_error", d.max_relative_error},
                                  {"per_probe_median_cosine", d.per_probe_median},
                                  {"state_cosines", d.state_cosines},
                                  {"degenerate", d.degenerate}};
  out << "mean_estimate_cosine " << format_double(d.mean_estimate_cosine) << '\n'
      << "max_relative_error " << format_double(d.max_relative_error) << '\n'
      << "per_probe_median_cosine " << format_double(d.per_probe_median) << '\n';
  if (g.out) write_text(std::filesystem::path(*g.out) / "gradcheck.json", summary.dump(2) + "\n");
  return kExitOk;
}

struct RelaxCommand {
  std::string input;
  std::string out = "ogd-relax";
  std::optional<std::string> config;
  std::optional<int> max_iters;
  std::optional<double> tol;
};

// Relaxes every frame of an XYZ file under the testbed potential sized to the frame.
int cmd_relax(const RelaxCommand& rc, std::ostream& out) {
  ExperimentConfig cfg = rc.config ? load_config(*rc.config) : ExperimentConfig{};
  if (rc.max_iters) cfg.relax.max_iters = *rc.max_iters;
  if (rc.tol) cfg.relax.tol = *rc.tol;
  validate(cfg);

  std::ifstream in(rc.input, std::ios::binary);
  if (!in) throw ConfigError("--input", "cannot open " + rc.input);
  std::ostringstream text;
  text << in.rdbuf();
  const std::vector<XyzFrame> frames = parse_xyz(text.str());

  const std::string hash = hex(fnv1a(canonical_yaml(cfg)));
  std::string csv = "# ogd-relax v1\n# config_hash " + hash + "\n";
  csv += "frame,n_atoms,energy_before,energy_after,force_rms,iterations,converged\n";
  std::string xyz;
  int converged = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    RingSpec ring = cfg.testbed;
    ring.n_atoms = static_cast<int>(frames[i].positions.rows());
    const ToyPotential pot = ring_potential(ring);
    const OracleEval start = evaluate(pot, frames[i].positions);
    const double before = start.converged ? start.energy : std::numeric_limits<double>::quiet_NaN();
    const RelaxResult r = relax(pot, frames[i].positions, cfg.relax);
    converged += r.converged ? 1 : 0;
    csv += std::to_string(i) + ',' + std::to_string(ring.n_atoms) + ',' + format_double(before) + ',' +
           format_double(r.energy) + ',' + format_double(r.force_rms) + ',' + std::to_string(r.iterations) + ',' +
           (r.converged ? "1" : "0") + '\n';
    xyz += write_xyz(frames[i].labels, r.positions, "relaxed frame " + std::to_string(i) + " config_hash " + hash);
  }
  const std::filesystem::path dir = rc.out;
  write_text(dir / "relax.csv", csv);
  write_text(dir / "relaxed.xyz", xyz);
  out << "relaxed " << frames.size() << " frames, " << converged << " converged -> " << dir.string() << '\n';
  return kExitOk;
}

struct ReportCommand {
  std::vector<std::string> runs;
  std::string out = "ogd-report";
};

int cmd_report(const ReportCommand& rc, std::ostream& out, std::ostream& err) {
  std::vector<LoadedRun> loaded;
  for (const auto& dir : rc.runs) loaded.push_back(load_run(dir));
  const LoadedRun& first = loaded.front();
  for (const auto& run : loaded) {
    if (run.hashes.schedule != first.hashes.schedule || run.hashes.oracle != first.hashes.oracle) {
      err << "error: " << run.dir.string() << " has a different schedule or oracle hash than "
          << first.dir.string() << "; refusing to merge\n";
      return kExitRuntime;
    }
    if (run.target != first.target) {
      err << "error: " << run.dir.string() << " uses a different property target; refusing to merge\n";
      return kExitRuntime;
    }
  }

  std::vector<SampleRecord> records;
  std::string joined;
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& run : loaded) {
    records.insert(records.end(), run.records.begin(), run.records.end());
    joined += run.hashes.config + ';';
    sources.push_back({{"dir", run.dir.string()}, {"config_hash", run.hashes.config}, {"n", run.records.size()}});
  }
  const Hashes hashes{hex(fnv1a(joined)), first.hashes.schedule, first.hashes.oracle};
  const Aggregates a = aggregate(records, first.target);

  const std::filesystem::path dir = rc.out;
  write_text(dir / "samples.csv", samples_csv(records, hashes));
  const nlohmann::json summary = {{"format", "ogd-summary v1"},
                                  {"config_hash", hashes.config},
                                  {"schedule_hash", hashes.schedule},
                                  {"oracle_hash", hashes.oracle},
                                  {"target", first.target},
                                  {"sources", sources},
                                  {"aggregates", aggregates_json(a)}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_histogram(dir / "hist_force_rms.csv", a.force_rms_hist, "force_rms", hashes);
  write_histogram(dir / "hist_energy_above_gs.csv", a.energy_above_gs_hist, "energy_above_gs", hashes);
  print_aggregates(out, "merged " + std::to_string(loaded.size()) + " runs -> " + dir.string(), a);
  return kExitOk;
}

}  // namespace

RunOutput measure_all(const Experiment& ex, const std::vector<PointState>& samples) {
  RunOutput result;
  result.records.resize(samples.size());
  const Property property = ex.run.property_or_default();
  const Decoder& decoder = ex.run.decoder_ref();
  const int jobs = std::max(1, std::min<int>(ex.run.jobs, static_cast<int>(samples.size())));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  auto work = [&](int w) {
    try {
      for (std::size_t i = static_cast<std::size_t>(w); i < samples.size(); i += static_cast<std::size_t>(jobs)) {
        result.records[i] = measure_sample(decoder.decode(samples[i]), *ex.run.oracle, property, ex.report);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < jobs; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.aggregates = aggregate(result.records, ex.report.target);
  return result;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Guided diffusion sampling of point clouds with zeroth-order oracle guidance", "ogd"};
  app.require_subcommand(1);

  Overrides sample_flags;
  CLI::App* sample_cmd = app.add_subcommand("sample", "draw samples in any guidance mode");
  add_run_flags(sample_cmd, sample_flags);

  Overrides sweep_flags;
  std::vector<double> scales{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "repeat a run over a grid of guidance scales");
  add_run_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--scales", scales, "scale grid")->delimiter(',');

  GradcheckOptions grad;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "compare SPSA estimates with an analytic gradient");
  grad_cmd->add_option("--probes", grad.probes, "probes per state");
  grad_cmd->add_option("--states", grad.states, "number of test states");
  grad_cmd->add_option("--atoms", grad.atoms, "atoms per state");
  grad_cmd->add_option("--zeta", grad.zeta, "perturbation size");
  grad_cmd->add_option("--seed", grad.seed, "seed");
  grad_cmd->add_flag("--uncentered", grad.uncentered, "do not centre the perturbations");
  grad_cmd->add_option("--out", grad.out, "directory for gradcheck.json");

  RelaxCommand relax_opts;
  CLI::App* relax_cmd = app.add_subcommand("relax", "relax XYZ frames under the testbed potential");
  relax_cmd->add_option("--input", relax_opts.input, "XYZ file with one or more frames")->required();
  relax_cmd->add_option("--out", relax_opts.out, "output directory");
  relax_cmd->add_option("--config", relax_opts.config, "YAML config for the testbed and relax settings");
  relax_cmd->add_option("--max-iters", relax_opts.max_iters, "iteration cap");
  relax_cmd->add_option("--tol", relax_opts.tol, "force RMS tolerance");

  ReportCommand report_opts;
  CLI::App* report_cmd = app.add_subcommand("report", "re-aggregate saved run directories");
  report_cmd->add_option("runs", report_opts.runs, "run directories")->required();
  report_cmd->add_option("--out", report_opts.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*sample_cmd) return cmd_sample(sample_flags, out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, scales, out);
    if (*grad_cmd) return cmd_gradcheck(grad, out);
    if (*relax_cmd) return cmd_relax(relax_opts, out);
    if (*report_cmd) return cmd_report(report_opts, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace ogd::cli
