#include "ogd/metrics.hpp"
#include "ogd/sampler.hpp"
#include "ogd/testbed.hpp"
#include "ogd/xtb_bridge.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstring>

namespace py = pybind11;
using namespace ogd;

namespace {

using Stack = py::array_t<double, py::array::c_style | py::array::forcecast>;

Stack stack_positions(const std::vector<PointState>& states) {
  const py::ssize_t n = static_cast<py::ssize_t>(states.size());
  const py::ssize_t atoms = n > 0 ? states.front().n_atoms() : 0;
  Stack out({n, atoms, py::ssize_t{3}});
  double* dst = out.mutable_data();
  for (const auto& s : states) {
    std::memcpy(dst, s.positions.data(), sizeof(double) * static_cast<std::size_t>(s.positions.size()));
    dst += s.positions.size();
  }
  return out;
}

std::vector<PointState> unstack_positions(const Stack& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) throw ShapeMismatch("expected an array of shape (n, atoms, 3)");
  std::vector<PointState> out;
  const double* src = arr.data();
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) {
    Positions p(arr.shape(1), 3);
    std::memcpy(p.data(), src, sizeof(double) * static_cast<std::size_t>(p.size()));
    src += p.size();
    out.emplace_back(std::move(p), Features(arr.shape(1), 0), false);
  }
  return out;
}

py::dict eval_dict(const OracleEval& ev) {
  py::dict d;
  d["energy"] = ev.energy;
  d["gradient"] = ev.gradient;
  d["converged"] = ev.converged;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ogdiff, m) {
  m.doc() = "Guided diffusion sampling of point clouds with zeroth-order oracle guidance";

  static py::exception<Error> base_error(m, "OgdError");
  py::register_exception<InvalidParameter>(m, "InvalidParameter", base_error.ptr());
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base_error.ptr());
  py::register_exception<NonFiniteInput>(m, "NonFiniteInput", base_error.ptr());

  py::class_<NoiseSchedule, std::shared_ptr<NoiseSchedule>>(m, "Schedule")
      .def(py::init([](const std::string& kind, int steps, double beta_start, double beta_end, double power) {
             ScheduleSpec spec{parse_schedule_kind(kind), steps, beta_start, beta_end, power};
             return std::make_shared<NoiseSchedule>(build_schedule(spec));
           }),
           py::arg("kind") = "linear", py::arg("steps") = 1000, py::arg("beta_start") = 1e-4,
           py::arg("beta_end") = 0.02, py::arg("power") = 2.0)
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def("alpha", &NoiseSchedule::alpha, py::arg("t"))
      .def("beta", &NoiseSchedule::beta, py::arg("t"))
      .def("sigma", &NoiseSchedule::sigma, py::arg("t"))
      .def("noise_level", &NoiseSchedule::noise_level, py::arg("t"))
      .def_property_readonly("alphas", [](const NoiseSchedule& s) {
        return std::vector<double>(s.alphas().begin(), s.alphas().end());
      })
      .def_property_readonly("betas", [](const NoiseSchedule& s) {
        return std::vector<double>(s.betas().begin(), s.betas().end());
      })
      .def_property_readonly("sigmas", [](const NoiseSchedule& s) {
        return std::vector<double>(s.sigmas().begin(), s.sigmas().end());
      });

  m.def("forward_diffuse", [](const Positions& x0, int t, const Positions& eps, const NoiseSchedule& s) {
    return forward_diffuse(x0, t, eps, s);
  }, py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
  m.def("posterior_mean", [](const Positions& xt, const Positions& eps, int t, const NoiseSchedule& s) {
    return posterior_mean(xt, eps, t, s);
  }, py::arg("xt"), py::arg("eps"), py::arg("t"), py::arg("schedule"));
  m.def("t0_estimate", [](const Positions& xt, const Positions& eps, int t, const NoiseSchedule& s) {
    return t0_estimate(xt, eps, t, s);
  }, py::arg("xt"), py::arg("eps"), py::arg("t"), py::arg("schedule"));
  m.def("clean_recompose", [](const Positions& x0_hat, const Positions& delta, const Positions& eps, int t,
                              const NoiseSchedule& s) { return clean_recompose(x0_hat, delta, eps, t, s); },
        py::arg("x0_hat"), py::arg("delta"), py::arg("eps"), py::arg("t"), py::arg("schedule"));
  m.def("projection_coeffs", [](int t, const NoiseSchedule& s) {
    const ProjectionCoeffs pc = projection_coeffs(t, s);
    return py::make_tuple(pc.signal, pc.noise);
  }, py::arg("t"), py::arg("schedule"));
  m.def("project_zero_cog", &project_zero_cog, py::arg("positions"));

  py::class_<ToyPotential>(m, "ToyPotential")
      .def(py::init([](int n_atoms, const std::vector<std::tuple<int, int, double, double>>& bonds,
                       std::optional<std::tuple<double, double, double>> lj) {
             std::vector<Bond> b;
             for (const auto& [i, j, k, r0] : bonds) b.push_back({i, j, k, r0});
             std::optional<LennardJones> l;
             if (lj) l = LennardJones{std::get<0>(*lj), std::get<1>(*lj), std::get<2>(*lj)};
             return ToyPotential(n_atoms, b, l);
           }),
           py::arg("n_atoms"), py::arg("bonds"), py::arg("lj") = py::none(),
           "Harmonic bonds (i, j, k, r0) plus optional Lennard-Jones (epsilon, sigma, cutoff).")
      .def_property_readonly("n_atoms", &ToyPotential::n_atoms)
      .def("evaluate", [](const ToyPotential& p, const Positions& x) { return eval_dict(evaluate(p, x)); },
           py::arg("positions"))
      .def("force_rms_objective", [](const ToyPotential& p, const Positions& x) { return objective(p, x); },
           py::arg("positions"))
      .def("relax", [](const ToyPotential& p, const Positions& x, int max_iters, double tol) {
        RelaxOptions opts;
        opts.max_iters = max_iters;
        opts.tol = tol;
        const RelaxResult r = relax(p, x, opts);
        py::dict d;
        d["positions"] = r.positions;
        d["energy"] = r.energy;
        d["force_rms"] = r.force_rms;
        d["converged"] = r.converged;
        d["iterations"] = r.iterations;
        return d;
      }, py::arg("positions"), py::arg("max_iters") = 10000, py::arg("tol") = 1e-6);

  py::class_<RingSpec>(m, "RingSpec")
      .def(py::init([](int n_atoms, double bond_k, double r0, double lj_epsilon, double lj_sigma, double lj_cutoff,
                       double stretch, double target_scale, int feature_dim) {
             return RingSpec{n_atoms, bond_k, r0, lj_epsilon, lj_sigma, lj_cutoff, stretch, target_scale, feature_dim};
           }),
           py::arg("n_atoms") = 4, py::arg("bond_k") = 10.0, py::arg("r0") = 1.0, py::arg("lj_epsilon") = 0.05,
           py::arg("lj_sigma") = 1.0, py::arg("lj_cutoff") = 3.0, py::arg("stretch") = 1.3,
           py::arg("target_scale") = 0.1, py::arg("feature_dim") = 0)
      .def_readwrite("n_atoms", &RingSpec::n_atoms)
      .def_readwrite("bond_k", &RingSpec::bond_k)
      .def_readwrite("r0", &RingSpec::r0)
      .def_readwrite("lj_epsilon", &RingSpec::lj_epsilon)
      .def_readwrite("lj_sigma", &RingSpec::lj_sigma)
      .def_readwrite("lj_cutoff", &RingSpec::lj_cutoff)
      .def_readwrite("stretch", &RingSpec::stretch)
      .def_readwrite("target_scale", &RingSpec::target_scale)
      .def_readwrite("feature_dim", &RingSpec::feature_dim);

  py::class_<Testbed>(m, "Testbed")
      .def(py::init([](const RingSpec& spec) { return ring_testbed(spec); }), py::arg("spec") = RingSpec{})
      .def_readonly("spec", &Testbed::spec)
      .def_readonly("potential", &Testbed::potential)
      .def_property_readonly("target_mean", [](const Testbed& t) { return t.target_mean.positions; })
      .def_property_readonly("relaxed", [](const Testbed& t) { return t.relaxed.positions; })
      .def_readonly("relaxed_energy", &Testbed::relaxed_energy)
      .def_readonly("relaxed_rg", &Testbed::relaxed_rg);

  m.def(
      "sample",
      [](const Testbed& tb, const std::string& mode, int n_samples, std::uint64_t seed,
         std::shared_ptr<NoiseSchedule> schedule, double scale, double property_scale, double zeta, int window,
         int skip, int clean_steps, double clean_lr, std::optional<double> target, int probes, int variant_size,
         int interval, double variant_scale, int jobs) {
        RunConfig cfg;
        cfg.n_samples = n_samples;
        cfg.n_atoms = tb.spec.n_atoms;
        cfg.feature_dim = tb.spec.feature_dim;
        cfg.seed = seed;
        cfg.jobs = jobs;
        cfg.mode = parse_mode(mode);
        cfg.schedule = schedule ? schedule : std::make_shared<NoiseSchedule>(build_schedule({}));
        cfg.denoiser = std::make_shared<Denoiser>(tb.denoiser());
        cfg.oracle = std::make_shared<ToyOracle>(tb.potential);
        cfg.guidance.scale = scale;
        cfg.guidance.property_scale = property_scale;
        cfg.guidance.zeta = zeta;
        cfg.guidance.window = window;
        cfg.guidance.skip = skip;
        cfg.guidance.clean_steps = clean_steps;
        cfg.guidance.clean_lr = clean_lr;
        cfg.guidance.target = target.value_or(tb.relaxed_rg);
        cfg.guidance.probes = probes;
        cfg.evo = EvoConfig{variant_size, interval, variant_scale};
        std::vector<PointState> out;
        {
          py::gil_scoped_release release;
          out = sample(cfg);
        }
        return stack_positions(out);
      },
      py::arg("testbed"), py::arg("mode") = "unguided", py::arg("n_samples") = 1, py::arg("seed") = 0,
      py::arg("schedule") = nullptr, py::arg("scale") = 0.0, py::arg("property_scale") = 0.0,
      py::arg("zeta") = 1e-6, py::arg("window") = 400, py::arg("skip") = 1, py::arg("clean_steps") = 1,
      py::arg("clean_lr") = 0.1, py::arg("target") = py::none(), py::arg("probes") = 1,
      py::arg("variant_size") = 5, py::arg("interval") = 50, py::arg("variant_scale") = 0.1, py::arg("jobs") = 1,
      "Samples positions of shape (n_samples, atoms, 3) on the testbed's Gaussian target and toy oracle.");

  m.def(
      "measure",
      [](const Testbed& tb, const Stack& samples, std::optional<double> target, bool relax_samples) {
        ReportOptions opts;
        opts.target = target.value_or(tb.relaxed_rg);
        opts.relax_samples = relax_samples;
        const ToyOracle oracle(tb.potential);
        std::vector<SampleRecord> records;
        for (const auto& s : unstack_positions(samples)) {
          records.push_back(measure_sample(s, oracle, surrogate_property, opts));
        }
        const Aggregates a = aggregate(records, opts.target);
        std::vector<double> rms, energy, gap, prop;
        std::vector<bool> valid;
        for (const auto& r : records) {
          rms.push_back(r.force_rms);
          energy.push_back(r.energy);
          gap.push_back(r.energy_above_gs);
          prop.push_back(r.property_value);
          valid.push_back(r.valid);
        }
        py::dict d;
        d["force_rms"] = rms;
        d["energy"] = energy;
        d["energy_above_gs"] = gap;
        d["property_value"] = prop;
        d["valid"] = valid;
        d["mean_force_rms"] = a.mean_force_rms;
        d["pooled_force_rms"] = a.pooled_force_rms;
        d["mean_energy_above_gs"] = a.mean_energy_above_gs;
        d["property_mae"] = a.property_mae;
        d["n_valid"] = a.n_valid;
        return d;
      },
      py::arg("testbed"), py::arg("samples"), py::arg("target") = py::none(), py::arg("relax_samples") = true);

  m.def(
      "spsa_gradient",
      [](const std::function<double(const Positions&)>& f, const Positions& positions, double target, double zeta,
         int probes, std::uint64_t seed, bool center) {
        const StateObjective objective = [&](const PointState& s) {
          const double v = f(s.positions);
          return ObjectiveValue{v, std::isfinite(v)};
        };
        GuidanceConfig cfg;
        cfg.target = target;
        cfg.zeta = zeta;
        cfg.probes = probes;
        cfg.center_perturbation = center;
        RngNoiseStream rng(seed);
        return spsa_oracle_gradient(PointState(positions, Features(positions.rows(), 0), false), objective, cfg, rng);
      },
      py::arg("objective"), py::arg("positions"), py::arg("target") = 0.0, py::arg("zeta") = 1e-6,
      py::arg("probes") = 1, py::arg("seed") = 0, py::arg("center") = true,
      "SPSA estimate of -grad (target - F)^2 for a black-box F(positions) -> float.");

  m.def(
      "gradcheck",
      [](int probes, int states, int atoms, double zeta, std::uint64_t seed) {
        const StateObjective quadratic = [](const PointState& s) {
          return ObjectiveValue{s.positions.squaredNorm(), true};
        };
        const GradientSource analytic = [](const PointState& s) -> Positions { return 2.0 * s.positions; };
        RngNoiseStream state_rng(derive_seed(seed, 0));
        std::vector<PointState> xs;
        for (int i = 0; i < states; ++i) xs.emplace_back(project_zero_cog(state_rng.positions(atoms)));
        RngNoiseStream probe_rng(derive_seed(seed, 1));
        const CosineDiagnostic d = spsa_cosine_diagnostic(quadratic, analytic, xs, probes, zeta, probe_rng);
        py::dict out;
        out["mean_estimate_cosine"] = d.mean_estimate_cosine;
        out["max_relative_error"] = d.max_relative_error;
        out["per_probe_median_cosine"] = d.per_probe_median;
        return out;
      },
      py::arg("probes") = 10000, py::arg("states") = 4, py::arg("atoms") = 4, py::arg("zeta") = 1e-6,
      py::arg("seed") = 0, "SPSA against the analytic gradient of sum(x^2) on random centred states.");

  m.def("force_rms", &force_rms, py::arg("gradient"));
  m.def("radius_of_gyration", [](const Positions& x) {
    return surrogate_property(PointState(x, Features(x.rows(), 0), false)).value;
  }, py::arg("positions"));

  m.def("write_xyz", [](const std::vector<std::string>& symbols, const Positions& x, const std::string& comment) {
    return write_xyz(AtomLabels{symbols}, x, comment);
  }, py::arg("symbols"), py::arg("positions"), py::arg("comment") = "");
  m.def("parse_xyz", [](const std::string& text) {
    py::list frames;
    for (const auto& f : parse_xyz(text)) frames.append(py::make_tuple(f.labels.symbols, f.positions, f.comment));
    return frames;
  }, py::arg("text"));
  m.def("parse_gradient_file", [](const std::string& text, int n_atoms) {
    return eval_dict(parse_gradient_file(text, n_atoms));
  }, py::arg("text"), py::arg("n_atoms"));
}
