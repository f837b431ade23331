#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pcmsim/core.hpp"
#include "pcmsim/harness.hpp"
#include "pcmsim/models.hpp"
#include "pcmsim/newton.hpp"
#include "pcmsim/step_control.hpp"
#include "pcmsim/steppers.hpp"

namespace py = pybind11;
using namespace pcmsim;
namespace hs = pcmsim::harness;

namespace {

Matrix stacked(const SimulationTrace& trace, bool differential) {
  const auto rows = static_cast<Eigen::Index>(trace.records.size());
  const auto cols = static_cast<Eigen::Index>(differential ? trace.diff_names.size()
                                                           : trace.alg_names.size());
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& s = trace.records[static_cast<std::size_t>(r)].state;
    out.row(r) = differential ? s.x.transpose() : s.y.transpose();
  }
  return out;
}

Vector column(const SimulationTrace& trace, double (*get)(const StepRecord&)) {
  Vector out(static_cast<Eigen::Index>(trace.records.size()));
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = get(trace.records[i]);
  }
  return out;
}

py::dict stats_dict(const hs::ErrorStats& s) {
  py::dict d;
  d["max_diff"] = s.max_diff;
  d["avg_diff"] = s.avg_diff;
  d["var_diff"] = s.var_diff;
  return d;
}

std::optional<models::FaultSpec> to_fault(const std::optional<std::tuple<int, double, double>>& f) {
  if (!f) return std::nullopt;
  return models::FaultSpec{std::get<0>(*f), std::get<1>(*f), std::get<2>(*f)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Predictor-corrector variable-step integration of semi-explicit DAEs";

  py::register_exception<StepFailure>(m, "StepFailure", PyExc_RuntimeError);
  py::register_exception<newton::NonConvergence>(m, "NonConvergence", PyExc_RuntimeError);
  py::register_exception<newton::SingularJacobian>(m, "SingularJacobian", PyExc_RuntimeError);
  py::register_exception<InvalidHistory>(m, "InvalidHistory", PyExc_ValueError);
  py::register_exception<models::EquilibriumNotFound>(m, "EquilibriumNotFound",
                                                      PyExc_RuntimeError);

  py::class_<ControllerConfig>(m, "ControllerConfig")
      .def(py::init<>())
      .def_readwrite("h_min", &ControllerConfig::h_min)
      .def_readwrite("h_max", &ControllerConfig::h_max)
      .def_readwrite("g_low", &ControllerConfig::g_low)
      .def_readwrite("g_high", &ControllerConfig::g_high)
      .def_readwrite("iters_low", &ControllerConfig::iters_low)
      .def_readwrite("iters_high", &ControllerConfig::iters_high)
      .def_readwrite("grow_factor", &ControllerConfig::grow_factor)
      .def_readwrite("shrink_factor", &ControllerConfig::shrink_factor)
      .def_readwrite("corrector_iterations", &ControllerConfig::corrector_iterations)
      .def_readwrite("reject_on_high_error", &ControllerConfig::reject_on_high_error)
      .def("validate", &ControllerConfig::validate);

  py::class_<newton::NewtonSettings>(m, "NewtonSettings")
      .def(py::init<>())
      .def_readwrite("tolerance", &newton::NewtonSettings::tolerance)
      .def_readwrite("max_iterations", &newton::NewtonSettings::max_iterations)
      .def_readwrite("fd_epsilon", &newton::NewtonSettings::fd_epsilon);

  py::class_<DaeState>(m, "DaeState")
      .def(py::init<>())
      .def_readwrite("t", &DaeState::t)
      .def_readwrite("x", &DaeState::x)
      .def_readwrite("y", &DaeState::y)
      .def_readwrite("h", &DaeState::h);

  py::class_<DaeSystem>(m, "DaeSystem")
      .def_property_readonly("n_diff", &DaeSystem::n_diff)
      .def_property_readonly("n_alg", &DaeSystem::n_alg)
      .def_property_readonly("name", &DaeSystem::name)
      .def_property_readonly("initial", &DaeSystem::initial)
      .def_property_readonly("diff_names", &DaeSystem::diff_names)
      .def_property_readonly("alg_names", &DaeSystem::alg_names)
      .def_property_readonly("event_times",
                             [](const DaeSystem& s) {
                               std::vector<double> t;
                               for (const auto& e : s.events()) t.push_back(e.time);
                               return t;
                             })
      .def("f", &DaeSystem::f, py::arg("x"), py::arg("y"), py::arg("t"))
      .def("g", &DaeSystem::g, py::arg("x"), py::arg("y"), py::arg("t"))
      .def("validate",
           [](const DaeSystem& s, double tol) { return validate_system(s, tol).issues; },
           py::arg("tolerance") = 1e-8);

  m.def(
      "from_functions",
      [](std::size_t n_diff, std::size_t n_alg, DiffFn f, std::optional<AlgFn> g, Vector x0,
         std::optional<Vector> y0, double t0) {
        DaeState init{t0, std::move(x0), y0.value_or(Vector(0)), 0.0};
        return DaeSystem::from_functions(n_diff, n_alg, std::move(f), g.value_or(AlgFn{}),
                                         std::move(init));
      },
      py::arg("n_diff"), py::arg("n_alg"), py::arg("f"), py::arg("g") = py::none(),
      py::arg("x0"), py::arg("y0") = py::none(), py::arg("t0") = 0.0,
      "Build a DAE from Python callables f(x, y, t) and g(x, y, t).");

  m.def("analytic_system", &models::analytic_system);
  m.def("analytic_exact_solution", &models::AnalyticSystem::exact_solution, py::arg("t"));
  m.def("analytic_exact_sum", &models::AnalyticSystem::exact_sum, py::arg("t"));
  m.def("linear_system", &models::linear_system, py::arg("lam"));
  m.def(
      "swing_system",
      [](const std::string& fixture, std::optional<std::tuple<int, double, double>> fault) {
        return models::swing_system(fixture, to_fault(fault));
      },
      py::arg("fixture") = "wscc9", py::arg("fault") = py::none(),
      "Classical swing DAE; fault is (bus, start, duration).");

  py::class_<SimulationTrace>(m, "SimulationTrace")
      .def_readonly("method", &SimulationTrace::method)
      .def_readonly("accepted_steps", &SimulationTrace::accepted_steps)
      .def_readonly("total_newton_iterations", &SimulationTrace::total_newton_iterations)
      .def_readonly("diff_names", &SimulationTrace::diff_names)
      .def_readonly("alg_names", &SimulationTrace::alg_names)
      .def("__len__", &SimulationTrace::size)
      .def_property_readonly("t", [](const SimulationTrace& tr) {
        return column(tr, [](const StepRecord& r) { return r.state.t; });
      })
      .def_property_readonly("h", [](const SimulationTrace& tr) {
        return column(tr, [](const StepRecord& r) { return r.state.h; });
      })
      .def_property_readonly("g_max", [](const SimulationTrace& tr) {
        return column(tr, [](const StepRecord& r) { return r.g_max.value_or(NAN); });
      })
      .def_property_readonly("newton_iterations", [](const SimulationTrace& tr) {
        return column(tr, [](const StepRecord& r) { return double(r.newton_iterations); });
      })
      .def_property_readonly("x", [](const SimulationTrace& tr) { return stacked(tr, true); })
      .def_property_readonly("y", [](const SimulationTrace& tr) { return stacked(tr, false); })
      .def("to_csv", [](const SimulationTrace& tr) {
        std::ostringstream out;
        hs::write_trace_csv(tr, out);
        return out.str();
      });

  m.def(
      "fixed_step_integrate",
      [](const std::string& method, const DaeSystem& system, double t_end, double h,
         const newton::NewtonSettings& settings) {
        FixedMethod fm;
        if (method == "itm" || method == "fitm") {
          fm = FixedMethod::ITM;
        } else if (method == "am2" || method == "fam2") {
          fm = FixedMethod::AM2;
        } else {
          throw std::invalid_argument("method must be 'itm' or 'am2'");
        }
        return fixed_step_integrate(fm, system, t_end, h, settings);
      },
      py::arg("method"), py::arg("system"), py::arg("t_end"), py::arg("h"),
      py::arg("settings") = newton::NewtonSettings{});

  const auto variable = [&m](const char* name, auto fn, const char* doc) {
    m.def(
        name,
        [fn](const DaeSystem& system, double t_end, const ControllerConfig& cfg,
             const newton::NewtonSettings& settings, std::optional<double> h0) {
          return fn(system, t_end, cfg, settings, h0);
        },
        py::arg("system"), py::arg("t_end"), py::arg("config") = ControllerConfig{},
        py::arg("settings") = newton::NewtonSettings{}, py::arg("h0") = py::none(), doc);
  };
  variable("pcm_integrate", &pcm_integrate, "Predictor-corrector variable-step integration.");
  variable("vitm_integrate", &vitm_integrate, "Iteration-count variable-step trapezoidal rule.");
  variable("vam2_integrate", &vam2_integrate, "Iteration-count variable-step Adams-Moulton.");

  m.def("pcm_decide", &pcm_decide, py::arg("g_max"), py::arg("h"),
        py::arg("config") = ControllerConfig{});
  m.def("iteration_decide", &iteration_decide, py::arg("iterations"), py::arg("h"),
        py::arg("config") = ControllerConfig{});
  m.def(
      "truncation_error",
      [](const Vector& predictor, const Vector& corrector) {
        const auto te = truncation_error(predictor, corrector);
        return py::make_tuple(te.estimate, te.g_max);
      },
      py::arg("predictor_x"), py::arg("corrector_x"));

  m.def(
      "newton_solve",
      [](const newton::ResidualFn& residual, const Vector& guess,
         const newton::NewtonSettings& settings) {
        const auto r = newton::solve(residual, guess, settings);
        py::dict d;
        d["solution"] = r.solution;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        d["final_residual"] = r.final_residual;
        return d;
      },
      py::arg("residual"), py::arg("guess"), py::arg("settings") = newton::NewtonSettings{});

  m.def(
      "simulate",
      [](const std::string& config_text) { return hs::run(hs::parse_config(config_text)); },
      py::arg("config"), "Run a scenario given as `key = value` configuration text.");

  m.def(
      "analytic_error_stats",
      [](const SimulationTrace& trace) {
        return stats_dict(hs::error_stats_vs_exact(
            trace, [](const DaeState& s) { return s.x.sum(); },
            [](double t) { return models::AnalyticSystem::exact_sum(t); }));
      },
      py::arg("trace"), "Error of the summed output against the exact solution.");

  m.def(
      "compare_traces",
      [](const SimulationTrace& reference, const SimulationTrace& candidate,
         const std::vector<std::string>& variables) {
        const auto c = hs::compare_traces(reference, candidate, variables);
        py::dict classes;
        for (const auto& v : c.classes) classes[py::str(v.name)] = stats_dict(v.stats);
        py::dict vars;
        for (const auto& v : c.variables) vars[py::str(v.name)] = stats_dict(v.stats);
        py::dict out;
        out["classes"] = classes;
        out["variables"] = vars;
        return out;
      },
      py::arg("reference"), py::arg("candidate"),
      py::arg("variables") = std::vector<std::string>{});

  m.def(
      "stability_scan",
      [](const std::vector<double>& lambdas, const std::vector<double>& h, int steps) {
        py::list out;
        for (const auto& v : hs::stability_scan(lambdas, h, steps)) {
          py::dict d;
          d["lambda"] = v.lambda;
          d["h"] = v.h;
          d["max_abs"] = v.max_abs;
          d["bounded"] = v.bounded;
          d["divergent"] = v.divergent;
          out.append(d);
        }
        return out;
      },
      py::arg("lambdas"), py::arg("h"), py::arg("steps") = 2000);
}
