#include "pcmsim/steppers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pcmsim {

StepFailure::StepFailure(std::string method, double time, const std::string& cause)
    : std::runtime_error([&] {
        std::ostringstream msg;
        msg.precision(17);
        msg << method << ": step failed at t = " << time << ": " << cause;
        return msg.str();
      }()),
      method_(std::move(method)),
      time_(time) {}

std::string_view to_string(FixedMethod m) { return m == FixedMethod::ITM ? "fitm" : "fam2"; }

bool same_step(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

bool same_time(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

namespace {

void check_dims(const DaeSystem& system, const DaeState& s) {
  if (s.x.size() != static_cast<Eigen::Index>(system.n_diff()) ||
      s.y.size() != static_cast<Eigen::Index>(system.n_alg())) {
    throw std::invalid_argument("state dimensions do not match the system");
  }
}

// Solves x = x_n + h*(w_new*f(x, y, t1)) + explicit_part jointly with g(x, y, t1) = 0.
StepOutcome implicit_step(const DaeSystem& system, const DaeState& from, double h, double w_new,
                          const Vector& explicit_part, const newton::NewtonSettings& settings) {
  if (!(h > 0.0)) throw std::invalid_argument("step length must be positive");
  check_dims(system, from);

  const auto nx = from.x.size();
  const auto ny = from.y.size();
  const double t1 = from.t + h;

  Vector guess(nx + ny);
  guess << from.x, from.y;

  const newton::ResidualFn residual = [&](const Vector& z) {
    const Vector x = z.head(nx);
    const Vector y = z.tail(ny);
    Vector r(nx + ny);
    r.head(nx) = x - from.x - h * w_new * system.f(x, y, t1) - explicit_part;
    if (ny > 0) r.tail(ny) = system.g(x, y, t1);
    return r;
  };

  StepOutcome out;
  out.newton = newton::solve(residual, guess, settings);
  out.state.t = t1;
  out.state.h = h;
  out.state.x = out.newton.solution.head(nx);
  out.state.y = out.newton.solution.tail(ny);
  out.f_new = system.f(out.state.x, out.state.y, t1);
  return out;
}

void check_history(const MultistepHistory& history, double h, Eigen::Index nx) {
  if (!history.valid) throw InvalidHistory("multistep history is not valid");
  if (history.f_n.size() != nx || history.f_nm1.size() != nx) {
    throw InvalidHistory("multistep history has wrong dimensions");
  }
  if (!same_step(history.h_prev, h)) {
    throw InvalidHistory("multistep history was built with a different step length");
  }
}

}  // namespace

StepOutcome itm_step(const DaeSystem& system, const DaeState& from, double h,
                     const newton::NewtonSettings& settings) {
  const Vector f_n = system.f(from.x, from.y, from.t);
  return implicit_step(system, from, h, 0.5, 0.5 * h * f_n, settings);
}

StepOutcome am2_implicit_step(const DaeSystem& system, const DaeState& from,
                              const MultistepHistory& history, double h,
                              const newton::NewtonSettings& settings) {
  check_history(history, h, from.x.size());
  const Vector explicit_part = h * (8.0 * history.f_n - history.f_nm1) / 12.0;
  return implicit_step(system, from, h, 5.0 / 12.0, explicit_part, settings);
}

Vector am2_corrector(const DaeState& from, const StepOutcome& predictor,
                     const MultistepHistory& history, double h) {
  check_history(history, h, from.x.size());
  if (predictor.f_new.size() != from.x.size()) {
    throw std::invalid_argument("predictor derivative missing");
  }
  return predictor.state.x + h * (2.0 * history.f_n - history.f_nm1 - predictor.f_new) / 12.0;
}

Vector am2_corrector(const DaeSystem& system, const DaeState& from, const StepOutcome& predictor,
                     const MultistepHistory& history, double h, int iterations) {
  const Vector first = am2_corrector(from, predictor, history, h);
  Vector corrected = first;
  for (int k = 1; k < iterations; ++k) {
    const Vector f_corr = system.f(corrected, predictor.state.y, predictor.state.t);
    corrected = first + 5.0 * h * (f_corr - predictor.f_new) / 12.0;
  }
  return corrected;
}

int reinitialize_algebraic(const DaeSystem& system, DaeState& state,
                           const newton::NewtonSettings& settings) {
  if (system.n_alg() == 0) return 0;
  const Vector x = state.x;
  const double t = state.t;
  const newton::ResidualFn residual = [&](const Vector& y) { return system.g(x, y, t); };
  const auto result = newton::solve(residual, state.y, settings);
  state.y = result.solution;
  return result.iterations;
}

SimulationTrace fixed_step_integrate(FixedMethod method, DaeSystem system, double t_end, double h,
                                     const newton::NewtonSettings& settings) {
  const std::string name(to_string(method));
  if (!(h > 0.0)) throw std::invalid_argument("fixed step: h must be positive");
  const double t0 = system.initial().t;
  if (t_end < t0) throw std::invalid_argument("fixed step: t_end before t0");

  const double span = t_end - t0;
  const auto n_steps = static_cast<long>(std::llround(span / h));
  if (!same_time(t0 + static_cast<double>(n_steps) * h, t_end)) {
    throw std::invalid_argument("fixed step: h does not divide the simulation interval");
  }

  const auto& events = system.events();
  std::vector<long> event_index;
  for (const auto& ev : events) {
    const auto k = static_cast<long>(std::llround((ev.time - t0) / h));
    if (!same_time(t0 + static_cast<double>(k) * h, ev.time) || k < 0 || k > n_steps) {
      throw std::invalid_argument("fixed step: event '" + ev.label + "' is not on the grid");
    }
    event_index.push_back(k);
  }

  SimulationTrace trace;
  trace.method = name;
  trace.diff_names = system.diff_names();
  trace.alg_names = system.alg_names();

  DaeState state = system.initial();
  state.h = 0.0;
  trace.records.push_back({state, Vector(), std::nullopt, 0, h});

  std::size_t next_event = 0;
  auto fire_events = [&](long k) {
    bool fired = false;
    while (next_event < events.size() && event_index[next_event] == k) {
      events[next_event].action(system.model());
      ++next_event;
      fired = true;
    }
    if (fired) {
      try {
        trace.total_newton_iterations += reinitialize_algebraic(system, state, settings);
      } catch (const newton::NewtonError& e) {
        throw StepFailure(name, state.t, std::string("algebraic reinitialisation: ") + e.what());
      }
    }
    return fired;
  };

  MultistepHistory history = MultistepHistory::start(system.f(state.x, state.y, state.t));
  if (fire_events(0)) history = MultistepHistory::start(system.f(state.x, state.y, state.t));

  for (long k = 1; k <= n_steps; ++k) {
    StepOutcome step;
    try {
      if (method == FixedMethod::AM2 && history.valid) {
        step = am2_implicit_step(system, state, history, h, settings);
      } else {
        step = itm_step(system, state, h, settings);
      }
    } catch (const newton::NewtonError& e) {
      throw StepFailure(name, state.t, e.what());
    }

    // Grid times come from t0 + k*h, with event and end times hit exactly.
    double t_new = t0 + static_cast<double>(k) * h;
    if (k == n_steps) t_new = t_end;
    if (next_event < events.size() && event_index[next_event] == k) {
      t_new = events[next_event].time;
    }
    step.state.t = t_new;

    state = step.state;
    history.push(step.f_new, h);
    trace.records.push_back({state, Vector(), std::nullopt, step.newton.iterations, h});
    trace.total_newton_iterations += step.newton.iterations;
    ++trace.accepted_steps;

    if (fire_events(k)) history = MultistepHistory::start(system.f(state.x, state.y, state.t));
  }
  return trace;
}

}  // namespace pcmsim
