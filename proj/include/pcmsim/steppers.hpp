#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "pcmsim/core.hpp"
#include "pcmsim/newton.hpp"

namespace pcmsim {

/// Derivatives at the last two accepted points, for the two-step Adams-Moulton formula.
struct MultistepHistory {
  Vector f_n;
  Vector f_nm1;
  double h_prev = 0.0;
  bool valid = false;

  /// Start over at a point with no usable predecessor.
  static MultistepHistory start(Vector f_current) {
    return {std::move(f_current), Vector(), 0.0, false};
  }

  /// Shift in the derivative at a newly accepted point reached with step h.
  void push(Vector f_new, double h) {
    f_nm1 = std::move(f_n);
    f_n = std::move(f_new);
    h_prev = h;
    valid = f_nm1.size() == f_n.size() && h > 0.0;
  }
};

struct StepOutcome {
  DaeState state;
  newton::NewtonResult newton;
  Vector f_new;  // f at the new state
};

class InvalidHistory : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An integration driver could not advance. Carries the failing time and method.
class StepFailure : public std::runtime_error {
 public:
  StepFailure(std::string method, double time, const std::string& cause);

  [[nodiscard]] double time() const { return time_; }
  [[nodiscard]] const std::string& method() const { return method_; }

 private:
  std::string method_;
  double time_;
};

enum class FixedMethod { ITM, AM2 };

[[nodiscard]] std::string_view to_string(FixedMethod m);

/// True when two step lengths are equal up to accumulated rounding.
[[nodiscard]] bool same_step(double a, double b);
[[nodiscard]] bool same_time(double a, double b);

/// Implicit trapezoidal step, solved jointly with g = 0 for (x_{n+1}, y_{n+1})
/// starting from the guess (x_n, y_n).
[[nodiscard]] StepOutcome itm_step(const DaeSystem& system, const DaeState& from, double h,
                                   const newton::NewtonSettings& settings);

/// Implicit two-step Adams-Moulton step on a uniform grid (history.h_prev == h).
[[nodiscard]] StepOutcome am2_implicit_step(const DaeSystem& system, const DaeState& from,
                                            const MultistepHistory& history, double h,
                                            const newton::NewtonSettings& settings);

/// Explicit Adams-Moulton correction of a trapezoidal predictor.
///
/// Returns x_n + h(5 f_pred + 8 f_n - f_{n-1})/12 with f_pred evaluated at the
/// predictor. Since the predictor satisfies x_pred = x_n + h(f_pred + f_n)/2,
/// this is evaluated as x_pred + h(2 f_n - f_{n-1} - f_pred)/12, which keeps the
/// predictor's Newton residual out of the corrector-predictor difference.
[[nodiscard]] Vector am2_corrector(const DaeState& from, const StepOutcome& predictor,
                                   const MultistepHistory& history, double h);

/// Same, repeating the correction `iterations` times. Iterations after the first
/// re-evaluate f at the previous corrector with the predictor's algebraic part.
[[nodiscard]] Vector am2_corrector(const DaeSystem& system, const DaeState& from,
                                   const StepOutcome& predictor, const MultistepHistory& history,
                                   double h, int iterations);

/// Solves g(x, y, t) = 0 for y with x fixed. Returns Newton iterations used.
int reinitialize_algebraic(const DaeSystem& system, DaeState& state,
                           const newton::NewtonSettings& settings);

/// Fixed-step driver. AM2 mode bootstraps with a trapezoidal step at t0 and after
/// every event. Events must fall on the grid.
[[nodiscard]] SimulationTrace fixed_step_integrate(FixedMethod method, DaeSystem system,
                                                   double t_end, double h,
                                                   const newton::NewtonSettings& settings);

}  // namespace pcmsim
