#pragma once

#include <optional>

#include "pcmsim/core.hpp"
#include "pcmsim/newton.hpp"
#include "pcmsim/steppers.hpp"

namespace pcmsim {

struct TruncationError {
  Vector estimate;     // corrector - predictor, per differential variable
  double g_max = 0.0;  // infinity norm of `estimate`
};

[[nodiscard]] TruncationError truncation_error(const Vector& predictor_x,
                                               const Vector& corrector_x);

/// Error-driven rule: double below g_low, halve above g_high, clamp to [h_min, h_max].
[[nodiscard]] double pcm_decide(double g_max, double h, const ControllerConfig& cfg);

/// Newton-iteration rule: grow below iters_low, shrink above iters_high, clamp.
[[nodiscard]] double iteration_decide(int iterations, double h, const ControllerConfig& cfg);

/// Trapezoidal predictor with an Adams-Moulton corrector used only to pick the
/// next step length. Recorded states are always the predictor.
///
/// Steps are shortened to land on event times and on t_end. Each event resets the
/// step to h_min and discards the multistep history, as does any change of step
/// length, so the step after a change carries no error estimate. `h0` defaults to
/// h_min.
[[nodiscard]] SimulationTrace pcm_integrate(DaeSystem system, double t_end,
                                            const ControllerConfig& cfg,
                                            const newton::NewtonSettings& settings,
                                            std::optional<double> h0 = std::nullopt);

/// Trapezoidal steps with the Newton-iteration rule.
[[nodiscard]] SimulationTrace vitm_integrate(DaeSystem system, double t_end,
                                             const ControllerConfig& cfg,
                                             const newton::NewtonSettings& settings,
                                             std::optional<double> h0 = std::nullopt);

/// Implicit Adams-Moulton steps with the Newton-iteration rule. A trapezoidal
/// step bootstraps the history at t0, after events and after every step change.
[[nodiscard]] SimulationTrace vam2_integrate(DaeSystem system, double t_end,
                                             const ControllerConfig& cfg,
                                             const newton::NewtonSettings& settings,
                                             std::optional<double> h0 = std::nullopt);

}  // namespace pcmsim
