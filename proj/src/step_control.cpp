#include "pcmsim/step_control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pcmsim {

TruncationError truncation_error(const Vector& predictor_x, const Vector& corrector_x) {
  if (predictor_x.size() != corrector_x.size()) {
    throw std::invalid_argument("truncation_error: length mismatch");
  }
  TruncationError out;
  out.estimate = corrector_x - predictor_x;
  out.g_max = inf_norm(out.estimate);
  return out;
}

double pcm_decide(double g_max, double h, const ControllerConfig& cfg) {
  if (g_max < cfg.g_low) return std::min(2.0 * h, cfg.h_max);
  if (g_max > cfg.g_high) return std::max(0.5 * h, cfg.h_min);
  return h;
}

double iteration_decide(int iterations, double h, const ControllerConfig& cfg) {
  if (iterations < cfg.iters_low) return std::min(cfg.grow_factor * h, cfg.h_max);
  if (iterations > cfg.iters_high) return std::max(cfg.shrink_factor * h, cfg.h_min);
  return h;
}

namespace {

enum class Policy { PCM, VITM, VAM2 };

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::PCM:
      return "pcm";
    case Policy::VITM:
      return "vitm";
    case Policy::VAM2:
      return "vam2";
  }
  return "?";
}

// Length of the next step towards `target`, given the controller's wish `h`.
// Lands exactly on the target, and avoids leaving a remainder below h_min by
// splitting the last stretch into two equal steps when it is long enough.
double plan_step(double h, double remaining, const ControllerConfig& cfg) {
  if (h >= remaining || same_time(h, remaining)) return remaining;
  const double rest = remaining - h;
  if (rest < cfg.h_min && !same_time(rest, cfg.h_min)) {
    if (remaining >= 2.0 * cfg.h_min) return 0.5 * remaining;
    return remaining;
  }
  return h;
}

class VariableStepDriver {
 public:
  VariableStepDriver(Policy policy, DaeSystem system, double t_end, const ControllerConfig& cfg,
                     const newton::NewtonSettings& settings, std::optional<double> h0)
      : policy_(policy),
        system_(std::move(system)),
        t_end_(t_end),
        cfg_(cfg),
        settings_(settings),
        h_(std::clamp(h0.value_or(cfg.h_min), cfg.h_min, cfg.h_max)) {
    cfg_.validate();
    settings_.validate();
    if (t_end_ < system_.initial().t) throw std::invalid_argument("t_end before t0");
  }

  SimulationTrace run() {
    trace_.method = policy_name(policy_);
    trace_.diff_names = system_.diff_names();
    trace_.alg_names = system_.alg_names();

    state_ = system_.initial();
    state_.h = 0.0;
    clock_.reset(state_.t);
    trace_.records.push_back({state_, Vector(), std::nullopt, 0, h_});
    history_ = MultistepHistory::start(f_at(state_));
    fire_due_events();

    while (state_.t < t_end_ && !same_time(state_.t, t_end_)) {
      const double target = next_target();
      advance_towards(target);
      fire_due_events();
    }
    return std::move(trace_);
  }

 private:
  Vector f_at(const DaeState& s) const { return system_.f(s.x, s.y, s.t); }

  double next_target() const {
    const auto& events = system_.events();
    if (next_event_ < events.size()) return std::min(events[next_event_].time, t_end_);
    return t_end_;
  }

  StepOutcome attempt(double h) const {
    if (policy_ == Policy::VAM2 && history_.valid && same_step(history_.h_prev, h)) {
      return am2_implicit_step(system_, state_, history_, h, settings_);
    }
    return itm_step(system_, state_, h, settings_);
  }

  void advance_towards(double target) {
    const double remaining = target - clock_.value();
    double h_step = plan_step(h_, remaining, cfg_);
    bool retried = false;

    for (;;) {
      StepOutcome step;
      try {
        step = attempt(h_step);
      } catch (const newton::NewtonError& e) {
        if (retried || h_step <= cfg_.h_min) throw StepFailure(policy_name(policy_), state_.t, e.what());
        retried = true;
        h_step = std::max(0.5 * h_step, cfg_.h_min);
        h_step = std::min(h_step, remaining);
        continue;
      }

      const double h_ctl = std::clamp(h_step, cfg_.h_min, cfg_.h_max);
      StepRecord record;
      record.newton_iterations = step.newton.iterations;

      if (policy_ == Policy::PCM) {
        if (history_.valid && same_step(history_.h_prev, h_step)) {
          const Vector corrected = am2_corrector(system_, state_, step, history_, h_step,
                                                 cfg_.corrector_iterations);
          auto te = truncation_error(step.state.x, corrected);
          if (cfg_.reject_on_high_error && te.g_max > cfg_.g_high && h_step > cfg_.h_min) {
            trace_.total_newton_iterations += step.newton.iterations;
            h_step = std::max(0.5 * h_step, cfg_.h_min);
            continue;
          }
          record.h_next = pcm_decide(te.g_max, h_ctl, cfg_);
          record.error_estimate = std::move(te.estimate);
          record.g_max = te.g_max;
        } else {
          record.h_next = h_ctl;
        }
      } else {
        record.h_next = iteration_decide(step.newton.iterations, h_ctl, cfg_);
      }

      const bool lands = same_time(h_step, remaining);
      if (lands) {
        clock_.reset(target);
      } else {
        clock_.advance(h_step);
      }
      step.state.t = clock_.value();
      step.state.h = h_step;

      state_ = step.state;
      history_.push(std::move(step.f_new), h_step);
      record.state = state_;
      h_ = record.h_next;
      trace_.total_newton_iterations += step.newton.iterations;
      ++trace_.accepted_steps;
      trace_.records.push_back(std::move(record));
      return;
    }
  }

  void fire_due_events() {
    const auto& events = system_.events();
    bool fired = false;
    while (next_event_ < events.size() && (events[next_event_].time <= state_.t ||
                                           same_time(events[next_event_].time, state_.t))) {
      events[next_event_].action(system_.model());
      ++next_event_;
      fired = true;
    }
    if (!fired) return;
    try {
      trace_.total_newton_iterations += reinitialize_algebraic(system_, state_, settings_);
    } catch (const newton::NewtonError& e) {
      throw StepFailure(policy_name(policy_), state_.t,
                        std::string("algebraic reinitialisation: ") + e.what());
    }
    history_ = MultistepHistory::start(f_at(state_));
    h_ = cfg_.h_min;
    trace_.records.back().h_next = h_;
  }

  Policy policy_;
  DaeSystem system_;
  double t_end_;
  ControllerConfig cfg_;
  newton::NewtonSettings settings_;
  double h_;

  SimulationTrace trace_;
  DaeState state_;
  MultistepHistory history_;
  TimeAccumulator clock_;
  std::size_t next_event_ = 0;
};

}  // namespace

SimulationTrace pcm_integrate(DaeSystem system, double t_end, const ControllerConfig& cfg,
                              const newton::NewtonSettings& settings, std::optional<double> h0) {
  return VariableStepDriver(Policy::PCM, std::move(system), t_end, cfg, settings, h0).run();
}

SimulationTrace vitm_integrate(DaeSystem system, double t_end, const ControllerConfig& cfg,
                               const newton::NewtonSettings& settings, std::optional<double> h0) {
  return VariableStepDriver(Policy::VITM, std::move(system), t_end, cfg, settings, h0).run();
}

SimulationTrace vam2_integrate(DaeSystem system, double t_end, const ControllerConfig& cfg,
                               const newton::NewtonSettings& settings, std::optional<double> h0) {
  return VariableStepDriver(Policy::VAM2, std::move(system), t_end, cfg, settings, h0).run();
}

}  // namespace pcmsim
