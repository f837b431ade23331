#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pcmsim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Snapshot of a semi-explicit DAE at one time point.
struct DaeState {
  double t = 0.0;
  Vector x;        // differential variables
  Vector y;        // algebraic variables
  double h = 0.0;  // step used to reach this state, 0 at the initial point
};

/// The right-hand sides of x' = f(x, y, t), 0 = g(x, y, t).
///
/// Parameters that events mutate live in the concrete model. A DaeSystem owns
/// its model exclusively, so every integration run works on a private copy.
class DaeModel {
 public:
  virtual ~DaeModel() = default;

  [[nodiscard]] virtual std::size_t n_diff() const = 0;
  [[nodiscard]] virtual std::size_t n_alg() const = 0;

  [[nodiscard]] virtual Vector f(const Vector& x, const Vector& y, double t) const = 0;
  [[nodiscard]] virtual Vector g(const Vector& x, const Vector& y, double t) const = 0;

  [[nodiscard]] virtual std::unique_ptr<DaeModel> clone() const = 0;

  [[nodiscard]] virtual std::vector<std::string> diff_names() const;
  [[nodiscard]] virtual std::vector<std::string> alg_names() const;
};

/// A timed parameter change. The action receives the run-local model.
struct Event {
  double time = 0.0;
  std::string label;
  std::function<void(DaeModel&)> action;
};

using DiffFn = std::function<Vector(const Vector& x, const Vector& y, double t)>;
using AlgFn = std::function<Vector(const Vector& x, const Vector& y, double t)>;

class DaeSystem {
 public:
  DaeSystem(std::unique_ptr<DaeModel> model, DaeState initial, std::vector<Event> events = {},
            std::string name = "custom");

  /// Builds a system from plain callables. An empty `g` means no algebraic part.
  static DaeSystem from_functions(std::size_t n_diff, std::size_t n_alg, DiffFn f, AlgFn g,
                                  DaeState initial, std::vector<Event> events = {},
                                  std::string name = "custom");

  DaeSystem(const DaeSystem& other);
  DaeSystem& operator=(const DaeSystem& other);
  DaeSystem(DaeSystem&&) noexcept = default;
  DaeSystem& operator=(DaeSystem&&) noexcept = default;
  ~DaeSystem() = default;

  [[nodiscard]] std::size_t n_diff() const { return model_->n_diff(); }
  [[nodiscard]] std::size_t n_alg() const { return model_->n_alg(); }

  [[nodiscard]] Vector f(const Vector& x, const Vector& y, double t) const {
    return model_->f(x, y, t);
  }
  [[nodiscard]] Vector g(const Vector& x, const Vector& y, double t) const {
    return model_->g(x, y, t);
  }

  [[nodiscard]] const DaeState& initial() const { return initial_; }
  void set_initial(DaeState s) { initial_ = std::move(s); }

  [[nodiscard]] const std::vector<Event>& events() const { return events_; }
  void add_event(Event e);

  [[nodiscard]] DaeModel& model() { return *model_; }
  [[nodiscard]] const DaeModel& model() const { return *model_; }

  [[nodiscard]] const std::string& name() const { return name_; }

  [[nodiscard]] std::vector<std::string> diff_names() const { return model_->diff_names(); }
  [[nodiscard]] std::vector<std::string> alg_names() const { return model_->alg_names(); }

 private:
  std::unique_ptr<DaeModel> model_;
  DaeState initial_;
  std::vector<Event> events_;
  std::string name_;
};

/// Thresholds and clamps for both step-length policies.
struct ControllerConfig {
  double h_min = 0.01;
  double h_max = 0.16;
  double g_low = 5e-5;
  double g_high = 5e-4;
  int iters_low = 10;
  int iters_high = 15;
  double grow_factor = 1.3;
  double shrink_factor = 0.9;

  // Predictor-corrector options beyond the basic doubling/halving rule.
  int corrector_iterations = 1;
  bool reject_on_high_error = false;

  /// Throws std::invalid_argument on the first violated constraint.
  void validate() const;

  bool operator==(const ControllerConfig&) const = default;
};

struct ValidationReport {
  std::vector<std::string> issues;

  [[nodiscard]] bool ok() const { return issues.empty(); }
};

/// Checks dimensions, algebraic consistency of the initial point and event
/// ordering. Never throws for model problems; they are reported instead.
[[nodiscard]] ValidationReport validate_system(const DaeSystem& system, double tolerance = 1e-8,
                                               std::optional<double> t_end = std::nullopt);

/// One accepted integration step.
struct StepRecord {
  DaeState state;
  Vector error_estimate;          // empty when no corrector was available
  std::optional<double> g_max;    // infinity norm of error_estimate
  int newton_iterations = 0;
  double h_next = 0.0;
};

struct SimulationTrace {
  std::string method;
  std::vector<StepRecord> records;
  long total_newton_iterations = 0;
  long accepted_steps = 0;
  std::vector<std::string> diff_names;
  std::vector<std::string> alg_names;

  [[nodiscard]] std::size_t size() const { return records.size(); }
  [[nodiscard]] std::vector<double> times() const;
  /// Names of all recorded variables, differential first.
  [[nodiscard]] std::vector<std::string> variable_names() const;
  /// Value of variable `index` (differential first, then algebraic) at record `row`.
  [[nodiscard]] double value(std::size_t row, std::size_t index) const;
};

/// Kahan-compensated running sum of step lengths.
class TimeAccumulator {
 public:
  explicit TimeAccumulator(double t0 = 0.0) : sum_(t0) {}

  double advance(double h) {
    const double y = h - carry_;
    const double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
    return sum_;
  }

  /// Snap to an exact time (event or end point) and drop the carry.
  void reset(double t) {
    sum_ = t;
    carry_ = 0.0;
  }

  [[nodiscard]] double value() const { return sum_; }

 private:
  double sum_;
  double carry_ = 0.0;
};

[[nodiscard]] inline double inf_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace pcmsim
