#include "pcmsim/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pcmsim {

namespace {

std::vector<std::string> numbered(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i + 1));
  return out;
}

class FunctionModel final : public DaeModel {
 public:
  FunctionModel(std::size_t n_diff, std::size_t n_alg, DiffFn f, AlgFn g)
      : n_diff_(n_diff), n_alg_(n_alg), f_(std::move(f)), g_(std::move(g)) {}

  std::size_t n_diff() const override { return n_diff_; }
  std::size_t n_alg() const override { return n_alg_; }

  Vector f(const Vector& x, const Vector& y, double t) const override { return f_(x, y, t); }

  Vector g(const Vector& x, const Vector& y, double t) const override {
    if (!g_) return Vector(0);
    return g_(x, y, t);
  }

  std::unique_ptr<DaeModel> clone() const override {
    return std::make_unique<FunctionModel>(*this);
  }

 private:
  std::size_t n_diff_;
  std::size_t n_alg_;
  DiffFn f_;
  AlgFn g_;
};

}  // namespace

std::vector<std::string> DaeModel::diff_names() const { return numbered("x", n_diff()); }
std::vector<std::string> DaeModel::alg_names() const { return numbered("y", n_alg()); }

DaeSystem::DaeSystem(std::unique_ptr<DaeModel> model, DaeState initial, std::vector<Event> events,
                     std::string name)
    : model_(std::move(model)),
      initial_(std::move(initial)),
      events_(std::move(events)),
      name_(std::move(name)) {
  if (!model_) throw std::invalid_argument("DaeSystem: null model");
}

DaeSystem DaeSystem::from_functions(std::size_t n_diff, std::size_t n_alg, DiffFn f, AlgFn g,
                                    DaeState initial, std::vector<Event> events,
                                    std::string name) {
  if (!f) throw std::invalid_argument("DaeSystem: differential function is required");
  if (n_alg > 0 && !g) throw std::invalid_argument("DaeSystem: algebraic function is required");
  return DaeSystem(std::make_unique<FunctionModel>(n_diff, n_alg, std::move(f), std::move(g)),
                   std::move(initial), std::move(events), std::move(name));
}

DaeSystem::DaeSystem(const DaeSystem& other)
    : model_(other.model_->clone()),
      initial_(other.initial_),
      events_(other.events_),
      name_(other.name_) {}

DaeSystem& DaeSystem::operator=(const DaeSystem& other) {
  if (this != &other) {
    DaeSystem tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

void DaeSystem::add_event(Event e) {
  auto pos = std::upper_bound(events_.begin(), events_.end(), e.time,
                              [](double t, const Event& ev) { return t < ev.time; });
  events_.insert(pos, std::move(e));
}

void ControllerConfig::validate() const {
  if (!(h_min > 0.0) || !(h_min <= h_max)) {
    throw std::invalid_argument("controller: require 0 < h_min <= h_max");
  }
  if (!(g_low > 0.0) || !(g_low < g_high)) {
    throw std::invalid_argument("controller: require 0 < g_low < g_high");
  }
  if (!(iters_low < iters_high)) {
    throw std::invalid_argument("controller: require iters_low < iters_high");
  }
  if (!(shrink_factor > 0.0) || !(shrink_factor < 1.0) || !(grow_factor > 1.0)) {
    throw std::invalid_argument("controller: require 0 < shrink_factor < 1 < grow_factor");
  }
  if (corrector_iterations < 1) {
    throw std::invalid_argument("controller: corrector_iterations must be >= 1");
  }
}

ValidationReport validate_system(const DaeSystem& system, double tolerance,
                                 std::optional<double> t_end) {
  ValidationReport report;
  const auto& init = system.initial();
  const auto nd = static_cast<Eigen::Index>(system.n_diff());
  const auto na = static_cast<Eigen::Index>(system.n_alg());

  bool dims_ok = true;
  if (init.x.size() != nd) {
    report.issues.push_back("dimension mismatch: initial x has " + std::to_string(init.x.size()) +
                            " entries, expected " + std::to_string(nd));
    dims_ok = false;
  }
  if (init.y.size() != na) {
    report.issues.push_back("dimension mismatch: initial y has " + std::to_string(init.y.size()) +
                            " entries, expected " + std::to_string(na));
    dims_ok = false;
  }

  if (dims_ok) {
    try {
      const Vector fx = system.f(init.x, init.y, init.t);
      if (fx.size() != nd) {
        report.issues.push_back("dimension mismatch: f returns " + std::to_string(fx.size()) +
                                " entries, expected " + std::to_string(nd));
      }
      const Vector gx = system.g(init.x, init.y, init.t);
      if (gx.size() != na) {
        report.issues.push_back("dimension mismatch: g returns " + std::to_string(gx.size()) +
                                " entries, expected " + std::to_string(na));
      } else if (inf_norm(gx) > tolerance || !gx.allFinite()) {
        std::ostringstream msg;
        msg << "inconsistent initial condition: max|g| = " << inf_norm(gx);
        report.issues.push_back(msg.str());
      }
    } catch (const std::exception& e) {
      report.issues.push_back(std::string("model evaluation failed: ") + e.what());
    }
  }

  const auto& events = system.events();
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].time < events[i - 1].time) {
      report.issues.push_back("events unordered");
      break;
    }
  }
  for (const auto& ev : events) {
    if (ev.time < init.t || (t_end && ev.time > *t_end)) {
      report.issues.push_back("event '" + ev.label + "' outside the simulation interval");
    }
  }
  return report;
}

std::vector<double> SimulationTrace::times() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.state.t);
  return out;
}

std::vector<std::string> SimulationTrace::variable_names() const {
  std::vector<std::string> out = diff_names;
  out.insert(out.end(), alg_names.begin(), alg_names.end());
  return out;
}

double SimulationTrace::value(std::size_t row, std::size_t index) const {
  const auto& s = records.at(row).state;
  const auto nx = static_cast<std::size_t>(s.x.size());
  if (index < nx) return s.x(static_cast<Eigen::Index>(index));
  return s.y(static_cast<Eigen::Index>(index - nx));
}

}  // namespace pcmsim
