#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "pcmsim/core.hpp"

namespace pcmsim::newton {

struct NewtonSettings {
  double tolerance = 1e-8;   // residual infinity norm
  int max_iterations = 20;
  double fd_epsilon = 1e-7;  // relative forward-difference perturbation

  void validate() const;

  bool operator==(const NewtonSettings&) const = default;
};

struct NewtonResult {
  Vector solution;
  int iterations = 0;
  bool converged = false;
  double final_residual = 0.0;
};

using ResidualFn = std::function<Vector(const Vector&)>;

class NewtonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iteration cap reached. Carries the iterate with the smallest residual seen.
class NonConvergence : public NewtonError {
 public:
  NonConvergence(const std::string& what, NewtonResult best)
      : NewtonError(what), best_(std::move(best)) {}

  [[nodiscard]] const NewtonResult& best() const { return best_; }

 private:
  NewtonResult best_;
};

/// A pivot fell below 1e-12 times the Jacobian's infinity norm.
class SingularJacobian : public NewtonError {
 public:
  SingularJacobian(const std::string& what, int iteration)
      : NewtonError(what), iteration_(iteration) {}

  [[nodiscard]] int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Forward differences, column i perturbed by fd_epsilon * max(1, |point_i|).
[[nodiscard]] Matrix numeric_jacobian(const ResidualFn& residual, const Vector& point,
                                      double fd_epsilon);

/// Full Newton: the Jacobian is rebuilt at every iteration and factorised with
/// partially pivoted LU. `iterations` counts completed updates, so a guess that
/// already satisfies the tolerance returns with zero iterations.
[[nodiscard]] NewtonResult solve(const ResidualFn& residual, const Vector& guess,
                                 const NewtonSettings& settings);

}  // namespace pcmsim::newton
