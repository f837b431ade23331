#include "pcmsim/newton.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pcmsim::newton {

void NewtonSettings::validate() const {
  if (!(tolerance > 0.0)) throw std::invalid_argument("newton: tolerance must be > 0");
  if (max_iterations < 1) throw std::invalid_argument("newton: max_iterations must be >= 1");
  if (!(fd_epsilon > 0.0)) throw std::invalid_argument("newton: fd_epsilon must be > 0");
}

Matrix numeric_jacobian(const ResidualFn& residual, const Vector& point, double fd_epsilon) {
  const Vector r0 = residual(point);
  Matrix jac(r0.size(), point.size());
  Vector probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double step = fd_epsilon * std::max(1.0, std::abs(point(i)));
    probe(i) = point(i) + step;
    // Use the representable perturbation actually applied.
    const double applied = probe(i) - point(i);
    jac.col(i) = (residual(probe) - r0) / applied;
    probe(i) = point(i);
  }
  return jac;
}

namespace {

Vector lu_solve(const Matrix& jac, const Vector& rhs, int iteration) {
  const double scale = jac.cwiseAbs().rowwise().sum().maxCoeff();
  Eigen::PartialPivLU<Matrix> lu(jac);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(scale > 0.0) || !(min_pivot >= 1e-12 * scale)) {
    std::ostringstream msg;
    msg << "singular Jacobian at Newton iteration " << iteration << " (min pivot " << min_pivot
        << ", norm " << scale << ")";
    throw SingularJacobian(msg.str(), iteration);
  }
  return lu.solve(rhs);
}

}  // namespace

NewtonResult solve(const ResidualFn& residual, const Vector& guess,
                   const NewtonSettings& settings) {
  settings.validate();

  NewtonResult current{guess, 0, false, 0.0};
  Vector r = residual(current.solution);
  if (r.size() != guess.size()) {
    throw std::invalid_argument("newton: residual length differs from unknown length");
  }
  current.final_residual = r.allFinite() ? inf_norm(r) : INFINITY;
  NewtonResult best = current;

  for (;;) {
    if (current.final_residual <= settings.tolerance) {
      current.converged = true;
      return current;
    }
    if (current.iterations >= settings.max_iterations || !r.allFinite()) break;

    if (guess.size() == 0) break;
    const Matrix jac = numeric_jacobian(residual, current.solution, settings.fd_epsilon);
    current.solution -= lu_solve(jac, r, current.iterations + 1);
    ++current.iterations;

    r = residual(current.solution);
    current.final_residual = r.allFinite() ? inf_norm(r) : INFINITY;
    if (current.final_residual < best.final_residual) best = current;
  }

  std::ostringstream msg;
  msg << "Newton did not converge in " << current.iterations << " iterations (residual "
      << current.final_residual << ", tolerance " << settings.tolerance << ")";
  best.converged = false;
  throw NonConvergence(msg.str(), best);
}

}  // namespace pcmsim::newton
