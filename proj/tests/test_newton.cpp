#include <doctest.h>

#include <cmath>

#include "pcmsim/newton.hpp"
#include "test_support.hpp"

using namespace pcmsim;
using namespace pcmsim::newton;
using pcmsim::testing::vec;

TEST_CASE("affine residual converges in one update") {
  const auto r = solve([](const Vector& z) -> Vector { return z.array() - 3.0; }, vec({0.0}), {});
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(std::abs(r.solution(0) - 3.0) <= 1e-8);
}

TEST_CASE("a guess that already satisfies the tolerance needs no update") {
  const auto r = solve([](const Vector& z) -> Vector { return z.array() - 3.0; }, vec({3.0}), {});
  CHECK(r.converged);
  CHECK(r.iterations == 0);
}

TEST_CASE("z^2 - 4 from 3 follows the hand Newton recurrence") {
  // Independent recurrence z <- z - (z^2 - 4) / (2z).
  int expected = 0;
  for (double z = 3.0; std::abs(z * z - 4.0) > 1e-8; ++expected) z -= (z * z - 4.0) / (2.0 * z);

  const auto r = solve([](const Vector& z) -> Vector { return z.array().square() - 4.0; },
                       vec({3.0}), {});
  CHECK(r.converged);
  CHECK(std::abs(r.solution(0) - 2.0) < 1e-8);
  CHECK(r.iterations <= 6);
  CHECK(r.iterations == expected);
  CHECK(r.final_residual <= 1e-8);
}

TEST_CASE("double root z^2 is handled without crashing") {
  NewtonSettings s;
  s.max_iterations = 5;
  try {
    const auto r = solve([](const Vector& z) -> Vector { return z.array().square(); }, vec({1.0}), s);
    CHECK(r.converged);
    CHECK(r.final_residual <= s.tolerance);
  } catch (const NonConvergence& e) {
    CHECK_FALSE(e.best().converged);
    CHECK(e.best().iterations <= 5);
    CHECK(e.best().final_residual < 1.0);
  }
}

TEST_CASE("non-convergence carries the best iterate") {
  NewtonSettings s;
  s.max_iterations = 3;
  // atan has a Newton orbit that diverges from |z0| > 1.39.
  try {
    (void)solve([](const Vector& z) -> Vector { return z.array().atan(); }, vec({2.0}), s);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(e.best().iterations == 0);
    CHECK(e.best().solution(0) == 2.0);
    CHECK(e.best().final_residual == doctest::Approx(std::atan(2.0)));
  }
}

TEST_CASE("singular Jacobian is reported") {
  // Both equations depend on z1 + z2 only.
  const ResidualFn r = [](const Vector& z) -> Vector {
    return vec({z(0) + z(1) - 1.0, 2.0 * (z(0) + z(1)) - 3.0});
  };
  CHECK_THROWS_AS((void)solve(r, vec({0.0, 0.0}), {}), SingularJacobian);
}

TEST_CASE("settings are validated") {
  NewtonSettings s;
  s.tolerance = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.max_iterations = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.fd_epsilon = -1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS((void)solve([](const Vector& z) -> Vector { return vec({z(0), z(0)}); },
                              vec({1.0}), {}),
                  std::invalid_argument);
}

TEST_CASE("numeric_jacobian examples") {
  Matrix a(2, 2);
  a << 2.0, -1.0, 0.5, 3.0;
  const auto ja = numeric_jacobian([&a](const Vector& z) -> Vector { return a * z; },
                                   vec({0.3, -0.7}), 1e-7);
  CHECK((ja - a).cwiseAbs().maxCoeff() < 1e-6);

  const auto jsq =
      numeric_jacobian([](const Vector& z) -> Vector { return z.array().square(); }, vec({2.0}), 1e-7);
  CHECK(std::abs(jsq(0, 0) - 4.0) < 1e-5);

  const auto jp = numeric_jacobian(
      [](const Vector& z) -> Vector { return vec({z(0) * z(1), z(0) + z(1)}); }, vec({1.0, 1.0}),
      1e-7);
  Matrix expect(2, 2);
  expect << 1.0, 1.0, 1.0, 1.0;
  CHECK((jp - expect).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("numeric_jacobian matches analytic partials of a smooth map") {
  const ResidualFn r = [](const Vector& z) -> Vector {
    return vec({std::sin(z(0)) * z(1), std::exp(0.5 * z(0)) + z(1) * z(1) * z(2), z(2) / (1.0 + z(0) * z(0))});
  };
  for (const Vector& p : {vec({0.3, -1.2, 2.0}), vec({-2.0, 0.5, 0.1}), vec({1.5, 3.0, -4.0})}) {
    Matrix exact = Matrix::Zero(3, 3);
    const double d = 1.0 + p(0) * p(0);
    exact(0, 0) = std::cos(p(0)) * p(1);
    exact(0, 1) = std::sin(p(0));
    exact(1, 0) = 0.5 * std::exp(0.5 * p(0));
    exact(1, 1) = 2.0 * p(1) * p(2);
    exact(1, 2) = p(1) * p(1);
    exact(2, 0) = -2.0 * p(0) * p(2) / (d * d);
    exact(2, 2) = 1.0 / d;
    const Matrix num = numeric_jacobian(r, p, 1e-7);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double scale = std::max(1.0, std::abs(exact(i, j)));
        CHECK(std::abs(num(i, j) - exact(i, j)) / scale < 1e-5);
      }
    }
  }
}

TEST_CASE("affine systems are solved by the first update up to Jacobian rounding") {
  // The forward-difference Jacobian of an affine map carries rounding error of
  // order eps * |r| / step, so a far guess can leave a residual just above the
  // tolerance. The first update must still remove all but that rounding.
  // Deterministic pseudo-random well-conditioned matrices.
  unsigned state = 12345u;
  auto next = [&state] {
    state = state * 1103515245u + 12345u;
    return static_cast<double>((state >> 8) % 20001) / 10000.0 - 1.0;
  };
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 1 + trial % 6;
    Matrix a = Matrix::Identity(n, n) * 4.0;
    Vector b(n);
    Vector guess(n);
    for (int i = 0; i < n; ++i) {
      b(i) = 10.0 * next();
      guess(i) = 100.0 * next();
      for (int j = 0; j < n; ++j) a(i, j) += next();
    }
    const ResidualFn res = [&](const Vector& z) -> Vector { return a * z + b; };
    const auto r = solve(res, guess, {});
    CHECK(r.converged);
    CHECK(r.iterations <= 2);

    NewtonSettings one;
    one.max_iterations = 1;
    one.tolerance = 1e-5 * inf_norm(res(guess));
    CHECK(solve(res, guess, one).iterations == 1);

    // Near the root the rounding is small enough for a single update.
    const Vector exact = a.partialPivLu().solve(-b);
    Vector near = exact;
    for (int i = 0; i < n; ++i) near(i) += 0.1 * next();
    CHECK(solve(res, near, {}).iterations == 1);
  }
}

TEST_CASE("solve is deterministic") {
  const ResidualFn r = [](const Vector& z) -> Vector {
    return vec({z(0) * z(0) + z(1) - 3.0, std::sin(z(1)) + z(0) * z(1) - 1.0});
  };
  const auto a = solve(r, vec({1.0, 0.5}), {});
  const auto b = solve(r, vec({1.0, 0.5}), {});
  CHECK(a.iterations == b.iterations);
  CHECK(a.converged == b.converged);
  CHECK(a.final_residual == b.final_residual);
  CHECK((a.solution.array() == b.solution.array()).all());
}
