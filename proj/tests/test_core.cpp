#include <doctest.h>

#include <cmath>
#include <cstring>

#include "pcmsim/core.hpp"
#include "pcmsim/harness.hpp"
#include "test_support.hpp"

using namespace pcmsim;
using namespace pcmsim::testing;

namespace {

bool has_issue(const ValidationReport& r, const std::string& fragment) {
  for (const auto& issue : r.issues) {
    if (issue.find(fragment) != std::string::npos) return true;
  }
  return false;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST_CASE("validate_system accepts a plain scalar ODE") {
  const auto report = validate_system(scalar_decay(-1.0));
  CHECK(report.ok());
}

TEST_CASE("validate_system flags an inconsistent initial point") {
  auto sys = DaeSystem::from_functions(
      1, 1, [](const Vector& x, const Vector&, double) -> Vector { return -x; },
      [](const Vector& x, const Vector& y, double) -> Vector { return y - x; },
      start(vec({1.0}), vec({1.1})));
  const auto report = validate_system(sys);
  REQUIRE_FALSE(report.ok());
  CHECK(has_issue(report, "inconsistent initial condition"));
}

TEST_CASE("validate_system flags events out of order") {
  auto sys = scalar_decay(-1.0);
  std::vector<Event> events{{2.0, "late", [](DaeModel&) {}}, {1.0, "early", [](DaeModel&) {}}};
  DaeSystem unordered(sys.model().clone(), sys.initial(), events);
  CHECK(has_issue(validate_system(unordered), "events unordered"));

  // add_event keeps the schedule sorted.
  sys.add_event(events[0]);
  sys.add_event(events[1]);
  CHECK(sys.events().front().label == "early");
  CHECK(validate_system(sys).ok());
}

TEST_CASE("validate_system flags dimension mismatches and events past the end") {
  auto bad_f = DaeSystem::from_functions(
      2, 0, [](const Vector&, const Vector&, double) -> Vector { return Vector::Zero(3); }, {},
      start(vec({1.0, 1.0})));
  CHECK(has_issue(validate_system(bad_f), "dimension mismatch"));

  auto bad_x = DaeSystem::from_functions(
      2, 0, [](const Vector& x, const Vector&, double) -> Vector { return x; }, {},
      start(vec({1.0})));
  CHECK(has_issue(validate_system(bad_x), "dimension mismatch"));

  auto sys = scalar_decay(-1.0);
  sys.add_event({5.0, "late", [](DaeModel&) {}});
  CHECK(validate_system(sys, 1e-8, 10.0).ok());
  CHECK(has_issue(validate_system(sys, 1e-8, 4.0), "outside"));
}

TEST_CASE("ControllerConfig defaults and validation") {
  ControllerConfig c;
  CHECK(c.h_min == 0.01);
  CHECK(c.h_max == 0.16);
  CHECK(c.g_low == 5e-5);
  CHECK(c.g_high == 5e-4);
  CHECK(c.iters_low == 10);
  CHECK(c.iters_high == 15);
  CHECK(c.grow_factor == 1.3);
  CHECK(c.shrink_factor == 0.9);
  CHECK_NOTHROW(c.validate());

  auto broken = c;
  broken.h_min = 0.2;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = c;
  broken.g_low = 1e-3;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = c;
  broken.iters_low = 15;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = c;
  broken.shrink_factor = 1.0;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = c;
  broken.grow_factor = 0.95;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("configuration round-trips bit-exactly") {
  harness::Scenario s;
  const auto back = harness::parse_config(harness::format_config(s));
  CHECK(back.controller == s.controller);
  CHECK(back.newton == s.newton);
  CHECK(bit_equal(back.t_end, s.t_end));
  CHECK(harness::format_config(back) == harness::format_config(s));

  // Awkward values survive too.
  s.controller.h_min = 0.1 + 0.2;
  s.controller.h_max = 1.0 / 3.0;
  s.controller.g_low = 4.9406564584124654e-324;
  s.controller.g_high = 1e300;
  s.newton.fd_epsilon = std::nextafter(1e-7, 1.0);
  s.h0 = 0.0123456789012345678;
  s.fault = models::FaultSpec{7, 1.0, 0.1};
  s.system = "swing:wscc9";
  const auto again = harness::parse_config(harness::format_config(s));
  CHECK(bit_equal(again.controller.h_min, s.controller.h_min));
  CHECK(bit_equal(again.controller.h_max, s.controller.h_max));
  CHECK(bit_equal(again.controller.g_low, s.controller.g_low));
  CHECK(bit_equal(again.controller.g_high, s.controller.g_high));
  CHECK(bit_equal(again.newton.fd_epsilon, s.newton.fd_epsilon));
  CHECK(bit_equal(*again.h0, *s.h0));
  REQUIRE(again.fault);
  CHECK(again.fault->bus == 7);
  CHECK(again.system == "swing:wscc9");
}

TEST_CASE("DaeSystem copies evaluate the same model") {
  int calls = 0;
  auto sys = DaeSystem::from_functions(
      1, 0, [&calls](const Vector& x, const Vector&, double) -> Vector {
        ++calls;
        return -x;
      },
      {}, start(vec({1.0})));
  DaeSystem copy = sys;
  CHECK(copy.n_diff() == 1);
  CHECK(copy.f(vec({2.0}), Vector(0), 0.0)(0) == -2.0);
  CHECK(calls == 1);
  CHECK(copy.diff_names() == std::vector<std::string>{"x1"});
}

TEST_CASE("TimeAccumulator keeps uniform grids on track") {
  for (double h : {0.1, 0.01, 0.001, 1.0 / 3.0}) {
    TimeAccumulator clock(0.0);
    const long n = 100000;
    for (long k = 0; k < n; ++k) clock.advance(h);
    CHECK(std::abs(clock.value() - n * h) < 1e-12 * n);
  }
  TimeAccumulator clock(2.0);
  clock.advance(0.5);
  clock.reset(3.0);
  CHECK(clock.value() == 3.0);
}

TEST_CASE("SimulationTrace accessors") {
  SimulationTrace trace;
  trace.diff_names = {"a", "b"};
  trace.alg_names = {"c"};
  trace.records.push_back({start(vec({1.0, 2.0}), vec({3.0}), 0.5)});
  CHECK(trace.variable_names() == std::vector<std::string>{"a", "b", "c"});
  CHECK(trace.value(0, 1) == 2.0);
  CHECK(trace.value(0, 2) == 3.0);
  CHECK(trace.times() == std::vector<double>{0.5});
}
