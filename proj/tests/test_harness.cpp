#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pcmsim/harness.hpp"
#include "pcmsim/step_control.hpp"
#include "test_support.hpp"

using namespace pcmsim;
using namespace pcmsim::harness;
using namespace pcmsim::testing;

namespace {

Scenario scenario(const std::string& text) { return parse_config(text); }

std::size_t data_rows(const SimulationTrace& tr) {
  std::ostringstream out;
  write_trace_csv(tr, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);  // header
  while (std::getline(in, line)) ++rows;
  return rows;
}

ErrorStats analytic_errors(const SimulationTrace& tr) {
  return error_stats_vs_exact(
      tr, [](const DaeState& s) { return s.x.sum(); },
      [](double t) { return models::AnalyticSystem::exact_sum(t); });
}

const VariableStats& find(const std::vector<VariableStats>& list, const std::string& name) {
  for (const auto& v : list) {
    if (v.name == name) return v;
  }
  throw std::runtime_error("missing " + name);
}

}  // namespace

TEST_CASE("run produces one CSV row per record") {
  const auto tr = run(scenario("system = analytic\nmethod = fitm\nh0 = 0.01\nt-end = 10\n"));
  CHECK(data_rows(tr) == 1001);
  const auto empty = run(scenario("system = analytic\nmethod = fitm\nt-end = 0\n"));
  CHECK(data_rows(empty) == 1);
  const auto pcm_empty = run(scenario("system = analytic\nmethod = pcm\nt-end = 0\n"));
  CHECK(data_rows(pcm_empty) == 1);
}

TEST_CASE("PCM trace shows the step growing from h_min") {
  const auto tr = run(scenario("system = analytic\nmethod = pcm\n"));
  bool small = false;
  bool grown = false;
  for (const auto& r : tr.records) {
    if (r.state.h == 0.01) small = true;
    if (small && r.state.h > 0.01) grown = true;
  }
  CHECK(small);
  CHECK(grown);
}

TEST_CASE("CSV layout and round trip") {
  const auto tr = run(scenario("system = swing:wscc9\nfault = 7,1.0,0.1\nmethod = pcm\nt-end = 2\n"));
  std::ostringstream out;
  write_trace_csv(tr, out);
  const std::string text = out.str();
  CHECK(text.rfind("t,h,newton_iters,g_max,delta_1,delta_2,delta_3,omega_1,", 0) == 0);
  // The initial record has no estimate.
  std::istringstream lines(text);
  std::string header;
  std::string first;
  std::getline(lines, header);
  std::getline(lines, first);
  CHECK(first.rfind("0,0,0,,", 0) == 0);

  std::istringstream in(text);
  const auto back = read_trace_csv(in);
  REQUIRE(back.records.size() == tr.records.size());
  CHECK(back.variable_names() == tr.variable_names());
  for (std::size_t k = 0; k < tr.records.size(); ++k) {
    CHECK(back.records[k].state.t == tr.records[k].state.t);
    CHECK(back.records[k].g_max.has_value() == tr.records[k].g_max.has_value());
    for (std::size_t v = 0; v < tr.variable_names().size(); ++v) {
      CHECK(back.value(k, v) == tr.value(k, v));
    }
  }
  std::ostringstream again;
  write_trace_csv(back, again);
  CHECK(again.str() == text);
}

TEST_CASE("read_trace_csv rejects malformed input") {
  std::istringstream bad_header("time,x\n0,1\n");
  CHECK_THROWS_AS((void)read_trace_csv(bad_header), std::invalid_argument);
  std::istringstream short_row("t,h,newton_iters,g_max,x1\n0,0,0,,1\n0.1,0.1\n");
  CHECK_THROWS_AS((void)read_trace_csv(short_row), std::invalid_argument);
  std::istringstream backwards("t,h,newton_iters,g_max,x1\n0.1,0,0,,1\n0,0.1,1,,1\n");
  CHECK_THROWS_AS((void)read_trace_csv(backwards), std::invalid_argument);
}

TEST_CASE("summarize uses the population variance") {
  const auto s = summarize({1.0, 2.0, 3.0, 6.0});
  CHECK(s.max_diff == 6.0);
  CHECK(s.avg_diff == 3.0);
  CHECK(s.var_diff == doctest::Approx(3.5));
  const auto z = summarize({});
  CHECK(z.max_diff == 0.0);
  CHECK(z.var_diff == 0.0);
}

TEST_CASE("error statistics against the exact solution") {
  const auto exact_tr = run(scenario("system = analytic\nmethod = fitm\nt-end = 1\n"));
  const auto zero = error_stats_vs_exact(
      exact_tr, [](const DaeState& s) { return s.t; }, [](double t) { return t; });
  CHECK(zero.max_diff == 0.0);
  CHECK(zero.avg_diff == 0.0);
  CHECK(zero.var_diff == 0.0);

  const auto fitm = analytic_errors(run(scenario("method = fitm\nh0 = 0.01\n")));
  CHECK(std::abs(fitm.max_diff - 0.0346) <= 1e-4);
  CHECK(fitm.max_diff >= fitm.avg_diff);

  const auto fam2 = analytic_errors(run(scenario("method = fam2\nh0 = 0.001\n")));
  CHECK(std::abs(fam2.max_diff - 7.6e-5) <= 0.1e-5);
  CHECK(fam2.max_diff == doctest::Approx(std::abs(0.95 / 1.05 - std::exp(-0.1))).epsilon(1e-3));
}

TEST_CASE("compare_traces basics") {
  const auto tr = run(scenario("system = swing:wscc9\nfault = 5,1.0,0.1\nmethod = vitm\nt-end = 3\n"));
  const auto self = compare_traces(tr, tr);
  CHECK(self.samples == tr.records.size());
  for (const auto& v : self.variables) {
    CHECK(v.stats.max_diff == 0.0);
    CHECK(v.stats.var_diff == 0.0);
  }
  REQUIRE(self.classes.size() == 4);
  CHECK(self.classes[0].name == "delta");
  CHECK(self.classes[3].name == "theta");

  auto shifted = tr;
  const double c = 0.125;
  for (auto& r : shifted.records) r.state.x(4) += c;
  const auto cmp = compare_traces(tr, shifted, {"omega_2"});
  REQUIRE(cmp.variables.size() == 1);
  CHECK(cmp.variables[0].stats.max_diff == doctest::Approx(c).epsilon(1e-12));
  CHECK(cmp.variables[0].stats.avg_diff == doctest::Approx(c).epsilon(1e-12));
  CHECK(cmp.variables[0].stats.var_diff < 1e-20);

  const auto classes = compare_traces(tr, shifted, {"delta", "V"});
  CHECK(classes.variables.size() == 3 + 9);

  const auto other = run(scenario("system = swing:wscc9\nfault = 5,1.0,0.1\nmethod = vitm\nt-end = 2\n"));
  CHECK_THROWS_AS((void)compare_traces(tr, other), std::invalid_argument);
  CHECK_THROWS_AS((void)compare_traces(tr, tr, {"nothing"}), std::invalid_argument);
}

TEST_CASE("class statistics pool their variables") {
  SimulationTrace a;
  a.diff_names = {"w_1", "w_2"};
  SimulationTrace b = a;
  for (int k = 0; k < 4; ++k) {
    a.records.push_back({start(vec({0.0, 0.0}), Vector(0), k)});
    b.records.push_back({start(vec({1.0, k % 2 == 0 ? 3.0 : 1.0}), Vector(0), k)});
  }
  const auto cmp = compare_traces(a, b);
  REQUIRE(cmp.classes.size() == 1);
  // Pooled over all eight samples {1,1,1,1,3,1,3,1}: mean 1.5, variance 0.75.
  CHECK(cmp.classes[0].stats.max_diff == 3.0);
  CHECK(cmp.classes[0].stats.avg_diff == doctest::Approx(1.5));
  CHECK(cmp.classes[0].stats.var_diff == doctest::Approx(0.75));
}

TEST_CASE("linear interpolation onto the reference grid") {
  SimulationTrace ref;
  ref.diff_names = {"x1"};
  SimulationTrace cand = ref;
  for (int k = 0; k <= 4; ++k) ref.records.push_back({start(vec({0.5 * k}), Vector(0), 0.25 * k)});
  cand.records.push_back({start(vec({0.0}), Vector(0), 0.0)});
  cand.records.push_back({start(vec({2.0}), Vector(0), 1.0)});
  // Candidate is the straight line 2t, which the reference follows exactly.
  const auto cmp = compare_traces(ref, cand);
  CHECK(cmp.variables[0].stats.max_diff < 1e-15);
}

TEST_CASE("refining the candidate lowers its distance to a fine reference") {
  const auto ref = run(scenario("method = fitm\nh0 = 0.0005\nt-end = 2\n"));
  double prev = INFINITY;
  for (const char* h : {"0.04", "0.02", "0.01", "0.005"}) {
    const auto cand = run(scenario(std::string("method = fitm\nt-end = 2\nh0 = ") + h + "\n"));
    const double d = compare_traces(ref, cand).classes[0].stats.max_diff;
    CHECK(d < prev);
    prev = d;
  }
}

TEST_CASE("variable classes") {
  CHECK(variable_class("delta_2") == "delta");
  CHECK(variable_class("V_10") == "V");
  CHECK(variable_class("x1") == "x1");
  CHECK(variable_class("a_b_c") == "a_b");
}

TEST_CASE("configuration parsing") {
  const auto s = scenario(
      "# comment\nmethod = vam2  # trailing\nsystem = linear:-3.5\nh-min = 0.02\n"
      "h-max=0.08\ng-low = 1e-6\ng-high = 1e-3\nt-end = 4\nseed = 99\n"
      "reject-on-high-error = yes\nnewton-max-iter = 30\nfault = none\n");
  CHECK(s.method == Method::VAM2);
  CHECK(s.system == "linear:-3.5");
  CHECK(s.controller.h_min == 0.02);
  CHECK(s.controller.h_max == 0.08);
  CHECK(s.controller.g_low == 1e-6);
  CHECK(s.controller.reject_on_high_error);
  CHECK(s.newton.max_iterations == 30);
  CHECK(s.seed == 99);
  CHECK_FALSE(s.fault);

  CHECK_THROWS_WITH_AS((void)scenario("method = pcm\nbogus = 1\n"), doctest::Contains("line 2"),
                       std::invalid_argument);
  CHECK_THROWS_AS((void)scenario("h-min = fast\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)scenario("method = rk4\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)scenario("fault = 7,1.0\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)scenario("[case a]\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)run(scenario("system = analytic\nfault = 7,1,0.1\n")),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)run(scenario("system = lorenz\n")), std::invalid_argument);
}

TEST_CASE("bench file parsing") {
  const auto suite = parse_bench(
      "system = swing:wscc9\nt-end = 3\nmethods = pcm, vitm\n"
      "[case bus7]\nfault = 7,1.0,0.1\n[case bus5]\nfault = 5,1.0,0.1\nt-end = 2\n");
  REQUIRE(suite.scenarios.size() == 6);  // fitm reference added
  CHECK(suite.methods.front() == Method::FITM);
  CHECK(suite.scenarios[0].id == "bus7.fitm");
  CHECK(suite.scenarios[1].id == "bus7.pcm");
  CHECK(suite.scenarios[3].case_id == "bus5");
  CHECK(suite.scenarios[3].t_end == 2.0);
  CHECK(suite.scenarios[3].fault->bus == 5);
  CHECK(suite.scenarios[0].t_end == 3.0);

  CHECK_THROWS_AS((void)parse_bench("[case a]\nmethods = pcm\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)parse_bench("[case a]\n[case a]\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)parse_bench("[group a]\n"), std::invalid_argument);
}

TEST_CASE("bench against itself reports no improvement and no difference") {
  const auto s = scenario("id = only\nmethod = fitm\nt-end = 2\n");
  const auto report = bench(std::vector<Scenario>{s}, BenchOptions{});
  REQUIRE(report.entries.size() == 1);
  const auto& e = report.entries[0];
  CHECK(e.error.empty());
  CHECK(e.step_improvement == 0.0);
  CHECK(e.newton_improvement == 0.0);
  for (const auto& c : e.class_stats) CHECK(c.stats.max_diff == 0.0);
}

TEST_CASE("bench on zero dynamics: PCM takes far fewer steps") {
  const auto suite = parse_bench("system = linear:0\nmethods = fitm, pcm\n");
  const auto report = bench(suite);
  REQUIRE(report.entries.size() == 2);
  const auto& pcm = report.entries[1];
  CHECK(pcm.method == Method::PCM);
  CHECK(pcm.step_improvement >= 0.8);
}

TEST_CASE("bench on the four-mode decay: PCM needs fewer Newton iterations") {
  const auto report = bench(parse_bench("system = analytic\nmethods = fitm, pcm\n"));
  CHECK(report.entries[1].newton_iterations < report.entries[0].newton_iterations);
  CHECK(report.entries[1].newton_improvement > 0.0);
}

TEST_CASE("bench output is independent of parallelism") {
  const auto suite = parse_bench(
      "system = swing:wscc9\nt-end = 3\n[case a]\nfault = 7,1.0,0.1\n[case b]\nfault = 9,1.0,0.1\n");
  const auto one = bench_json(bench(suite, 1), false);
  const auto four = bench_json(bench(suite, 4), false);
  CHECK(one == four);
  CHECK(one.find("wall_time") == std::string::npos);
  CHECK(bench_json(bench(suite, 2), true).find("wall_time_s") != std::string::npos);
  const auto report = bench(suite, 2);
  CHECK(bench_table(report).find("pcm") != std::string::npos);
  for (const auto& m : report.methods) {
    CHECK(m.cases == 2);
    for (const auto& c : m.classes) {
      CHECK(c.max_of_case_maxima >= c.average_of_case_maxima);
      CHECK(c.max_of_case_maxima >= c.max_of_case_averages);
    }
  }
}

TEST_CASE("bench records failed runs instead of aborting") {
  auto bad = scenario("id = bad\nmethod = pcm\nsystem = linear:-1\nnewton-max-iter = 1\n"
                      "newton-tol = 1e-300\n");
  auto ref = scenario("id = ref\nmethod = fitm\nsystem = linear:-1\n");
  const auto report = bench(std::vector<Scenario>{ref, bad}, BenchOptions{});
  bool failed = false;
  for (const auto& e : report.entries) failed = failed || !e.error.empty();
  CHECK(failed);
  CHECK(bench_json(report, false).find("\"error\"") != std::string::npos);
}

TEST_CASE("stability scan verdicts") {
  const auto v = stability_scan({-590.0, -650.0, -10.0}, {0.01}, 2000);
  REQUIRE(v.size() == 3);
  CHECK(v[0].bounded);
  CHECK_FALSE(v[1].bounded);
  CHECK(v[1].divergent);
  CHECK(v[1].max_abs > 10.0);
  CHECK(v[2].bounded);
  CHECK(std::abs(v[2].final_value - std::exp(-10.0 * 20.0)) < 1e-3);

  const auto decay = stability_scan({-10.0}, {0.01}, 100);
  CHECK(std::abs(decay[0].final_value - std::exp(-10.0)) < 1e-3);

  CHECK_THROWS_AS((void)stability_scan({-1.0}, {0.01}, 99), std::invalid_argument);
  CHECK_THROWS_AS((void)stability_scan({1.0}, {0.01}, 200), std::invalid_argument);
  CHECK_THROWS_AS((void)stability_scan({-1.0}, {0.0}, 200), std::invalid_argument);

  std::ostringstream csv;
  write_stability_csv(v, csv);
  CHECK(csv.str().rfind("lambda,h,h_lambda,", 0) == 0);
}

TEST_CASE("scenario runs are deterministic") {
  const auto s = scenario("system = swing:wscc9\nfault = 8,1.0,0.1\nmethod = vam2\nt-end = 3\n");
  std::ostringstream a;
  std::ostringstream b;
  write_trace_csv(run(s), a);
  write_trace_csv(run(s), b);
  CHECK(a.str() == b.str());
}

TEST_CASE("run writes the trace when an output path is given") {
  const auto path = std::filesystem::temp_directory_path() / "pcmsim_run_test.csv";
  auto s = scenario("method = fitm\nt-end = 0.1\n");
  s.out = path.string();
  const auto tr = run(s);
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::ostringstream expect;
  write_trace_csv(tr, expect);
  CHECK(buf.str() == expect.str());
  std::filesystem::remove(path);
}
