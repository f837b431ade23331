#include "pcmsim/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pcmsim/step_control.hpp"
#include "pcmsim/steppers.hpp"

namespace pcmsim::harness {

// ---------------------------------------------------------------------------
// Running

DaeSystem make_system(const std::string& spec, const std::optional<models::FaultSpec>& fault) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);

  if (kind == "swing") {
    return models::swing_system(arg.empty() ? std::string("wscc9") : arg, fault);
  }
  if (fault) throw std::invalid_argument("faults are only supported on swing systems");
  if (kind == "analytic" && arg.empty()) return models::analytic_system();
  if (kind == "linear") {
    if (arg.empty()) throw std::invalid_argument("linear system needs a rate: linear:<lambda>");
    return models::linear_system(parse_double(arg));
  }
  throw std::invalid_argument("unknown system '" + spec + "'");
}

SimulationTrace run(const Scenario& scenario) {
  scenario.validate();
  DaeSystem system = make_system(scenario.system, scenario.fault);
  const auto report = validate_system(system, scenario.newton.tolerance, scenario.t_end);
  if (!report.ok()) {
    std::string msg = "invalid system '" + scenario.system + "':";
    for (const auto& issue : report.issues) msg += " " + issue + ";";
    throw std::invalid_argument(msg);
  }

  SimulationTrace trace;
  const auto& cfg = scenario.controller;
  const auto& nwt = scenario.newton;
  switch (scenario.method) {
    case Method::FITM:
      trace = fixed_step_integrate(FixedMethod::ITM, std::move(system), scenario.t_end,
                                   scenario.h0.value_or(0.01), nwt);
      break;
    case Method::FAM2:
      trace = fixed_step_integrate(FixedMethod::AM2, std::move(system), scenario.t_end,
                                   scenario.h0.value_or(0.01), nwt);
      break;
    case Method::VITM:
      trace = vitm_integrate(std::move(system), scenario.t_end, cfg, nwt, scenario.h0);
      break;
    case Method::VAM2:
      trace = vam2_integrate(std::move(system), scenario.t_end, cfg, nwt, scenario.h0);
      break;
    case Method::PCM:
      trace = pcm_integrate(std::move(system), scenario.t_end, cfg, nwt, scenario.h0);
      break;
  }
  if (!scenario.out.empty()) write_trace_csv(trace, scenario.out);
  return trace;
}

// ---------------------------------------------------------------------------
// Statistics

ErrorStats summarize(const std::vector<double>& abs_diffs) {
  ErrorStats s;
  if (abs_diffs.empty()) return s;
  double sum = 0.0;
  for (double d : abs_diffs) {
    s.max_diff = std::max(s.max_diff, std::abs(d));
    sum += std::abs(d);
  }
  const auto n = static_cast<double>(abs_diffs.size());
  s.avg_diff = sum / n;
  double sq = 0.0;
  for (double d : abs_diffs) sq += (std::abs(d) - s.avg_diff) * (std::abs(d) - s.avg_diff);
  s.var_diff = sq / n;
  return s;
}

ErrorStats error_stats_vs_exact(const SimulationTrace& trace, const Observable& observe,
                                const ExactFn& exact) {
  std::vector<double> diffs;
  diffs.reserve(trace.records.size());
  for (const auto& rec : trace.records) {
    diffs.push_back(std::abs(observe(rec.state) - exact(rec.state.t)));
  }
  return summarize(diffs);
}

std::string variable_class(const std::string& name) {
  const auto pos = name.rfind('_');
  if (pos == std::string::npos || pos == 0) return name;
  return name.substr(0, pos);
}

namespace {

bool selected(const std::string& name, const std::vector<std::string>& selectors) {
  if (selectors.empty()) return true;
  const std::string cls = variable_class(name);
  return std::any_of(selectors.begin(), selectors.end(),
                     [&](const std::string& s) { return s == name || s == cls; });
}

ErrorStats pool(const std::vector<ErrorStats>& parts) {
  ErrorStats out;
  if (parts.empty()) return out;
  const auto n = static_cast<double>(parts.size());
  for (const auto& p : parts) {
    out.max_diff = std::max(out.max_diff, p.max_diff);
    out.avg_diff += p.avg_diff / n;
  }
  for (const auto& p : parts) {
    out.var_diff += (p.var_diff + (p.avg_diff - out.avg_diff) * (p.avg_diff - out.avg_diff)) / n;
  }
  return out;
}

}  // namespace

Comparison compare_traces(const SimulationTrace& reference, const SimulationTrace& candidate,
                          const std::vector<std::string>& variables) {
  if (reference.records.empty() || candidate.records.empty()) {
    throw std::invalid_argument("compare_traces: empty trace");
  }
  const double r0 = reference.records.front().state.t;
  const double r1 = reference.records.back().state.t;
  const double c0 = candidate.records.front().state.t;
  const double c1 = candidate.records.back().state.t;
  if (!same_time(r0, c0) || !same_time(r1, c1)) {
    throw std::invalid_argument("compare_traces: mismatched time ranges");
  }

  const auto ref_names = reference.variable_names();
  const auto cand_names = candidate.variable_names();
  std::vector<std::pair<std::size_t, std::size_t>> columns;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < ref_names.size(); ++i) {
    if (!selected(ref_names[i], variables)) continue;
    const auto it = std::find(cand_names.begin(), cand_names.end(), ref_names[i]);
    if (it == cand_names.end()) continue;
    columns.emplace_back(i, static_cast<std::size_t>(it - cand_names.begin()));
    names.push_back(ref_names[i]);
  }
  if (columns.empty()) throw std::invalid_argument("compare_traces: no common variables selected");

  std::vector<std::vector<double>> diffs(columns.size());
  std::size_t j = 0;  // candidate interval cursor
  const std::size_t nc = candidate.records.size();
  for (std::size_t row = 0; row < reference.records.size(); ++row) {
    const double t = reference.records[row].state.t;
    while (j + 1 < nc && candidate.records[j + 1].state.t <= t) ++j;

    // Weight of record j+1 in the interpolant; 0 means take record j as is.
    std::size_t lo = j;
    double w = 0.0;
    if (same_time(candidate.records[j].state.t, t)) {
      w = 0.0;
    } else if (j + 1 < nc) {
      const double ta = candidate.records[j].state.t;
      const double tb = candidate.records[j + 1].state.t;
      if (same_time(tb, t)) {
        lo = j + 1;
      } else {
        w = (t - ta) / (tb - ta);
      }
    }
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto [ri, ci] = columns[c];
      double v = candidate.value(lo, ci);
      if (w != 0.0) v = (1.0 - w) * v + w * candidate.value(lo + 1, ci);
      diffs[c].push_back(std::abs(reference.value(row, ri) - v));
    }
  }

  Comparison out;
  out.samples = reference.records.size();
  std::map<std::string, std::vector<ErrorStats>> by_class;
  std::vector<std::string> class_order;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto stats = summarize(diffs[c]);
    out.variables.push_back({names[c], stats});
    const auto cls = variable_class(names[c]);
    if (!by_class.contains(cls)) class_order.push_back(cls);
    by_class[cls].push_back(stats);
  }
  for (const auto& cls : class_order) out.classes.push_back({cls, pool(by_class[cls])});
  return out;
}

// ---------------------------------------------------------------------------
// Benchmarks

namespace {

struct RunResult {
  SimulationTrace trace;
  double wall_time_s = 0.0;
  std::string error;
};

RunResult timed_run(const Scenario& s) {
  RunResult r;
  const auto start = std::chrono::steady_clock::now();
  try {
    r.trace = run(s);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

BenchReport bench(const std::vector<Scenario>& scenarios, const BenchOptions& options) {
  if (scenarios.empty()) throw std::invalid_argument("bench: no scenarios");

  std::vector<RunResult> results(scenarios.size());
  const unsigned jobs = std::max(1U, options.jobs);
  for (std::size_t begin = 0; begin < scenarios.size(); begin += jobs) {
    const std::size_t end = std::min(scenarios.size(), begin + jobs);
    std::vector<std::future<RunResult>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                   timed_run, std::cref(scenarios[i])));
    }
    for (std::size_t i = begin; i < end; ++i) results[i] = pending[i - begin].get();
  }

  if (!options.trace_dir.empty()) {
    std::filesystem::create_directories(options.trace_dir);
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      if (!results[i].error.empty()) continue;
      write_trace_csv(results[i].trace,
                      (std::filesystem::path(options.trace_dir) / (scenarios[i].id + ".csv"))
                          .string());
    }
  }

  std::map<std::string, std::size_t> reference_of;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (scenarios[i].method == options.reference && !reference_of.contains(scenarios[i].case_id)) {
      reference_of[scenarios[i].case_id] = i;
    }
  }

  BenchReport report;
  report.reference = options.reference;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    const auto& res = results[i];
    BenchEntry e;
    e.scenario_id = s.id;
    e.case_id = s.case_id;
    e.method = s.method;
    e.wall_time_s = res.wall_time_s;
    e.error = res.error;
    if (res.error.empty()) {
      e.accepted_steps = res.trace.accepted_steps;
      e.newton_iterations = res.trace.total_newton_iterations;
    }
    const auto ref = reference_of.find(s.case_id);
    if (ref == reference_of.end()) {
      if (e.error.empty()) e.error = "no reference run in case '" + s.case_id + "'";
    } else if (e.error.empty() && !results[ref->second].error.empty()) {
      e.error = "reference run failed: " + results[ref->second].error;
    } else if (e.error.empty()) {
      const auto& ref_trace = results[ref->second].trace;
      try {
        e.class_stats = compare_traces(ref_trace, res.trace).classes;
      } catch (const std::exception& ex) {
        e.error = ex.what();
      }
      if (ref_trace.accepted_steps > 0) {
        e.step_improvement = static_cast<double>(ref_trace.accepted_steps - e.accepted_steps) /
                             static_cast<double>(ref_trace.accepted_steps);
      }
      if (ref_trace.total_newton_iterations > 0) {
        e.newton_improvement =
            static_cast<double>(ref_trace.total_newton_iterations - e.newton_iterations) /
            static_cast<double>(ref_trace.total_newton_iterations);
      }
    }
    report.entries.push_back(std::move(e));
  }

  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const BenchEntry& a, const BenchEntry& b) {
                     if (a.case_id != b.case_id) return a.case_id < b.case_id;
                     return static_cast<int>(a.method) < static_cast<int>(b.method);
                   });

  std::map<int, MethodSummary> summaries;
  std::map<int, std::map<std::string, std::vector<ErrorStats>>> per_class;
  std::map<int, std::vector<std::string>> class_order;
  for (const auto& e : report.entries) {
    auto& m = summaries[static_cast<int>(e.method)];
    m.method = e.method;
    if (!e.error.empty()) continue;
    ++m.cases;
    m.accepted_steps += e.accepted_steps;
    m.newton_iterations += e.newton_iterations;
    m.wall_time_s += e.wall_time_s;
    m.mean_step_improvement += e.step_improvement;
    m.mean_newton_improvement += e.newton_improvement;
    for (const auto& cs : e.class_stats) {
      auto& bucket = per_class[static_cast<int>(e.method)];
      if (!bucket.contains(cs.name)) class_order[static_cast<int>(e.method)].push_back(cs.name);
      bucket[cs.name].push_back(cs.stats);
    }
  }
  for (auto& [key, m] : summaries) {
    if (m.cases > 0) {
      m.mean_step_improvement /= static_cast<double>(m.cases);
      m.mean_newton_improvement /= static_cast<double>(m.cases);
    }
    for (const auto& cls : class_order[key]) {
      const auto& list = per_class[key][cls];
      ClassAggregate agg;
      agg.name = cls;
      for (const auto& st : list) {
        agg.max_of_case_averages = std::max(agg.max_of_case_averages, st.avg_diff);
        agg.max_of_case_maxima = std::max(agg.max_of_case_maxima, st.max_diff);
        agg.average_of_case_maxima += st.max_diff / static_cast<double>(list.size());
      }
      m.classes.push_back(agg);
    }
    report.methods.push_back(m);
  }
  return report;
}

BenchReport bench(const BenchSuite& suite, unsigned jobs, const std::string& trace_dir) {
  return bench(suite.scenarios, BenchOptions{suite.reference, jobs, trace_dir});
}

namespace {

nlohmann::ordered_json stats_json(const ErrorStats& s) {
  return {{"max_diff", s.max_diff}, {"avg_diff", s.avg_diff}, {"var_diff", s.var_diff}};
}

}  // namespace

std::string bench_json(const BenchReport& report, bool include_wall_time) {
  using nlohmann::ordered_json;
  ordered_json root;
  root["reference"] = std::string(to_string(report.reference));
  root["comparison_grid"] =
      "candidate traces linearly interpolated onto the reference method's time grid";
  root["efficiency_definition"] = "(reference - method) / reference, per case";

  ordered_json entries = ordered_json::array();
  for (const auto& e : report.entries) {
    ordered_json j;
    j["scenario"] = e.scenario_id;
    j["case"] = e.case_id;
    j["method"] = std::string(to_string(e.method));
    if (!e.error.empty()) {
      j["error"] = e.error;
      entries.push_back(j);
      continue;
    }
    j["accepted_steps"] = e.accepted_steps;
    j["newton_iterations"] = e.newton_iterations;
    if (include_wall_time) j["wall_time_s"] = e.wall_time_s;
    j["step_improvement"] = e.step_improvement;
    j["newton_improvement"] = e.newton_improvement;
    ordered_json classes = ordered_json::object();
    for (const auto& cs : e.class_stats) classes[cs.name] = stats_json(cs.stats);
    j["differences"] = classes;
    entries.push_back(j);
  }
  root["entries"] = entries;

  ordered_json methods = ordered_json::array();
  for (const auto& m : report.methods) {
    ordered_json j;
    j["method"] = std::string(to_string(m.method));
    j["cases"] = m.cases;
    j["accepted_steps"] = m.accepted_steps;
    j["newton_iterations"] = m.newton_iterations;
    if (include_wall_time) j["wall_time_s"] = m.wall_time_s;
    j["mean_step_improvement"] = m.mean_step_improvement;
    j["mean_newton_improvement"] = m.mean_newton_improvement;
    ordered_json classes = ordered_json::object();
    for (const auto& c : m.classes) {
      classes[c.name] = {{"max_of_case_averages", c.max_of_case_averages},
                         {"average_of_case_maxima", c.average_of_case_maxima},
                         {"max_of_case_maxima", c.max_of_case_maxima}};
    }
    j["differences"] = classes;
    methods.push_back(j);
  }
  root["methods"] = methods;
  return root.dump(2) + "\n";
}

std::string bench_table(const BenchReport& report) {
  std::ostringstream out;
  out << "reference: " << to_string(report.reference) << "\n\n";
  out << std::left << std::setw(8) << "method" << std::right << std::setw(7) << "cases"
      << std::setw(10) << "steps" << std::setw(10) << "newton" << std::setw(11) << "step_impr"
      << std::setw(11) << "iter_impr" << std::setw(10) << "wall_s" << "\n";
  out << std::fixed;
  for (const auto& m : report.methods) {
    out << std::left << std::setw(8) << to_string(m.method) << std::right << std::setw(7)
        << m.cases << std::setw(10) << m.accepted_steps << std::setw(10) << m.newton_iterations
        << std::setw(10) << std::setprecision(2) << 100.0 * m.mean_step_improvement << "%"
        << std::setw(10) << 100.0 * m.mean_newton_improvement << "%" << std::setw(10)
        << std::setprecision(3) << m.wall_time_s << "\n";
  }
  out << "\nmaximum average differences vs reference (max over cases of the per-case mean)\n";
  std::vector<std::string> classes;
  for (const auto& m : report.methods) {
    for (const auto& c : m.classes) {
      if (std::find(classes.begin(), classes.end(), c.name) == classes.end()) {
        classes.push_back(c.name);
      }
    }
  }
  out << std::left << std::setw(8) << "method" << std::right;
  for (const auto& c : classes) out << std::setw(14) << c;
  out << "\n" << std::scientific << std::setprecision(4);
  for (const auto& m : report.methods) {
    out << std::left << std::setw(8) << to_string(m.method) << std::right;
    for (const auto& c : classes) {
      const auto it = std::find_if(m.classes.begin(), m.classes.end(),
                                   [&](const ClassAggregate& a) { return a.name == c; });
      if (it == m.classes.end()) {
        out << std::setw(14) << "-";
      } else {
        out << std::setw(14) << it->max_of_case_averages;
      }
    }
    out << "\n";
  }
  for (const auto& e : report.entries) {
    if (!e.error.empty()) out << "failed: " << e.scenario_id << ": " << e.error << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Stability scans

std::vector<StabilityVerdict> stability_scan(const std::vector<double>& lambdas,
                                             const std::vector<double>& steps_h, int steps,
                                             const newton::NewtonSettings& settings) {
  if (steps < 100) throw std::invalid_argument("stability_scan: steps must be >= 100");
  std::vector<StabilityVerdict> out;
  for (double h : steps_h) {
    if (!(h > 0.0)) throw std::invalid_argument("stability_scan: h must be positive");
    for (double lambda : lambdas) {
      if (!(lambda < 0.0)) throw std::invalid_argument("stability_scan: lambda must be negative");
      StabilityVerdict v;
      v.lambda = lambda;
      v.h = h;
      const DaeSystem system = models::linear_system(lambda);
      const double x0 = std::abs(system.initial().x(0));
      try {
        const auto trace = fixed_step_integrate(FixedMethod::AM2, system,
                                                static_cast<double>(steps) * h, h, settings);
        for (const auto& rec : trace.records) {
          const double a = std::abs(rec.state.x(0));
          v.max_abs = std::isfinite(a) ? std::max(v.max_abs, a) : INFINITY;
        }
        v.final_value = trace.records.back().state.x(0);
      } catch (const StepFailure&) {
        v.max_abs = INFINITY;
        v.final_value = NAN;
      }
      v.bounded = v.max_abs <= 1.01 * x0;
      v.divergent = v.max_abs > 10.0 * x0;
      out.push_back(v);
    }
  }
  return out;
}

void write_stability_csv(const std::vector<StabilityVerdict>& verdicts, std::ostream& out) {
  out << "lambda,h,h_lambda,max_abs,final_value,verdict\n";
  for (const auto& v : verdicts) {
    out << format_double(v.lambda) << ',' << format_double(v.h) << ','
        << format_double(v.lambda * v.h) << ',' << format_double(v.max_abs) << ','
        << format_double(v.final_value) << ',' << (v.bounded ? "bounded" : v.divergent ? "divergent" : "growing") << '\n';
  }
}

}  // namespace pcmsim::harness
