#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcmsim/core.hpp"
#include "pcmsim/models.hpp"
#include "pcmsim/newton.hpp"

namespace pcmsim::harness {

enum class Method { FITM, FAM2, VITM, VAM2, PCM };

[[nodiscard]] std::string_view to_string(Method m);
[[nodiscard]] Method parse_method(std::string_view text);
[[nodiscard]] bool is_fixed_step(Method m);

/// One simulation to run: system, optional fault, method and settings.
struct Scenario {
  std::string id = "run";
  std::string case_id = "default";  // scenarios sharing a case are compared with each other
  std::string system = "analytic";  // analytic | linear:<lambda> | swing:<fixture>
  std::optional<models::FaultSpec> fault;
  Method method = Method::PCM;
  ControllerConfig controller;
  newton::NewtonSettings newton;
  double t_end = 10.0;
  std::optional<double> h0;  // fixed step for fitm/fam2 (default 0.01); initial step otherwise
  std::string out;
  std::uint64_t seed = 0;  // reserved; every algorithm here is deterministic

  void validate() const;
};

// ---------------------------------------------------------------------------
// Configuration files: one `key = value` per line, `#` starts a comment. Keys
// are the long CLI flag names without the leading dashes.

/// Shortest decimal text that parses back to the same double.
[[nodiscard]] std::string format_double(double v);
[[nodiscard]] double parse_double(std::string_view text);

[[nodiscard]] models::FaultSpec parse_fault(std::string_view text);
[[nodiscard]] std::string format_fault(const models::FaultSpec& fault);

/// Applies a single key. Throws std::invalid_argument for unknown keys or bad values.
void apply_setting(Scenario& scenario, std::string_view key, std::string_view value);

[[nodiscard]] Scenario parse_config(std::string_view text, Scenario base = {});
[[nodiscard]] Scenario load_config(const std::string& path, Scenario base = {});
/// Writes every key, so parse_config(format_config(s)) reproduces `s` exactly.
[[nodiscard]] std::string format_config(const Scenario& scenario);

/// A benchmark file: shared keys at the top, then one `[case <name>]` section per
/// case overriding them. `methods` and `reference` are top-level only.
struct BenchSuite {
  std::vector<Method> methods{Method::FITM, Method::FAM2, Method::VITM, Method::VAM2,
                              Method::PCM};
  Method reference = Method::FITM;
  std::vector<Scenario> scenarios;  // one per (case, method)
};

[[nodiscard]] BenchSuite parse_bench(std::string_view text);
[[nodiscard]] BenchSuite load_bench(const std::string& path);

// ---------------------------------------------------------------------------
// Running

[[nodiscard]] DaeSystem make_system(const std::string& spec,
                                    const std::optional<models::FaultSpec>& fault);

/// Runs the scenario. When scenario.out is set the trace is also written there as CSV.
[[nodiscard]] SimulationTrace run(const Scenario& scenario);

/// Columns: t, h, newton_iters, g_max (empty when absent), then every variable.
void write_trace_csv(const SimulationTrace& trace, std::ostream& out);
void write_trace_csv(const SimulationTrace& trace, const std::string& path);
[[nodiscard]] SimulationTrace read_trace_csv(std::istream& in, std::string method = "csv");
[[nodiscard]] SimulationTrace read_trace_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Statistics

struct ErrorStats {
  double max_diff = 0.0;
  double avg_diff = 0.0;
  double var_diff = 0.0;  // population variance
};

/// Max, mean and population variance of |values|.
[[nodiscard]] ErrorStats summarize(const std::vector<double>& abs_diffs);

using Observable = std::function<double(const DaeState&)>;
using ExactFn = std::function<double(double)>;

/// Absolute error of `observe(state)` against `exact(t)` at every record, initial included.
[[nodiscard]] ErrorStats error_stats_vs_exact(const SimulationTrace& trace, const Observable& observe,
                                              const ExactFn& exact);

struct VariableStats {
  std::string name;
  ErrorStats stats;
};

/// Class of a variable name: the text before the last '_' ("delta_2" -> "delta").
[[nodiscard]] std::string variable_class(const std::string& name);

struct Comparison {
  std::vector<VariableStats> variables;
  std::vector<VariableStats> classes;  // pooled over the variables of each class
  std::size_t samples = 0;             // reference records used
};

/// Candidate interpolated linearly onto the reference time grid. `variables`
/// selects names or classes; empty selects everything the two traces share.
[[nodiscard]] Comparison compare_traces(const SimulationTrace& reference,
                                        const SimulationTrace& candidate,
                                        const std::vector<std::string>& variables = {});

// ---------------------------------------------------------------------------
// Benchmarks

struct BenchEntry {
  std::string scenario_id;
  std::string case_id;
  Method method = Method::PCM;
  long accepted_steps = 0;
  long newton_iterations = 0;
  double wall_time_s = 0.0;
  double step_improvement = 0.0;    // (reference - method) / reference
  double newton_improvement = 0.0;
  std::vector<VariableStats> class_stats;  // against the case's reference
  std::string error;                       // non-empty when the run failed
};

struct ClassAggregate {
  std::string name;
  double max_of_case_averages = 0.0;  // "maximum average difference"
  double average_of_case_maxima = 0.0;
  double max_of_case_maxima = 0.0;
};

struct MethodSummary {
  Method method = Method::PCM;
  std::size_t cases = 0;
  long accepted_steps = 0;
  long newton_iterations = 0;
  double wall_time_s = 0.0;
  double mean_step_improvement = 0.0;
  double mean_newton_improvement = 0.0;
  std::vector<ClassAggregate> classes;
};

struct BenchReport {
  Method reference = Method::FITM;
  std::vector<BenchEntry> entries;    // sorted by (case, method)
  std::vector<MethodSummary> methods;
};

struct BenchOptions {
  Method reference = Method::FITM;
  unsigned jobs = 1;
  std::string trace_dir;  // write every trace as <dir>/<scenario id>.csv when set
};

[[nodiscard]] BenchReport bench(const std::vector<Scenario>& scenarios, const BenchOptions& options);
[[nodiscard]] BenchReport bench(const BenchSuite& suite, unsigned jobs = 1,
                                const std::string& trace_dir = {});

/// JSON report. Wall-time fields are the only non-deterministic content.
[[nodiscard]] std::string bench_json(const BenchReport& report, bool include_wall_time = true);
[[nodiscard]] std::string bench_table(const BenchReport& report);

// ---------------------------------------------------------------------------
// Stability scans

struct StabilityVerdict {
  double lambda = 0.0;
  double h = 0.0;
  double max_abs = 0.0;
  double final_value = 0.0;
  bool bounded = false;
  bool divergent = false;
};

/// Fixed-step AM-2 on x' = lambda x for `steps` steps at every (lambda, h) pair.
/// Bounded iff max |x| <= 1.01 |x0| over the run, divergent iff max |x| > 10 |x0|.
[[nodiscard]] std::vector<StabilityVerdict> stability_scan(const std::vector<double>& lambdas,
                                                           const std::vector<double>& steps_h,
                                                           int steps,
                                                           const newton::NewtonSettings& settings = {});

void write_stability_csv(const std::vector<StabilityVerdict>& verdicts, std::ostream& out);

}  // namespace pcmsim::harness
