// pcmsim: command-line front end for the variable-step DAE integrators.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pcmsim/harness.hpp"
#include "pcmsim/models.hpp"

namespace {

using namespace pcmsim;
namespace hs = pcmsim::harness;

// Flags that map one-to-one onto configuration keys.
const std::vector<std::pair<std::string, std::string>> kSettingFlags = {
    {"method", "fitm|fam2|vitm|vam2|pcm"},
    {"system", "analytic | linear:<lambda> | swing:<fixture>"},
    {"h0", "fixed step (fitm/fam2) or initial step"},
    {"h-min", "smallest step length"},
    {"h-max", "largest step length"},
    {"g-low", "error estimate below which the step doubles"},
    {"g-high", "error estimate above which the step halves"},
    {"t-end", "end time"},
    {"fault", "<bus,start,duration> on a swing system, or none"},
    {"out", "output path"},
    {"seed", "reserved; all algorithms are deterministic"},
    {"iters-low", "Newton iterations below which the step grows"},
    {"iters-high", "Newton iterations above which the step shrinks"},
    {"grow-factor", "growth factor of the iteration rule"},
    {"shrink-factor", "shrink factor of the iteration rule"},
    {"corrector-iterations", "corrector applications per step"},
    {"reject-on-high-error", "redo steps whose error estimate exceeds g-high"},
    {"newton-tol", "Newton residual tolerance"},
    {"newton-max-iter", "Newton iteration cap"},
    {"fd-epsilon", "finite-difference perturbation"},
};

struct SettingFlags {
  std::string config;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
    for (const auto& [key, help] : kSettingFlags) {
      options[key] = app.add_option("--" + key, values[key], help);
    }
  }

  hs::Scenario resolve() const {
    hs::Scenario s;
    if (!config.empty()) s = hs::load_config(config);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) hs::apply_setting(s, key, values.at(key));
    }
    s.validate();
    return s;
  }
};

void report_exact_error(const hs::Scenario& s, const SimulationTrace& trace) {
  if (s.system == "analytic") {
    const auto stats = hs::error_stats_vs_exact(
        trace, [](const DaeState& st) { return st.x.sum(); },
        [](double t) { return models::AnalyticSystem::exact_sum(t); });
    std::cerr << "error vs exact sum: max " << stats.max_diff << ", average " << stats.avg_diff
              << ", variance " << stats.var_diff << "\n";
  } else if (s.system.rfind("linear:", 0) == 0) {
    const double lambda = hs::parse_double(s.system.substr(7));
    const auto stats = hs::error_stats_vs_exact(
        trace, [](const DaeState& st) { return st.x(0); },
        [lambda](double t) { return std::exp(lambda * t); });
    std::cerr << "error vs exact: max " << stats.max_diff << ", average " << stats.avg_diff
              << ", variance " << stats.var_diff << "\n";
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma - start);
    if (!item.empty()) out.push_back(hs::parse_double(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable-step DAE simulation: predictor-corrector and baseline integrators"};
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "run one scenario and write its trace as CSV");
  SettingFlags sim_flags;
  sim_flags.attach(*simulate);

  auto* compare = app.add_subcommand("compare", "compare two trace CSVs, JSON statistics");
  std::string ref_path;
  std::string cand_path;
  std::string compare_out;
  std::vector<std::string> compare_vars;
  compare->add_option("reference", ref_path, "reference trace CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("candidate", cand_path, "candidate trace CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("--variables", compare_vars, "variable names or classes (default: all)")
      ->delimiter(',');
  compare->add_option("--out", compare_out, "write JSON here instead of stdout");

  auto* bench = app.add_subcommand("bench", "run a scenario file, JSON and text summaries");
  std::string bench_file;
  std::string bench_out;
  unsigned bench_jobs = 1;
  bool bench_no_wall = false;
  bench->add_option("scenarios", bench_file, "bench file")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out, "output directory (summary.json, summary.txt, traces/)");
  bench->add_option("--jobs", bench_jobs, "scenarios run in parallel")->check(CLI::PositiveNumber);
  bench->add_flag("--no-wall-time", bench_no_wall, "omit wall-clock fields from the JSON");

  auto* scan = app.add_subcommand("stability-scan", "fixed-step AM-2 on x' = lambda x, CSV verdicts");
  std::string scan_lambdas = "-50,-200,-400,-590,-650,-800";
  std::string scan_h = "0.01";
  int scan_steps = 2000;
  std::string scan_out;
  scan->add_option("--lambdas", scan_lambdas, "comma-separated negative rates")->capture_default_str();
  scan->add_option("--step-sizes", scan_h, "comma-separated step lengths")->capture_default_str();
  scan->add_option("--steps", scan_steps, "steps per run (>= 100)")->capture_default_str();
  scan->add_option("--out", scan_out, "write CSV here instead of stdout");
  std::string scan_seed;
  scan->add_option("--seed", scan_seed, "reserved; all algorithms are deterministic");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const auto scenario = sim_flags.resolve();
      const auto trace = hs::run(scenario);
      if (scenario.out.empty()) hs::write_trace_csv(trace, std::cout);
      std::cerr << trace.method << ": " << trace.accepted_steps << " steps, "
                << trace.total_newton_iterations << " Newton iterations\n";
      report_exact_error(scenario, trace);
    } else if (compare->parsed()) {
      const auto reference = hs::read_trace_csv(ref_path);
      const auto candidate = hs::read_trace_csv(cand_path);
      const auto result = hs::compare_traces(reference, candidate, compare_vars);
      nlohmann::ordered_json j;
      j["reference"] = ref_path;
      j["candidate"] = cand_path;
      j["grid"] = "candidate linearly interpolated onto the reference times";
      j["samples"] = result.samples;
      auto section = [](const std::vector<hs::VariableStats>& list) {
        nlohmann::ordered_json o = nlohmann::ordered_json::object();
        for (const auto& v : list) {
          o[v.name] = {{"max_diff", v.stats.max_diff},
                       {"avg_diff", v.stats.avg_diff},
                       {"var_diff", v.stats.var_diff}};
        }
        return o;
      };
      j["classes"] = section(result.classes);
      j["variables"] = section(result.variables);
      const std::string text = j.dump(2) + "\n";
      if (compare_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(compare_out, std::ios::binary) << text;
      }
    } else if (bench->parsed()) {
      const auto suite = hs::load_bench(bench_file);
      const std::string trace_dir =
          bench_out.empty() ? std::string() : (std::filesystem::path(bench_out) / "traces").string();
      const auto report = hs::bench(suite, bench_jobs, trace_dir);
      const auto table = hs::bench_table(report);
      if (!bench_out.empty()) {
        std::filesystem::create_directories(bench_out);
        std::ofstream(std::filesystem::path(bench_out) / "summary.json", std::ios::binary)
            << hs::bench_json(report, !bench_no_wall);
        std::ofstream(std::filesystem::path(bench_out) / "summary.txt", std::ios::binary) << table;
      } else {
        std::cout << hs::bench_json(report, !bench_no_wall);
      }
      std::cerr << table;
    } else if (scan->parsed()) {
      const auto verdicts =
          hs::stability_scan(parse_list(scan_lambdas), parse_list(scan_h), scan_steps);
      if (scan_out.empty()) {
        hs::write_stability_csv(verdicts, std::cout);
      } else {
        std::ofstream out(scan_out, std::ios::binary);
        hs::write_stability_csv(verdicts, out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
