#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pcmsim/harness.hpp"

namespace pcmsim::harness {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

void write_trace_csv(const SimulationTrace& trace, std::ostream& out) {
  out << "t,h,newton_iters,g_max";
  for (const auto& name : trace.variable_names()) out << ',' << name;
  out << '\n';
  for (const auto& rec : trace.records) {
    const auto& s = rec.state;
    out << format_double(s.t) << ',' << format_double(s.h) << ',' << rec.newton_iterations << ',';
    if (rec.g_max) out << format_double(*rec.g_max);
    for (Eigen::Index i = 0; i < s.x.size(); ++i) out << ',' << format_double(s.x(i));
    for (Eigen::Index i = 0; i < s.y.size(); ++i) out << ',' << format_double(s.y(i));
    out << '\n';
  }
}

void write_trace_csv(const SimulationTrace& trace, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_trace_csv(trace, out);
  if (!out) throw std::runtime_error("error writing " + path);
}

SimulationTrace read_trace_csv(std::istream& in, std::string method) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("trace CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "t" || header[1] != "h" || header[2] != "newton_iters" ||
      header[3] != "g_max") {
    throw std::invalid_argument("trace CSV: unexpected header");
  }

  SimulationTrace trace;
  trace.method = std::move(method);
  // Without model metadata every variable is stored as differential.
  trace.diff_names.assign(header.begin() + 4, header.end());
  const auto nvar = static_cast<Eigen::Index>(trace.diff_names.size());

  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("trace CSV: row " + std::to_string(row) + " has " +
                                  std::to_string(cells.size()) + " cells");
    }
    StepRecord rec;
    rec.state.t = parse_double(cells[0]);
    rec.state.h = parse_double(cells[1]);
    rec.newton_iterations = static_cast<int>(parse_double(cells[2]));
    if (!cells[3].empty()) rec.g_max = parse_double(cells[3]);
    rec.state.x.resize(nvar);
    rec.state.y.resize(0);
    for (Eigen::Index i = 0; i < nvar; ++i) {
      rec.state.x(i) = parse_double(cells[static_cast<std::size_t>(4 + i)]);
    }
    if (!trace.records.empty() && !(rec.state.t > trace.records.back().state.t)) {
      throw std::invalid_argument("trace CSV: times not strictly increasing at row " +
                                  std::to_string(row));
    }
    trace.total_newton_iterations += rec.newton_iterations;
    trace.records.push_back(std::move(rec));
  }
  trace.accepted_steps = trace.records.empty() ? 0 : static_cast<long>(trace.records.size()) - 1;
  return trace;
}

SimulationTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_trace_csv(in, path);
}

}  // namespace pcmsim::harness
