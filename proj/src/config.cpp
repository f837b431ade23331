#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pcmsim/harness.hpp"

namespace pcmsim::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int parse_int(std::string_view text) {
  text = trim(text);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("not an integer: '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(text) + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Line {
  int number;
  std::string_view key;
  std::string_view value;
  std::string_view section;  // non-empty for "[...]" headers
};

// Splits the text into key/value lines and section headers, dropping comments.
std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> out;
  int number = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++number;

    raw = trim(raw.substr(0, raw.find('#')));
    if (raw.empty()) continue;
    if (raw.front() == '[') {
      if (raw.back() != ']') {
        throw std::invalid_argument("line " + std::to_string(number) + ": bad section header");
      }
      out.push_back({number, {}, {}, trim(raw.substr(1, raw.size() - 2))});
      continue;
    }
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(number) + ": expected key = value");
    }
    out.push_back({number, trim(raw.substr(0, eq)), trim(raw.substr(eq + 1)), {}});
  }
  return out;
}

void apply_line(Scenario& s, const Line& line) {
  try {
    apply_setting(s, line.key, line.value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("line " + std::to_string(line.number) + ": " + e.what());
  }
}

std::vector<Method> parse_method_list(std::string_view text) {
  std::vector<Method> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (!item.empty()) {
      const Method m = parse_method(item);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
  }
  if (out.empty()) throw std::invalid_argument("empty method list");
  return out;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::FITM:
      return "fitm";
    case Method::FAM2:
      return "fam2";
    case Method::VITM:
      return "vitm";
    case Method::VAM2:
      return "vam2";
    case Method::PCM:
      return "pcm";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  text = trim(text);
  for (Method m : {Method::FITM, Method::FAM2, Method::VITM, Method::VAM2, Method::PCM}) {
    if (text == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(text) + "'");
}

bool is_fixed_step(Method m) { return m == Method::FITM || m == Method::FAM2; }

void Scenario::validate() const {
  controller.validate();
  newton.validate();
  if (!std::isfinite(t_end)) throw std::invalid_argument("t-end must be finite");
  if (h0 && !(*h0 > 0.0)) throw std::invalid_argument("h0 must be positive");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return v;
}

models::FaultSpec parse_fault(std::string_view text) {
  std::vector<std::string_view> parts;
  while (true) {
    const auto comma = text.find(',');
    parts.push_back(trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  if (parts.size() != 3) throw std::invalid_argument("fault must be <bus,start,duration>");
  models::FaultSpec f;
  f.bus = parse_int(parts[0]);
  f.start = parse_double(parts[1]);
  f.duration = parse_double(parts[2]);
  if (!(f.duration >= 0.0)) throw std::invalid_argument("fault duration must be >= 0");
  return f;
}

std::string format_fault(const models::FaultSpec& fault) {
  return std::to_string(fault.bus) + "," + format_double(fault.start) + "," +
         format_double(fault.duration);
}

void apply_setting(Scenario& s, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  auto& c = s.controller;
  auto& n = s.newton;
  if (key == "method") {
    s.method = parse_method(value);
  } else if (key == "system") {
    if (value.empty()) throw std::invalid_argument("system must not be empty");
    s.system = std::string(value);
  } else if (key == "fault") {
    if (value.empty() || value == "none") {
      s.fault.reset();
    } else {
      s.fault = parse_fault(value);
    }
  } else if (key == "t-end") {
    s.t_end = parse_double(value);
  } else if (key == "h0") {
    if (value.empty() || value == "auto") {
      s.h0.reset();
    } else {
      s.h0 = parse_double(value);
    }
  } else if (key == "h-min") {
    c.h_min = parse_double(value);
  } else if (key == "h-max") {
    c.h_max = parse_double(value);
  } else if (key == "g-low") {
    c.g_low = parse_double(value);
  } else if (key == "g-high") {
    c.g_high = parse_double(value);
  } else if (key == "iters-low") {
    c.iters_low = parse_int(value);
  } else if (key == "iters-high") {
    c.iters_high = parse_int(value);
  } else if (key == "grow-factor") {
    c.grow_factor = parse_double(value);
  } else if (key == "shrink-factor") {
    c.shrink_factor = parse_double(value);
  } else if (key == "corrector-iterations") {
    c.corrector_iterations = parse_int(value);
  } else if (key == "reject-on-high-error") {
    c.reject_on_high_error = parse_bool(value);
  } else if (key == "newton-tol") {
    n.tolerance = parse_double(value);
  } else if (key == "newton-max-iter") {
    n.max_iterations = parse_int(value);
  } else if (key == "fd-epsilon") {
    n.fd_epsilon = parse_double(value);
  } else if (key == "out") {
    s.out = std::string(value);
  } else if (key == "seed") {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw std::invalid_argument("bad seed '" + std::string(value) + "'");
    }
    s.seed = v;
  } else if (key == "id") {
    s.id = std::string(value);
  } else if (key == "case") {
    s.case_id = std::string(value);
  } else {
    throw std::invalid_argument("unknown key '" + std::string(key) + "'");
  }
}

Scenario parse_config(std::string_view text, Scenario base) {
  for (const auto& line : tokenize(text)) {
    if (!line.section.empty()) {
      throw std::invalid_argument("line " + std::to_string(line.number) +
                                  ": sections are only allowed in bench files");
    }
    apply_line(base, line);
  }
  return base;
}

Scenario load_config(const std::string& path, Scenario base) {
  return parse_config(read_file(path), std::move(base));
}

std::string format_config(const Scenario& s) {
  const auto& c = s.controller;
  const auto& n = s.newton;
  std::ostringstream out;
  out << "id = " << s.id << '\n'
      << "case = " << s.case_id << '\n'
      << "system = " << s.system << '\n'
      << "fault = " << (s.fault ? format_fault(*s.fault) : std::string("none")) << '\n'
      << "method = " << to_string(s.method) << '\n'
      << "t-end = " << format_double(s.t_end) << '\n'
      << "h0 = " << (s.h0 ? format_double(*s.h0) : std::string("auto")) << '\n'
      << "h-min = " << format_double(c.h_min) << '\n'
      << "h-max = " << format_double(c.h_max) << '\n'
      << "g-low = " << format_double(c.g_low) << '\n'
      << "g-high = " << format_double(c.g_high) << '\n'
      << "iters-low = " << c.iters_low << '\n'
      << "iters-high = " << c.iters_high << '\n'
      << "grow-factor = " << format_double(c.grow_factor) << '\n'
      << "shrink-factor = " << format_double(c.shrink_factor) << '\n'
      << "corrector-iterations = " << c.corrector_iterations << '\n'
      << "reject-on-high-error = " << (c.reject_on_high_error ? "true" : "false") << '\n'
      << "newton-tol = " << format_double(n.tolerance) << '\n'
      << "newton-max-iter = " << n.max_iterations << '\n'
      << "fd-epsilon = " << format_double(n.fd_epsilon) << '\n'
      << "out = " << s.out << '\n'
      << "seed = " << s.seed << '\n';
  return out.str();
}

BenchSuite parse_bench(std::string_view text) {
  BenchSuite suite;
  Scenario shared;
  std::vector<std::pair<std::string, std::vector<Line>>> cases;

  for (const auto& line : tokenize(text)) {
    if (!line.section.empty()) {
      const auto sec = line.section;
      if (sec.substr(0, 5) != "case ") {
        throw std::invalid_argument("line " + std::to_string(line.number) +
                                    ": expected [case <name>]");
      }
      const auto name = std::string(trim(sec.substr(5)));
      if (name.empty()) throw std::invalid_argument("empty case name");
      for (const auto& [existing, _] : cases) {
        if (existing == name) throw std::invalid_argument("duplicate case '" + name + "'");
      }
      cases.emplace_back(name, std::vector<Line>{});
      continue;
    }
    if (cases.empty()) {
      if (line.key == "methods") {
        suite.methods = parse_method_list(line.value);
      } else if (line.key == "reference") {
        suite.reference = parse_method(line.value);
      } else {
        apply_line(shared, line);
      }
    } else {
      if (line.key == "methods" || line.key == "reference") {
        throw std::invalid_argument("line " + std::to_string(line.number) + ": '" +
                                    std::string(line.key) + "' is only valid before any case");
      }
      cases.back().second.push_back(line);
    }
  }
  if (cases.empty()) cases.emplace_back("default", std::vector<Line>{});

  std::vector<Method> methods = suite.methods;
  if (std::find(methods.begin(), methods.end(), suite.reference) == methods.end()) {
    methods.insert(methods.begin(), suite.reference);
  }

  for (const auto& [name, lines] : cases) {
    Scenario base = shared;
    for (const auto& l : lines) apply_line(base, l);
    base.case_id = name;
    for (Method m : methods) {
      Scenario s = base;
      s.method = m;
      s.id = name + "." + std::string(to_string(m));
      s.out.clear();
      s.validate();
      suite.scenarios.push_back(std::move(s));
    }
  }
  suite.methods = methods;
  return suite;
}

BenchSuite load_bench(const std::string& path) { return parse_bench(read_file(path)); }

}  // namespace pcmsim::harness
