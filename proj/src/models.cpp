#include "pcmsim/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pcmsim/fixtures_embedded.hpp"
#include "pcmsim/newton.hpp"

namespace pcmsim::models {

Vector AnalyticSystem::exact_solution(double t) {
  Vector out(4);
  for (std::size_t i = 0; i < time_constants.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = std::exp(-t / time_constants[i]);
  }
  return out;
}

double AnalyticSystem::exact_sum(double t) { return exact_solution(t).sum(); }

DaeSystem analytic_system() {
  Vector rates(4);
  for (std::size_t i = 0; i < 4; ++i) {
    rates(static_cast<Eigen::Index>(i)) = -1.0 / AnalyticSystem::time_constants[i];
  }
  DaeState init{0.0, Vector::Ones(4), Vector(0), 0.0};
  return DaeSystem::from_functions(
      4, 0, [rates](const Vector& x, const Vector&, double) -> Vector { return rates.cwiseProduct(x); },
      {}, std::move(init), {}, "analytic");
}

DaeSystem linear_system(double lambda) {
  if (!std::isfinite(lambda)) throw std::invalid_argument("linear_system: lambda must be finite");
  DaeState init{0.0, Vector::Ones(1), Vector(0), 0.0};
  std::ostringstream name;
  name.precision(17);
  name << "linear:" << lambda;
  return DaeSystem::from_functions(
      1, 0, [lambda](const Vector& x, const Vector&, double) -> Vector { return lambda * x; }, {},
      std::move(init), {}, name.str());
}

// ---------------------------------------------------------------------------
// Fixture files

std::size_t SwingNetwork::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw std::invalid_argument("unknown bus " + std::to_string(id));
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void fixture_fail(const std::string& name, int line, const std::string& what) {
  throw FixtureError(name + ":" + std::to_string(line) + ": " + what);
}

template <class... T>
void read_fields(std::istringstream& in, const std::string& name, int line, T&... out) {
  ((in >> out), ...);
  if (!in) fixture_fail(name, line, "malformed record");
  std::string extra;
  if (in >> extra) fixture_fail(name, line, "unexpected field '" + extra + "'");
}

}  // namespace

SwingNetwork parse_fixture(std::string_view text, std::string name) {
  SwingNetwork net;
  net.name = std::move(name);

  std::istringstream stream{std::string(text)};
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fixture_fail(net.name, line_no, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }

    if (section == "system") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) fixture_fail(net.name, line_no, "expected key = value");
      const std::string key = trim(std::string_view(line).substr(0, eq));
      std::istringstream value(line.substr(eq + 1));
      if (key == "frequency") {
        read_fields(value, net.name, line_no, net.frequency);
      } else if (key == "base_mva") {
        read_fields(value, net.name, line_no, net.base_mva);
      } else if (key == "fault_admittance") {
        double re = 0.0;
        double im = 0.0;
        read_fields(value, net.name, line_no, re, im);
        net.fault_admittance = {re, im};
      } else if (key == "name") {
        net.name = trim(line.substr(eq + 1));
      } else {
        fixture_fail(net.name, line_no, "unknown key '" + key + "'");
      }
      continue;
    }

    std::istringstream in(line);
    if (section == "buses") {
      BusData bus;
      std::string type;
      read_fields(in, net.name, line_no, bus.id, type, bus.v_set, bus.p_gen);
      if (type == "slack") {
        bus.type = BusType::Slack;
      } else if (type == "pv") {
        bus.type = BusType::PV;
      } else if (type == "pq") {
        bus.type = BusType::PQ;
      } else {
        fixture_fail(net.name, line_no, "unknown bus type '" + type + "'");
      }
      net.buses.push_back(bus);
    } else if (section == "lines") {
      LineData l;
      read_fields(in, net.name, line_no, l.from, l.to, l.r, l.x, l.b);
      net.lines.push_back(l);
    } else if (section == "machines") {
      MachineData m;
      read_fields(in, net.name, line_no, m.bus, m.xd_prime, m.inertia_h, m.damping);
      net.machines.push_back(m);
    } else if (section == "loads") {
      LoadData l;
      read_fields(in, net.name, line_no, l.bus, l.p, l.q);
      net.loads.push_back(l);
    } else {
      fixture_fail(net.name, line_no, "record outside a known section");
    }
  }

  if (net.buses.empty()) throw FixtureError(net.name + ": no buses");
  if (std::count_if(net.buses.begin(), net.buses.end(),
                    [](const BusData& b) { return b.type == BusType::Slack; }) != 1) {
    throw FixtureError(net.name + ": exactly one slack bus is required");
  }
  try {
    for (const auto& l : net.lines) {
      (void)net.bus_index(l.from);
      (void)net.bus_index(l.to);
      if (l.r == 0.0 && l.x == 0.0) throw FixtureError(net.name + ": zero-impedance line");
    }
    std::vector<int> seen;
    for (const auto& m : net.machines) {
      const auto idx = net.bus_index(m.bus);
      if (net.buses[idx].type == BusType::PQ) {
        throw FixtureError(net.name + ": machine on PQ bus " + std::to_string(m.bus));
      }
      if (std::find(seen.begin(), seen.end(), m.bus) != seen.end()) {
        throw FixtureError(net.name + ": more than one machine on bus " + std::to_string(m.bus));
      }
      if (!(m.xd_prime > 0.0) || !(m.inertia_h > 0.0) || m.damping < 0.0) {
        throw FixtureError(net.name + ": invalid machine parameters on bus " +
                           std::to_string(m.bus));
      }
      seen.push_back(m.bus);
    }
    for (const auto& b : net.buses) {
      if (b.type != BusType::PQ &&
          std::find(seen.begin(), seen.end(), b.id) == seen.end()) {
        throw FixtureError(net.name + ": generator bus " + std::to_string(b.id) +
                           " has no machine");
      }
    }
    for (const auto& l : net.loads) (void)net.bus_index(l.bus);
  } catch (const std::invalid_argument& e) {
    throw FixtureError(net.name + ": " + e.what());
  }
  return net;
}

SwingNetwork load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FixtureError("cannot open fixture file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_fixture(buf.str(), path);
}

std::optional<std::string_view> builtin_fixture(std::string_view name) {
  if (name == "wscc9") return std::string_view(embedded::kWscc9Fixture);
  return std::nullopt;
}

SwingNetwork resolve_fixture(const std::string& name_or_path) {
  if (auto text = builtin_fixture(name_or_path)) return parse_fixture(*text, name_or_path);
  return load_fixture(name_or_path);
}

// ---------------------------------------------------------------------------
// Power flow

ComplexMatrix build_ybus(const SwingNetwork& net, const Vector* load_voltage) {
  const auto n = static_cast<Eigen::Index>(net.buses.size());
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const auto& l : net.lines) {
    const auto i = static_cast<Eigen::Index>(net.bus_index(l.from));
    const auto j = static_cast<Eigen::Index>(net.bus_index(l.to));
    const Complex series = 1.0 / Complex(l.r, l.x);
    const Complex charging(0.0, 0.5 * l.b);
    y(i, i) += series + charging;
    y(j, j) += series + charging;
    y(i, j) -= series;
    y(j, i) -= series;
  }
  if (load_voltage != nullptr) {
    for (const auto& l : net.loads) {
      const auto k = static_cast<Eigen::Index>(net.bus_index(l.bus));
      const double v = (*load_voltage)(k);
      y(k, k) += Complex(l.p, -l.q) / (v * v);
    }
  }
  return y;
}

namespace {

Eigen::VectorXcd phasors(const Vector& v, const Vector& theta) {
  Eigen::VectorXcd out(v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) out(k) = std::polar(v(k), theta(k));
  return out;
}

}  // namespace

PowerFlowResult solve_power_flow(const SwingNetwork& net) {
  const std::size_t n = net.buses.size();
  const ComplexMatrix ybus = build_ybus(net, nullptr);

  Vector p_spec = Vector::Zero(static_cast<Eigen::Index>(n));
  Vector q_spec = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) p_spec(static_cast<Eigen::Index>(k)) = net.buses[k].p_gen;
  for (const auto& l : net.loads) {
    const auto k = static_cast<Eigen::Index>(net.bus_index(l.bus));
    p_spec(k) -= l.p;
    q_spec(k) -= l.q;
  }

  std::vector<std::size_t> angle_buses;  // every bus but the slack
  std::vector<std::size_t> volt_buses;   // PQ buses
  for (std::size_t k = 0; k < n; ++k) {
    if (net.buses[k].type != BusType::Slack) angle_buses.push_back(k);
    if (net.buses[k].type == BusType::PQ) volt_buses.push_back(k);
  }

  Vector v0(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    v0(static_cast<Eigen::Index>(k)) = net.buses[k].type == BusType::PQ ? 1.0 : net.buses[k].v_set;
  }

  auto unpack = [&](const Vector& z, Vector& v, Vector& theta) {
    v = v0;
    theta = Vector::Zero(static_cast<Eigen::Index>(n));
    Eigen::Index u = 0;
    for (auto k : angle_buses) theta(static_cast<Eigen::Index>(k)) = z(u++);
    for (auto k : volt_buses) v(static_cast<Eigen::Index>(k)) = z(u++);
  };

  const newton::ResidualFn mismatch = [&](const Vector& z) {
    Vector v;
    Vector theta;
    unpack(z, v, theta);
    const Eigen::VectorXcd u = phasors(v, theta);
    const Eigen::VectorXcd s = u.cwiseProduct((ybus * u).conjugate());
    Vector r(z.size());
    Eigen::Index row = 0;
    for (auto k : angle_buses) {
      r(row++) = s(static_cast<Eigen::Index>(k)).real() - p_spec(static_cast<Eigen::Index>(k));
    }
    for (auto k : volt_buses) {
      r(row++) = s(static_cast<Eigen::Index>(k)).imag() - q_spec(static_cast<Eigen::Index>(k));
    }
    return r;
  };

  Vector guess(static_cast<Eigen::Index>(angle_buses.size() + volt_buses.size()));
  guess.head(static_cast<Eigen::Index>(angle_buses.size())).setZero();
  guess.tail(static_cast<Eigen::Index>(volt_buses.size())).setOnes();

  newton::NewtonSettings settings;
  settings.tolerance = 1e-12;
  settings.max_iterations = 40;

  PowerFlowResult out;
  try {
    const auto sol = newton::solve(mismatch, guess, settings);
    unpack(sol.solution, out.v, out.theta);
    out.iterations = sol.iterations;
  } catch (const newton::NewtonError& e) {
    throw EquilibriumNotFound(std::string("power flow failed: ") + e.what());
  }

  const Eigen::VectorXcd u = phasors(out.v, out.theta);
  const Eigen::VectorXcd s = u.cwiseProduct((ybus * u).conjugate());
  out.s_gen.assign(n, Complex{});
  for (std::size_t k = 0; k < n; ++k) out.s_gen[k] = s(static_cast<Eigen::Index>(k));
  for (const auto& l : net.loads) out.s_gen[net.bus_index(l.bus)] += Complex(l.p, l.q);
  return out;
}

// ---------------------------------------------------------------------------
// Swing model

SwingModel::SwingModel(ComplexMatrix ybus, std::vector<Machine> machines, double omega_base,
                       std::vector<int> bus_ids)
    : ybus_(std::move(ybus)),
      shunt_(static_cast<std::size_t>(ybus_.rows()), Complex{}),
      machines_(std::move(machines)),
      omega_base_(omega_base),
      bus_ids_(std::move(bus_ids)) {}

namespace {

// Current injected by machine i into its bus.
Complex machine_current(const SwingModel::Machine& m, double delta, Complex v_bus) {
  return (std::polar(m.e, delta) - v_bus) / Complex(0.0, m.xd_prime);
}

}  // namespace

Vector SwingModel::electrical_power(const Vector& x, const Vector& y) const {
  const auto nb = ybus_.rows();
  const auto ng = static_cast<Eigen::Index>(machines_.size());
  Vector pe(ng);
  for (Eigen::Index i = 0; i < ng; ++i) {
    const auto& m = machines_[static_cast<std::size_t>(i)];
    const auto k = static_cast<Eigen::Index>(m.bus);
    const Complex v = std::polar(y(k), y(nb + k));
    const Complex i_gen = machine_current(m, x(i), v);
    pe(i) = (std::polar(m.e, x(i)) * std::conj(i_gen)).real();
  }
  return pe;
}

Vector SwingModel::f(const Vector& x, const Vector& y, double) const {
  const auto ng = static_cast<Eigen::Index>(machines_.size());
  const Vector pe = electrical_power(x, y);
  Vector dx(2 * ng);
  for (Eigen::Index i = 0; i < ng; ++i) {
    const auto& m = machines_[static_cast<std::size_t>(i)];
    const double slip = x(ng + i) - 1.0;
    dx(i) = omega_base_ * slip;
    dx(ng + i) = (m.pm - pe(i) - m.d * slip) / m.m;
  }
  return dx;
}

Vector SwingModel::g(const Vector& x, const Vector& y, double) const {
  const auto nb = ybus_.rows();
  const Eigen::VectorXcd u = phasors(y.head(nb), y.tail(nb));
  Eigen::VectorXcd mismatch = ybus_ * u;
  for (Eigen::Index k = 0; k < nb; ++k) mismatch(k) += shunt_[static_cast<std::size_t>(k)] * u(k);
  for (std::size_t i = 0; i < machines_.size(); ++i) {
    const auto& m = machines_[i];
    const auto k = static_cast<Eigen::Index>(m.bus);
    mismatch(k) -= machine_current(m, x(static_cast<Eigen::Index>(i)), u(k));
  }
  Vector r(2 * nb);
  r.head(nb) = mismatch.real();
  r.tail(nb) = mismatch.imag();
  return r;
}

std::unique_ptr<DaeModel> SwingModel::clone() const { return std::make_unique<SwingModel>(*this); }

std::vector<std::string> SwingModel::diff_names() const {
  std::vector<std::string> out;
  for (const auto& m : machines_) out.push_back("delta_" + std::to_string(bus_ids_[m.bus]));
  for (const auto& m : machines_) out.push_back("omega_" + std::to_string(bus_ids_[m.bus]));
  return out;
}

std::vector<std::string> SwingModel::alg_names() const {
  std::vector<std::string> out;
  for (int id : bus_ids_) out.push_back("V_" + std::to_string(id));
  for (int id : bus_ids_) out.push_back("theta_" + std::to_string(id));
  return out;
}

DaeSystem swing_system(const SwingNetwork& net, std::optional<FaultSpec> fault) {
  std::size_t fault_bus = 0;
  if (fault) {
    fault_bus = net.bus_index(fault->bus);
    if (!(fault->duration >= 0.0)) throw std::invalid_argument("fault duration must be >= 0");
  }

  const PowerFlowResult pf = solve_power_flow(net);
  ComplexMatrix ybus = build_ybus(net, &pf.v);

  const auto nb = static_cast<Eigen::Index>(net.buses.size());
  const auto ng = static_cast<Eigen::Index>(net.machines.size());
  std::vector<SwingModel::Machine> machines;
  Vector x0(2 * ng);
  for (Eigen::Index i = 0; i < ng; ++i) {
    const auto& md = net.machines[static_cast<std::size_t>(i)];
    SwingModel::Machine m;
    m.bus = net.bus_index(md.bus);
    m.xd_prime = md.xd_prime;
    m.m = 2.0 * md.inertia_h;
    m.d = md.damping;
    const auto k = static_cast<Eigen::Index>(m.bus);
    const Complex v = std::polar(pf.v(k), pf.theta(k));
    const Complex current = std::conj(pf.s_gen[m.bus] / v);
    const Complex emf = v + Complex(0.0, m.xd_prime) * current;
    m.e = std::abs(emf);
    x0(i) = std::arg(emf);
    x0(ng + i) = 1.0;
    machines.push_back(m);
  }

  std::vector<int> ids;
  for (const auto& b : net.buses) ids.push_back(b.id);
  auto model = std::make_unique<SwingModel>(std::move(ybus), std::move(machines),
                                            2.0 * std::numbers::pi * net.frequency, ids);

  DaeState init;
  init.t = 0.0;
  init.x = x0;
  init.y.resize(2 * nb);
  init.y << pf.v, pf.theta;

  // Tighten the algebraic part on the dynamic network, then balance mechanical power.
  {
    const newton::ResidualFn residual = [&](const Vector& y) { return model->g(init.x, y, 0.0); };
    newton::NewtonSettings tight;
    tight.tolerance = 1e-12;
    try {
      init.y = newton::solve(residual, init.y, tight).solution;
    } catch (const newton::NewtonError& e) {
      throw EquilibriumNotFound(std::string("network solution failed: ") + e.what());
    }
  }
  const Vector pe = model->electrical_power(init.x, init.y);
  for (Eigen::Index i = 0; i < ng; ++i) model->machines()[static_cast<std::size_t>(i)].pm = pe(i);

  if (inf_norm(model->f(init.x, init.y, 0.0)) > 1e-8 ||
      inf_norm(model->g(init.x, init.y, 0.0)) > 1e-8) {
    throw EquilibriumNotFound("equilibrium residual above 1e-8");
  }

  std::vector<Event> events;
  if (fault) {
    const Complex y_fault = net.fault_admittance;
    const std::string where = "bus " + std::to_string(fault->bus);
    events.push_back({fault->start, "fault on " + where, [fault_bus, y_fault](DaeModel& m) {
                        dynamic_cast<SwingModel&>(m).set_fault_shunt(fault_bus, y_fault);
                      }});
    events.push_back({fault->start + fault->duration, "fault off " + where,
                      [fault_bus](DaeModel& m) {
                        dynamic_cast<SwingModel&>(m).set_fault_shunt(fault_bus, Complex{});
                      }});
  }
  return DaeSystem(std::move(model), std::move(init), std::move(events), "swing:" + net.name);
}

DaeSystem swing_system(const std::string& fixture, std::optional<FaultSpec> fault) {
  return swing_system(resolve_fixture(fixture), fault);
}

}  // namespace pcmsim::models
