#pragma once

#include <array>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pcmsim/core.hpp"

namespace pcmsim::models {

/// Four decoupled decays x_i' = -x_i / tau_i, x_i(0) = 1.
struct AnalyticSystem {
  static constexpr std::array<double, 4> time_constants{10.0, 1.0, 0.1, 0.01};

  [[nodiscard]] static Vector exact_solution(double t);
  [[nodiscard]] static double exact_sum(double t);
};

[[nodiscard]] DaeSystem analytic_system();

/// Scalar x' = lambda * x, x(0) = 1.
[[nodiscard]] DaeSystem linear_system(double lambda);

// ---------------------------------------------------------------------------
// Classical multi-machine swing model with a retained network.

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

class EquilibriumNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FixtureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FaultSpec {
  int bus = 0;  // fixture bus number
  double start = 1.0;
  double duration = 0.1;
};

enum class BusType { Slack, PV, PQ };

struct BusData {
  int id = 0;
  BusType type = BusType::PQ;
  double v_set = 1.0;  // slack and PV buses
  double p_gen = 0.0;  // PV buses
};

struct LineData {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;  // total line charging
};

struct MachineData {
  int bus = 0;
  double xd_prime = 0.0;
  double inertia_h = 0.0;  // M = 2H
  double damping = 0.0;
};

struct LoadData {
  int bus = 0;
  double p = 0.0;
  double q = 0.0;
};

/// Contents of a fixture file, all values per unit on the system base.
struct SwingNetwork {
  std::string name = "network";
  double frequency = 60.0;
  double base_mva = 100.0;
  Complex fault_admittance{0.0, -1e4};
  std::vector<BusData> buses;
  std::vector<LineData> lines;
  std::vector<MachineData> machines;
  std::vector<LoadData> loads;

  [[nodiscard]] std::size_t bus_index(int id) const;
};

[[nodiscard]] SwingNetwork parse_fixture(std::string_view text, std::string name = "network");
[[nodiscard]] SwingNetwork load_fixture(const std::string& path);

/// Bundled fixture text by name ("wscc9"), or nullopt.
[[nodiscard]] std::optional<std::string_view> builtin_fixture(std::string_view name);

/// Resolves a bundled fixture name first, then a file path.
[[nodiscard]] SwingNetwork resolve_fixture(const std::string& name_or_path);

/// Power-flow solution at every bus.
struct PowerFlowResult {
  Vector v;
  Vector theta;
  std::vector<Complex> s_gen;  // per bus generation
  int iterations = 0;
};

/// Newton power flow with loads as constant power. Throws EquilibriumNotFound.
[[nodiscard]] PowerFlowResult solve_power_flow(const SwingNetwork& net);

/// Network admittance matrix of lines, and optionally constant-admittance loads
/// at the given bus voltages.
[[nodiscard]] ComplexMatrix build_ybus(const SwingNetwork& net, const Vector* load_voltage);

/// x = (delta_1..delta_n, omega_1..omega_n), y = (V_1..V_N, theta_1..theta_N).
/// g stacks real then imaginary parts of the current balance at every bus.
class SwingModel final : public DaeModel {
 public:
  struct Machine {
    std::size_t bus = 0;  // index into the bus list
    double xd_prime = 0.0;
    double m = 0.0;
    double d = 0.0;
    double e = 0.0;
    double pm = 0.0;
  };

  SwingModel(ComplexMatrix ybus, std::vector<Machine> machines, double omega_base,
             std::vector<int> bus_ids);

  std::size_t n_diff() const override { return 2 * machines_.size(); }
  std::size_t n_alg() const override { return 2 * static_cast<std::size_t>(ybus_.rows()); }
  Vector f(const Vector& x, const Vector& y, double t) const override;
  Vector g(const Vector& x, const Vector& y, double t) const override;
  std::unique_ptr<DaeModel> clone() const override;
  std::vector<std::string> diff_names() const override;
  std::vector<std::string> alg_names() const override;

  [[nodiscard]] const ComplexMatrix& ybus() const { return ybus_; }
  [[nodiscard]] const std::vector<Machine>& machines() const { return machines_; }
  [[nodiscard]] std::vector<Machine>& machines() { return machines_; }
  [[nodiscard]] double omega_base() const { return omega_base_; }
  [[nodiscard]] const std::vector<Complex>& fault_shunts() const { return shunt_; }
  [[nodiscard]] const std::vector<int>& bus_ids() const { return bus_ids_; }

  void set_fault_shunt(std::size_t bus_index, Complex y) { shunt_.at(bus_index) = y; }

  /// Electrical power of each machine.
  [[nodiscard]] Vector electrical_power(const Vector& x, const Vector& y) const;

 private:
  ComplexMatrix ybus_;
  std::vector<Complex> shunt_;
  std::vector<Machine> machines_;
  double omega_base_;
  std::vector<int> bus_ids_;
};

/// Builds the swing DAE at its pre-fault equilibrium. With a fault, adds two
/// events: the fault shunt is applied at `start` and removed at `start + duration`.
[[nodiscard]] DaeSystem swing_system(const SwingNetwork& net,
                                     std::optional<FaultSpec> fault = std::nullopt);
[[nodiscard]] DaeSystem swing_system(const std::string& fixture,
                                     std::optional<FaultSpec> fault = std::nullopt);

}  // namespace pcmsim::models
