#pragma once

#include <array>
#include <complex>
#include <map>
#include <string>
#include <vector>

namespace gridanneal {

enum class BusKind { Slack, PV, PQ };

// Buses carry dense internal indices 0..N-1; the id found in the source file
// is kept in external_id for reporting and round-trips.
struct Bus {
  int id = 0;
  int external_id = 0;
  BusKind kind = BusKind::PQ;
  double p_demand = 0.0;  // MW
  double q_demand = 0.0;  // MVAR
  double v_set = 1.0;     // p.u. setpoint (PV and slack)
  double v_min = 0.9;     // p.u.
  double v_max = 1.1;
  double delta_min = -180.0;  // degrees
  double delta_max = 180.0;
  double g_shunt = 0.0;  // MW consumed at 1 p.u.
  double b_shunt = 0.0;  // MVAR injected at 1 p.u.

  bool operator==(const Bus&) const = default;
};

// Pi-model branch; tap_ratio is the from-side off-nominal turns ratio
// (1.0 means nominal). circuit distinguishes parallel branches between the
// same pair of buses.
struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;        // p.u.
  double x = 0.0;        // p.u.
  double b_shunt = 0.0;  // total line charging, p.u.
  double tap_ratio = 1.0;
  int circuit = 0;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  int bus = 0;  // internal bus index
  double p_out = 0.0;  // MW
  double q_out = 0.0;  // MVAR
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  // Polynomial cost c2*P^2 + c1*P + c0 with P in MW, cost in $/h.
  std::array<double, 3> cost_coeffs{0.0, 0.0, 0.0};

  bool operator==(const Generator&) const = default;
};

struct NetworkCase {
  std::string name;
  double mva_base = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;

  bool operator==(const NetworkCase&) const = default;

  int slack_index() const;
  int external_id(int internal) const { return buses.at(internal).external_id; }
  int internal_id(int external) const;  // -1 if unknown

  // Net scheduled injection per bus, MW / MVAR (sum of generation minus demand).
  std::vector<double> p_specified() const;
  std::vector<double> q_specified() const;
};

// Throws ValidationError on: no/multiple slack, dangling branch endpoints,
// duplicate (from,to,circuit) triples, non-positive or degenerate voltage
// bounds, zero-impedance branches, duplicate external ids.
void validate(const NetworkCase& net);

// Sparse complex bus admittance matrix with deterministic (ordered) rows.
class AdmittanceMatrix {
 public:
  AdmittanceMatrix() = default;
  explicit AdmittanceMatrix(std::size_t n) : n_(n), rows_(n) {}

  std::size_t size() const { return n_; }
  void add(int i, int k, std::complex<double> y);
  std::complex<double> at(int i, int k) const;
  const std::map<int, std::complex<double>>& row(int i) const { return rows_.at(i); }

 private:
  std::size_t n_ = 0;
  std::vector<std::map<int, std::complex<double>>> rows_;
};

// Rectangular voltage state: V_i = mu_i + j*omega_i (p.u.). d_mu/d_omega are
// the per-bus increment step sizes used by the annealing solvers.
struct VoltageState {
  std::vector<double> mu;
  std::vector<double> omega;
  std::vector<double> d_mu;
  std::vector<double> d_omega;

  static VoltageState flat(const NetworkCase& net, double d_mu0 = 1e-2,
                           double d_omega0 = 1e-3);
  double vm(int i) const;         // magnitude, p.u.
  double va_deg(int i) const;     // angle, degrees
};

// Branch and shunt admittances accumulated per the pi model; off-nominal tap
// on the from side: diagonal from-side term divided by tap^2, off-diagonals
// by tap.
AdmittanceMatrix build_admittance(const NetworkCase& net);

struct Injections {
  std::vector<double> p;
  std::vector<double> q;
};

// Net complex power injections at every bus for a given voltage state,
// evaluated with the real rectangular sums
//   P_i = sum_j G_ij(mu_i mu_j + om_i om_j) + B_ij(om_i mu_j - mu_i om_j)
//   Q_i = sum_j G_ij(om_i mu_j - mu_i om_j) - B_ij(mu_i mu_j + om_i om_j).
Injections compute_injections_pu(const AdmittanceMatrix& y, const VoltageState& v);

// Same, scaled to MW / MVAR by the case MVA base.
Injections compute_injections(const AdmittanceMatrix& y, const VoltageState& v,
                              double mva_base);

}  // namespace gridanneal
