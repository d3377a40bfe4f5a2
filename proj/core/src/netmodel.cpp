#include "gridanneal/netmodel.hpp"

#include <cmath>
#include <set>
#include <tuple>

#include "gridanneal/errors.hpp"

namespace gridanneal {

int NetworkCase::slack_index() const {
  for (const Bus& b : buses)
    if (b.kind == BusKind::Slack) return b.id;
  return -1;
}

int NetworkCase::internal_id(int external) const {
  for (const Bus& b : buses)
    if (b.external_id == external) return b.id;
  return -1;
}

std::vector<double> NetworkCase::p_specified() const {
  std::vector<double> p(buses.size(), 0.0);
  for (const Bus& b : buses) p[b.id] -= b.p_demand;
  for (const Generator& g : generators) p[g.bus] += g.p_out;
  return p;
}

std::vector<double> NetworkCase::q_specified() const {
  std::vector<double> q(buses.size(), 0.0);
  for (const Bus& b : buses) q[b.id] -= b.q_demand;
  for (const Generator& g : generators) q[g.bus] += g.q_out;
  return q;
}

void validate(const NetworkCase& net) {
  const int n = static_cast<int>(net.buses.size());
  if (n == 0) throw ValidationError("case has no buses");
  if (net.mva_base <= 0.0) throw ValidationError("mva_base must be positive");

  int slack_count = 0;
  std::set<int> ext_ids;
  for (int i = 0; i < n; ++i) {
    const Bus& b = net.buses[i];
    if (b.id != i)
      throw ValidationError("bus at position " + std::to_string(i) +
                            " has internal id " + std::to_string(b.id));
    if (!ext_ids.insert(b.external_id).second)
      throw ValidationError("duplicate external bus id " +
                            std::to_string(b.external_id));
    if (b.kind == BusKind::Slack) ++slack_count;
    if (!(b.v_min > 0.0) || !(b.v_max >= b.v_min))
      throw ValidationError("bus " + std::to_string(b.external_id) +
                            ": voltage bounds must satisfy 0 < v_min <= v_max");
    if (b.delta_max < b.delta_min)
      throw ValidationError("bus " + std::to_string(b.external_id) +
                            ": angle bounds inverted");
  }
  if (slack_count != 1)
    throw ValidationError("case must have exactly one slack bus, found " +
                          std::to_string(slack_count));

  std::set<std::tuple<int, int, int>> seen;
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const Branch& br = net.branches[k];
    if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n)
      throw ValidationError("branch " + std::to_string(k) +
                            " references a nonexistent bus");
    if (br.from == br.to)
      throw ValidationError("branch " + std::to_string(k) + " is a self-loop");
    if (br.r == 0.0 && br.x == 0.0)
      throw ValidationError("branch " + std::to_string(k) +
                            " has zero impedance");
    if (br.tap_ratio <= 0.0)
      throw ValidationError("branch " + std::to_string(k) +
                            " has non-positive tap ratio");
    if (!seen.insert({br.from, br.to, br.circuit}).second)
      throw ValidationError("duplicate branch (" + std::to_string(br.from) +
                            "," + std::to_string(br.to) + ") circuit " +
                            std::to_string(br.circuit) +
                            " without distinct circuit id");
  }

  for (std::size_t k = 0; k < net.generators.size(); ++k) {
    const Generator& g = net.generators[k];
    if (g.bus < 0 || g.bus >= n)
      throw ValidationError("generator " + std::to_string(k) +
                            " references a nonexistent bus");
    if (g.p_max < g.p_min || g.q_max < g.q_min)
      throw ValidationError("generator " + std::to_string(k) +
                            " has inverted output bounds");
  }
}

void AdmittanceMatrix::add(int i, int k, std::complex<double> y) {
  rows_.at(i)[k] += y;
}

std::complex<double> AdmittanceMatrix::at(int i, int k) const {
  const auto& row = rows_.at(i);
  auto it = row.find(k);
  return it == row.end() ? std::complex<double>(0.0, 0.0) : it->second;
}

VoltageState VoltageState::flat(const NetworkCase& net, double d_mu0,
                                double d_omega0) {
  VoltageState v;
  const std::size_t n = net.buses.size();
  v.mu.assign(n, 1.0);
  v.omega.assign(n, 0.0);
  v.d_mu.assign(n, d_mu0);
  v.d_omega.assign(n, d_omega0);
  for (const Bus& b : net.buses)
    if (b.kind != BusKind::PQ) v.mu[b.id] = b.v_set;
  return v;
}

double VoltageState::vm(int i) const {
  return std::hypot(mu.at(i), omega.at(i));
}

double VoltageState::va_deg(int i) const {
  return std::atan2(omega.at(i), mu.at(i)) * 180.0 / M_PI;
}

AdmittanceMatrix build_admittance(const NetworkCase& net) {
  validate(net);
  AdmittanceMatrix y(net.buses.size());

  for (const Branch& br : net.branches) {
    const std::complex<double> zs(br.r, br.x);
    const std::complex<double> ys = 1.0 / zs;
    const std::complex<double> ysh(0.0, br.b_shunt / 2.0);
    const double a = br.tap_ratio;

    y.add(br.from, br.from, (ys + ysh) / (a * a));
    y.add(br.to, br.to, ys + ysh);
    y.add(br.from, br.to, -ys / a);
    y.add(br.to, br.from, -ys / a);
  }

  for (const Bus& b : net.buses) {
    if (b.g_shunt != 0.0 || b.b_shunt != 0.0)
      y.add(b.id, b.id,
            std::complex<double>(b.g_shunt, b.b_shunt) / net.mva_base);
  }
  return y;
}

Injections compute_injections_pu(const AdmittanceMatrix& y,
                                 const VoltageState& v) {
  const std::size_t n = y.size();
  Injections out;
  out.p.assign(n, 0.0);
  out.q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = v.mu[i];
    const double oi = v.omega[i];
    double p = 0.0, q = 0.0;
    for (const auto& [j, yij] : y.row(static_cast<int>(i))) {
      const double g = yij.real();
      const double b = yij.imag();
      const double mj = v.mu[j];
      const double oj = v.omega[j];
      const double sym = mi * mj + oi * oj;
      const double asym = oi * mj - mi * oj;
      p += g * sym + b * asym;
      q += g * asym - b * sym;
    }
    out.p[i] = p;
    out.q[i] = q;
  }
  return out;
}

Injections compute_injections(const AdmittanceMatrix& y, const VoltageState& v,
                              double mva_base) {
  Injections out = compute_injections_pu(y, v);
  for (double& x : out.p) x *= mva_base;
  for (double& x : out.q) x *= mva_base;
  return out;
}

}  // namespace gridanneal
