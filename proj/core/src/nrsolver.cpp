#include "gridanneal/nrsolver.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "gridanneal/errors.hpp"

namespace gridanneal {

NrResult solve_nr(const NetworkCase& net, const NrOptions& opts,
                  const VoltageState* initial) {
  validate(net);
  const AdmittanceMatrix y = build_admittance(net);
  const int n = static_cast<int>(net.buses.size());
  const int slack = net.slack_index();

  NrResult res;
  res.state = (!opts.flat_start && initial) ? *initial
                                            : VoltageState::flat(net);
  std::vector<double>& mu = res.state.mu;
  std::vector<double>& om = res.state.omega;

  // Scheduled injections in p.u.
  std::vector<double> p_spec = net.p_specified();
  std::vector<double> q_spec = net.q_specified();
  for (double& v : p_spec) v /= net.mva_base;
  for (double& v : q_spec) v /= net.mva_base;

  // Unknown layout: for each non-slack bus, (mu_i, omega_i).
  std::vector<int> unknown_of_bus(n, -1);
  std::vector<int> bus_of_unknown;
  for (int i = 0; i < n; ++i) {
    if (i == slack) continue;
    unknown_of_bus[i] = static_cast<int>(bus_of_unknown.size());
    bus_of_unknown.push_back(i);
  }
  const int m = static_cast<int>(bus_of_unknown.size());

  Eigen::MatrixXd jac(2 * m, 2 * m);
  Eigen::VectorXd f(2 * m);

  for (int iter = 0;; ++iter) {
    // Row intermediates: (YV)_i = a_i + j b_i.
    std::vector<double> a(n, 0.0), b(n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (const auto& [j, yij] : y.row(i)) {
        a[i] += yij.real() * mu[j] - yij.imag() * om[j];
        b[i] += yij.real() * om[j] + yij.imag() * mu[j];
      }
    }

    double max_mis = 0.0;
    for (int k = 0; k < m; ++k) {
      const int i = bus_of_unknown[k];
      const Bus& bus = net.buses[i];
      const double p = mu[i] * a[i] + om[i] * b[i];
      f(2 * k) = p_spec[i] - p;
      if (bus.kind == BusKind::PV) {
        const double vset2 = bus.v_set * bus.v_set;
        f(2 * k + 1) = vset2 - (mu[i] * mu[i] + om[i] * om[i]);
      } else {
        const double q = om[i] * a[i] - mu[i] * b[i];
        f(2 * k + 1) = q_spec[i] - q;
      }
      max_mis = std::max({max_mis, std::abs(f(2 * k)), std::abs(f(2 * k + 1))});
    }

    res.iterations = iter;
    res.max_mismatch = max_mis;
    if (!std::isfinite(max_mis)) {
      res.failure = "iterates diverged to non-finite values";
      return res;
    }
    if (max_mis <= opts.tolerance) {
      res.converged = true;
      return res;
    }
    if (iter >= opts.max_iterations) {
      res.failure = "no convergence within " +
                    std::to_string(opts.max_iterations) + " iterations";
      return res;
    }

    jac.setZero();
    for (int k = 0; k < m; ++k) {
      const int i = bus_of_unknown[k];
      const Bus& bus = net.buses[i];
      for (const auto& [j, yij] : y.row(i)) {
        const int c = unknown_of_bus[j];
        if (c < 0) continue;
        const double g = yij.real();
        const double bb = yij.imag();
        // dP_i/dmu_j, dP_i/domega_j
        jac(2 * k, 2 * c) += mu[i] * g + om[i] * bb;
        jac(2 * k, 2 * c + 1) += om[i] * g - mu[i] * bb;
        if (bus.kind != BusKind::PV) {
          // dQ_i/dmu_j, dQ_i/domega_j
          jac(2 * k + 1, 2 * c) += om[i] * g - mu[i] * bb;
          jac(2 * k + 1, 2 * c + 1) += -(mu[i] * g + om[i] * bb);
        }
      }
      const int ci = unknown_of_bus[i];
      jac(2 * k, 2 * ci) += a[i];
      jac(2 * k, 2 * ci + 1) += b[i];
      if (bus.kind == BusKind::PV) {
        jac(2 * k + 1, 2 * ci) = 2.0 * mu[i];
        jac(2 * k + 1, 2 * ci + 1) = 2.0 * om[i];
      } else {
        jac(2 * k + 1, 2 * ci) += -b[i];
        jac(2 * k + 1, 2 * ci + 1) += a[i];
      }
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) {
      res.failure = "singular Jacobian at iteration " + std::to_string(iter);
      return res;
    }
    const Eigen::VectorXd dx = lu.solve(f);
    if (!dx.allFinite()) {
      res.failure = "non-finite Newton step at iteration " +
                    std::to_string(iter);
      return res;
    }
    for (int k = 0; k < m; ++k) {
      const int i = bus_of_unknown[k];
      mu[i] += dx(2 * k);
      om[i] += dx(2 * k + 1);
    }
  }
}

}  // namespace gridanneal
