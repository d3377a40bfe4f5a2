#pragma once

#include <string>
#include <vector>

#include "gridanneal/netmodel.hpp"

namespace gridanneal {

struct NrOptions {
  double tolerance = 1e-8;  // max |mismatch| in p.u.
  int max_iterations = 20;
  bool flat_start = true;   // otherwise the caller-provided state seeds
  // Plain Newton on purpose: no damping or line search, so genuinely
  // ill-conditioned cases fail here instead of being papered over.
};

struct NrResult {
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;  // p.u., at exit
  VoltageState state;
  std::string failure;  // empty when converged
};

// Rectangular-coordinate Newton-Raphson. PQ buses contribute P and Q
// mismatch rows; PV buses contribute P and a squared-magnitude row
// (mu^2 + omega^2 = v_set^2); the slack bus is held fixed. The Jacobian is
// analytic and solved densely (LU). Deterministic: identical inputs produce
// bit-identical iterates.
NrResult solve_nr(const NetworkCase& net, const NrOptions& opts = {},
                  const VoltageState* initial = nullptr);

}  // namespace gridanneal
