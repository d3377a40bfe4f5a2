#pragma once

#include <string>
#include <vector>

#include "gridanneal/aqopf.hpp"
#include "gridanneal/aqpf.hpp"
#include "gridanneal/netmodel.hpp"
#include "gridanneal/nrsolver.hpp"

namespace gridanneal {

// Solved operating point of one bus, external numbering, injections in
// physical units (generation positive).
struct BusRow {
  int bus = 0;
  double vm_pu = 0.0;
  double va_deg = 0.0;
  double p_mw = 0.0;
  double q_mvar = 0.0;
};

std::vector<BusRow> bus_table(const NetworkCase& net, const VoltageState& v);

// Deviation of a solved state from a reference state: mean squared injection
// differences over all buses plus worst-case voltage deviations.
struct MseStats {
  double mse_p_mw2 = 0.0;
  double mse_q_mvar2 = 0.0;
  double mse_vm_pu2 = 0.0;
  double max_vm_diff_pu = 0.0;
  double max_va_diff_deg = 0.0;
};

MseStats mse_against(const NetworkCase& net, const VoltageState& v,
                     const VoltageState& reference);

// runreport-v1 JSON documents. The residual field is the power balance
// objective at the reported state, labelled (MW^2+MVAR^2)/2. Pass a
// reference state to add the deviation block.
std::string report_nr(const NetworkCase& net, const NrResult& result,
                      const NrOptions& opts, double wall_s,
                      const VoltageState* reference = nullptr);
std::string report_aqpf(const NetworkCase& net, const SolveTrace& trace,
                        const AqpfOptions& opts, double wall_s,
                        const VoltageState* reference = nullptr);
std::string report_aqopf(const NetworkCase& net, const OpfTrace& trace,
                         const AqopfOptions& opts, double wall_s,
                         const VoltageState* reference = nullptr);

const char* status_name(SolveStatus s);

// Per-iteration convergence history as trace-v1 JSON or flat CSV
// (case, solver, iteration, residual, ... columns).
std::string trace_json(const std::string& case_name, const std::string& solver,
                       const std::vector<IterationRecord>& records);
std::string trace_csv(const std::string& case_name, const std::string& solver,
                      const std::vector<IterationRecord>& records);

}  // namespace gridanneal
