#include "gridanneal/report.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace gridanneal {

namespace {

using nlohmann::json;

constexpr const char* kResidualUnit = "(MW^2+MVAR^2)/2";

json bus_table_json(const NetworkCase& net, const VoltageState& v) {
  json rows = json::array();
  for (const BusRow& r : bus_table(net, v)) {
    rows.push_back({{"bus", r.bus},
                    {"vm_pu", r.vm_pu},
                    {"va_deg", r.va_deg},
                    {"p_mw", r.p_mw},
                    {"q_mvar", r.q_mvar}});
  }
  return rows;
}

json mse_json(const MseStats& m) {
  return {{"mse_p_mw2", m.mse_p_mw2},
          {"mse_q_mvar2", m.mse_q_mvar2},
          {"mse_vm_pu2", m.mse_vm_pu2},
          {"max_vm_diff_pu", m.max_vm_diff_pu},
          {"max_va_diff_deg", m.max_va_diff_deg}};
}

double mean_positive(const std::vector<double>& xs) {
  double sum = 0.0;
  int n = 0;
  for (double x : xs)
    if (x > 0.0) {
      sum += x;
      ++n;
    }
  return n > 0 ? sum / n : 0.0;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

std::vector<BusRow> bus_table(const NetworkCase& net, const VoltageState& v) {
  const AdmittanceMatrix y = build_admittance(net);
  const Injections inj = compute_injections(y, v, net.mva_base);
  std::vector<BusRow> rows;
  rows.reserve(net.buses.size());
  for (const Bus& b : net.buses) {
    BusRow r;
    r.bus = b.external_id;
    r.vm_pu = v.vm(b.id);
    r.va_deg = v.va_deg(b.id);
    r.p_mw = inj.p[b.id];
    r.q_mvar = inj.q[b.id];
    rows.push_back(r);
  }
  return rows;
}

MseStats mse_against(const NetworkCase& net, const VoltageState& v,
                     const VoltageState& reference) {
  const AdmittanceMatrix y = build_admittance(net);
  const Injections a = compute_injections(y, v, net.mva_base);
  const Injections b = compute_injections(y, reference, net.mva_base);
  MseStats m;
  // Averages run over non-slack buses: the slack bus has no specified
  // injections, so its values measure network conditioning rather than
  // solution quality.
  const int n = static_cast<int>(net.buses.size());
  int counted = 0;
  for (int i = 0; i < n; ++i) {
    if (net.buses[i].kind == BusKind::Slack) continue;
    ++counted;
    const double dp = a.p[i] - b.p[i];
    const double dq = a.q[i] - b.q[i];
    m.mse_p_mw2 += dp * dp;
    m.mse_q_mvar2 += dq * dq;
    const double dv = v.vm(i) - reference.vm(i);
    m.mse_vm_pu2 += dv * dv;
    m.max_vm_diff_pu = std::max(m.max_vm_diff_pu, std::abs(dv));
    m.max_va_diff_deg =
        std::max(m.max_va_diff_deg, std::abs(v.va_deg(i) - reference.va_deg(i)));
  }
  if (counted > 0) {
    m.mse_p_mw2 /= counted;
    m.mse_q_mvar2 /= counted;
    m.mse_vm_pu2 /= counted;
  }
  return m;
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged:
      return "converged";
    case SolveStatus::MaxIterations:
      return "max_iterations";
    case SolveStatus::Stalled:
      return "stalled";
  }
  return "unknown";
}

std::string report_nr(const NetworkCase& net, const NrResult& result,
                      const NrOptions& opts, double wall_s,
                      const VoltageState* reference) {
  const AdmittanceMatrix y = build_admittance(net);
  json doc;
  doc["format"] = "runreport-v1";
  doc["case"] = net.name;
  doc["solver"] = "nr";
  doc["converged"] = result.converged;
  doc["iterations"] = result.iterations;
  doc["residual"] =
      numeric_mismatch_objective(net, y, result.state) / 2.0;
  doc["residual_unit"] = kResidualUnit;
  doc["max_mismatch_pu"] = result.max_mismatch;
  doc["buses"] = bus_table_json(net, result.state);
  doc["timing"] = {{"wall_s", wall_s}};
  doc["config"] = {{"tolerance", opts.tolerance},
                   {"max_iterations", opts.max_iterations},
                   {"flat_start", opts.flat_start}};
  if (!result.failure.empty()) doc["failure"] = result.failure;
  if (reference)
    doc["deviation"] = mse_json(mse_against(net, result.state, *reference));
  return doc.dump(2) + "\n";
}

std::string report_aqpf(const NetworkCase& net, const SolveTrace& trace,
                        const AqpfOptions& opts, double wall_s,
                        const VoltageState* reference) {
  json doc;
  doc["format"] = "runreport-v1";
  doc["case"] = net.name;
  doc["solver"] = "aqpf";
  doc["converged"] = trace.converged;
  doc["status"] = status_name(trace.status);
  doc["iterations"] = trace.iterations;
  doc["residual"] = trace.final_residual;
  doc["residual_unit"] = kResidualUnit;
  doc["initial_residual"] = trace.initial_residual;
  doc["buses"] = bus_table_json(net, trace.final_state);
  doc["variables"] = {{"base", trace.base_vars},
                      {"slack", trace.slack_vars},
                      {"aux", trace.aux_vars},
                      {"total", trace.total_vars}};
  doc["timing"] = {{"wall_s", wall_s}};
  doc["config"] = {
      {"epsilon", opts.epsilon},
      {"max_iterations", opts.max_iterations},
      {"seed", opts.seed},
      {"partition_fraction", opts.partition_fraction},
      {"pv_mode", opts.pv_mode == PvMode::AsPq ? "as_pq" : "magnitude_penalty"},
      {"anneal_reads", opts.anneal_reads},
      {"anneal_sweeps", opts.anneal_sweeps},
      {"anneal_replicas", opts.anneal_replicas}};
  if (!trace.failure.empty()) doc["failure"] = trace.failure;
  if (reference)
    doc["deviation"] =
        mse_json(mse_against(net, trace.final_state, *reference));
  return doc.dump(2) + "\n";
}

std::string report_aqopf(const NetworkCase& net, const OpfTrace& trace,
                         const AqopfOptions& opts, double wall_s,
                         const VoltageState* reference) {
  json doc;
  doc["format"] = "runreport-v1";
  doc["case"] = net.name;
  doc["solver"] = "aqopf";
  doc["converged"] = trace.converged;
  doc["status"] = status_name(trace.status);
  doc["iterations"] = trace.iterations;
  doc["residual"] = trace.final_residual;
  doc["residual_unit"] = kResidualUnit;
  doc["initial_residual"] = trace.initial_residual;
  doc["full_residual"] = trace.full_residual;
  doc["buses"] = bus_table_json(net, trace.final_state);
  json dispatch = json::array();
  for (const DispatchRecord& d : trace.dispatch) {
    dispatch.push_back({{"gen", d.gen},
                        {"bus", net.buses[d.bus].external_id},
                        {"p_mw", d.p_mw},
                        {"q_mvar", d.q_mvar},
                        {"implied", d.implied}});
  }
  doc["dispatch"] = dispatch;
  doc["total_cost"] = trace.total_cost;
  doc["violations"] = trace.violations;
  doc["variables"] = {{"base", trace.base_vars},
                      {"slack", trace.slack_vars},
                      {"aux", trace.aux_vars},
                      {"total", trace.total_vars}};
  doc["timing"] = {{"wall_s", wall_s}};
  doc["config"] = {
      {"epsilon", opts.epsilon},
      {"max_iterations", opts.max_iterations},
      {"seed", opts.seed},
      {"cost_form", opts.cost_form == CostForm::Squared ? "squared" : "linear"},
      {"slack_bits", opts.slack_bits},
      {"anneal_reads", opts.anneal_reads},
      {"anneal_sweeps", opts.anneal_sweeps},
      {"anneal_replicas", opts.anneal_replicas}};
  if (!trace.failure.empty()) doc["failure"] = trace.failure;
  if (reference)
    doc["deviation"] =
        mse_json(mse_against(net, trace.final_state, *reference));
  return doc.dump(2) + "\n";
}

std::string trace_json(const std::string& case_name, const std::string& solver,
                       const std::vector<IterationRecord>& records) {
  json doc;
  doc["format"] = "trace-v1";
  doc["case"] = case_name;
  doc["solver"] = solver;
  json rows = json::array();
  for (const IterationRecord& r : records) {
    rows.push_back({{"iteration", r.iteration},
                    {"residual", r.residual},
                    {"base_energy", r.base_energy},
                    {"best_energy", r.best_energy},
                    {"accepted", r.accepted},
                    {"retries", r.retries},
                    {"vars_total", r.vars_total},
                    {"vars_aux", r.vars_aux},
                    {"excluded_buses", r.excluded_buses},
                    {"d_mu_mean", mean_positive(r.d_mu)},
                    {"d_omega_mean", mean_positive(r.d_omega)},
                    {"t_build_s", r.t_build_s},
                    {"t_quadratize_s", r.t_quadratize_s},
                    {"t_anneal_s", r.t_anneal_s},
                    {"t_update_s", r.t_update_s}});
  }
  doc["records"] = rows;
  return doc.dump(2) + "\n";
}

std::string trace_csv(const std::string& case_name, const std::string& solver,
                      const std::vector<IterationRecord>& records) {
  std::string out =
      "case,solver,iteration,residual,base_energy,best_energy,accepted,"
      "retries,vars_total,vars_aux,excluded_buses,d_mu_mean,d_omega_mean,"
      "t_build_s,t_quadratize_s,t_anneal_s,t_update_s\n";
  for (const IterationRecord& r : records) {
    out += case_name + "," + solver + "," + std::to_string(r.iteration) + "," +
           fmt(r.residual) + "," + fmt(r.base_energy) + "," +
           fmt(r.best_energy) + "," + (r.accepted ? "1" : "0") + "," +
           std::to_string(r.retries) + "," + std::to_string(r.vars_total) +
           "," + std::to_string(r.vars_aux) + "," +
           std::to_string(r.excluded_buses) + "," +
           fmt(mean_positive(r.d_mu)) + "," + fmt(mean_positive(r.d_omega)) +
           "," + fmt(r.t_build_s) + "," + fmt(r.t_quadratize_s) + "," +
           fmt(r.t_anneal_s) + "," + fmt(r.t_update_s) + "\n";
  }
  return out;
}

}  // namespace gridanneal
