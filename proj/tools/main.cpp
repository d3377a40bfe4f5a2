// gridanneal command line tool: power flow and optimal power flow with the
// annealing pipeline or the Newton oracle, case perturbation for stress
// studies, and a benchmark harness that emits CSV/JSON summaries.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridanneal/aqopf.hpp"
#include "gridanneal/aqpf.hpp"
#include "gridanneal/caseio.hpp"
#include "gridanneal/errors.hpp"
#include "gridanneal/netmodel.hpp"
#include "gridanneal/nrsolver.hpp"
#include "gridanneal/report.hpp"

using namespace gridanneal;
using nlohmann::json;

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel g_log = LogLevel::Info;

void log_info(const std::string& msg) {
  if (g_log >= LogLevel::Info) std::cerr << "[gridanneal] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (g_log >= LogLevel::Debug) std::cerr << "[gridanneal] " << msg << "\n";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

// Emits the report to --out when given, stdout otherwise. Reports are
// written even for non-converged runs so a failed solve still leaves its
// diagnostics behind.
void emit_report(const std::string& out_path, const std::string& report) {
  if (out_path.empty())
    std::cout << report << "\n";
  else
    write_text(out_path, report);
}

// Rebuilds a voltage state from the bus table of a previously written
// runreport-v1 document, matching buses by external id.
VoltageState state_from_report(const std::string& path,
                               const NetworkCase& net) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read reference report: " + path);
  json doc = json::parse(in);
  if (doc.value("format", "") != "runreport-v1")
    throw std::runtime_error(path + ": not a runreport-v1 document");

  VoltageState v = VoltageState::flat(net);
  std::vector<bool> seen(net.buses.size(), false);
  for (const json& row : doc.at("buses")) {
    const int ext = row.at("bus").get<int>();
    int idx = -1;
    for (std::size_t i = 0; i < net.buses.size(); ++i)
      if (net.buses[i].external_id == ext) idx = static_cast<int>(i);
    if (idx < 0)
      throw std::runtime_error(path + ": reference bus " +
                               std::to_string(ext) + " not in this case");
    const double vm = row.at("vm_pu").get<double>();
    const double va = row.at("va_deg").get<double>() * M_PI / 180.0;
    v.mu[idx] = vm * std::cos(va);
    v.omega[idx] = vm * std::sin(va);
    seen[idx] = true;
  }
  for (std::size_t i = 0; i < net.buses.size(); ++i)
    if (!seen[i])
      throw std::runtime_error(path + ": reference misses bus " +
                               std::to_string(net.buses[i].external_id));
  return v;
}

struct CommonFlags {
  std::uint64_t seed = 12345;
  int threads = 0;
  std::string log_level = "info";
};

void apply_log_level(const CommonFlags& cf) {
  if (cf.log_level == "quiet")
    g_log = LogLevel::Quiet;
  else if (cf.log_level == "debug")
    g_log = LogLevel::Debug;
  else
    g_log = LogLevel::Info;
}

int run_pf(const std::string& case_path, const std::string& solver,
           const CommonFlags& cf, double epsilon, int max_iter,
           double partition_fraction, int stall_limit,
           const std::string& pv_mode, const std::string& reference_path,
           const std::string& out_path, const std::string& trace_path) {
  NetworkCase net = load_case_file(case_path);
  std::optional<VoltageState> reference;
  if (!reference_path.empty())
    reference = state_from_report(reference_path, net);

  const auto t0 = std::chrono::steady_clock::now();
  if (solver == "nr") {
    NrOptions opts;
    opts.max_iterations = max_iter > 0 ? max_iter : opts.max_iterations;
    NrResult res = solve_nr(net, opts);
    const double wall = seconds_since(t0);
    log_info("nr: " + std::string(res.converged ? "converged" : "failed") +
             " in " + std::to_string(res.iterations) + " iterations");
    emit_report(out_path, report_nr(net, res, opts, wall,
                                    reference ? &*reference : nullptr));
    return res.converged ? 0 : 1;
  }

  AqpfOptions opts;
  opts.seed = cf.seed;
  opts.threads = cf.threads;
  if (epsilon > 0) opts.epsilon = epsilon;
  if (max_iter > 0) opts.max_iterations = max_iter;
  if (stall_limit > 0) opts.stall_limit = stall_limit;
  opts.partition_fraction = partition_fraction;
  opts.pv_mode =
      pv_mode == "vmag" ? PvMode::MagnitudePenalty : PvMode::AsPq;
  SolveTrace trace = run_aqpf(net, opts);
  const double wall = seconds_since(t0);
  log_info("aqpf: " + std::string(status_name(trace.status)) + " in " +
           std::to_string(trace.iterations) + " iterations, residual " +
           std::to_string(trace.final_residual));
  if (g_log >= LogLevel::Debug)
    for (const IterationRecord& r : trace.records)
      log_debug("  it " + std::to_string(r.iteration) + " residual " +
                std::to_string(r.residual));
  if (!trace_path.empty())
    write_text(trace_path, trace_csv(net.name, "aqpf", trace.records));
  emit_report(out_path, report_aqpf(net, trace, opts, wall,
                                    reference ? &*reference : nullptr));
  return trace.converged ? 0 : 1;
}

int run_opf(const std::string& case_path, const CommonFlags& cf,
            double epsilon, int max_iter, int stall_limit,
            const std::string& cost_form, bool guard_slack_box,
            double box_weight, const std::string& reference_path,
            const std::string& out_path, const std::string& trace_path) {
  NetworkCase net = load_case_file(case_path);
  std::optional<VoltageState> reference;
  if (!reference_path.empty())
    reference = state_from_report(reference_path, net);

  AqopfOptions opts;
  opts.seed = cf.seed;
  opts.threads = cf.threads;
  if (epsilon > 0) opts.epsilon = epsilon;
  if (max_iter > 0) opts.max_iterations = max_iter;
  if (stall_limit > 0) opts.stall_limit = stall_limit;
  opts.cost_form =
      cost_form == "linear" ? CostForm::Linear : CostForm::Squared;
  opts.guard_slack_box = guard_slack_box;
  if (box_weight >= 0) opts.box_weight = box_weight;

  const auto t0 = std::chrono::steady_clock::now();
  OpfTrace trace;
  try {
    trace = run_aqopf(net, opts);
  } catch (const ValidationError& e) {
    // The case itself parsed and validated; this is a solver-level
    // infeasibility (for example generation boxes that cannot cover the
    // demand), reported as a failed run rather than a bad input.
    std::cerr << "gridanneal opf: " << e.what() << "\n";
    return 1;
  }
  const double wall = seconds_since(t0);
  log_info("aqopf: " + std::string(status_name(trace.status)) + " in " +
           std::to_string(trace.iterations) + " iterations, load residual " +
           std::to_string(trace.final_residual) + ", violations " +
           std::to_string(trace.violations));
  if (!trace_path.empty())
    write_text(trace_path, trace_csv(net.name, "aqopf", trace.records));
  emit_report(out_path, report_aqopf(net, trace, opts, wall,
                                     reference ? &*reference : nullptr));
  return trace.converged ? 0 : 1;
}

int run_perturb(const std::string& case_path, const std::string& mode,
                double factor, const std::vector<int>& buses,
                const std::vector<int>& branches, const std::string& out) {
  NetworkCase net = load_case_file(case_path);
  PerturbationSpec spec;
  spec.mode = mode == "rx" ? PerturbationMode::ResistanceScale
                           : PerturbationMode::LoadScale;
  spec.factor = factor;
  spec.buses = buses;
  spec.branches = branches;
  NetworkCase out_case = apply_perturbation(net, spec);
  save_case_file(out_case, out);
  log_info("wrote " + out + " (" + out_case.name + ")");
  return 0;
}

// One benchmark row: a case solved by one solver, timed end to end with the
// compile (Hamiltonian build + quadratize) and per-iteration costs split out.
struct BenchRow {
  std::string case_name;
  std::string solver;
  int repeat = 0;
  int n_buses = 0;
  int vars_base = 0;
  int vars_slack = 0;
  int vars_aux = 0;
  int vars_total = 0;
  bool converged = false;
  int iterations = 0;
  double final_residual = 0.0;
  double t_compile_s = 0.0;
  double t_per_iter_s = 0.0;
  double t_total_s = 0.0;
};

std::string fmt_g(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

int run_bench(const std::vector<std::string>& case_paths,
              const std::vector<std::string>& solvers, int repeats,
              const std::string& out_dir, const CommonFlags& cf) {
  std::filesystem::create_directories(out_dir);
  std::vector<BenchRow> rows;
  std::string traces =
      "case,solver,iter,residual\n";  // plot-ready convergence curves

  for (const std::string& path : case_paths) {
    NetworkCase net = load_case_file(path);
    for (const std::string& solver : solvers) {
      for (int rep = 0; rep < repeats; ++rep) {
        BenchRow row;
        row.case_name = net.name;
        row.solver = solver;
        row.repeat = rep;
        row.n_buses = static_cast<int>(net.buses.size());
        const auto t0 = std::chrono::steady_clock::now();
        if (solver == "nr") {
          NrResult res = solve_nr(net);
          row.t_total_s = seconds_since(t0);
          row.converged = res.converged;
          row.iterations = res.iterations;
          row.final_residual = res.max_mismatch;
          row.t_per_iter_s =
              res.iterations > 0 ? row.t_total_s / res.iterations : 0.0;
        } else if (solver == "aqpf" || solver == "aqopf") {
          double compile = 0.0;
          int iters = 0;
          if (solver == "aqpf") {
            AqpfOptions opts;
            opts.seed = cf.seed;
            opts.threads = cf.threads;
            SolveTrace tr = run_aqpf(net, opts);
            row.t_total_s = seconds_since(t0);
            row.converged = tr.converged;
            row.iterations = iters = tr.iterations;
            row.final_residual = tr.final_residual;
            row.vars_base = tr.base_vars;
            row.vars_slack = tr.slack_vars;
            row.vars_aux = tr.aux_vars;
            row.vars_total = tr.total_vars;
            for (const IterationRecord& r : tr.records) {
              compile += r.t_build_s + r.t_quadratize_s;
              if (rep == 0)
                traces += net.name + ",aqpf," + std::to_string(r.iteration) +
                          "," + fmt_g(r.residual) + "\n";
            }
          } else {
            AqopfOptions opts;
            opts.seed = cf.seed;
            opts.threads = cf.threads;
            OpfTrace tr = run_aqopf(net, opts);
            row.t_total_s = seconds_since(t0);
            row.converged = tr.converged;
            row.iterations = iters = tr.iterations;
            row.final_residual = tr.final_residual;
            row.vars_base = tr.base_vars;
            row.vars_slack = tr.slack_vars;
            row.vars_aux = tr.aux_vars;
            row.vars_total = tr.total_vars;
            for (const IterationRecord& r : tr.records) {
              compile += r.t_build_s + r.t_quadratize_s;
              if (rep == 0)
                traces += net.name + ",aqopf," + std::to_string(r.iteration) +
                          "," + fmt_g(r.residual) + "\n";
            }
          }
          row.t_compile_s = compile;
          row.t_per_iter_s = iters > 0 ? row.t_total_s / iters : 0.0;
        } else {
          std::cerr << "gridanneal bench: unknown solver " << solver << "\n";
          return 2;
        }
        log_info("bench " + net.name + "/" + solver + " rep " +
                 std::to_string(rep) + ": " +
                 (row.converged ? "converged" : "not converged") + ", " +
                 std::to_string(row.iterations) + " iterations");
        rows.push_back(row);
      }
    }
  }

  std::string csv =
      "case,solver,repeat,n_buses,vars_base,vars_slack,vars_aux,vars_total,"
      "converged,iterations,final_residual,t_compile_s,t_per_iter_s,"
      "t_total_s\n";
  json jrows = json::array();
  for (const BenchRow& r : rows) {
    csv += r.case_name + "," + r.solver + "," + std::to_string(r.repeat) +
           "," + std::to_string(r.n_buses) + "," +
           std::to_string(r.vars_base) + "," + std::to_string(r.vars_slack) +
           "," + std::to_string(r.vars_aux) + "," +
           std::to_string(r.vars_total) + "," + (r.converged ? "1" : "0") +
           "," + std::to_string(r.iterations) + "," +
           fmt_g(r.final_residual) + "," + fmt_g(r.t_compile_s) + "," +
           fmt_g(r.t_per_iter_s) + "," + fmt_g(r.t_total_s) + "\n";
    jrows.push_back({{"case", r.case_name},
                     {"solver", r.solver},
                     {"repeat", r.repeat},
                     {"n_buses", r.n_buses},
                     {"vars_base", r.vars_base},
                     {"vars_slack", r.vars_slack},
                     {"vars_aux", r.vars_aux},
                     {"vars_total", r.vars_total},
                     {"converged", r.converged},
                     {"iterations", r.iterations},
                     {"final_residual", r.final_residual},
                     {"t_compile_s", r.t_compile_s},
                     {"t_per_iter_s", r.t_per_iter_s},
                     {"t_total_s", r.t_total_s}});
  }
  write_text(out_dir + "/summary.csv", csv);
  write_text(out_dir + "/summary.json",
             json{{"format", "benchsummary-v1"}, {"seed", cf.seed},
                  {"rows", jrows}}
                 .dump(2));
  write_text(out_dir + "/traces.csv", traces);
  log_info("wrote " + out_dir + "/summary.{csv,json} and traces.csv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Adiabatic-annealing power flow toolkit: power flow and optimal "
      "power flow on a simulated annealer, with a Newton-Raphson oracle"};
  app.require_subcommand(1);

  CommonFlags cf;
  app.add_option("--seed", cf.seed, "Random seed (logged in every report)")
      ->capture_default_str();
  app.add_option("--threads", cf.threads,
                 "Annealer threads (0 = hardware default)")
      ->capture_default_str();
  app.add_option("--log-level", cf.log_level, "quiet|info|debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}))
      ->capture_default_str();

  // pf
  std::string pf_case, pf_solver = "aqpf", pf_ref, pf_out, pf_trace;
  std::string pf_pv_mode = "aspq";
  double pf_epsilon = 0, pf_partition = 0;
  int pf_max_iter = 0, pf_stall = 0;
  CLI::App* pf = app.add_subcommand("pf", "Solve a power flow case");
  pf->add_option("case", pf_case, "Case file (.m or .json)")->required();
  pf->add_option("--solver", pf_solver, "nr|aqpf")
      ->check(CLI::IsMember({"nr", "aqpf"}))
      ->capture_default_str();
  pf->add_option("--epsilon", pf_epsilon,
                 "Residual threshold, (MW^2+MVAR^2)/2 units");
  pf->add_option("--max-iter", pf_max_iter, "Iteration cap");
  pf->add_option("--stall-limit", pf_stall,
                 "Consecutive non-improving iterations before giving up");
  pf->add_option("--partition-fraction", pf_partition,
                 "Fraction of buses frozen per iteration (aqpf)");
  pf->add_option("--pv-mode", pf_pv_mode,
                 "aspq (fixed injections) | vmag (magnitude penalty)")
      ->check(CLI::IsMember({"aspq", "vmag"}))
      ->capture_default_str();
  pf->add_option("--reference", pf_ref,
                 "Prior runreport-v1 JSON; adds MSE-vs-reference fields");
  pf->add_option("--out", pf_out, "Report path (default: stdout)");
  pf->add_option("--trace-csv", pf_trace, "Per-iteration residual CSV");

  // opf
  std::string opf_case, opf_ref, opf_out, opf_trace, opf_cost = "squared";
  double opf_epsilon = 0, opf_box_weight = -1;
  int opf_max_iter = 0, opf_stall = 0;
  bool opf_guard = false;
  CLI::App* opf =
      app.add_subcommand("opf", "Solve an optimal power flow case");
  opf->add_option("case", opf_case, "Case file (.m or .json)")->required();
  opf->add_option("--epsilon", opf_epsilon,
                  "Load-bus residual threshold, (MW^2+MVAR^2)/2 units");
  opf->add_option("--max-iter", opf_max_iter, "Iteration cap");
  opf->add_option("--stall-limit", opf_stall,
                  "Consecutive non-improving iterations before giving up");
  opf->add_option("--cost-form", opf_cost, "squared|linear")
      ->check(CLI::IsMember({"squared", "linear"}))
      ->capture_default_str();
  opf->add_flag("--guard-slack-box", opf_guard,
                "Window the slack bus injections against its generator box");
  opf->add_option("--box-weight", opf_box_weight,
                  "Weight of limit exceedances in the acceptance merit");
  opf->add_option("--reference", opf_ref,
                  "Prior runreport-v1 JSON; adds MSE-vs-reference fields");
  opf->add_option("--out", opf_out, "Report path (default: stdout)");
  opf->add_option("--trace-csv", opf_trace, "Per-iteration residual CSV");

  // perturb
  std::string pt_case, pt_mode = "load", pt_out;
  double pt_factor = 1.0;
  std::vector<int> pt_buses, pt_branches;
  CLI::App* pt = app.add_subcommand(
      "perturb", "Write a stressed copy of a case (load or R scaling)");
  pt->add_option("case", pt_case, "Case file (.m or .json)")->required();
  pt->add_option("--mode", pt_mode, "load|rx")
      ->check(CLI::IsMember({"load", "rx"}))
      ->capture_default_str();
  pt->add_option("--factor", pt_factor, "Scale factor (> 0)")->required();
  pt->add_option("--buses", pt_buses,
                 "External bus ids to scale (default: every PQ bus)");
  pt->add_option("--branches", pt_branches,
                 "Branch ordinals to scale (default: every branch)");
  pt->add_option("--out", pt_out, "Output case path (.m or .json)")
      ->required();

  // bench
  std::vector<std::string> bn_cases, bn_solvers = {"nr", "aqpf"};
  int bn_repeats = 1;
  std::string bn_out_dir = "bench-out";
  CLI::App* bn = app.add_subcommand(
      "bench", "Time solvers over a case list; emit CSV/JSON summaries");
  bn->add_option("cases", bn_cases, "Case files")->required();
  bn->add_option("--solvers", bn_solvers, "Any of: nr aqpf aqopf")
      ->delimiter(',');
  bn->add_option("--repeats", bn_repeats, "Runs per case and solver")
      ->capture_default_str();
  bn->add_option("--out-dir", bn_out_dir, "Output directory")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  apply_log_level(cf);

  try {
    if (pf->parsed())
      return run_pf(pf_case, pf_solver, cf, pf_epsilon, pf_max_iter,
                    pf_partition, pf_stall, pf_pv_mode, pf_ref, pf_out,
                    pf_trace);
    if (opf->parsed())
      return run_opf(opf_case, cf, opf_epsilon, opf_max_iter, opf_stall,
                     opf_cost, opf_guard, opf_box_weight, opf_ref, opf_out,
                     opf_trace);
    if (pt->parsed())
      return run_perturb(pt_case, pt_mode, pt_factor, pt_buses, pt_branches,
                         pt_out);
    if (bn->parsed())
      return run_bench(bn_cases, bn_solvers, bn_repeats, bn_out_dir, cf);
  } catch (const ParseError& e) {
    std::cerr << "gridanneal: parse error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "gridanneal: invalid case: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gridanneal: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
