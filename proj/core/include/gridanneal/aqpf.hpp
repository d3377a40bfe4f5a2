#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridanneal/annealer.hpp"
#include "gridanneal/netmodel.hpp"
#include "gridanneal/pubo.hpp"

namespace gridanneal {

// How PV buses enter the mismatch objective. AsPq fixes their injections
// from the case data, keeping the plain squared-mismatch form at every bus.
// MagnitudePenalty swaps the reactive row for (mu^2 + omega^2 - v_set^2)^2,
// which matches what a conventional PV-bus solver holds fixed; use it when
// comparing against the Newton reference.
enum class PvMode { AsPq, MagnitudePenalty };

// Four bits per encoded (non-slack) bus: mu-up, mu-down, omega-up,
// omega-down, at indices 4*slot .. 4*slot+3. Buses excluded by partitioning
// stay encoded; only their mismatch rows leave the objective.
class IncrementEncoding {
 public:
  static IncrementEncoding build(const NetworkCase& net);

  int num_vars() const { return 4 * static_cast<int>(encoded_.size()); }
  bool encodes(int bus) const { return slot_of_bus_[bus] >= 0; }
  int slot(int bus) const { return slot_of_bus_[bus]; }
  const std::vector<int>& encoded_buses() const { return encoded_; }

  VarIndex mu_up(int bus) const { return 4 * slot_of_bus_[bus] + 0; }
  VarIndex mu_down(int bus) const { return 4 * slot_of_bus_[bus] + 1; }
  VarIndex omega_up(int bus) const { return 4 * slot_of_bus_[bus] + 2; }
  VarIndex omega_down(int bus) const { return 4 * slot_of_bus_[bus] + 3; }

 private:
  std::vector<int> encoded_;      // bus ids in encoding order
  std::vector<int> slot_of_bus_;  // -1 for the slack
};

struct PfHamiltonianSpec {
  const NetworkCase* net = nullptr;
  const AdmittanceMatrix* y = nullptr;
  const VoltageState* state = nullptr;        // base point and step sizes
  const std::vector<int>* excluded = nullptr;  // partitioned-out bus ids
  PvMode pv_mode = PvMode::AsPq;
};

// Squared per-unit mismatch objective over the increment bits: substituting
// mu_i = mu_i^0 + dmu_i (x_up - x_down) (same for omega) into the
// rectangular injection sums and summing squared residuals over the
// non-slack, non-excluded buses. Degree <= 4; the constant term equals the
// numeric objective at the base point.
BinaryPolynomial build_pf_hamiltonian(const PfHamiltonianSpec& spec,
                                      const IncrementEncoding& enc);

// The same functional evaluated numerically from injections (never from
// annealer energies).
double numeric_mismatch_objective(const NetworkCase& net,
                                  const AdmittanceMatrix& y,
                                  const VoltageState& v,
                                  std::span<const int> excluded = {},
                                  PvMode pv_mode = PvMode::AsPq);

// Returns the voltage state reached by applying increment bits to the base.
VoltageState apply_increment_bits(const VoltageState& base,
                                  const IncrementEncoding& enc,
                                  std::span<const std::uint8_t> bits);

struct DeltaBounds {
  double mu_lo = 5e-4;
  double mu_hi = 4e-2;
  double omega_lo = 1e-4;
  double omega_hi = 2e-2;
  double rate = -0.05;  // exponential decay rate per iteration
};

// Iteration-indexed step baseline: lo + (hi - lo) * exp(rate * it).
double delta_schedule(int it, double lo, double hi, double rate = -0.05);

// Step-size update: every step is reset to the schedule baseline for this
// iteration, then halved for buses whose last three accepted bit patterns
// show stagnation (all six channel bits equal) or up/down oscillation, then
// clamped to the bounds. No-op until three history entries exist. history
// holds base-variable bit vectors, oldest first.
void update_deltas(const IncrementEncoding& enc,
                   std::span<const std::vector<std::uint8_t>> history,
                   std::vector<double>& d_mu, std::vector<double>& d_omega,
                   int it, const DeltaBounds& bounds = {});

// Uniformly random exclusion of round(fraction * N) non-slack buses, drawn
// deterministically from (seed, it); a fresh subset every iteration.
// Returns sorted internal bus ids.
std::vector<int> partition_select(const NetworkCase& net, double fraction,
                                  std::uint64_t seed, int it);

struct AqpfOptions {
  double epsilon = 1e-2;   // residual threshold, (MW^2+MVAR^2)/2 convention
  int max_iterations = 200;
  std::uint64_t seed = 12345;
  double partition_fraction = 0.0;  // 0 disables partitioning
  PvMode pv_mode = PvMode::AsPq;
  double lambda = 2.0;  // quadratization penalty scale
  DeltaBounds bounds;
  double d_mu0 = 1e-2;
  double d_omega0 = 1e-3;
  // Annealing budget per outer iteration. sweeps == 0 scales with the
  // variable count. These defaults are sized for the desk-scale loop; the
  // standalone tune_defaults heuristics target one-shot solves instead.
  int anneal_reads = 16;
  int anneal_sweeps = 0;
  int anneal_replicas = 1;
  int threads = 0;
  int stall_limit = 5;       // consecutive non-improving iterations
  int fallback_retries = 3;  // in-iteration delta halvings after a rejection
};

enum class SolveStatus { Converged, MaxIterations, Stalled };

struct IterationRecord {
  int iteration = 0;
  double residual = 0.0;     // full numeric residual after acceptance
  double base_energy = 0.0;  // objective constant at the iteration's base
  double best_energy = 0.0;  // best annealer sample energy
  bool accepted = false;
  int retries = 0;
  int vars_total = 0;
  int vars_aux = 0;
  int excluded_buses = 0;
  std::vector<double> d_mu;  // snapshots used this iteration
  std::vector<double> d_omega;
  double t_build_s = 0.0;
  double t_quadratize_s = 0.0;
  double t_anneal_s = 0.0;
  double t_update_s = 0.0;
};

struct SolveTrace {
  SolveStatus status = SolveStatus::MaxIterations;
  bool converged = false;
  int iterations = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  VoltageState final_state;
  int base_vars = 0;
  int slack_vars = 0;   // generation slack bits (optimal dispatch runs)
  int aux_vars = 0;     // quadratization auxiliaries (last iteration)
  int total_vars = 0;
  std::vector<IterationRecord> records;
  std::string failure;
};

// The annealing power-flow outer loop: build objective, quadratize, anneal,
// project auxiliaries, apply the best increment if it does not worsen the
// numeric residual (halving steps and retrying a bounded number of times
// when it does), refresh the base point and step sizes, and stop on the
// residual threshold, the iteration cap, or a stall.
SolveTrace run_aqpf(const NetworkCase& net, const AqpfOptions& opts = {});

}  // namespace gridanneal
