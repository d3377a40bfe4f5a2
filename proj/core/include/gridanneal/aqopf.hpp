#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridanneal/aqpf.hpp"
#include "gridanneal/netmodel.hpp"
#include "gridanneal/pubo.hpp"

namespace gridanneal {

// Dispatch and operating-limit handling for the optimal power flow solve.
//
// Each bounded quantity u in [lo, hi] is split around its lower bound:
// u = lo + step * s_plus, with s_plus a small binary counter, and a paired
// counter s_minus tied to the upper bound through the penalty
// (lo - hi + step*s_plus + step*s_minus)^2, which vanishes exactly when the
// two representations agree. Generator active and reactive outputs become
// decision variables this way; voltage magnitude squares and linearized
// angle windows get the same treatment as soft constraints.

// SlackP and SlackQ window the slack bus's physical injections against the
// aggregated box of the generators sitting on it. The slack voltage is held
// fixed, so those injections are affine in the neighbouring increment bits
// and the window penalties stay quadratic.
enum class SlackKind { GenP, GenQ, VoltageMag, AngleLin, SlackP, SlackQ };

struct SlackChannel {
  SlackKind kind = SlackKind::GenP;
  int bus = -1;  // owning bus (internal id)
  int gen = -1;  // generator ordinal for GenP/GenQ, -1 otherwise
  double lower = 0.0;  // bound on the constrained quantity, per-unit scale
  double upper = 0.0;
  double step = 0.0;  // quantity change per unit of counter value
  int bits_per_side = 0;
  VarIndex plus_first = 0;   // first bit of s_plus (least significant first)
  VarIndex minus_first = 0;  // first bit of s_minus
};

class GenerationEncoding {
 public:
  // Lays out slack counters after the voltage increment bits. When
  // bits_override > 0 every channel uses that width; otherwise the width is
  // the smallest k with step*(2^k - 1) >= range, using step = range/31.
  // guard_slack_box adds SlackP/SlackQ window channels over the aggregated
  // box of the slack bus's generators.
  static GenerationEncoding build(const NetworkCase& net,
                                  const IncrementEncoding& enc,
                                  int bits_override = 0,
                                  bool guard_slack_box = false);

  const std::vector<SlackChannel>& channels() const { return channels_; }
  VarIndex first_var() const { return first_var_; }
  VarIndex end_var() const { return next_var_; }
  int num_slack_vars() const { return static_cast<int>(next_var_ - first_var_); }

  // Returns nullptr when the quantity has no channel (degenerate bounds or
  // vacuous window).
  const SlackChannel* find(SlackKind kind, int bus, int gen = -1) const;

  // Counter value sum(2^k bits[first + k]) decoded from a sample.
  static int counter_value(const SlackChannel& ch, bool plus_side,
                           std::span<const std::uint8_t> bits);
  // lower + step * s_plus for the channel.
  static double decode_quantity(const SlackChannel& ch,
                                std::span<const std::uint8_t> bits);

 private:
  std::vector<SlackChannel> channels_;
  VarIndex first_var_ = 0;
  VarIndex next_var_ = 0;
};

enum class CostForm { Squared, Linear };

// Power balance mismatch squares over every non-slack bus, with generator
// injections written in terms of their slack counters. Per-unit throughout.
BinaryPolynomial build_opf_mismatch(const NetworkCase& net,
                                    const AdmittanceMatrix& y,
                                    const VoltageState& state,
                                    const IncrementEncoding& enc,
                                    const GenerationEncoding& genc);

// Pairing penalties for every channel plus the lower/upper window terms for
// voltage magnitude, linearized angle, and slack injection channels (the
// last need the admittance matrix to express the slack bus's injections in
// the neighbouring increments). literal_pairing_sign flips the s_minus sign
// inside the pairing square, reproducing a variant form that is not zero on
// the consistent manifold.
BinaryPolynomial build_opf_constraints(const NetworkCase& net,
                                       const AdmittanceMatrix& y,
                                       const VoltageState& state,
                                       const IncrementEncoding& enc,
                                       const GenerationEncoding& genc,
                                       bool literal_pairing_sign = false);

// Production cost over encoded generators, in $/h, as a polynomial in the
// slack counters. Squared form sums f_k(P)^2, linear form sums f_k(P).
BinaryPolynomial build_opf_cost(const NetworkCase& net,
                                const GenerationEncoding& genc,
                                CostForm form = CostForm::Squared);

// Polynomial cost of one generator at output p_mw.
double generator_cost(const Generator& g, double p_mw);

struct AqopfOptions {
  double epsilon = 1e-2;
  int max_iterations = 200;
  std::uint64_t seed = 12345;
  double lambda = 2.0;  // quadratization penalty scale
  DeltaBounds bounds{};
  double d_mu0 = 1e-2;
  double d_omega0 = 1e-3;
  int anneal_reads = 16;
  int anneal_sweeps = 0;  // 0 = scale with variable count
  int anneal_replicas = 1;
  int threads = 0;
  int stall_limit = 5;
  int fallback_retries = 3;
  int slack_bits = 0;  // 0 = auto width from the range/31 step rule
  // Window the slack bus's physical injections against the aggregated box
  // of its generators. Off by default: most cases leave the slack box slack,
  // and the extra counters cost variables. Enable when the implied slack
  // dispatch lands outside its box.
  bool guard_slack_box = false;
  bool literal_pairing_sign = false;
  CostForm cost_form = CostForm::Squared;
  // Constraint and cost weights relative to the mismatch objective.
  // Zero selects the automatic rule: constraints at 10x the largest
  // mismatch coefficient, cost at 0.1x of it after normalising by the
  // largest raw cost coefficient.
  double lambda_const = 0.0;
  double lambda_cost = 0.0;
  // Weight of squared operating-limit exceedances in the acceptance merit,
  // relative to the balance residual. Acceptance tracks balance plus limits
  // so the outer loop cannot trade feasibility for balance; cost stays out
  // of the merit and steers through the sampler only.
  double box_weight = 10.0;
};

struct DispatchRecord {
  int gen = -1;       // generator ordinal in the case
  int bus = -1;       // internal bus id
  double p_mw = 0.0;
  double q_mvar = 0.0;
  bool implied = false;  // slack-bus generator, balanced rather than encoded
};

struct OpfTrace {
  SolveStatus status = SolveStatus::MaxIterations;
  bool converged = false;
  int iterations = 0;
  double initial_residual = 0.0;  // load-bus residual, (MW^2+MVAR^2)/2 scale
  double final_residual = 0.0;
  double full_residual = 0.0;  // all non-slack buses at the final dispatch
  VoltageState final_state;
  std::vector<DispatchRecord> dispatch;
  double total_cost = 0.0;  // $/h including the implied slack generator
  int violations = 0;
  int base_vars = 0;
  int slack_vars = 0;
  int aux_vars = 0;
  int total_vars = 0;
  std::vector<IterationRecord> records;
  std::string failure;
};

// Load-bus mismatch objective (buses with no generator), per-unit squares.
double numeric_load_objective(const NetworkCase& net, const AdmittanceMatrix& y,
                              const VoltageState& v);

// Counts operating-limit violations at a solved state: decoded dispatch
// against generator boxes, bus voltage magnitudes against their windows,
// angle windows where active, and the implied slack generator box. When an
// encoding is supplied each check tolerates half the matching channel's
// step, since a decoded quantity cannot resolve finer than its lattice;
// without one the checks are strict.
int count_violations(const NetworkCase& net, const VoltageState& v,
                     const std::vector<DispatchRecord>& dispatch,
                     const GenerationEncoding* genc = nullptr);

OpfTrace run_aqopf(const NetworkCase& net, const AqopfOptions& opts = {});

}  // namespace gridanneal
