#include "gridanneal/aqopf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gridanneal/annealer.hpp"
#include "gridanneal/errors.hpp"
#include "splitmix.hpp"

namespace gridanneal {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

BinaryPolynomial coordinate_poly(double base, double step, bool encoded,
                                 VarIndex up, VarIndex down) {
  BinaryPolynomial p(base);
  if (encoded && step != 0.0) {
    p.add_term({up}, step);
    p.add_term({down}, -step);
  }
  return p;
}

// Tangent-based angle windows are representable only strictly inside
// (-90, 90) degrees; anything wider is treated as unconstrained.
bool angle_window_active(const Bus& b) {
  return b.delta_min > -90.0 && b.delta_max < 90.0 && b.delta_min < b.delta_max;
}

int width_for_range(double range, double step) {
  int k = 1;
  while (step * (std::pow(2.0, k) - 1.0) < range - 1e-12 && k < 16) ++k;
  return k;
}

// s_plus or s_minus as an affine polynomial step * sum(2^k x_k).
BinaryPolynomial counter_poly(const SlackChannel& ch, bool plus_side) {
  BinaryPolynomial p;
  const VarIndex first = plus_side ? ch.plus_first : ch.minus_first;
  double w = ch.step;
  for (int k = 0; k < ch.bits_per_side; ++k) {
    p.add_term({first + static_cast<VarIndex>(k)}, w);
    w *= 2.0;
  }
  return p;
}

// Per-unit active output expression for one generator: constant when the
// box is degenerate, lower bound plus counter otherwise.
BinaryPolynomial gen_quantity_poly(const GenerationEncoding& genc,
                                   SlackKind kind, const Generator& g, int gen,
                                   double mva_base) {
  const double lo =
      (kind == SlackKind::GenP ? g.p_min : g.q_min) / mva_base;
  const SlackChannel* ch = genc.find(kind, g.bus, gen);
  if (!ch) return BinaryPolynomial(lo);
  BinaryPolynomial p = counter_poly(*ch, true);
  p.add_constant(ch->lower);
  return p;
}

}  // namespace

GenerationEncoding GenerationEncoding::build(const NetworkCase& net,
                                             const IncrementEncoding& enc,
                                             int bits_override,
                                             bool guard_slack_box) {
  GenerationEncoding out;
  out.first_var_ = static_cast<VarIndex>(enc.num_vars());
  out.next_var_ = out.first_var_;
  const int slack = net.slack_index();

  auto add_channel = [&](SlackKind kind, int bus, int gen, double lo,
                         double hi) {
    const double range = hi - lo;
    if (range <= 0.0) return;
    SlackChannel ch;
    ch.kind = kind;
    ch.bus = bus;
    ch.gen = gen;
    ch.lower = lo;
    ch.upper = hi;
    if (bits_override > 0) {
      ch.bits_per_side = bits_override;
      ch.step = range / (std::pow(2.0, bits_override) - 1.0);
    } else {
      ch.step = range / 31.0;
      ch.bits_per_side = width_for_range(range, ch.step);
    }
    ch.plus_first = out.next_var_;
    ch.minus_first = out.next_var_ + static_cast<VarIndex>(ch.bits_per_side);
    out.next_var_ += static_cast<VarIndex>(2 * ch.bits_per_side);
    out.channels_.push_back(ch);
  };

  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const Generator& gen = net.generators[g];
    if (gen.bus == slack) continue;
    add_channel(SlackKind::GenP, gen.bus, static_cast<int>(g),
                gen.p_min / net.mva_base, gen.p_max / net.mva_base);
    add_channel(SlackKind::GenQ, gen.bus, static_cast<int>(g),
                gen.q_min / net.mva_base, gen.q_max / net.mva_base);
  }
  for (const Bus& b : net.buses) {
    if (b.id == slack) continue;
    add_channel(SlackKind::VoltageMag, b.id, -1, b.v_min * b.v_min,
                b.v_max * b.v_max);
  }
  for (const Bus& b : net.buses) {
    if (b.id == slack || !angle_window_active(b)) continue;
    constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
    add_channel(SlackKind::AngleLin, b.id, -1, std::tan(b.delta_min * kDegToRad),
                std::tan(b.delta_max * kDegToRad));
  }
  if (guard_slack_box) {
    double p_lo = 0.0, p_hi = 0.0, q_lo = 0.0, q_hi = 0.0;
    bool any = false;
    for (const Generator& g : net.generators) {
      if (g.bus != slack) continue;
      any = true;
      p_lo += g.p_min;
      p_hi += g.p_max;
      q_lo += g.q_min;
      q_hi += g.q_max;
    }
    if (any) {
      add_channel(SlackKind::SlackP, slack, -1, p_lo / net.mva_base,
                  p_hi / net.mva_base);
      add_channel(SlackKind::SlackQ, slack, -1, q_lo / net.mva_base,
                  q_hi / net.mva_base);
    }
  }
  return out;
}

const SlackChannel* GenerationEncoding::find(SlackKind kind, int bus,
                                             int gen) const {
  for (const SlackChannel& ch : channels_)
    if (ch.kind == kind && ch.bus == bus && ch.gen == gen) return &ch;
  return nullptr;
}

int GenerationEncoding::counter_value(const SlackChannel& ch, bool plus_side,
                                      std::span<const std::uint8_t> bits) {
  const VarIndex first = plus_side ? ch.plus_first : ch.minus_first;
  int v = 0;
  for (int k = 0; k < ch.bits_per_side; ++k) {
    const VarIndex idx = first + static_cast<VarIndex>(k);
    if (idx < bits.size() && bits[idx]) v += 1 << k;
  }
  return v;
}

double GenerationEncoding::decode_quantity(const SlackChannel& ch,
                                           std::span<const std::uint8_t> bits) {
  return ch.lower + ch.step * counter_value(ch, true, bits);
}

BinaryPolynomial build_opf_mismatch(const NetworkCase& net,
                                    const AdmittanceMatrix& y,
                                    const VoltageState& state,
                                    const IncrementEncoding& enc,
                                    const GenerationEncoding& genc) {
  const int n = static_cast<int>(net.buses.size());
  const int slack = net.slack_index();

  std::vector<BinaryPolynomial> mu(n), om(n);
  for (int i = 0; i < n; ++i) {
    const bool e = enc.encodes(i);
    mu[i] = coordinate_poly(state.mu[i], e ? state.d_mu[i] : 0.0, e,
                            e ? enc.mu_up(i) : 0, e ? enc.mu_down(i) : 0);
    om[i] = coordinate_poly(state.omega[i], e ? state.d_omega[i] : 0.0, e,
                            e ? enc.omega_up(i) : 0,
                            e ? enc.omega_down(i) : 0);
  }

  // Net scheduled injection per bus: encoded generator outputs minus demand.
  std::vector<BinaryPolynomial> p_target(n), q_target(n);
  for (int i = 0; i < n; ++i) {
    p_target[i].add_constant(-net.buses[i].p_demand / net.mva_base);
    q_target[i].add_constant(-net.buses[i].q_demand / net.mva_base);
  }
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const Generator& gen = net.generators[g];
    if (gen.bus == slack) continue;
    p_target[gen.bus] += gen_quantity_poly(genc, SlackKind::GenP, gen,
                                           static_cast<int>(g), net.mva_base);
    q_target[gen.bus] += gen_quantity_poly(genc, SlackKind::GenQ, gen,
                                           static_cast<int>(g), net.mva_base);
  }

  BinaryPolynomial h;
  for (int i = 0; i < n; ++i) {
    if (i == slack) continue;
    BinaryPolynomial a, b;
    for (const auto& [j, yij] : y.row(i)) {
      const double g = yij.real();
      const double bb = yij.imag();
      BinaryPolynomial t = mu[j];
      t *= g;
      a += t;
      t = om[j];
      t *= bb;
      a -= t;
      t = om[j];
      t *= g;
      b += t;
      t = mu[j];
      t *= bb;
      b += t;
    }
    BinaryPolynomial dp = mu[i] * a + om[i] * b - p_target[i];
    h += dp * dp;
    BinaryPolynomial dq = om[i] * a - mu[i] * b - q_target[i];
    h += dq * dq;
  }
  return h;
}

BinaryPolynomial build_opf_constraints(const NetworkCase& net,
                                       const AdmittanceMatrix& y,
                                       const VoltageState& state,
                                       const IncrementEncoding& enc,
                                       const GenerationEncoding& genc,
                                       bool literal_pairing_sign) {
  BinaryPolynomial h;
  const double minus_sign = literal_pairing_sign ? -1.0 : 1.0;
  const int slack = net.slack_index();

  auto bus_coordinate = [&](int i, bool is_mu) {
    const bool e = enc.encodes(i);
    if (is_mu)
      return coordinate_poly(state.mu[i], e ? state.d_mu[i] : 0.0, e,
                             e ? enc.mu_up(i) : 0, e ? enc.mu_down(i) : 0);
    return coordinate_poly(state.omega[i], e ? state.d_omega[i] : 0.0, e,
                           e ? enc.omega_up(i) : 0, e ? enc.omega_down(i) : 0);
  };

  for (const SlackChannel& ch : genc.channels()) {
    BinaryPolynomial splus = counter_poly(ch, true);
    BinaryPolynomial sminus = counter_poly(ch, false);

    // Angle windows are linearized about the current magnitude, so their
    // effective bounds follow the base voltage; the counters keep the step
    // sized at nominal magnitude.
    double lo = ch.lower;
    double hi = ch.upper;
    BinaryPolynomial u;
    bool windowed = false;
    if (ch.kind == SlackKind::VoltageMag || ch.kind == SlackKind::AngleLin) {
      const int i = ch.bus;
      BinaryPolynomial mu_i = bus_coordinate(i, true);
      BinaryPolynomial om_i = bus_coordinate(i, false);
      if (ch.kind == SlackKind::VoltageMag) {
        u = mu_i * mu_i + om_i * om_i;
      } else {
        u = om_i;
        lo *= state.mu[i];
        hi *= state.mu[i];
      }
      windowed = true;
    } else if (ch.kind == SlackKind::SlackP || ch.kind == SlackKind::SlackQ) {
      // Slack generation linearized at the current state: network losses are
      // frozen at their present value, so the slack output is demand plus
      // losses minus the other units' encoded outputs. This keeps the window
      // in dispatch counters alone instead of stiffening the voltage bits of
      // the slack's neighbours; loss drift feeds back through the rebuild on
      // the next iteration.
      const Injections inj = compute_injections_pu(y, state);
      const bool is_p = ch.kind == SlackKind::SlackP;
      double base = 0.0;
      for (std::size_t i = 0; i < net.buses.size(); ++i) {
        base += is_p ? inj.p[i] : inj.q[i];
        base += (is_p ? net.buses[i].p_demand : net.buses[i].q_demand) /
                net.mva_base;
      }
      u.add_constant(base);
      for (std::size_t g = 0; g < net.generators.size(); ++g) {
        const Generator& gen = net.generators[g];
        if (gen.bus == slack) continue;
        u -= gen_quantity_poly(genc, is_p ? SlackKind::GenP : SlackKind::GenQ,
                               gen, static_cast<int>(g), net.mva_base);
      }
      windowed = true;
    }

    if (windowed) {
      BinaryPolynomial lower = u - splus;
      lower.add_constant(-lo);
      h += lower * lower;
      BinaryPolynomial upper = u + sminus;
      upper.add_constant(-hi);
      h += upper * upper;
    }

    BinaryPolynomial pair = splus;
    BinaryPolynomial sm = sminus;
    sm *= minus_sign;
    pair += sm;
    pair.add_constant(lo - hi);
    h += pair * pair;
  }
  return h;
}

BinaryPolynomial build_opf_cost(const NetworkCase& net,
                                const GenerationEncoding& genc,
                                CostForm form) {
  const int slack = net.slack_index();
  BinaryPolynomial h;
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const Generator& gen = net.generators[g];
    if (gen.bus == slack) continue;
    BinaryPolynomial p_mw = gen_quantity_poly(genc, SlackKind::GenP, gen,
                                              static_cast<int>(g), net.mva_base);
    p_mw *= net.mva_base;
    BinaryPolynomial f = p_mw * p_mw;
    f *= gen.cost_coeffs[0];
    BinaryPolynomial lin = p_mw;
    lin *= gen.cost_coeffs[1];
    f += lin;
    f.add_constant(gen.cost_coeffs[2]);
    if (form == CostForm::Squared)
      h += f * f;
    else
      h += f;
  }
  return h;
}

double generator_cost(const Generator& g, double p_mw) {
  return g.cost_coeffs[0] * p_mw * p_mw + g.cost_coeffs[1] * p_mw +
         g.cost_coeffs[2];
}

double numeric_load_objective(const NetworkCase& net, const AdmittanceMatrix& y,
                              const VoltageState& v) {
  const Injections inj = compute_injections_pu(y, v);
  const int slack = net.slack_index();
  std::vector<char> has_gen(net.buses.size(), 0);
  for (const Generator& g : net.generators) has_gen[g.bus] = 1;

  double obj = 0.0;
  for (const Bus& b : net.buses) {
    if (b.id == slack || has_gen[b.id]) continue;
    const double dp = inj.p[b.id] + b.p_demand / net.mva_base;
    const double dq = inj.q[b.id] + b.q_demand / net.mva_base;
    obj += dp * dp + dq * dq;
  }
  return obj;
}

namespace {

// Full power balance objective at a decoded dispatch, all non-slack buses.
double numeric_full_objective(const NetworkCase& net, const AdmittanceMatrix& y,
                              const VoltageState& v,
                              const std::vector<DispatchRecord>& dispatch) {
  const Injections inj = compute_injections_pu(y, v);
  const int slack = net.slack_index();
  std::vector<double> p_sched(net.buses.size(), 0.0);
  std::vector<double> q_sched(net.buses.size(), 0.0);
  for (const Bus& b : net.buses) {
    p_sched[b.id] -= b.p_demand / net.mva_base;
    q_sched[b.id] -= b.q_demand / net.mva_base;
  }
  for (const DispatchRecord& d : dispatch) {
    if (d.implied) continue;
    p_sched[d.bus] += d.p_mw / net.mva_base;
    q_sched[d.bus] += d.q_mvar / net.mva_base;
  }
  double obj = 0.0;
  for (const Bus& b : net.buses) {
    if (b.id == slack) continue;
    const double dp = inj.p[b.id] - p_sched[b.id];
    const double dq = inj.q[b.id] - q_sched[b.id];
    obj += dp * dp + dq * dq;
  }
  return obj;
}

// Encoded generator outputs from a sample, plus the implied dispatch of
// slack-bus generators balancing the final injections.
std::vector<DispatchRecord> decode_dispatch(const NetworkCase& net,
                                            const GenerationEncoding& genc,
                                            std::span<const std::uint8_t> bits) {
  const int slack = net.slack_index();
  std::vector<DispatchRecord> out;
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const Generator& gen = net.generators[g];
    if (gen.bus == slack) continue;
    DispatchRecord d;
    d.gen = static_cast<int>(g);
    d.bus = gen.bus;
    const SlackChannel* chp = genc.find(SlackKind::GenP, gen.bus, d.gen);
    d.p_mw = (chp ? GenerationEncoding::decode_quantity(*chp, bits)
                  : gen.p_min / net.mva_base) *
             net.mva_base;
    const SlackChannel* chq = genc.find(SlackKind::GenQ, gen.bus, d.gen);
    d.q_mvar = (chq ? GenerationEncoding::decode_quantity(*chq, bits)
                    : gen.q_min / net.mva_base) *
               net.mva_base;
    out.push_back(d);
  }
  return out;
}

void append_implied_slack(const NetworkCase& net, const AdmittanceMatrix& y,
                          const VoltageState& v,
                          std::vector<DispatchRecord>& dispatch) {
  const int slack = net.slack_index();
  std::vector<int> slack_gens;
  for (std::size_t g = 0; g < net.generators.size(); ++g)
    if (net.generators[g].bus == slack) slack_gens.push_back(static_cast<int>(g));
  if (slack_gens.empty()) return;

  const Injections inj = compute_injections_pu(y, v);
  const double p_req = inj.p[slack] * net.mva_base + net.buses[slack].p_demand;
  const double q_req = inj.q[slack] * net.mva_base + net.buses[slack].q_demand;

  // Water-fill the required totals across the slack-bus units: everyone
  // starts at its lower bound and the remainder fills the boxes in order.
  // The totals always match the physical requirement, so a remainder that
  // no box can take lands on the last unit and is reported as a violation
  // instead of hiding an imbalance.
  std::vector<DispatchRecord> recs(slack_gens.size());
  double p_left = p_req;
  double q_left = q_req;
  for (std::size_t k = 0; k < slack_gens.size(); ++k) {
    const Generator& g = net.generators[slack_gens[k]];
    recs[k].gen = slack_gens[k];
    recs[k].bus = slack;
    recs[k].p_mw = g.p_min;
    recs[k].q_mvar = g.q_min;
    recs[k].implied = true;
    p_left -= g.p_min;
    q_left -= g.q_min;
  }
  for (std::size_t k = 0; k < slack_gens.size(); ++k) {
    const Generator& g = net.generators[slack_gens[k]];
    const double dp = std::clamp(p_left, 0.0, g.p_max - g.p_min);
    recs[k].p_mw += dp;
    p_left -= dp;
    const double dq = std::clamp(q_left, 0.0, g.q_max - g.q_min);
    recs[k].q_mvar += dq;
    q_left -= dq;
  }
  recs.back().p_mw += p_left;
  recs.back().q_mvar += q_left;
  for (DispatchRecord& d : recs) dispatch.push_back(d);
}

// Squared operating-limit exceedances in residual units, (MW^2+MVAR^2)/2.
// Voltage and angle window distances are measured in their per-unit window
// spaces and scaled by the MVA base so every limit shares the dispatch
// scale. Only quantities with a matching window channel contribute: a row
// the sampler's Hamiltonian does not window carries no proposal pressure,
// so charging it to the merit would block moves the sampler cannot learn
// to avoid. Distances are measured beyond half the channel step, the same
// forgiveness count_violations grants, so the merit collapses to the plain
// balance residual on every state the violation count calls clean.
double box_distance_sq(const NetworkCase& net, const VoltageState& v,
                       const std::vector<DispatchRecord>& dispatch,
                       const GenerationEncoding& genc) {
  auto over = [](double x, double lo, double hi) {
    if (x < lo) return lo - x;
    if (x > hi) return x - hi;
    return 0.0;
  };
  const int slack = net.slack_index();
  double s = 0.0;
  for (const DispatchRecord& d : dispatch) {
    const Generator& g = net.generators[d.gen];
    const SlackChannel* pc = d.implied
                                 ? genc.find(SlackKind::SlackP, slack, -1)
                                 : genc.find(SlackKind::GenP, d.bus, d.gen);
    const SlackChannel* qc = d.implied
                                 ? genc.find(SlackKind::SlackQ, slack, -1)
                                 : genc.find(SlackKind::GenQ, d.bus, d.gen);
    if (pc) {
      const double tol = 0.5 * pc->step * net.mva_base;
      const double ep = over(d.p_mw, g.p_min - tol, g.p_max + tol);
      s += ep * ep;
    }
    if (qc) {
      const double tol = 0.5 * qc->step * net.mva_base;
      const double eq = over(d.q_mvar, g.q_min - tol, g.q_max + tol);
      s += eq * eq;
    }
  }
  for (const Bus& b : net.buses) {
    if (b.id == slack) continue;
    if (const SlackChannel* vc = genc.find(SlackKind::VoltageMag, b.id, -1)) {
      const double u = v.vm(b.id) * v.vm(b.id);
      const double tol = 0.5 * vc->step;
      const double ev =
          over(u, b.v_min * b.v_min - tol, b.v_max * b.v_max + tol) *
          net.mva_base;
      s += ev * ev;
    }
    if (const SlackChannel* ac = genc.find(SlackKind::AngleLin, b.id, -1)) {
      constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
      const double t = std::tan(v.va_deg(b.id) * kDegToRad);
      const double tol = 0.5 * ac->step;
      const double ea =
          over(t, ac->lower - tol, ac->upper + tol) * net.mva_base;
      s += ea * ea;
    }
  }
  return s / 2.0;
}

}  // namespace

int count_violations(const NetworkCase& net, const VoltageState& v,
                     const std::vector<DispatchRecord>& dispatch,
                     const GenerationEncoding* genc) {
  constexpr double kTol = 1e-7;
  const int slack = net.slack_index();
  // Half the channel step in per-unit scale, or the strict floor when the
  // quantity has no channel.
  auto channel_tol = [&](SlackKind kind, int bus, int gen) {
    if (!genc) return kTol;
    const SlackChannel* ch = genc->find(kind, bus, gen);
    return ch ? std::max(kTol, 0.5 * ch->step) : kTol;
  };

  int count = 0;
  for (const DispatchRecord& d : dispatch) {
    const Generator& g = net.generators[d.gen];
    // Implied slack units answer to the aggregated slack window, encoded
    // units to their own channels.
    const double p_tol =
        net.mva_base * (d.implied ? channel_tol(SlackKind::SlackP, slack, -1)
                                  : channel_tol(SlackKind::GenP, d.bus, d.gen));
    const double q_tol =
        net.mva_base * (d.implied ? channel_tol(SlackKind::SlackQ, slack, -1)
                                  : channel_tol(SlackKind::GenQ, d.bus, d.gen));
    if (d.p_mw < g.p_min - p_tol || d.p_mw > g.p_max + p_tol) ++count;
    if (d.q_mvar < g.q_min - q_tol || d.q_mvar > g.q_max + q_tol) ++count;
  }
  for (const Bus& b : net.buses) {
    if (b.id == slack) continue;
    const SlackChannel* vc =
        genc ? genc->find(SlackKind::VoltageMag, b.id, -1) : nullptr;
    if (vc) {
      // The window acts on the magnitude square, so tolerate in that space.
      const double u = v.vm(b.id) * v.vm(b.id);
      const double tol = std::max(kTol, 0.5 * vc->step);
      if (u < b.v_min * b.v_min - tol || u > b.v_max * b.v_max + tol) ++count;
    } else {
      const double vm = v.vm(b.id);
      if (vm < b.v_min - kTol || vm > b.v_max + kTol) ++count;
    }
    if (angle_window_active(b)) {
      const SlackChannel* ac =
          genc ? genc->find(SlackKind::AngleLin, b.id, -1) : nullptr;
      if (ac) {
        constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
        const double t = std::tan(v.va_deg(b.id) * kDegToRad);
        const double tol = std::max(kTol, 0.5 * ac->step);
        if (t < ac->lower - tol || t > ac->upper + tol) ++count;
      } else {
        const double deg = v.va_deg(b.id);
        if (deg < b.delta_min - kTol || deg > b.delta_max + kTol) ++count;
      }
    }
  }
  return count;
}

OpfTrace run_aqopf(const NetworkCase& net, const AqopfOptions& opts) {
  validate(net);

  double total_p_min = 0.0, total_p_max = 0.0, total_demand = 0.0;
  for (const Generator& g : net.generators) {
    total_p_min += g.p_min;
    total_p_max += g.p_max;
  }
  for (const Bus& b : net.buses) total_demand += b.p_demand;
  if (total_p_min > 1.1 * total_demand + 1e-9)
    throw ValidationError(
        "infeasible dispatch: minimum generation exceeds demand");
  if (total_p_max < total_demand - 1e-9)
    throw ValidationError(
        "infeasible dispatch: maximum generation below demand");

  const AdmittanceMatrix y = build_admittance(net);
  const IncrementEncoding enc = IncrementEncoding::build(net);
  const GenerationEncoding genc = GenerationEncoding::build(
      net, enc, opts.slack_bits, opts.guard_slack_box);
  const std::size_t encoded_vars =
      static_cast<std::size_t>(enc.num_vars()) + genc.num_slack_vars();

  OpfTrace trace;
  trace.base_vars = enc.num_vars();
  trace.slack_vars = genc.num_slack_vars();

  VoltageState state = VoltageState::flat(net, opts.d_mu0, opts.d_omega0);
  std::vector<std::uint8_t> zero_bits(encoded_vars, 0);
  std::vector<DispatchRecord> dispatch = decode_dispatch(net, genc, zero_bits);

  double load_residual = numeric_load_objective(net, y, state) / 2.0;
  double full_residual = numeric_full_objective(net, y, state, dispatch) / 2.0;
  trace.initial_residual = load_residual;

  auto finish = [&](SolveStatus status, int iterations) {
    trace.status = status;
    trace.converged = status == SolveStatus::Converged;
    trace.iterations = iterations;
    trace.final_residual = load_residual;
    trace.full_residual = full_residual;
    trace.final_state = state;
    std::vector<DispatchRecord> full = dispatch;
    append_implied_slack(net, y, state, full);
    trace.violations = count_violations(net, state, full, &genc);
    trace.total_cost = 0.0;
    for (const DispatchRecord& d : full)
      trace.total_cost += generator_cost(net.generators[d.gen], d.p_mw);
    trace.dispatch = std::move(full);
  };

  auto violations_at = [&](const VoltageState& v,
                           const std::vector<DispatchRecord>& d) {
    std::vector<DispatchRecord> probe = d;
    append_implied_slack(net, y, v, probe);
    return count_violations(net, v, probe, &genc);
  };
  // Acceptance merit: balance residual plus weighted limit exceedances,
  // the numeric counterpart of what the sampler's Hamiltonian optimizes
  // (minus the cost term, which only steers proposals). Monotone descent
  // on balance alone can park the trajectory in an infeasible corner that
  // no later balance-improving move escapes.
  auto merit_at = [&](const VoltageState& v,
                      const std::vector<DispatchRecord>& d, double full) {
    std::vector<DispatchRecord> probe = d;
    append_implied_slack(net, y, v, probe);
    return full + opts.box_weight * box_distance_sq(net, v, probe, genc);
  };

  int cur_viol = violations_at(state, dispatch);
  if (load_residual <= opts.epsilon && cur_viol == 0) {
    trace.total_vars = static_cast<int>(encoded_vars);
    finish(SolveStatus::Converged, 0);
    return trace;
  }
  double merit = merit_at(state, dispatch, full_residual);

  std::vector<std::vector<std::uint8_t>> history;
  // Recent accepted voltage moves, used as a momentum direction.
  std::vector<std::pair<std::vector<double>, std::vector<double>>> recent_moves;
  // Incumbent bits for seeded anneal reads: the current dispatch counters
  // with all voltage increments at zero ("stay put").
  std::vector<std::uint8_t> inc_bits(encoded_vars, 0);
  int stall = 0;
  SolveStatus status = SolveStatus::MaxIterations;
  int iterations = 0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;

    bool accepted = false;
    VoltageState cand;
    std::vector<DispatchRecord> cand_dispatch;
    double cand_full = full_residual;
    double cand_merit = merit;
    std::vector<std::uint8_t> accepted_bits;
    std::vector<std::uint8_t> cand_inc;

    for (int attempt = 0; attempt <= opts.fallback_retries; ++attempt) {
      rec.retries = attempt;

      auto t0 = Clock::now();
      BinaryPolynomial h = build_opf_mismatch(net, y, state, enc, genc);
      double h_max = 0.0;
      double h_mean = 0.0, hv_mean = 0.0;
      std::size_t h_cnt = 0, hv_cnt = 0;
      for (const auto& [key, c] : h.terms()) {
        if (key.empty()) continue;
        h_max = std::max(h_max, std::abs(c));
        h_mean += std::abs(c);
        ++h_cnt;
        for (const VarIndex v : key) {
          if (v < static_cast<VarIndex>(enc.num_vars())) {
            hv_mean += std::abs(c);
            ++hv_cnt;
            break;
          }
        }
      }
      if (h_max <= 0.0) h_max = 1.0;
      h_mean = h_cnt > 0 ? h_mean / double(h_cnt) : 1.0;
      // Voltage-increment coefficients shrink with the step sizes while
      // dispatch-counter coefficients do not; the cold end must track the
      // smaller of the two scales or voltage bits never freeze.
      hv_mean = hv_cnt > 0 ? hv_mean / double(hv_cnt) : h_mean;
      const double h_cold = std::min(h_mean, hv_mean);

      const double lambda_const =
          opts.lambda_const > 0.0 ? opts.lambda_const : 10.0 * h_max;
      BinaryPolynomial hc = build_opf_constraints(net, y, state, enc, genc,
                                                  opts.literal_pairing_sign);
      hc *= lambda_const;
      h += hc;

      BinaryPolynomial hcost = build_opf_cost(net, genc, opts.cost_form);
      double cost_max = 0.0;
      for (const auto& [key, c] : hcost.terms())
        if (!key.empty()) cost_max = std::max(cost_max, std::abs(c));
      const double lambda_cost =
          opts.lambda_cost > 0.0
              ? opts.lambda_cost
              : (cost_max > 0.0 ? 0.1 * h_max / cost_max : 0.0);
      hcost *= lambda_cost;
      h += hcost;
      rec.t_build_s += seconds_since(t0);

      t0 = Clock::now();
      QuadratizeOptions qopts;
      qopts.lambda = opts.lambda;
      qopts.min_vars = static_cast<VarIndex>(encoded_vars);
      auto [qubo, rmap] = quadratize(h, qopts);
      rec.t_quadratize_s += seconds_since(t0);

      rec.vars_total = static_cast<int>(qubo.n);
      rec.vars_aux = static_cast<int>(qubo.n - encoded_vars);
      rec.base_energy = qubo.offset;

      t0 = Clock::now();
      AnnealConfig acfg;
      acfg.num_reads = opts.anneal_reads;
      acfg.num_sweeps =
          opts.anneal_sweeps > 0
              ? opts.anneal_sweeps
              : static_cast<int>(std::clamp(4.0 * double(qubo.n), 256.0, 4096.0));
      acfg.replicas = opts.anneal_replicas;
      // Two energy scales coexist here: penalty-weighted constraint terms
      // (largest coefficients) and the mismatch terms they guard. The cold
      // end must freeze the mismatch scale or its degrees of freedom stay
      // in a thermal walk, so it is keyed to the mean mismatch coefficient;
      // the hot end only needs to cross constraint-scale barriers.
      const double max_abs = qubo.max_abs_coeff();
      acfg.beta_max = 10.0 / std::max(h_cold, 1e-12);
      acfg.beta_min = 1.0 / std::max(max_abs, 1e-12);
      if (acfg.beta_min > acfg.beta_max) acfg.beta_min = acfg.beta_max / 100.0;
      // Half the reads refine the incumbent (current dispatch counters,
      // zero voltage increments), half explore from random states.
      acfg.zero_init_fraction = 0.5;
      acfg.initial_state = inc_bits;
      acfg.initial_state.resize(qubo.n, 0);
      repair_auxiliaries(acfg.initial_state, rmap);
      acfg.seed = detail::derive_seed(opts.seed, static_cast<std::uint64_t>(it),
                                      static_cast<std::uint64_t>(attempt));
      const SampleSet ss = anneal(qubo, acfg, opts.threads);
      rec.t_anneal_s += seconds_since(t0);
      rec.best_energy = ss.best().energy;

      t0 = Clock::now();
      const Projection proj = project_solution(ss.best().bits, rmap);
      std::vector<std::uint8_t> bits = proj.original;
      bits.resize(encoded_vars, 0);
      VoltageState next = apply_increment_bits(state, enc, bits);
      std::vector<DispatchRecord> next_dispatch =
          decode_dispatch(net, genc, bits);
      double next_full =
          numeric_full_objective(net, y, next, next_dispatch) / 2.0;
      double next_merit = merit_at(next, next_dispatch, next_full);

      // Ride the proposed voltage increment direction (dispatch held at the
      // decoded values) while the merit keeps falling.
      if (next_merit < merit) {
        VoltageState trial = state;
        for (int k = 2; k <= 64; k *= 2) {
          for (int bus : enc.encoded_buses()) {
            const double um = double(bits[enc.mu_up(bus)]) -
                              double(bits[enc.mu_down(bus)]);
            const double uo = double(bits[enc.omega_up(bus)]) -
                              double(bits[enc.omega_down(bus)]);
            trial.mu[bus] = state.mu[bus] + k * state.d_mu[bus] * um;
            trial.omega[bus] = state.omega[bus] + k * state.d_omega[bus] * uo;
          }
          const double r =
              numeric_full_objective(net, y, trial, next_dispatch) / 2.0;
          const double m = merit_at(trial, next_dispatch, r);
          if (m >= next_merit) break;
          next = trial;
          next_full = r;
          next_merit = m;
        }
      }
      rec.t_update_s += seconds_since(t0);

      if (next_merit <= merit) {
        accepted = true;
        cand = std::move(next);
        cand_dispatch = std::move(next_dispatch);
        cand_full = next_full;
        cand_merit = next_merit;
        accepted_bits.assign(bits.begin(), bits.begin() + enc.num_vars());
        cand_inc = std::move(bits);
        std::fill(cand_inc.begin(), cand_inc.begin() + enc.num_vars(),
                  std::uint8_t(0));
        break;
      }
      for (int bus : enc.encoded_buses()) {
        state.d_mu[bus] = std::max(state.d_mu[bus] * 0.5, opts.bounds.mu_lo);
        state.d_omega[bus] =
            std::max(state.d_omega[bus] * 0.5, opts.bounds.omega_lo);
      }
    }

    rec.accepted = accepted;
    rec.d_mu = state.d_mu;
    rec.d_omega = state.d_omega;

    const double before = merit;
    if (accepted) {
      const std::size_t nb = state.mu.size();
      std::vector<double> mv_mu(nb), mv_om(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        mv_mu[i] = cand.mu[i] - state.mu[i];
        mv_om[i] = cand.omega[i] - state.omega[i];
      }
      recent_moves.emplace_back(std::move(mv_mu), std::move(mv_om));
      state = std::move(cand);
      dispatch = std::move(cand_dispatch);
      full_residual = cand_full;
      merit = cand_merit;
      inc_bits = std::move(cand_inc);
      history.push_back(std::move(accepted_bits));
    } else {
      history.emplace_back(enc.num_vars(), std::uint8_t(0));
    }
    if (history.size() > 3) history.erase(history.begin());

    // Momentum ride on the voltage coordinates with the dispatch held
    // fixed; see the power-flow loop for the rationale.
    if (accepted && recent_moves.size() >= 2) {
      const std::size_t nb = state.mu.size();
      std::vector<double> dir_mu(nb, 0.0), dir_om(nb, 0.0);
      for (const auto& mv : recent_moves)
        for (std::size_t i = 0; i < nb; ++i) {
          dir_mu[i] += mv.first[i];
          dir_om[i] += mv.second[i];
        }
      VoltageState best_state = state;
      double best_merit = merit;
      double best_full = full_residual;
      bool moved = false;
      for (double c = 1.0; c <= 512.0; c *= 2.0) {
        VoltageState trial = state;
        for (std::size_t i = 0; i < nb; ++i) {
          trial.mu[i] = state.mu[i] + c * dir_mu[i];
          trial.omega[i] = state.omega[i] + c * dir_om[i];
        }
        const double r = numeric_full_objective(net, y, trial, dispatch) / 2.0;
        const double m = merit_at(trial, dispatch, r);
        if (m >= best_merit) break;
        best_merit = m;
        best_full = r;
        best_state = trial;
        moved = true;
      }
      if (moved) {
        std::vector<double> mv_mu(nb), mv_om(nb);
        for (std::size_t i = 0; i < nb; ++i) {
          mv_mu[i] = best_state.mu[i] - state.mu[i];
          mv_om[i] = best_state.omega[i] - state.omega[i];
        }
        recent_moves.emplace_back(std::move(mv_mu), std::move(mv_om));
        state = std::move(best_state);
        merit = best_merit;
        full_residual = best_full;
      }
    }
    if (recent_moves.size() > 8)
      recent_moves.erase(recent_moves.begin(), recent_moves.end() - 8);

    load_residual = numeric_load_objective(net, y, state) / 2.0;
    cur_viol = violations_at(state, dispatch);
    rec.residual = load_residual;
    trace.aux_vars = rec.vars_aux;
    trace.total_vars = rec.vars_total;
    trace.records.push_back(std::move(rec));
    iterations = it + 1;

    if (load_residual <= opts.epsilon && cur_viol == 0) {
      status = SolveStatus::Converged;
      break;
    }

    stall = (accepted && merit < before) ? 0 : stall + 1;
    if (stall >= opts.stall_limit) {
      status = SolveStatus::Stalled;
      trace.failure = "no residual improvement for " +
                      std::to_string(opts.stall_limit) +
                      " consecutive iterations";
      break;
    }

    update_deltas(enc, history, state.d_mu, state.d_omega, it, opts.bounds);
  }

  finish(status, iterations);
  if (status == SolveStatus::MaxIterations)
    trace.failure = "iteration cap reached at load residual " +
                    std::to_string(load_residual);
  return trace;
}

}  // namespace gridanneal
