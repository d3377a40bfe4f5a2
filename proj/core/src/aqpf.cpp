#include "gridanneal/aqpf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gridanneal/errors.hpp"
#include "splitmix.hpp"

namespace gridanneal {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Affine voltage-coordinate polynomial for one bus: the base value plus
// dmu*(x_up - x_down) when the bus is encoded, a constant otherwise.
BinaryPolynomial coordinate_poly(double base, double step, bool encoded,
                                 VarIndex up, VarIndex down) {
  BinaryPolynomial p(base);
  if (encoded && step != 0.0) {
    p.add_term({up}, step);
    p.add_term({down}, -step);
  }
  return p;
}

}  // namespace

IncrementEncoding IncrementEncoding::build(const NetworkCase& net) {
  IncrementEncoding enc;
  enc.slot_of_bus_.assign(net.buses.size(), -1);
  for (const Bus& b : net.buses) {
    if (b.kind == BusKind::Slack) continue;
    enc.slot_of_bus_[b.id] = static_cast<int>(enc.encoded_.size());
    enc.encoded_.push_back(b.id);
  }
  return enc;
}

BinaryPolynomial build_pf_hamiltonian(const PfHamiltonianSpec& spec,
                                      const IncrementEncoding& enc) {
  const NetworkCase& net = *spec.net;
  const AdmittanceMatrix& y = *spec.y;
  const VoltageState& v = *spec.state;
  const int n = static_cast<int>(net.buses.size());
  const int slack = net.slack_index();

  std::vector<double> p_spec = net.p_specified();
  std::vector<double> q_spec = net.q_specified();
  for (double& x : p_spec) x /= net.mva_base;
  for (double& x : q_spec) x /= net.mva_base;

  // Per-bus affine coordinate polynomials.
  std::vector<BinaryPolynomial> mu(n), om(n);
  auto is_excluded = [&](int bus) {
    if (!spec.excluded) return false;
    return std::binary_search(spec.excluded->begin(), spec.excluded->end(),
                              bus);
  };

  // Buses outside the active partition are frozen boundaries: their
  // voltages enter neighbouring rows as constants, not as variables.
  for (int i = 0; i < n; ++i) {
    const bool e = enc.encodes(i) && !is_excluded(i);
    mu[i] = coordinate_poly(v.mu[i], e ? v.d_mu[i] : 0.0, e,
                            e ? enc.mu_up(i) : 0, e ? enc.mu_down(i) : 0);
    om[i] = coordinate_poly(v.omega[i], e ? v.d_omega[i] : 0.0, e,
                            e ? enc.omega_up(i) : 0, e ? enc.omega_down(i) : 0);
  }

  BinaryPolynomial h;
  for (int i = 0; i < n; ++i) {
    if (i == slack || is_excluded(i)) continue;
    const Bus& bus = net.buses[i];

    // (YV)_i = a_i + j b_i as affine polynomials over the row's variables.
    BinaryPolynomial a, b;
    for (const auto& [j, yij] : y.row(i)) {
      const double g = yij.real();
      const double bb = yij.imag();
      BinaryPolynomial ga = mu[j];
      ga *= g;
      BinaryPolynomial gb = om[j];
      gb *= bb;
      a += ga;
      a -= gb;
      BinaryPolynomial gc = om[j];
      gc *= g;
      BinaryPolynomial gd = mu[j];
      gd *= bb;
      b += gc;
      b += gd;
    }

    BinaryPolynomial p_i = mu[i] * a + om[i] * b;
    p_i.add_constant(-p_spec[i]);
    h += p_i * p_i;

    if (spec.pv_mode == PvMode::MagnitudePenalty && bus.kind == BusKind::PV) {
      BinaryPolynomial vsq = mu[i] * mu[i] + om[i] * om[i];
      vsq.add_constant(-bus.v_set * bus.v_set);
      h += vsq * vsq;
    } else {
      BinaryPolynomial q_i = om[i] * a - mu[i] * b;
      q_i.add_constant(-q_spec[i]);
      h += q_i * q_i;
    }
  }
  return h;
}

double numeric_mismatch_objective(const NetworkCase& net,
                                  const AdmittanceMatrix& y,
                                  const VoltageState& v,
                                  std::span<const int> excluded,
                                  PvMode pv_mode) {
  const Injections inj = compute_injections_pu(y, v);
  const int slack = net.slack_index();
  std::vector<double> p_spec = net.p_specified();
  std::vector<double> q_spec = net.q_specified();

  double obj = 0.0;
  for (const Bus& bus : net.buses) {
    const int i = bus.id;
    if (i == slack) continue;
    if (std::binary_search(excluded.begin(), excluded.end(), i)) continue;
    const double dp = inj.p[i] - p_spec[i] / net.mva_base;
    obj += dp * dp;
    if (pv_mode == PvMode::MagnitudePenalty && bus.kind == BusKind::PV) {
      const double dv = v.mu[i] * v.mu[i] + v.omega[i] * v.omega[i] -
                        bus.v_set * bus.v_set;
      obj += dv * dv;
    } else {
      const double dq = inj.q[i] - q_spec[i] / net.mva_base;
      obj += dq * dq;
    }
  }
  return obj;
}

VoltageState apply_increment_bits(const VoltageState& base,
                                  const IncrementEncoding& enc,
                                  std::span<const std::uint8_t> bits) {
  VoltageState out = base;
  for (int bus : enc.encoded_buses()) {
    const double dm = base.d_mu[bus];
    const double dw = base.d_omega[bus];
    out.mu[bus] += dm * (double(bits[enc.mu_up(bus)]) -
                         double(bits[enc.mu_down(bus)]));
    out.omega[bus] += dw * (double(bits[enc.omega_up(bus)]) -
                            double(bits[enc.omega_down(bus)]));
  }
  return out;
}

double delta_schedule(int it, double lo, double hi, double rate) {
  return lo + (hi - lo) * std::exp(rate * static_cast<double>(it));
}

namespace {

// Six-bit channel history over the last three iterations, oldest first.
// Halving fires on stagnation (all six equal) and on the four up/down
// oscillation patterns.
bool wants_halving(const std::uint8_t up[3], const std::uint8_t down[3]) {
  const int sum = up[0] + up[1] + up[2] + down[0] + down[1] + down[2];
  if (sum == 0 || sum == 6) return true;
  auto matches = [&](std::uint8_t u0, std::uint8_t u1, std::uint8_t u2,
                     std::uint8_t d0, std::uint8_t d1, std::uint8_t d2) {
    return up[0] == u0 && up[1] == u1 && up[2] == u2 && down[0] == d0 &&
           down[1] == d1 && down[2] == d2;
  };
  return matches(1, 1, 0, 0, 0, 1) ||  // up, up, down
         matches(0, 0, 1, 1, 1, 0) ||  // down, down, up
         matches(0, 1, 0, 1, 0, 1) ||  // down, up, down
         matches(1, 0, 1, 0, 1, 0);    // up, down, up
}

}  // namespace

void update_deltas(const IncrementEncoding& enc,
                   std::span<const std::vector<std::uint8_t>> history,
                   std::vector<double>& d_mu, std::vector<double>& d_omega,
                   int it, const DeltaBounds& bounds) {
  if (history.size() < 3) return;
  const auto& h0 = history[history.size() - 3];
  const auto& h1 = history[history.size() - 2];
  const auto& h2 = history[history.size() - 1];

  const double mu_base =
      delta_schedule(it, bounds.mu_lo, bounds.mu_hi, bounds.rate);
  const double om_base =
      delta_schedule(it, bounds.omega_lo, bounds.omega_hi, bounds.rate);

  for (int bus : enc.encoded_buses()) {
    const std::uint8_t mu_up[3] = {h0[enc.mu_up(bus)], h1[enc.mu_up(bus)],
                                   h2[enc.mu_up(bus)]};
    const std::uint8_t mu_dn[3] = {h0[enc.mu_down(bus)], h1[enc.mu_down(bus)],
                                   h2[enc.mu_down(bus)]};
    const std::uint8_t om_up[3] = {h0[enc.omega_up(bus)], h1[enc.omega_up(bus)],
                                   h2[enc.omega_up(bus)]};
    const std::uint8_t om_dn[3] = {h0[enc.omega_down(bus)],
                                   h1[enc.omega_down(bus)],
                                   h2[enc.omega_down(bus)]};

    double dm = mu_base;
    if (wants_halving(mu_up, mu_dn)) dm *= 0.5;
    d_mu[bus] = std::clamp(dm, bounds.mu_lo, bounds.mu_hi);

    double dw = om_base;
    if (wants_halving(om_up, om_dn)) dw *= 0.5;
    d_omega[bus] = std::clamp(dw, bounds.omega_lo, bounds.omega_hi);
  }
}

std::vector<int> partition_select(const NetworkCase& net, double fraction,
                                  std::uint64_t seed, int it) {
  std::vector<int> pool;
  const int slack = net.slack_index();
  for (const Bus& b : net.buses)
    if (b.id != slack) pool.push_back(b.id);

  const int want = static_cast<int>(
      std::lround(fraction * static_cast<double>(net.buses.size())));
  const int k = std::clamp(want, 0, static_cast<int>(pool.size()));
  if (k == 0) return {};

  detail::SplitMix64 rng(
      detail::derive_seed(seed, 0x9a27ull, static_cast<std::uint64_t>(it)));
  // Partial Fisher-Yates: the first k entries become the excluded set.
  for (int i = 0; i < k; ++i) {
    const int j =
        i + static_cast<int>(rng.below(static_cast<std::uint32_t>(pool.size() - i)));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> out(pool.begin(), pool.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

SolveTrace run_aqpf(const NetworkCase& net, const AqpfOptions& opts) {
  validate(net);
  const AdmittanceMatrix y = build_admittance(net);
  const IncrementEncoding enc = IncrementEncoding::build(net);

  SolveTrace trace;
  trace.base_vars = enc.num_vars();

  VoltageState state = VoltageState::flat(net, opts.d_mu0, opts.d_omega0);
  double residual =
      numeric_mismatch_objective(net, y, state, {}, opts.pv_mode) / 2.0;
  trace.initial_residual = residual;

  if (residual <= opts.epsilon) {
    trace.status = SolveStatus::Converged;
    trace.converged = true;
    trace.iterations = 0;
    trace.final_residual = residual;
    trace.final_state = state;
    trace.total_vars = trace.base_vars;
    return trace;
  }

  std::vector<std::vector<std::uint8_t>> history;
  // Recent accepted state moves, used as a momentum direction.
  std::vector<std::pair<std::vector<double>, std::vector<double>>> recent_moves;
  int stall = 0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;

    std::vector<int> excluded;
    if (opts.partition_fraction > 0.0)
      excluded = partition_select(net, opts.partition_fraction, opts.seed, it);
    rec.excluded_buses = static_cast<int>(excluded.size());

    bool accepted = false;
    VoltageState cand;
    double cand_residual = residual;
    std::vector<std::uint8_t> accepted_bits;

    for (int attempt = 0; attempt <= opts.fallback_retries; ++attempt) {
      rec.retries = attempt;

      auto t0 = Clock::now();
      PfHamiltonianSpec hspec;
      hspec.net = &net;
      hspec.y = &y;
      hspec.state = &state;
      hspec.excluded = excluded.empty() ? nullptr : &excluded;
      hspec.pv_mode = opts.pv_mode;
      const BinaryPolynomial h = build_pf_hamiltonian(hspec, enc);
      rec.t_build_s += seconds_since(t0);

      t0 = Clock::now();
      QuadratizeOptions qopts;
      qopts.lambda = opts.lambda;
      qopts.min_vars = enc.num_vars();
      auto [qubo, rmap] = quadratize(h, qopts);
      rec.t_quadratize_s += seconds_since(t0);

      rec.vars_total = static_cast<int>(qubo.n);
      rec.vars_aux = static_cast<int>(qubo.n) - enc.num_vars();
      rec.base_energy = qubo.offset;

      t0 = Clock::now();
      AnnealConfig acfg;
      acfg.num_reads = opts.anneal_reads;
      acfg.num_sweeps =
          opts.anneal_sweeps > 0
              ? opts.anneal_sweeps
              : static_cast<int>(std::clamp(4.0 * double(qubo.n), 256.0, 4096.0));
      acfg.replicas = opts.anneal_replicas;
      const double max_abs = qubo.max_abs_coeff();
      acfg.beta_max = max_abs > 0.0 ? 10.0 / max_abs : 10.0;
      acfg.beta_min = acfg.beta_max / 100.0;
      // Half the reads refine the incumbent (zero increments), half explore.
      acfg.zero_init_fraction = 0.5;
      acfg.seed = detail::derive_seed(opts.seed, static_cast<std::uint64_t>(it),
                                      static_cast<std::uint64_t>(attempt));
      const SampleSet ss = anneal(qubo, acfg, opts.threads);
      rec.t_anneal_s += seconds_since(t0);
      rec.best_energy = ss.best().energy;

      t0 = Clock::now();
      Projection proj = project_solution(ss.best().bits, rmap);
      // Frozen boundary buses carry no bias in the model, so whatever the
      // annealer left in their bits is noise; pin them to "no move".
      for (int bus : excluded) {
        if (!enc.encodes(bus)) continue;
        proj.original[enc.mu_up(bus)] = 0;
        proj.original[enc.mu_down(bus)] = 0;
        proj.original[enc.omega_up(bus)] = 0;
        proj.original[enc.omega_down(bus)] = 0;
      }
      VoltageState next = apply_increment_bits(state, enc, proj.original);
      double next_residual =
          numeric_mismatch_objective(net, y, next, {}, opts.pv_mode) / 2.0;

      // Ride the proposed increment direction while the numeric residual
      // keeps falling. This cheap line search lets strict improvements
      // extend along soft directions that single steps crawl through.
      if (next_residual < residual) {
        VoltageState trial = state;
        for (int k = 2; k <= 64; k *= 2) {
          for (int bus : enc.encoded_buses()) {
            const double um = double(proj.original[enc.mu_up(bus)]) -
                              double(proj.original[enc.mu_down(bus)]);
            const double uo = double(proj.original[enc.omega_up(bus)]) -
                              double(proj.original[enc.omega_down(bus)]);
            trial.mu[bus] = state.mu[bus] + k * state.d_mu[bus] * um;
            trial.omega[bus] = state.omega[bus] + k * state.d_omega[bus] * uo;
          }
          const double r =
              numeric_mismatch_objective(net, y, trial, {}, opts.pv_mode) / 2.0;
          if (r >= next_residual) break;
          next = trial;
          next_residual = r;
        }
      }
      rec.t_update_s += seconds_since(t0);

      if (next_residual <= residual) {
        accepted = true;
        cand = std::move(next);
        cand_residual = next_residual;
        accepted_bits = proj.original;
        break;
      }
      // Worsening step: halve all steps and retry with a rebuilt objective.
      for (int bus : enc.encoded_buses()) {
        state.d_mu[bus] =
            std::max(state.d_mu[bus] * 0.5, opts.bounds.mu_lo);
        state.d_omega[bus] =
            std::max(state.d_omega[bus] * 0.5, opts.bounds.omega_lo);
      }
    }

    rec.accepted = accepted;
    rec.d_mu = state.d_mu;
    rec.d_omega = state.d_omega;

    const double before = residual;
    if (accepted) {
      const std::size_t nb = state.mu.size();
      std::vector<double> mv_mu(nb), mv_om(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        mv_mu[i] = cand.mu[i] - state.mu[i];
        mv_om[i] = cand.omega[i] - state.omega[i];
      }
      recent_moves.emplace_back(std::move(mv_mu), std::move(mv_om));
      state = std::move(cand);
      residual = cand_residual;
      history.push_back(std::move(accepted_bits));
    } else {
      history.emplace_back(enc.num_vars(), std::uint8_t(0));
    }
    if (history.size() > 3) history.erase(history.begin());

    // Momentum ride: over several accepted moves the transverse components
    // average out while drift along a flat residual valley accumulates.
    // Riding the summed direction with a doubling line search covers in one
    // step what per-iteration increments would crawl through.
    if (accepted && recent_moves.size() >= 2) {
      const std::size_t nb = state.mu.size();
      std::vector<double> dir_mu(nb, 0.0), dir_om(nb, 0.0);
      for (const auto& mv : recent_moves)
        for (std::size_t i = 0; i < nb; ++i) {
          dir_mu[i] += mv.first[i];
          dir_om[i] += mv.second[i];
        }
      VoltageState best_state = state;
      double best = residual;
      bool moved = false;
      for (double c = 1.0; c <= 512.0; c *= 2.0) {
        VoltageState trial = state;
        for (std::size_t i = 0; i < nb; ++i) {
          trial.mu[i] = state.mu[i] + c * dir_mu[i];
          trial.omega[i] = state.omega[i] + c * dir_om[i];
        }
        const double r =
            numeric_mismatch_objective(net, y, trial, {}, opts.pv_mode) / 2.0;
        if (r >= best) break;
        best = r;
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
        residual = best;
      }
    }
    if (recent_moves.size() > 8)
      recent_moves.erase(recent_moves.begin(),
                         recent_moves.end() - 8);

    rec.residual = residual;
    trace.aux_vars = rec.vars_aux;
    trace.total_vars = rec.vars_total;
    trace.records.push_back(std::move(rec));
    trace.iterations = it + 1;

    if (residual <= opts.epsilon) {
      trace.status = SolveStatus::Converged;
      trace.converged = true;
      break;
    }

    stall = (accepted && residual < before) ? 0 : stall + 1;
    if (stall >= opts.stall_limit) {
      trace.status = SolveStatus::Stalled;
      trace.failure = "no residual improvement for " +
                      std::to_string(opts.stall_limit) +
                      " consecutive iterations";
      break;
    }

    update_deltas(enc, history, state.d_mu, state.d_omega, it, opts.bounds);
  }

  trace.final_residual = residual;
  trace.final_state = state;
  if (trace.status == SolveStatus::MaxIterations)
    trace.failure = "iteration cap reached at residual " +
                    std::to_string(residual);
  return trace;
}

}  // namespace gridanneal
