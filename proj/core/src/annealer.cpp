#include "gridanneal/annealer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "splitmix.hpp"

namespace gridanneal {
namespace {

using detail::SplitMix64;
using detail::derive_seed;

// Flattened adjacency for O(degree) flip deltas.
struct Compiled {
  std::size_t n = 0;
  double offset = 0.0;
  std::vector<double> linear;
  std::vector<std::size_t> row_start;
  std::vector<std::pair<VarIndex, double>> edges;

  explicit Compiled(const QuboModel& q) {
    n = q.n;
    offset = q.offset;
    linear.assign(n, 0.0);
    for (const auto& [i, c] : q.linear) linear[i] = c;
    std::vector<std::size_t> deg(n, 0);
    for (const auto& [ij, c] : q.quadratic) {
      ++deg[ij.first];
      ++deg[ij.second];
    }
    row_start.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) row_start[i + 1] = row_start[i] + deg[i];
    edges.resize(row_start[n]);
    std::vector<std::size_t> fill(row_start.begin(), row_start.end() - 1);
    for (const auto& [ij, c] : q.quadratic) {
      edges[fill[ij.first]++] = {ij.second, c};
      edges[fill[ij.second]++] = {ij.first, c};
    }
  }
};

// One replica's chain state: bits, local fields and running energy.
struct Chain {
  std::vector<std::uint8_t> bits;
  std::vector<double> field;  // linear_i + sum_j w_ij bits_j
  double energy = 0.0;

  void init_random(const Compiled& m, SplitMix64& rng) {
    bits.resize(m.n);
    for (std::size_t i = 0; i < m.n; ++i)
      bits[i] = static_cast<std::uint8_t>(rng.next() & 1u);
    recompute(m);
  }

  void init_zero(const Compiled& m) {
    bits.assign(m.n, 0);
    recompute(m);
  }

  void init_seed(const Compiled& m, std::span<const std::uint8_t> seed) {
    bits.assign(m.n, 0);
    const std::size_t k = std::min(m.n, seed.size());
    std::copy_n(seed.begin(), k, bits.begin());
    recompute(m);
  }

  void recompute(const Compiled& m) {
    field.assign(m.n, 0.0);
    energy = m.offset;
    for (std::size_t i = 0; i < m.n; ++i) {
      double f = m.linear[i];
      for (std::size_t e = m.row_start[i]; e < m.row_start[i + 1]; ++e) {
        const auto& [j, w] = m.edges[e];
        if (bits[j]) f += w;
      }
      field[i] = f;
      if (bits[i]) energy += m.linear[i];
    }
    for (std::size_t i = 0; i < m.n; ++i) {
      if (!bits[i]) continue;
      for (std::size_t e = m.row_start[i]; e < m.row_start[i + 1]; ++e) {
        const auto& [j, w] = m.edges[e];
        if (j > i && bits[j]) energy += w;
      }
    }
  }

  void sweep(const Compiled& m, double beta, SplitMix64& rng) {
    for (std::size_t i = 0; i < m.n; ++i) {
      const double de = bits[i] ? -field[i] : field[i];
      if (de > 0.0 && rng.u01() >= std::exp(-beta * de)) continue;
      flip(m, static_cast<VarIndex>(i), de);
    }
  }

  void flip(const Compiled& m, VarIndex i, double de) {
    bits[i] ^= 1;
    energy += de;
    const double sign = bits[i] ? 1.0 : -1.0;
    for (std::size_t e = m.row_start[i]; e < m.row_start[i + 1]; ++e) {
      const auto& [j, w] = m.edges[e];
      field[j] += sign * w;
    }
  }
};

struct ReadResult {
  std::vector<std::uint8_t> bits;
  double energy = 0.0;
};

// Reads whose index falls inside the zero_init_fraction pattern start at
// the seed state (initial_state, or all-zeros when none is given); the
// pattern repeats every eight reads so it is independent of num_reads.
bool read_starts_at_seed(const AnnealConfig& cfg, int read_index) {
  const int eighths = std::clamp(
      static_cast<int>(std::lround(cfg.zero_init_fraction * 8.0)), 0, 8);
  return (read_index % 8) < eighths;
}

ReadResult run_read(const Compiled& m, const AnnealConfig& cfg,
                    std::uint64_t seed, bool zero_init) {
  SplitMix64 rng(seed);
  const int replicas = std::max(1, cfg.replicas);
  const int sweeps = std::max(1, cfg.num_sweeps);

  std::vector<Chain> chains(replicas);
  std::vector<double> beta(replicas);
  for (int r = 0; r < replicas; ++r) {
    if (!zero_init)
      chains[r].init_random(m, rng);
    else if (cfg.initial_state.empty())
      chains[r].init_zero(m);
    else
      chains[r].init_seed(m, cfg.initial_state);
  }

  // Seed-started reads refine the incumbent, so they skip the hot phase
  // that would scramble it: their schedule covers only the coldest decade.
  const double b_hi = std::max(cfg.beta_max, 1e-12);
  const double b_all = std::min(std::max(cfg.beta_min, 1e-12), b_hi);
  const double b_lo = zero_init ? std::max(b_all, b_hi / 10.0) : b_all;

  if (replicas > 1) {
    // Fixed geometric temperature ladder, replica 0 hottest.
    for (int r = 0; r < replicas; ++r)
      beta[r] = replicas == 1
                    ? b_hi
                    : b_lo * std::pow(b_hi / b_lo,
                                      double(r) / double(replicas - 1));
  }

  std::vector<std::uint8_t> best_bits = chains[0].bits;
  double best_energy = chains[0].energy;
  for (int r = 1; r < replicas; ++r) {
    if (chains[r].energy < best_energy) {
      best_energy = chains[r].energy;
      best_bits = chains[r].bits;
    }
  }

  auto schedule_beta = [&](int sweep) {
    const double t = sweeps <= 1 ? 1.0 : double(sweep) / double(sweeps - 1);
    if (cfg.schedule == BetaSchedule::Linear)
      return b_lo + (b_hi - b_lo) * t;
    return b_lo * std::pow(b_hi / b_lo, t);
  };

  for (int s = 0; s < sweeps; ++s) {
    if (replicas == 1) {
      chains[0].sweep(m, schedule_beta(s), rng);
      if (chains[0].energy < best_energy) {
        best_energy = chains[0].energy;
        best_bits = chains[0].bits;
      }
    } else {
      for (int r = 0; r < replicas; ++r) {
        chains[r].sweep(m, beta[r], rng);
        if (chains[r].energy < best_energy) {
          best_energy = chains[r].energy;
          best_bits = chains[r].bits;
        }
      }
      if (cfg.exchange_interval > 0 && (s + 1) % cfg.exchange_interval == 0) {
        for (int r = 0; r + 1 < replicas; ++r) {
          const double d =
              (beta[r] - beta[r + 1]) * (chains[r].energy - chains[r + 1].energy);
          if (d >= 0.0 || rng.u01() < std::exp(d))
            std::swap(chains[r], chains[r + 1]);
        }
      }
    }
  }

  ReadResult out;
  out.bits = std::move(best_bits);
  out.energy = best_energy;
  return out;
}

}  // namespace

SampleSet anneal(const QuboModel& q, const AnnealConfig& cfg, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const Compiled m(q);
  const int reads = std::max(1, cfg.num_reads);

  SampleSet out;
  out.config = cfg;

  if (m.n == 0) {
    out.records.push_back({{}, q.offset, reads});
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
  }

  std::vector<ReadResult> results(reads);
  std::vector<std::uint8_t> done(reads, 0);

  int nthreads = threads > 0 ? threads
                             : static_cast<int>(
                                   std::thread::hardware_concurrency());
  nthreads = std::clamp(nthreads, 1, reads);

  std::atomic<int> next{0};
  std::atomic<bool> out_of_time{false};
  const double limit = cfg.time_limit_s;

  auto worker = [&]() {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= reads) return;
      if (limit > 0.0) {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        if (elapsed > limit) {
          out_of_time.store(true);
          return;
        }
      }
      results[k] =
          run_read(m, cfg, derive_seed(cfg.seed, k), read_starts_at_seed(cfg, k));
      done[k] = 1;
    }
  };

  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  out.truncated = out_of_time.load();

  // Deterministic merge: recompute energies from the model, sort by
  // (energy, bitstring), fold duplicates.
  std::vector<Sample> samples;
  for (int k = 0; k < reads; ++k) {
    if (!done[k]) continue;
    Sample s;
    s.bits = std::move(results[k].bits);
    s.energy = q.energy(s.bits);
    s.count = 1;
    samples.push_back(std::move(s));
  }
  if (samples.empty()) {
    // Time limit hit before any read; fall back to one deterministic read.
    ReadResult r =
        run_read(m, cfg, derive_seed(cfg.seed, 0), read_starts_at_seed(cfg, 0));
    Sample s;
    s.bits = std::move(r.bits);
    s.energy = q.energy(s.bits);
    s.count = 1;
    samples.push_back(std::move(s));
    out.truncated = true;
  }
  std::sort(samples.begin(), samples.end(),
            [](const Sample& a, const Sample& b) {
              if (a.energy != b.energy) return a.energy < b.energy;
              return a.bits < b.bits;
            });
  for (Sample& s : samples) {
    if (!out.records.empty() && out.records.back().bits == s.bits)
      out.records.back().count += s.count;
    else
      out.records.push_back(std::move(s));
  }

  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

AnnealConfig tune_defaults(const QuboModel& q) {
  AnnealConfig cfg;
  const double max_abs = q.max_abs_coeff();
  if (q.n == 0 || max_abs == 0.0) {
    cfg.num_reads = 1;
    cfg.num_sweeps = 1;
    cfg.beta_min = 0.1;
    cfg.beta_max = 1.0;
    return cfg;
  }

  const double calibration = 1.0;
  cfg.beta_max = 10.0 / max_abs * calibration;

  const double mean_abs = q.mean_abs_coeff();
  cfg.beta_min = 0.1 / mean_abs;
  if (cfg.beta_min >= cfg.beta_max) cfg.beta_min = cfg.beta_max / 100.0;

  const double n = static_cast<double>(q.n);
  cfg.num_sweeps = static_cast<int>(std::clamp(4.0 * n, 256.0, 8192.0));
  const double frac = std::min(n, 100000.0) / 100000.0;
  cfg.num_reads = static_cast<int>(std::lround(2000.0 + 98000.0 * frac));
  cfg.schedule = BetaSchedule::Geometric;
  cfg.replicas = 1;
  return cfg;
}

}  // namespace gridanneal
