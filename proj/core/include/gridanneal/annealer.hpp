#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridanneal/pubo.hpp"

namespace gridanneal {

enum class BetaSchedule { Geometric, Linear };

struct AnnealConfig {
  int num_reads = 32;      // independent restarts
  int num_sweeps = 1000;   // full single-flip passes per read
  double beta_min = 0.1;   // inverse temperature at the hot end
  double beta_max = 10.0;
  BetaSchedule schedule = BetaSchedule::Geometric;
  int replicas = 1;            // > 1 enables parallel tempering
  int exchange_interval = 10;  // sweeps between replica exchange attempts
  std::uint64_t seed = 12345;
  double time_limit_s = 0.0;  // soft wall-clock cap; 0 disables
  // Fraction of reads whose chains start from a seed state instead of a
  // random one, useful for refining a known-good incumbent. The seed is
  // initial_state when non-empty (short vectors are zero-extended), the
  // all-zeros state otherwise. Seeded reads anneal over only the coldest
  // decade [beta_max/10, beta_max] so the hot phase cannot scramble the
  // incumbent. Applied as a per-read-index pattern (eighths) so a read's
  // behaviour does not depend on num_reads.
  double zero_init_fraction = 0.0;
  std::vector<std::uint8_t> initial_state;
};

struct Sample {
  std::vector<std::uint8_t> bits;
  double energy = 0.0;
  int count = 0;  // reads that produced this exact bitstring
};

struct SampleSet {
  // Ascending energy, ties broken by lexicographic bitstring. Identical
  // bitstrings are merged with summed counts.
  std::vector<Sample> records;
  double wall_time_s = 0.0;
  bool truncated = false;  // time limit cut reads short
  AnnealConfig config;     // echo of the inputs

  const Sample& best() const { return records.front(); }
};

// Single-flip Metropolis annealing with O(degree) incremental energy deltas.
// Each read is seeded independently from (seed, read index), so results are
// identical for any thread count and any read ordering, and the per-read
// seed stream is a prefix: growing num_reads never changes earlier reads.
// replicas > 1 runs parallel tempering inside each read: replicas hold a
// geometric ladder of fixed temperatures spanning [beta_min, beta_max] and
// adjacent pairs swap states with probability min(1, exp(dbeta * dE)) every
// exchange_interval sweeps. Recorded energies are recomputed from the model
// at read end, never trusted from the incremental accumulator.
SampleSet anneal(const QuboModel& q, const AnnealConfig& cfg, int threads = 0);

// Budget heuristics: beta_max targets uphill acceptance ~exp(-10) against
// the largest coefficient, beta_min ~0.5 acceptance against the mean
// coefficient, sweeps scale with variable count, and reads interpolate
// between 2000 and 100000 by problem size. Empty or constant models get a
// minimal configuration.
AnnealConfig tune_defaults(const QuboModel& q);

}  // namespace gridanneal
