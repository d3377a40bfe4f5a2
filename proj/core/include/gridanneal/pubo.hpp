#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gridanneal {

using VarIndex = std::uint32_t;

// A multilinear polynomial over binary variables, stored as a map from the
// sorted set of participating variable indices to a real coefficient.
// Idempotence (x^2 = x) is applied on insertion, so keys never repeat a
// variable. The empty key holds the constant term. Terms whose coefficient
// accumulates to exactly zero are erased, and iteration order is the
// deterministic lexicographic order of the keys.
class BinaryPolynomial {
 public:
  using TermKey = std::vector<VarIndex>;
  using TermMap = std::map<TermKey, double>;

  BinaryPolynomial() = default;
  explicit BinaryPolynomial(double constant);

  // vars may be unsorted and may repeat (repeats collapse).
  void add_term(TermKey vars, double coeff);
  void add_constant(double c) { add_term({}, c); }

  double constant() const;
  double coeff(TermKey vars) const;  // 0 when absent
  int degree() const;
  std::size_t num_terms() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  // Highest variable index referenced plus one (0 for constant polynomials).
  VarIndex num_vars() const;

  const TermMap& terms() const { return terms_; }

  BinaryPolynomial& operator+=(const BinaryPolynomial& rhs);
  BinaryPolynomial& operator-=(const BinaryPolynomial& rhs);
  BinaryPolynomial& operator*=(double s);
  friend BinaryPolynomial operator+(BinaryPolynomial a,
                                    const BinaryPolynomial& b) {
    a += b;
    return a;
  }
  friend BinaryPolynomial operator-(BinaryPolynomial a,
                                    const BinaryPolynomial& b) {
    a -= b;
    return a;
  }
  friend BinaryPolynomial operator*(const BinaryPolynomial& a,
                                    const BinaryPolynomial& b);

  double evaluate(std::span<const std::uint8_t> bits) const;

 private:
  TermMap terms_;
};

// Quadratic unconstrained binary model: offset + linear + pairwise terms.
// Quadratic keys are ordered (i < j); zero coefficients are not stored.
struct QuboModel {
  std::size_t n = 0;
  std::map<VarIndex, double> linear;
  std::map<std::pair<VarIndex, VarIndex>, double> quadratic;
  double offset = 0.0;

  void add_linear(VarIndex i, double c);
  void add_quadratic(VarIndex i, VarIndex j, double c);
  double energy(std::span<const std::uint8_t> bits) const;
  double max_abs_coeff() const;
  double mean_abs_coeff() const;
};

// Spin model over s in {-1,+1}: offset + sum h_i s_i + sum J_ij s_i s_j.
struct IsingModel {
  std::size_t n = 0;
  std::map<VarIndex, double> h;
  std::map<std::pair<VarIndex, VarIndex>, double> j;
  double offset = 0.0;

  double energy(std::span<const std::int8_t> spins) const;
};

// One auxiliary variable per distinct reduced pair: z stands for x_i * x_j.
struct ReductionMap {
  struct Aux {
    VarIndex i = 0;
    VarIndex j = 0;  // i < j
  };
  VarIndex num_original = 0;
  std::map<VarIndex, Aux> aux;  // auxiliary index -> parent pair
  double lambda = 2.0;
};

struct QuadratizeOptions {
  // Penalty scale: each reduced term contributes |coeff| * lambda times the
  // pair-consistency penalty P(x_i, x_j; z) = x_i x_j - 2(x_i + x_j) z + 3 z.
  double lambda = 2.0;
  // When set, quartic terms emit only the two pair penalties without the
  // z_ij * z_kl product term (the literal reduced form some references give).
  // Kept for fidelity experiments; energies are then not equivalent.
  bool literal_quartic_form = false;
  // Floor for the original-variable count. Auxiliary indices are assigned
  // above max(polynomial variables, min_vars), so callers can reserve slots
  // for variables a particular build happened to leave unused.
  VarIndex min_vars = 0;
};

// Reduces a degree <= 4 polynomial to a QUBO by pair substitution. Cubic
// c*x_i x_j x_k becomes c*z_ij x_k plus |c|*lambda*P; quartic
// c*x_i x_j x_k x_l becomes c*z_ij z_kl plus penalties for both pairs. Pair
// choice is deterministic: a pair already memoized for the term wins,
// otherwise the lexicographically first pairing, and auxiliaries are shared
// across terms. Throws std::invalid_argument when degree(p) > 4.
std::pair<QuboModel, ReductionMap> quadratize(const BinaryPolynomial& p,
                                              const QuadratizeOptions& opts = {});

struct Projection {
  std::vector<std::uint8_t> original;  // first num_original bits
  int violations = 0;  // auxiliaries with z != x_i * x_j
};

// Drops auxiliary bits, counting consistency violations against the map.
Projection project_solution(std::span<const std::uint8_t> extended,
                            const ReductionMap& rmap);

// Overwrites each auxiliary bit with the product of its parents; afterwards
// project_solution reports zero violations and the QUBO energy can only
// drop when penalty terms were active.
void repair_auxiliaries(std::vector<std::uint8_t>& extended,
                        const ReductionMap& rmap);

// Variable maps x = (1 + s) / 2, i.e. x=1 <-> s=+1. Energies match
// pointwise under the map, including offsets.
IsingModel qubo_to_ising(const QuboModel& q);
QuboModel ising_to_qubo(const IsingModel& m);

struct BruteForceResult {
  std::vector<std::uint8_t> bits;
  double energy = 0.0;
};

// Exhaustive minimum over all 2^n assignments, n <= 24. Ties break toward
// the lexicographically smallest bitstring (bit 0 most significant).
BruteForceResult brute_force_min(const QuboModel& q);
BruteForceResult brute_force_min(const BinaryPolynomial& p);

// Sparse coordinate text export: "# offset <value>" and "# vars <n>"
// headers, then one "i j coeff" line per stored term (i == j for linear),
// in deterministic index order.
std::string export_qubo(const QuboModel& q);
QuboModel import_qubo(const std::string& text);

}  // namespace gridanneal
