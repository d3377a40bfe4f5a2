#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gridanneal/pubo.hpp"

using namespace gridanneal;

namespace {

std::vector<std::uint8_t> bits_of(unsigned mask, std::size_t n) {
  std::vector<std::uint8_t> b(n, 0);
  for (std::size_t i = 0; i < n; ++i) b[i] = (mask >> i) & 1u;
  return b;
}

// A random degree <= 4 polynomial with a bounded term count, so the
// quadratized model stays exhaustively enumerable.
BinaryPolynomial random_poly(std::mt19937& rng, int n, int high_order_terms,
                             bool integer_coeffs) {
  std::uniform_int_distribution<int> var(0, n - 1);
  std::uniform_int_distribution<int> coef_i(-5, 5);
  std::uniform_real_distribution<double> coef_r(-3.0, 3.0);
  auto coef = [&] {
    return integer_coeffs ? double(coef_i(rng)) : coef_r(rng);
  };
  BinaryPolynomial p(coef());
  for (int i = 0; i < n; ++i) p.add_term({VarIndex(i)}, coef());
  for (int t = 0; t < n; ++t)
    p.add_term({VarIndex(var(rng)), VarIndex(var(rng))}, coef());
  std::uniform_int_distribution<int> deg(3, 4);
  for (int t = 0; t < high_order_terms; ++t) {
    BinaryPolynomial::TermKey key;
    for (int k = deg(rng); k > 0; --k) key.push_back(VarIndex(var(rng)));
    p.add_term(key, coef());
  }
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("pubo");

TEST_CASE("term insertion collapses repeats and erases zeros") {
  BinaryPolynomial p;
  p.add_term({3, 1, 1}, 2.0);  // x1 * x3 after idempotence
  CHECK(p.coeff({1, 3}) == 2.0);
  CHECK(p.degree() == 2);
  p.add_term({1, 3}, -2.0);
  CHECK(p.coeff({1, 3}) == 0.0);
  CHECK(p.empty());
}

TEST_CASE("evaluate matches a hand expansion") {
  BinaryPolynomial p(1.5);
  p.add_term({0}, 2.0);
  p.add_term({0, 1}, -3.0);
  p.add_term({0, 1, 2}, 4.0);
  const std::vector<std::uint8_t> b{1, 1, 0};
  CHECK(p.evaluate(b) == doctest::Approx(1.5 + 2.0 - 3.0));
  const std::vector<std::uint8_t> c{1, 1, 1};
  CHECK(p.evaluate(c) == doctest::Approx(1.5 + 2.0 - 3.0 + 4.0));
}

TEST_CASE("polynomial product applies idempotence") {
  BinaryPolynomial a;
  a.add_term({0}, 1.0);
  a.add_term({1}, 1.0);
  BinaryPolynomial b;
  b.add_term({0}, 1.0);
  BinaryPolynomial c = a * b;  // x0*x0 + x1*x0 = x0 + x0 x1
  CHECK(c.coeff({0}) == 1.0);
  CHECK(c.coeff({0, 1}) == 1.0);
  CHECK(c.num_terms() == 2);
}

TEST_CASE("quadratic polynomials pass through quadratize untouched") {
  BinaryPolynomial p(0.5);
  p.add_term({0}, 1.0);
  p.add_term({0, 1}, -2.0);
  auto [q, rmap] = quadratize(p);
  CHECK(q.n == 2);
  CHECK(rmap.aux.empty());
  CHECK(q.offset == 0.5);
  CHECK(q.linear.at(0) == 1.0);
  CHECK(q.quadratic.at({0, 1}) == -2.0);
}

TEST_CASE("cubic reduction emits the documented penalty coefficients") {
  BinaryPolynomial p;
  p.add_term({0, 1, 2}, 1.0);
  auto [q, rmap] = quadratize(p);  // lambda = 2, aux z = x0*x1 at index 3
  REQUIRE(rmap.aux.size() == 1);
  const VarIndex z = rmap.aux.begin()->first;
  CHECK(z == 3);
  CHECK(rmap.aux.at(z).i == 0);
  CHECK(rmap.aux.at(z).j == 1);
  // Reduced term z * x2, then lambda*|c|*(x0 x1 - 2(x0+x1)z + 3z).
  CHECK(q.quadratic.at({2, z}) == doctest::Approx(1.0));
  CHECK(q.quadratic.at({0, 1}) == doctest::Approx(2.0));
  CHECK(q.quadratic.at({0, z}) == doctest::Approx(-4.0));
  CHECK(q.quadratic.at({1, z}) == doctest::Approx(-4.0));
  CHECK(q.linear.at(z) == doctest::Approx(6.0));
}

TEST_CASE("pair penalty restores the product under minimization") {
  // For every original assignment the auxiliary minimization must recover
  // the polynomial value exactly.
  BinaryPolynomial p;
  p.add_term({0, 1, 2}, -2.5);
  p.add_term({0, 1, 3}, 1.5);
  p.add_term({0, 1, 2, 3}, 3.0);
  p.add_term({2}, 0.75);
  auto [q, rmap] = quadratize(p);
  const std::size_t n_orig = 4;
  const std::size_t n_all = q.n;
  REQUIRE(n_all <= 12);
  for (unsigned x = 0; x < (1u << n_orig); ++x) {
    auto base = bits_of(x, n_all);
    double best = 1e300;
    const std::size_t n_aux = n_all - n_orig;
    for (unsigned z = 0; z < (1u << n_aux); ++z) {
      for (std::size_t k = 0; k < n_aux; ++k)
        base[n_orig + k] = (z >> k) & 1u;
      best = std::min(best, q.energy(base));
    }
    CHECK(best == doctest::Approx(p.evaluate(bits_of(x, n_orig)))
                      .epsilon(1e-12));
  }
}

TEST_CASE("auxiliaries are shared across terms with a common pair") {
  BinaryPolynomial p;
  p.add_term({0, 1, 2}, 1.0);
  p.add_term({0, 1, 3}, 1.0);
  auto [q, rmap] = quadratize(p);
  CHECK(rmap.aux.size() == 1);
}

TEST_CASE("quartic literal form omits the product term") {
  BinaryPolynomial p;
  p.add_term({0, 1, 2, 3}, 2.0);
  QuadratizeOptions opts;
  opts.literal_quartic_form = true;
  auto [q, rmap] = quadratize(p, opts);
  REQUIRE(rmap.aux.size() == 2);
  auto it = rmap.aux.begin();
  const VarIndex z1 = it->first;
  const VarIndex z2 = std::next(it)->first;
  CHECK(q.quadratic.find({z1, z2}) == q.quadratic.end());

  auto [q2, rmap2] = quadratize(p);
  CHECK(q2.quadratic.at({z1, z2}) == doctest::Approx(2.0));
}

TEST_CASE("min_vars reserves the auxiliary index floor") {
  BinaryPolynomial p;
  p.add_term({0, 1, 2}, 1.0);
  QuadratizeOptions opts;
  opts.min_vars = 10;
  auto [q, rmap] = quadratize(p, opts);
  REQUIRE(rmap.aux.size() == 1);
  CHECK(rmap.aux.begin()->first == 10);
  CHECK(q.n == 11);
}

TEST_CASE("degree above four is rejected") {
  BinaryPolynomial p;
  p.add_term({0, 1, 2, 3, 4}, 1.0);
  CHECK_THROWS_AS(quadratize(p), std::invalid_argument);
}

TEST_CASE("random battery: minima agree and argmins project") {
  std::mt19937 rng(42);
  for (int inst = 0; inst < 40; ++inst) {
    const int n = 4 + int(rng() % 5);  // 4..8 original variables
    BinaryPolynomial p = random_poly(rng, n, 3, inst % 2 == 0);
    auto [q, rmap] = quadratize(p);
    REQUIRE(q.n <= 20);
    const BruteForceResult orig = brute_force_min(p);
    const BruteForceResult quad = brute_force_min(q);
    const double tol = inst % 2 == 0 ? 0.0 : 1e-9;
    CHECK(std::fabs(orig.energy - quad.energy) <= tol);
    const Projection proj = project_solution(quad.bits, rmap);
    CHECK(proj.violations == 0);
    CHECK(std::fabs(p.evaluate(proj.original) - orig.energy) <= tol);
  }
}

TEST_CASE("repair_auxiliaries never raises the energy") {
  std::mt19937 rng(7);
  for (int inst = 0; inst < 20; ++inst) {
    BinaryPolynomial p = random_poly(rng, 6, 4, false);
    auto [q, rmap] = quadratize(p);
    std::vector<std::uint8_t> bits(q.n);
    for (auto& b : bits) b = rng() & 1u;
    const double before = q.energy(bits);
    repair_auxiliaries(bits, rmap);
    CHECK(q.energy(bits) <= before + 1e-12);
    CHECK(project_solution(bits, rmap).violations == 0);
  }
}

TEST_CASE("qubo and ising energies match pointwise") {
  std::mt19937 rng(11);
  BinaryPolynomial p = random_poly(rng, 6, 0, false);
  auto [q, rmap] = quadratize(p);
  const IsingModel m = qubo_to_ising(q);
  const QuboModel q2 = ising_to_qubo(m);
  for (unsigned x = 0; x < (1u << q.n); ++x) {
    const auto bits = bits_of(x, q.n);
    std::vector<std::int8_t> spins(q.n);
    for (std::size_t i = 0; i < q.n; ++i) spins[i] = bits[i] ? 1 : -1;
    CHECK(m.energy(spins) == doctest::Approx(q.energy(bits)).epsilon(1e-12));
    CHECK(q2.energy(bits) == doctest::Approx(q.energy(bits)).epsilon(1e-12));
  }
}

TEST_CASE("export and import round-trip a qubo") {
  QuboModel q;
  q.n = 3;
  q.offset = -1.25;
  q.add_linear(0, 2.0);
  q.add_linear(2, -0.5);
  q.add_quadratic(0, 2, 1.75);
  const QuboModel r = import_qubo(export_qubo(q));
  CHECK(r.n == q.n);
  CHECK(r.offset == doctest::Approx(q.offset));
  CHECK(r.linear == q.linear);
  CHECK(r.quadratic == q.quadratic);
}

TEST_CASE("brute force breaks ties toward the smallest bitstring") {
  BinaryPolynomial flat(3.0);  // every assignment ties
  const BruteForceResult r = brute_force_min(flat);
  CHECK(r.energy == 3.0);
  for (std::uint8_t b : r.bits) CHECK(b == 0);
}

TEST_SUITE_END();
