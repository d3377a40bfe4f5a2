#include "gridanneal/pubo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace gridanneal {

BinaryPolynomial::BinaryPolynomial(double constant) {
  if (constant != 0.0) terms_[{}] = constant;
}

void BinaryPolynomial::add_term(TermKey vars, double coeff) {
  if (coeff == 0.0) return;
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  auto [it, inserted] = terms_.emplace(std::move(vars), coeff);
  if (!inserted) {
    it->second += coeff;
    if (it->second == 0.0) terms_.erase(it);
  }
}

double BinaryPolynomial::constant() const {
  auto it = terms_.find({});
  return it == terms_.end() ? 0.0 : it->second;
}

double BinaryPolynomial::coeff(TermKey vars) const {
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  auto it = terms_.find(vars);
  return it == terms_.end() ? 0.0 : it->second;
}

int BinaryPolynomial::degree() const {
  std::size_t d = 0;
  for (const auto& [key, c] : terms_) d = std::max(d, key.size());
  return static_cast<int>(d);
}

VarIndex BinaryPolynomial::num_vars() const {
  VarIndex n = 0;
  for (const auto& [key, c] : terms_)
    if (!key.empty()) n = std::max(n, key.back() + 1);
  return n;
}

BinaryPolynomial& BinaryPolynomial::operator+=(const BinaryPolynomial& rhs) {
  for (const auto& [key, c] : rhs.terms_) {
    auto [it, inserted] = terms_.emplace(key, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }
  return *this;
}

BinaryPolynomial& BinaryPolynomial::operator-=(const BinaryPolynomial& rhs) {
  for (const auto& [key, c] : rhs.terms_) {
    auto [it, inserted] = terms_.emplace(key, -c);
    if (!inserted) {
      it->second -= c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }
  return *this;
}

BinaryPolynomial& BinaryPolynomial::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [key, c] : terms_) c *= s;
  return *this;
}

BinaryPolynomial operator*(const BinaryPolynomial& a,
                           const BinaryPolynomial& b) {
  BinaryPolynomial out;
  BinaryPolynomial::TermKey merged;
  for (const auto& [ka, ca] : a.terms_) {
    for (const auto& [kb, cb] : b.terms_) {
      merged.clear();
      std::set_union(ka.begin(), ka.end(), kb.begin(), kb.end(),
                     std::back_inserter(merged));
      auto [it, inserted] = out.terms_.emplace(merged, ca * cb);
      if (!inserted) {
        it->second += ca * cb;
        if (it->second == 0.0) out.terms_.erase(it);
      }
    }
  }
  return out;
}

double BinaryPolynomial::evaluate(std::span<const std::uint8_t> bits) const {
  double e = 0.0;
  for (const auto& [key, c] : terms_) {
    bool on = true;
    for (VarIndex v : key) {
      if (!bits[v]) {
        on = false;
        break;
      }
    }
    if (on) e += c;
  }
  return e;
}

void QuboModel::add_linear(VarIndex i, double c) {
  if (c == 0.0) return;
  auto [it, inserted] = linear.emplace(i, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) linear.erase(it);
  }
}

void QuboModel::add_quadratic(VarIndex i, VarIndex j, double c) {
  if (c == 0.0) return;
  if (i == j) {
    add_linear(i, c);  // x^2 = x
    return;
  }
  if (i > j) std::swap(i, j);
  auto [it, inserted] = quadratic.emplace(std::make_pair(i, j), c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) quadratic.erase(it);
  }
}

double QuboModel::energy(std::span<const std::uint8_t> bits) const {
  double e = offset;
  for (const auto& [i, c] : linear)
    if (bits[i]) e += c;
  for (const auto& [ij, c] : quadratic)
    if (bits[ij.first] && bits[ij.second]) e += c;
  return e;
}

double QuboModel::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& [i, c] : linear) m = std::max(m, std::abs(c));
  for (const auto& [ij, c] : quadratic) m = std::max(m, std::abs(c));
  return m;
}

double QuboModel::mean_abs_coeff() const {
  double s = 0.0;
  std::size_t k = linear.size() + quadratic.size();
  if (k == 0) return 0.0;
  for (const auto& [i, c] : linear) s += std::abs(c);
  for (const auto& [ij, c] : quadratic) s += std::abs(c);
  return s / static_cast<double>(k);
}

double IsingModel::energy(std::span<const std::int8_t> spins) const {
  double e = offset;
  for (const auto& [i, c] : h) e += c * spins[i];
  for (const auto& [ij, c] : j) e += c * spins[ij.first] * spins[ij.second];
  return e;
}

// ---------------------------------------------------------------------------
// Quadratization
// ---------------------------------------------------------------------------

namespace {

using Pair = std::pair<VarIndex, VarIndex>;

struct PairAllocator {
  std::map<Pair, VarIndex> memo;
  std::vector<Pair> order;  // aux allocation order
  VarIndex next;

  explicit PairAllocator(VarIndex first_aux) : next(first_aux) {}

  bool known(Pair p) const { return memo.count(p) != 0; }

  VarIndex get(Pair p) {
    auto [it, inserted] = memo.emplace(p, next);
    if (inserted) {
      order.push_back(p);
      ++next;
    }
    return it->second;
  }
};

}  // namespace

std::pair<QuboModel, ReductionMap> quadratize(const BinaryPolynomial& p,
                                              const QuadratizeOptions& opts) {
  if (p.degree() > 4)
    throw std::invalid_argument("quadratize: polynomial degree " +
                                std::to_string(p.degree()) + " exceeds 4");

  const VarIndex n0 = std::max(p.num_vars(), opts.min_vars);
  QuboModel q;
  PairAllocator alloc(n0);
  std::map<Pair, double> penalty_weight;  // sum of |coeff| per reduced pair

  for (const auto& [key, c] : p.terms()) {
    switch (key.size()) {
      case 0:
        q.offset += c;
        break;
      case 1:
        q.add_linear(key[0], c);
        break;
      case 2:
        q.add_quadratic(key[0], key[1], c);
        break;
      case 3: {
        const Pair cands[3] = {{key[0], key[1]}, {key[0], key[2]},
                               {key[1], key[2]}};
        const VarIndex rest[3] = {key[2], key[1], key[0]};
        int pick = 0;
        for (int t = 0; t < 3; ++t) {
          if (alloc.known(cands[t])) {
            pick = t;
            break;
          }
        }
        const VarIndex z = alloc.get(cands[pick]);
        q.add_quadratic(z, rest[pick], c);
        penalty_weight[cands[pick]] += std::abs(c);
        break;
      }
      case 4: {
        const Pair pairings[3][2] = {
            {{key[0], key[1]}, {key[2], key[3]}},
            {{key[0], key[2]}, {key[1], key[3]}},
            {{key[0], key[3]}, {key[1], key[2]}}};
        int best = 0, best_score = -1;
        for (int t = 0; t < 3; ++t) {
          const int score = (alloc.known(pairings[t][0]) ? 1 : 0) +
                            (alloc.known(pairings[t][1]) ? 1 : 0);
          if (score > best_score) {
            best_score = score;
            best = t;
          }
        }
        const VarIndex z1 = alloc.get(pairings[best][0]);
        const VarIndex z2 = alloc.get(pairings[best][1]);
        if (!opts.literal_quartic_form) q.add_quadratic(z1, z2, c);
        penalty_weight[pairings[best][0]] += std::abs(c);
        penalty_weight[pairings[best][1]] += std::abs(c);
        break;
      }
      default:
        break;  // unreachable, degree checked above
    }
  }

  // Pair-consistency penalties: P(x_i, x_j; z) = x_i x_j - 2(x_i + x_j) z + 3z,
  // zero iff z = x_i x_j and >= 1 otherwise.
  for (const auto& [pr, w] : penalty_weight) {
    const double lw = opts.lambda * w;
    const VarIndex z = alloc.get(pr);
    q.add_quadratic(pr.first, pr.second, lw);
    q.add_quadratic(pr.first, z, -2.0 * lw);
    q.add_quadratic(pr.second, z, -2.0 * lw);
    q.add_linear(z, 3.0 * lw);
  }

  q.n = n0 + alloc.order.size();

  ReductionMap rmap;
  rmap.num_original = n0;
  rmap.lambda = opts.lambda;
  for (std::size_t k = 0; k < alloc.order.size(); ++k) {
    const Pair pr = alloc.order[k];
    rmap.aux[n0 + static_cast<VarIndex>(k)] = {pr.first, pr.second};
  }
  return {std::move(q), std::move(rmap)};
}

Projection project_solution(std::span<const std::uint8_t> extended,
                            const ReductionMap& rmap) {
  Projection out;
  out.original.assign(extended.begin(), extended.begin() + rmap.num_original);
  for (const auto& [z, parents] : rmap.aux) {
    const std::uint8_t want = extended[parents.i] & extended[parents.j];
    if (extended[z] != want) ++out.violations;
  }
  return out;
}

void repair_auxiliaries(std::vector<std::uint8_t>& extended,
                        const ReductionMap& rmap) {
  // Aux indices ascend and parents always precede them, so one ordered pass
  // settles chains.
  for (const auto& [z, parents] : rmap.aux)
    extended[z] = extended[parents.i] & extended[parents.j];
}

// ---------------------------------------------------------------------------
// QUBO <-> Ising, x = (1 + s) / 2
// ---------------------------------------------------------------------------

IsingModel qubo_to_ising(const QuboModel& q) {
  IsingModel m;
  m.n = q.n;
  m.offset = q.offset;
  auto add_h = [&](VarIndex i, double c) {
    if (c == 0.0) return;
    m.h[i] += c;
    if (m.h[i] == 0.0) m.h.erase(i);
  };
  for (const auto& [i, c] : q.linear) {
    add_h(i, c / 2.0);
    m.offset += c / 2.0;
  }
  for (const auto& [ij, c] : q.quadratic) {
    m.j[ij] += c / 4.0;
    if (m.j[ij] == 0.0) m.j.erase(ij);
    add_h(ij.first, c / 4.0);
    add_h(ij.second, c / 4.0);
    m.offset += c / 4.0;
  }
  return m;
}

QuboModel ising_to_qubo(const IsingModel& m) {
  QuboModel q;
  q.n = m.n;
  q.offset = m.offset;
  for (const auto& [i, c] : m.h) {
    q.add_linear(i, 2.0 * c);
    q.offset -= c;
  }
  for (const auto& [ij, c] : m.j) {
    q.add_quadratic(ij.first, ij.second, 4.0 * c);
    q.add_linear(ij.first, -2.0 * c);
    q.add_linear(ij.second, -2.0 * c);
    q.offset += c;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Exhaustive minimization (Gray-code walk with incremental deltas)
// ---------------------------------------------------------------------------

namespace {

template <class DeltaFn>
BruteForceResult gray_walk(std::size_t n, double e0, DeltaFn&& delta) {
  BruteForceResult best;
  best.bits.assign(n, 0);
  best.energy = e0;

  std::vector<std::uint8_t> bits(n, 0);
  double e = e0;
  const std::uint64_t total = std::uint64_t(1) << n;
  for (std::uint64_t step = 1; step < total; ++step) {
    const int i = std::countr_zero(step);
    e += delta(static_cast<VarIndex>(i), bits);
    bits[i] ^= 1;
    if (e < best.energy ||
        (e == best.energy &&
         std::lexicographical_compare(bits.begin(), bits.end(),
                                      best.bits.begin(), best.bits.end()))) {
      best.energy = e;
      best.bits = bits;
    }
  }
  return best;
}

}  // namespace

BruteForceResult brute_force_min(const QuboModel& q) {
  const std::size_t n = q.n;
  if (n > 24)
    throw std::invalid_argument("brute_force_min: " + std::to_string(n) +
                                " variables exceeds the 24-variable cap");
  if (n == 0) return {.bits = {}, .energy = q.offset};

  std::vector<double> lin(n, 0.0);
  for (const auto& [i, c] : q.linear) lin[i] = c;
  std::vector<std::vector<std::pair<VarIndex, double>>> adj(n);
  for (const auto& [ij, c] : q.quadratic) {
    adj[ij.first].emplace_back(ij.second, c);
    adj[ij.second].emplace_back(ij.first, c);
  }

  auto delta = [&](VarIndex i, const std::vector<std::uint8_t>& bits) {
    double field = lin[i];
    for (const auto& [j, w] : adj[i])
      if (bits[j]) field += w;
    return bits[i] ? -field : field;
  };
  BruteForceResult best = gray_walk(n, q.offset, delta);
  best.energy = q.energy(best.bits);  // re-evaluate to shed accumulated drift
  return best;
}

BruteForceResult brute_force_min(const BinaryPolynomial& p) {
  const std::size_t n = p.num_vars();
  if (n > 24)
    throw std::invalid_argument("brute_force_min: " + std::to_string(n) +
                                " variables exceeds the 24-variable cap");
  if (n == 0) return {.bits = {}, .energy = p.constant()};

  struct TermRef {
    double coeff;
    std::vector<VarIndex> others;
  };
  std::vector<std::vector<TermRef>> adj(n);
  for (const auto& [key, c] : p.terms()) {
    for (VarIndex v : key) {
      TermRef ref;
      ref.coeff = c;
      for (VarIndex u : key)
        if (u != v) ref.others.push_back(u);
      adj[v].push_back(std::move(ref));
    }
  }

  auto delta = [&](VarIndex i, const std::vector<std::uint8_t>& bits) {
    double field = 0.0;
    for (const TermRef& t : adj[i]) {
      bool on = true;
      for (VarIndex u : t.others) {
        if (!bits[u]) {
          on = false;
          break;
        }
      }
      if (on) field += t.coeff;
    }
    return bits[i] ? -field : field;
  };
  BruteForceResult best = gray_walk(n, p.constant(), delta);
  best.energy = p.evaluate(best.bits);
  return best;
}

// ---------------------------------------------------------------------------
// Sparse coordinate export
// ---------------------------------------------------------------------------

std::string export_qubo(const QuboModel& q) {
  std::ostringstream out;
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "# offset " << fmt(q.offset) << "\n";
  out << "# vars " << q.n << "\n";
  for (const auto& [i, c] : q.linear)
    out << i << " " << i << " " << fmt(c) << "\n";
  for (const auto& [ij, c] : q.quadratic)
    out << ij.first << " " << ij.second << " " << fmt(c) << "\n";
  return out.str();
}

QuboModel import_qubo(const std::string& text) {
  QuboModel q;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "offset") ls >> q.offset;
      else if (key == "vars") ls >> q.n;
      continue;
    }
    long long i, j;
    double c;
    if (!(ls >> i >> j >> c))
      throw std::invalid_argument("qubo import: bad line " +
                                  std::to_string(lineno) + ": " + line);
    if (i == j)
      q.add_linear(static_cast<VarIndex>(i), c);
    else
      q.add_quadratic(static_cast<VarIndex>(i), static_cast<VarIndex>(j), c);
    q.n = std::max(q.n, static_cast<std::size_t>(std::max(i, j) + 1));
  }
  return q;
}

}  // namespace gridanneal
