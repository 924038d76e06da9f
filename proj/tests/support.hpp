#pragma once

// Random generators and independent oracles shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "episynth/mtl.hpp"
#include "episynth/trajectory.hpp"

namespace testing {

using episynth::Trajectory;
using episynth::mtl::Formula;

inline const std::vector<std::string> kChannels = {"a", "b", "c"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen_);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(gen_); }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline episynth::mtl::TimeInterval random_interval(Rng& rng, std::size_t max_hi) {
  const std::size_t lo = rng.index(0, max_hi);
  return {lo, rng.index(lo, max_hi)};
}

// Formula of depth <= depth over kChannels with thresholds in [0, 1].
inline Formula random_formula(Rng& rng, int depth, std::size_t max_hi = 4) {
  using namespace episynth::mtl;
  if (depth <= 0 || rng.coin(0.2)) {
    if (rng.coin(0.08)) return Formula::truth();
    const auto op = rng.coin() ? Comparison::kLessEqual : Comparison::kGreaterEqual;
    return Formula::atom({kChannels[rng.index(0, kChannels.size() - 1)], op, rng.uniform(0.0, 1.0)});
  }
  switch (rng.index(0, 6)) {
    case 0:
      return Formula::negation(random_formula(rng, depth - 1, max_hi));
    case 1:
      return Formula::conjunction(random_formula(rng, depth - 1, max_hi), random_formula(rng, depth - 1, max_hi));
    case 2:
      return Formula::disjunction(random_formula(rng, depth - 1, max_hi), random_formula(rng, depth - 1, max_hi));
    case 3:
      return Formula::until(random_interval(rng, max_hi), random_formula(rng, depth - 1, max_hi),
                            random_formula(rng, depth - 1, max_hi));
    case 4:
      return Formula::eventually(random_interval(rng, max_hi), random_formula(rng, depth - 1, max_hi));
    default:
      return Formula::always(random_interval(rng, max_hi), random_formula(rng, depth - 1, max_hi));
  }
}

inline Trajectory random_trajectory(Rng& rng, std::size_t length) {
  Trajectory xi;
  for (const std::string& c : kChannels) {
    std::vector<double> v(length);
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    xi.set_channel(c, std::move(v));
  }
  return xi;
}

struct Instance {
  Formula formula = Formula::truth();
  Trajectory xi;
  std::size_t k = 0;
};

// Depth <= 3, trajectory length <= 12, evaluation index inside the horizon.
inline Instance random_instance(Rng& rng) {
  for (;;) {
    Formula f = random_formula(rng, 3);
    const std::size_t h = episynth::mtl::horizon(f);
    if (h > 11) continue;
    const std::size_t length = rng.index(h + 1, 12);
    const std::size_t k = rng.index(0, length - 1 - h);
    return {f, random_trajectory(rng, length), k};
  }
}

// Literal reading of the Boolean semantics: Until enumerates every k' in
// k + I and every k'' in [k, k'); eventually and always are rewritten
// through their definitions as TRUE U and not-eventually-not.
inline bool oracle_bool(const Formula& f, const Trajectory& xi, std::size_t k) {
  using namespace episynth::mtl;
  const FormulaNode& n = f.node();
  if (std::holds_alternative<True>(n.v)) return true;
  if (const auto* a = std::get_if<Atom>(&n.v)) {
    const double x = xi.channel(a->ap.channel)[k];
    return a->ap.op == Comparison::kLessEqual ? x <= a->ap.threshold : x >= a->ap.threshold;
  }
  if (const auto* x = std::get_if<Not>(&n.v)) return !oracle_bool(x->arg, xi, k);
  if (const auto* x = std::get_if<And>(&n.v)) {
    const bool l = oracle_bool(x->lhs, xi, k);
    const bool r = oracle_bool(x->rhs, xi, k);
    return l && r;
  }
  if (const auto* x = std::get_if<Or>(&n.v)) {
    const bool l = oracle_bool(x->lhs, xi, k);
    const bool r = oracle_bool(x->rhs, xi, k);
    return l || r;
  }
  if (const auto* x = std::get_if<Until>(&n.v)) {
    bool any = false;
    for (std::size_t kp = k + x->interval.lo; kp <= k + x->interval.hi; ++kp) {
      bool all = true;
      for (std::size_t kpp = k; kpp < kp; ++kpp) all = all && oracle_bool(x->lhs, xi, kpp);
      any = any || (oracle_bool(x->rhs, xi, kp) && all);
    }
    return any;
  }
  if (const auto* x = std::get_if<Eventually>(&n.v)) {
    return oracle_bool(Formula::until(x->interval, Formula::truth(), x->arg), xi, k);
  }
  const auto& g = std::get<Always>(n.v);
  return !oracle_bool(Formula::eventually(g.interval, Formula::negation(g.arg)), xi, k);
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

}  // namespace testing
