#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <thread>

#include "episynth/mtl.hpp"
#include "support.hpp"

using namespace episynth;
using namespace episynth::mtl;
using testing::Rng;

namespace {

Trajectory single(const std::string& name, std::vector<double> v) {
  Trajectory xi;
  xi.set_channel(name, std::move(v));
  return xi;
}

const std::set<std::string> kSeir = {"I", "E", "S", "R", "D", "dD", "N"};

}  // namespace

TEST_CASE("parse builds the vaccination specification tree") {
  const Formula f = parse_formula("G[0,100](dD <= 0.001) & G[0,100](D <= 0.05) & F[40,60](R >= 6)", kSeir);
  const auto& outer = std::get<And>(f.node().v);
  const auto& inner = std::get<And>(outer.lhs.node().v);
  const auto& g1 = std::get<Always>(inner.lhs.node().v);
  CHECK(g1.interval == TimeInterval(0, 100));
  CHECK(std::get<Atom>(g1.arg.node().v).ap == AtomicProposition("dD", Comparison::kLessEqual, 0.001));
  const auto& g2 = std::get<Always>(inner.rhs.node().v);
  CHECK(std::get<Atom>(g2.arg.node().v).ap == AtomicProposition("D", Comparison::kLessEqual, 0.05));
  const auto& ev = std::get<Eventually>(outer.rhs.node().v);
  CHECK(ev.interval == TimeInterval(40, 60));
  CHECK(std::get<Atom>(ev.arg.node().v).ap == AtomicProposition("R", Comparison::kGreaterEqual, 6.0));
}

TEST_CASE("parse handles constants and until") {
  CHECK(std::holds_alternative<True>(parse_formula("TRUE").node().v));
  const Formula u = parse_formula("(a <= 1) U[2,5] (b >= 3)", {"a", "b"});
  const auto& n = std::get<Until>(u.node().v);
  CHECK(n.interval == TimeInterval(2, 5));
  CHECK(std::get<Atom>(n.lhs.node().v).ap == AtomicProposition("a", Comparison::kLessEqual, 1.0));
  CHECK(std::get<Atom>(n.rhs.node().v).ap == AtomicProposition("b", Comparison::kGreaterEqual, 3.0));
}

TEST_CASE("operator precedence") {
  // ! binds tighter than &, & tighter than |, | tighter than U.
  CHECK(parse_formula("!a <= 1 & b >= 2") ==
        Formula::conjunction(Formula::negation(Formula::atom({"a", Comparison::kLessEqual, 1})),
                             Formula::atom({"b", Comparison::kGreaterEqual, 2})));
  const Formula a = Formula::atom({"a", Comparison::kLessEqual, 1});
  const Formula b = Formula::atom({"b", Comparison::kLessEqual, 2});
  const Formula c = Formula::atom({"c", Comparison::kLessEqual, 3});
  CHECK(parse_formula("a <= 1 | b <= 2 & c <= 3") == Formula::disjunction(a, Formula::conjunction(b, c)));
  CHECK(parse_formula("a <= 1 | b <= 2 U[0,1] c <= 3") ==
        Formula::until({0, 1}, Formula::disjunction(a, b), c));
  CHECK(parse_formula("G[0,2] a <= 1 & b <= 2") == Formula::conjunction(Formula::always({0, 2}, a), b));
  // Until groups to the right.
  CHECK(parse_formula("a <= 1 U[0,1] b <= 2 U[1,2] c <= 3") ==
        Formula::until({0, 1}, a, Formula::until({1, 2}, b, c)));
}

TEST_CASE("parse errors carry a position") {
  CHECK_THROWS_AS(parse_formula("G[5,2](D <= 1)", kSeir), ParseError);
  CHECK_THROWS_AS(parse_formula("G[-1,2](D <= 1)", kSeir), ParseError);
  CHECK_THROWS_AS(parse_formula("G[0,2.5](D <= 1)", kSeir), ParseError);
  CHECK_THROWS_AS(parse_formula("X <= 1", kSeir), ParseError);
  CHECK_THROWS_AS(parse_formula("D <= ", kSeir), ParseError);
  CHECK_THROWS_AS(parse_formula("(D <= 1", kSeir), ParseError);
  CHECK_THROWS_AS(parse_formula("D <= 1 D", kSeir), ParseError);
  try {
    parse_formula("D <= 1 & & D <= 2", kSeir);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 9);
  }
}

TEST_CASE("printing and parsing round trip") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Formula f = testing::random_formula(rng, 4);
    const std::string text = to_string(f);
    CHECK_MESSAGE(parse_formula(text) == f, text);
    CHECK(to_string(parse_formula(text)) == text);
  }
  CHECK(parse_formula("  G[0,1]( a<=1 )") == parse_formula("G[0,1](a <= 1)"));
}

TEST_CASE("horizon") {
  CHECK(horizon(parse_formula("G[0,100](dD <= 0.001) & G[0,100](D <= 0.05) & F[40,60](R >= 6)")) == 100);
  CHECK(horizon(parse_formula("F[0,10] G[0,5] p >= 1")) == 15);
  CHECK(horizon(parse_formula("p >= 1")) == 0);
  CHECK(horizon(parse_formula("TRUE")) == 0);

  Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    const Formula f1 = testing::random_formula(rng, 3);
    const Formula f2 = testing::random_formula(rng, 3);
    CHECK(horizon(Formula::conjunction(f1, f2)) == std::max(horizon(f1), horizon(f2)));
    const TimeInterval in = testing::random_interval(rng, 6);
    CHECK(horizon(Formula::always(in, f1)) == in.hi + horizon(f1));
    CHECK(horizon(Formula::eventually(in, f1)) == in.hi + horizon(f1));
  }
}

TEST_CASE("horizon bounds the samples read") {
  // Evaluating on exactly horizon + 1 samples succeeds, one fewer fails.
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const Formula f = testing::random_formula(rng, 3);
    if (std::holds_alternative<True>(f.node().v)) continue;
    const std::size_t h = horizon(f);
    const Trajectory full = testing::random_trajectory(rng, h + 1);
    CHECK_NOTHROW(eval_bool(f, full, 0));
    if (h > 0) {
      const Trajectory short_xi = testing::random_trajectory(rng, h);
      CHECK_THROWS_AS(eval_bool(f, short_xi, 0), EvaluationError);
    }
  }
}

TEST_CASE("boolean semantics examples") {
  const Trajectory xi = single("D", {0.0, 0.01, 0.06});
  CHECK_FALSE(eval_bool(parse_formula("G[0,2](D <= 0.05)"), xi, 0));
  CHECK(eval_bool(parse_formula("G[0,1](D <= 0.05)"), xi, 0));
  CHECK(eval_bool(parse_formula("TRUE"), xi, 0));
  CHECK(eval_bool(parse_formula("TRUE"), xi, 2));
  CHECK_THROWS_AS(eval_bool(parse_formula("G[0,3](D <= 0.05)"), xi, 0), EvaluationError);
}

TEST_CASE("until with k' = k needs no left operand") {
  // lhs false everywhere; rhs true at k = 0 satisfies U[0,2].
  const Trajectory xi = [] {
    Trajectory t;
    t.set_channel("a", {5, 5, 5});
    t.set_channel("b", {1, 0, 0});
    return t;
  }();
  CHECK(eval_bool(parse_formula("a <= 1 U[0,2] b >= 1"), xi, 0));
  CHECK_FALSE(eval_bool(parse_formula("a <= 1 U[1,2] b >= 1"), xi, 0));
}

TEST_CASE("eval_bool matches the brute-force oracle") {
  Rng rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const testing::Instance in = testing::random_instance(rng);
    REQUIRE_MESSAGE(eval_bool(in.formula, in.xi, in.k) == testing::oracle_bool(in.formula, in.xi, in.k),
                    to_string(in.formula));
  }
}

TEST_CASE("derived operator identities") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const testing::Instance in = testing::random_instance(rng);
    const Formula& f = in.formula;
    const TimeInterval I = testing::random_interval(rng, 3);
    const std::size_t h = horizon(f) + I.hi;
    if (in.k + h >= in.xi.length()) continue;
    CHECK(eval_bool(Formula::negation(f), in.xi, in.k) == !eval_bool(f, in.xi, in.k));
    CHECK(eval_bool(Formula::eventually(I, f), in.xi, in.k) ==
          eval_bool(Formula::until(I, Formula::truth(), f), in.xi, in.k));
    CHECK(eval_bool(Formula::always(I, f), in.xi, in.k) ==
          eval_bool(Formula::negation(Formula::eventually(I, Formula::negation(f))), in.xi, in.k));
  }
}

TEST_CASE("robustness examples") {
  const Trajectory xi = single("D", {0.01});
  CHECK(eval_robustness(parse_formula("D <= 0.05"), xi, 0) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(eval_robustness(parse_formula("D >= 0.05"), xi, 0) == doctest::Approx(-0.04).epsilon(1e-12));
  CHECK(eval_robustness(parse_formula("TRUE"), xi, 0) == std::numeric_limits<double>::infinity());
}

TEST_CASE("robustness negation and sign soundness") {
  Rng rng(7);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const testing::Instance in = testing::random_instance(rng);
    const double rho = eval_robustness(in.formula, in.xi, in.k);
    CHECK(eval_robustness(Formula::negation(in.formula), in.xi, in.k) == -rho);
    if (std::fabs(rho) <= 1e-9) continue;
    ++checked;
    REQUIRE_MESSAGE((rho > 0) == testing::oracle_bool(in.formula, in.xi, in.k), to_string(in.formula));
  }
  CHECK(checked >= 1000);
}

TEST_CASE("soft min and max") {
  for (double beta : {0.1, 1.0, 37.0, 1e6}) {
    CHECK(soft_min({0.3, 0.3}, beta) == 0.3);
    CHECK(soft_max({-2.5, -2.5, -2.5}, beta) == -2.5);
  }
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> a(rng.index(1, 8));
    for (double& x : a) x = rng.uniform(-3, 3);
    const double beta = rng.uniform(0.1, 50);
    const double mn = *std::min_element(a.begin(), a.end());
    const double mx = *std::max_element(a.begin(), a.end());
    const double bound = std::log(static_cast<double>(a.size())) / beta;
    const double smin = soft_min(a, beta);
    const double smax = soft_max(a, beta);
    CHECK(smin >= mn - 1e-12);
    CHECK(smin <= mn + bound + 1e-12);
    CHECK(smax <= mx + 1e-12);
    CHECK(smax >= mx - bound - 1e-12);
  }
  // Identity entries are skipped.
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(soft_min({inf, 1.5}, 3.0) == 1.5);
  CHECK(soft_max({-inf, 1.5}, 3.0) == 1.5);
}

TEST_CASE("smooth robustness of atoms is exact") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Formula f = testing::random_formula(rng, 0);
    const Trajectory xi = testing::random_trajectory(rng, 1);
    for (double beta : {0.5, 10.0, 1e4}) CHECK(smooth_robustness(f, xi, 0, beta) == eval_robustness(f, xi, 0));
  }
}

TEST_CASE("smooth robustness converges and respects its error bound") {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const testing::Instance in = testing::random_instance(rng);
    const double exact = eval_robustness(in.formula, in.xi, in.k);
    if (!std::isfinite(exact)) continue;
    CHECK(std::fabs(smooth_robustness(in.formula, in.xi, in.k, 1e6) - exact) <= 1e-3);
    for (double beta : {1.0, 20.0, 500.0}) {
      const double err = std::fabs(smooth_robustness(in.formula, in.xi, in.k, beta) - exact);
      CHECK(err <= smooth_robustness_error_bound(in.formula, beta) + 1e-12);
    }
  }
}

TEST_CASE("smooth gradient matches finite differences") {
  Rng rng(23);
  int compared = 0;
  for (int i = 0; i < 200; ++i) {
    const testing::Instance in = testing::random_instance(rng);
    if (!std::isfinite(eval_robustness(in.formula, in.xi, in.k))) continue;
    const double beta = 5.0;
    const SmoothEvaluator ev(in.formula);
    ChannelGradient grad;
    const double v = ev.value_and_gradient(in.xi, in.k, beta, grad);
    CHECK(v == doctest::Approx(smooth_robustness(in.formula, in.xi, in.k, beta)).epsilon(1e-12));
    for (const auto& [name, g] : grad) {
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double h = 1e-6;
        auto shifted = [&](double d) {
          Trajectory t = in.xi;
          auto c = t.channel(name);
          std::vector<double> col(c.begin(), c.end());
          col[j] += d;
          t.set_channel(name, col);
          return ev.value(t, in.k, beta);
        };
        const double fd = (shifted(h) - shifted(-h)) / (2 * h);
        CHECK(std::fabs(fd - g[j]) <= 1e-5 * std::max(1.0, std::fabs(fd)));
        ++compared;
      }
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("concurrent evaluation shares one formula") {
  Rng rng(31);
  std::vector<testing::Instance> cases;
  for (int i = 0; i < 200; ++i) cases.push_back(testing::random_instance(rng));
  std::vector<double> serial;
  for (const auto& c : cases) serial.push_back(smooth_robustness(c.formula, c.xi, c.k, 3.0));
  std::vector<std::vector<double>> out(4);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      for (const auto& c : cases) out[t].push_back(smooth_robustness(c.formula, c.xi, c.k, 3.0));
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& o : out) CHECK(o == serial);
}

namespace {

// Bit 1: some soft-min node, bit 2: some soft-max node, after pushing
// negations to the atoms. Nodes over a single sample are exact and ignored.
int polarity(const Formula& f, bool negated) {
  const int min_kind = negated ? 2 : 1;
  const int max_kind = negated ? 1 : 2;
  return std::visit(
      Overloaded{
          [](const True&) { return 0; },
          [](const Atom&) { return 0; },
          [&](const Not& n) { return polarity(n.arg, !negated); },
          [&](const And& n) { return polarity(n.lhs, negated) | polarity(n.rhs, negated) | min_kind; },
          [&](const Or& n) { return polarity(n.lhs, negated) | polarity(n.rhs, negated) | max_kind; },
          [&](const Always& n) {
            return polarity(n.arg, negated) | (n.interval.lo == n.interval.hi ? 0 : min_kind);
          },
          [&](const Eventually& n) {
            return polarity(n.arg, negated) | (n.interval.lo == n.interval.hi ? 0 : max_kind);
          },
          [&](const Until& n) { return polarity(n.lhs, negated) | polarity(n.rhs, negated) | 3; },
      },
      f.node().v);
}

}  // namespace

TEST_CASE("smooth robustness approaches the exact value monotonically in beta") {
  // Holds when every soft node pulls the same way (only soft-min or only
  // soft-max after negation push-down). Mixed formulas such as until can
  // overshoot and come back.
  Rng rng(41);
  int checked = 0;
  for (int i = 0; i < 6000 && checked < 1000; ++i) {
    const testing::Instance in = testing::random_instance(rng);
    const double exact = eval_robustness(in.formula, in.xi, in.k);
    if (!std::isfinite(exact) || polarity(in.formula, false) == 3) continue;
    ++checked;
    double previous = std::numeric_limits<double>::infinity();
    for (double beta = 1.0; beta <= 65536.0; beta *= 2.0) {
      const double err = std::fabs(smooth_robustness(in.formula, in.xi, in.k, beta) - exact);
      REQUIRE_MESSAGE(err <= previous + 1e-9, to_string(in.formula));
      previous = err;
    }
  }
  CHECK(checked >= 1000);
}
