#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "episynth/synth.hpp"
#include "support.hpp"

using namespace episynth;
using namespace episynth::synth;
using testing::Rng;

namespace {

SynthesisProblem problem_for(models::ModelSpec model, const std::string& spec, std::size_t T) {
  SynthesisProblem p;
  p.model = std::move(model);
  p.spec_text = spec;
  p.spec = mtl::parse_formula(spec, p.model.channel_set());
  p.horizon_t = T;
  return p;
}

SynthesisProblem vaccination_v1() {
  return problem_for(models::lombardy_vaccination(),
                     "G[0,100](dD <= 0.001) & G[0,100](D <= 0.05) & F[40,60](R >= 6)", 100);
}
SynthesisProblem shield_s1() {
  return problem_for(models::lombardy_shield(),
                     "G[0,100](dD <= 0.003) & G[0,100](D <= 0.1) & F[40,60](R >= 1)", 100);
}
SynthesisProblem quarantine_q1() {
  return problem_for(models::wuhan_quarantine(), "G[0,200](dC <= 0.001) & G[0,200](C <= 0.1)", 200);
}

// Cheaper settings for unit-sized synthesis runs.
MethodOptions quick() {
  MethodOptions m;
  m.random_starts = 1;
  m.mu_rounds = 4;
  m.max_inner_iterations = 200;
  return m;
}

}  // namespace

TEST_CASE("effort norms") {
  CHECK(effort({0.0, 0.0, 0.0}, EffortNorm::kSumOfSquares) == 0.0);
  CHECK(effort({0.0, 0.0, 0.0}, EffortNorm::kSum) == 0.0);
  CHECK(effort({0.0, 0.0, 0.0}, EffortNorm::kSup) == 0.0);
  CHECK(effort({3.0, 4.0}, EffortNorm::kSumOfSquares) == 25.0);
  CHECK(effort({3.0, 4.0}, EffortNorm::kSum) == 7.0);
  CHECK(effort({3.0, 4.0}, EffortNorm::kSup) == 4.0);
  CHECK(effort(std::vector<double>{}, EffortNorm::kSup) == 0.0);
  CHECK(effort_norm_from_string("sum_of_squares") == EffortNorm::kSumOfSquares);
  CHECK(effort_norm_from_string(to_string(EffortNorm::kSup)) == EffortNorm::kSup);
  CHECK_THROWS_AS(effort_norm_from_string("l2"), std::invalid_argument);
}

TEST_CASE("problem validation") {
  SynthesisProblem p = vaccination_v1();
  CHECK_NOTHROW(p.validate());
  p.horizon_t = 99;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  SynthesisProblem q = quarantine_q1();
  q.spec = mtl::parse_formula("G[0,10](D <= 1)");
  CHECK_THROWS_AS(q.validate(), std::invalid_argument);
}

TEST_CASE("verify examples") {
  const VerifyReport v = verify(std::vector<double>(100, 0.0), vaccination_v1());
  CHECK_FALSE(v.satisfied);
  CHECK(v.robustness < 0.0);
  CHECK(v.effort == 0.0);
  const VerifyReport q = verify(std::vector<double>(200, 0.063), quarantine_q1());
  CHECK_FALSE(q.satisfied);
  CHECK(q.effort == doctest::Approx(200 * 0.063 * 0.063));
  CHECK_THROWS(verify(std::vector<double>(50, 0.0), vaccination_v1()));
}

TEST_CASE("the trivial specification needs no control") {
  for (auto model : {models::lombardy_vaccination(), models::lombardy_shield(), models::wuhan_quarantine()}) {
    SynthesisProblem p = problem_for(model, "TRUE", 30);
    p.method = quick();
    const SynthesisResult r = synthesize(p);
    CHECK(r.satisfied);
    CHECK(r.effort == 0.0);
    for (double v : r.control.values) CHECK(v == 0.0);
  }
}

TEST_CASE("penalty gradient matches finite differences") {
  Rng rng(77);
  const std::vector<SynthesisProblem> problems = {vaccination_v1(), shield_s1(), quarantine_q1()};
  for (const SynthesisProblem& p : problems) {
    const PenaltyObjective obj(p);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> z(p.horizon_t);
      for (double& v : z) v = rng.uniform(0.02, 0.98);
      const double beta = std::pow(10.0, rng.uniform(0.0, 2.0)) / obj.scale();
      const double mu = std::pow(10.0, rng.uniform(2.0, 5.0));
      std::vector<double> g, fd;
      const double f = obj.value_and_gradient(z, beta, mu, g);
      const double f2 = obj.finite_difference_gradient(z, beta, mu, fd);
      CHECK(f == doctest::Approx(f2).epsilon(1e-12));
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        num += (g[k] - fd[k]) * (g[k] - fd[k]);
        den += fd[k] * fd[k];
      }
      CHECK_MESSAGE(std::sqrt(num) <= 1e-4 * std::sqrt(den) + 1e-12,
                    models::to_string(p.model.kind) << " trial " << trial);
    }
  }
}

TEST_CASE("gradient of every effort norm") {
  Rng rng(78);
  for (EffortNorm norm : {EffortNorm::kSum, EffortNorm::kSup}) {
    SynthesisProblem p = quarantine_q1();
    p.effort_norm = norm;
    const PenaltyObjective obj(p);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> z(p.horizon_t);
      for (double& v : z) v = rng.uniform(0.02, 0.98);
      std::vector<double> g, fd;
      obj.value_and_gradient(z, 10.0 / obj.scale(), 1e3, g);
      obj.finite_difference_gradient(z, 10.0 / obj.scale(), 1e3, fd);
      for (std::size_t k = 0; k < g.size(); ++k) CHECK(std::fabs(g[k] - fd[k]) <= 1e-4 * std::max(1.0, std::fabs(fd[k])));
    }
  }
}

TEST_CASE("vaccination controls respect the susceptible bound") {
  const PenaltyObjective obj(vaccination_v1());
  std::vector<double> z(100, 1.0);
  const std::vector<double> u = obj.controls(z);
  const Trajectory xi = models::simulate(models::lombardy_vaccination(), u, 100);
  for (std::size_t k = 0; k < 100; ++k) {
    CHECK(u[k] <= xi.channel("S")[k]);
    CHECK(xi.channel("S")[k + 1] >= 0.0);
  }
}

TEST_CASE("small synthesis problems") {
  SUBCASE("quarantine keeps daily confirmations low") {
    SynthesisProblem p = problem_for(models::wuhan_quarantine(), "G[0,60](dC <= 0.0005) & F[50,60](U <= 0.002)", 60);
    p.method = quick();
    const SynthesisResult r = synthesize(p);
    REQUIRE(r.satisfied);
    CHECK(mtl::eval_bool(p.spec, r.trajectory, 0));
    CHECK(r.effort > 0.0);
    const VerifyReport again = verify(r.control, p);
    CHECK(again.satisfied);
    CHECK(std::fabs(again.effort - r.effort) <= 1e-12);
    for (std::size_t k = 0; k < r.control.values.size(); ++k) {
      CHECK(r.control.values[k] >= 0.0);
      CHECK(r.control.values[k] <= r.control.upper[k]);
    }
  }
  SUBCASE("vaccination reaches a recovered target") {
    SynthesisProblem p = problem_for(models::lombardy_vaccination(), "F[15,20](R >= 2) & G[0,20](S >= 1)", 20);
    p.method = quick();
    const SynthesisResult r = synthesize(p);
    REQUIRE(r.satisfied);
    CHECK(mtl::eval_bool(p.spec, r.trajectory, 0));
    CHECK(r.effort > 0.0);
  }
  SUBCASE("unreachable targets are flagged") {
    SynthesisProblem p = problem_for(models::wuhan_quarantine(), "F[0,5](C >= 5)", 5);
    p.method = quick();
    const SynthesisResult r = synthesize(p);
    CHECK_FALSE(r.satisfied);
    CHECK(r.infeasible);
  }
}

TEST_CASE("synthesis is deterministic for a fixed seed") {
  SynthesisProblem p = problem_for(models::wuhan_quarantine(), "G[0,40](dC <= 0.0003)", 40);
  p.method = quick();
  p.method.random_starts = 3;
  p.seed = 17;
  const SynthesisResult a = synthesize(p);
  p.method.threads = 3;
  const SynthesisResult b = synthesize(p);
  CHECK(a.control.values == b.control.values);
  CHECK(a.effort == b.effort);
  CHECK(a.robustness == b.robustness);
  CHECK(a.iterations == b.iterations);
  CHECK(a.start_index == b.start_index);
}
