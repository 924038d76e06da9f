#include "episynth/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <thread>

namespace episynth::synth {
namespace {

using models::ModelKind;

constexpr double kInf = std::numeric_limits<double>::infinity();

double min_abs_threshold(const mtl::Formula& f) {
  return std::visit(mtl::Overloaded{
                        [](const mtl::True&) { return kInf; },
                        [](const mtl::Atom& a) {
                          double t = std::abs(a.ap.threshold);
                          return t > 0.0 ? t : kInf;
                        },
                        [](const mtl::Not& n) { return min_abs_threshold(n.arg); },
                        [](const mtl::And& n) {
                          return std::min(min_abs_threshold(n.lhs), min_abs_threshold(n.rhs));
                        },
                        [](const mtl::Or& n) {
                          return std::min(min_abs_threshold(n.lhs), min_abs_threshold(n.rhs));
                        },
                        [](const mtl::Until& n) {
                          return std::min(min_abs_threshold(n.lhs), min_abs_threshold(n.rhs));
                        },
                        [](const mtl::Eventually& n) { return min_abs_threshold(n.arg); },
                        [](const mtl::Always& n) { return min_abs_threshold(n.arg); },
                    },
                    f.node().v);
}

// Static control bound used to normalize efforts.
double reference_bound(const models::ModelSpec& model) {
  if (model.kind == ModelKind::kSeirVaccination) return model.initial_vector()[2];
  return model.control_max;
}

std::vector<double> control_upper(const models::ModelSpec& model, const Trajectory& xi,
                                  std::size_t T) {
  std::vector<double> upper(T, model.control_max);
  if (model.kind == ModelKind::kSeirVaccination) {
    auto s = xi.channel("S");
    for (std::size_t k = 0; k < T; ++k) upper[k] = s[k];
  }
  return upper;
}

double project(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::string to_string(EffortNorm norm) {
  switch (norm) {
    case EffortNorm::kSumOfSquares:
      return "sum_of_squares";
    case EffortNorm::kSum:
      return "sum";
    case EffortNorm::kSup:
      return "sup";
  }
  return "?";
}

EffortNorm effort_norm_from_string(const std::string& name) {
  if (name == "sum_of_squares" || name == "sos" || name == "l2sq") return EffortNorm::kSumOfSquares;
  if (name == "sum" || name == "l1") return EffortNorm::kSum;
  if (name == "sup" || name == "max" || name == "linf") return EffortNorm::kSup;
  throw std::invalid_argument("unknown effort norm '" + name +
                              "' (expected sum_of_squares, sum or sup)");
}

double effort(const std::vector<double>& u, EffortNorm norm) {
  double acc = 0.0;
  switch (norm) {
    case EffortNorm::kSumOfSquares:
      for (double v : u) acc += v * v;
      break;
    case EffortNorm::kSum:
      for (double v : u) acc += v;
      break;
    case EffortNorm::kSup:
      for (double v : u) acc = std::max(acc, v);
      break;
  }
  return acc;
}

void SynthesisProblem::validate() const {
  model.validate();
  const std::size_t h = mtl::horizon(spec);
  if (h > horizon_t) {
    throw std::invalid_argument("spec horizon " + std::to_string(h) + " exceeds T = " +
                                std::to_string(horizon_t));
  }
  const auto known = model.channel_set();
  for (const auto& c : mtl::channels(spec)) {
    if (!known.count(c)) {
      throw std::invalid_argument("spec references channel '" + c + "' which model " +
                                  models::to_string(model.kind) + " does not produce");
    }
  }
  if (method.beta_stages.empty()) throw std::invalid_argument("method needs at least one beta stage");
  for (double b : method.beta_stages) {
    if (!(b > 0.0)) throw std::invalid_argument("beta stages must be positive");
  }
  if (!(method.mu_initial > 0.0) || !(method.mu_growth >= 1.0) || method.mu_rounds < 1 ||
      method.max_inner_iterations < 1 || method.random_starts < 0 || method.extra_beta_stages < 0 ||
      !(method.margin >= 0.0) || !(method.tolerance > 0.0) || method.threads < 0) {
    throw std::invalid_argument("invalid method options");
  }
}

double threshold_scale(const mtl::Formula& f) {
  double s = min_abs_threshold(f);
  return std::isfinite(s) ? s : 1.0;
}

VerifyReport verify(const std::vector<double>& control, const SynthesisProblem& problem) {
  if (control.size() != problem.horizon_t) {
    throw std::invalid_argument("control has " + std::to_string(control.size()) +
                                " values, problem horizon T = " + std::to_string(problem.horizon_t));
  }
  Trajectory xi = models::simulate(problem.model, control, problem.horizon_t);
  VerifyReport r;
  r.satisfied = mtl::eval_bool(problem.spec, xi, 0);
  r.robustness = mtl::eval_robustness(problem.spec, xi, 0);
  r.marginal = r.robustness == 0.0;
  r.effort = effort(control, problem.effort_norm);
  return r;
}

// ---------------------------------------------------------------------------
// Penalty objective

PenaltyObjective::PenaltyObjective(const SynthesisProblem& problem)
    : problem_(problem),
      evaluator_(problem.spec),
      scale_(threshold_scale(problem.spec)),
      margin_(problem.method.margin * threshold_scale(problem.spec)) {
  const double T = static_cast<double>(std::max<std::size_t>(problem.horizon_t, 1));
  const double U = std::max(reference_bound(problem.model), 1e-12);
  switch (problem.effort_norm) {
    case EffortNorm::kSumOfSquares:
      effort_scale_ = T * U * U;
      break;
    case EffortNorm::kSum:
      effort_scale_ = T * U;
      break;
    case EffortNorm::kSup:
      effort_scale_ = U;
      break;
  }
}

PenaltyObjective::Rollout PenaltyObjective::run(const std::vector<double>& z) const {
  const auto& model = problem_.model;
  const std::size_t T = problem_.horizon_t;
  Rollout r;
  r.states.reserve(T + 1);
  r.states.push_back(model.initial_vector());
  r.u.resize(T);
  r.cap.resize(T);
  r.cap_is_s.assign(T, false);
  const bool vaccination = model.kind == ModelKind::kSeirVaccination;
  for (std::size_t k = 0; k < T; ++k) {
    const auto& x = r.states.back();
    double cap = model.control_max;
    if (vaccination) {
      // Susceptibles left after one step without vaccination.
      std::vector<double> free = models::step(model, x, 0.0, k);
      const double s_free = std::max(free[2], 0.0) / model.ts();
      r.cap_is_s[k] = x[2] <= s_free;
      cap = std::min(x[2], s_free);
    }
    r.cap[k] = cap;
    r.u[k] = project(z[k]) * cap;
    std::vector<double> next = models::step(model, x, r.u[k], k);
    for (std::size_t j = 0; j < next.size(); ++j) {
      if (!std::isfinite(next[j]) || next[j] < -1e-6) {
        throw models::SimulationError(k + 1, "rollout left the admissible state space");
      }
    }
    r.states.push_back(std::move(next));
  }
  return r;
}

double PenaltyObjective::smooth_robustness(const std::vector<double>& z, double beta) const {
  Rollout r = run(z);
  return evaluator_.value(models::to_trajectory(problem_.model, r.states), 0, beta);
}

std::vector<double> PenaltyObjective::controls(const std::vector<double>& z) const {
  return run(z).u;
}

double PenaltyObjective::effort_term(const std::vector<double>& u, std::vector<double>* du) const {
  const double e = effort(u, problem_.effort_norm);
  if (du) {
    du->assign(u.size(), 0.0);
    switch (problem_.effort_norm) {
      case EffortNorm::kSumOfSquares:
        for (std::size_t k = 0; k < u.size(); ++k) (*du)[k] = 2.0 * u[k] / effort_scale_;
        break;
      case EffortNorm::kSum:
        for (std::size_t k = 0; k < u.size(); ++k) (*du)[k] = 1.0 / effort_scale_;
        break;
      case EffortNorm::kSup:
        if (!u.empty()) {
          auto it = std::max_element(u.begin(), u.end());
          (*du)[static_cast<std::size_t>(it - u.begin())] = 1.0 / effort_scale_;
        }
        break;
    }
  }
  return e / effort_scale_;
}

double PenaltyObjective::value(const std::vector<double>& z, double beta, double mu) const {
  Rollout r = run(z);
  double J = effort_term(r.u, nullptr);
  Trajectory xi = models::to_trajectory(problem_.model, r.states);
  const double rho = evaluator_.value(xi, 0, beta);
  if (std::isfinite(rho)) {
    const double viol = std::max(0.0, margin_ - rho) / scale_;
    J += mu * viol * viol;
  } else if (rho < 0.0) {
    return kInf;
  }
  return J;
}

double PenaltyObjective::value_and_gradient(const std::vector<double>& z, double beta, double mu,
                                            std::vector<double>& grad) const {
  const auto& model = problem_.model;
  const std::size_t T = problem_.horizon_t;
  const std::size_t n = model.state_dim();
  Rollout r = run(z);

  std::vector<double> du;
  double J = effort_term(r.u, &du);

  // Seeds: d(penalty)/d(state[k]).
  std::vector<std::vector<double>> seed(T + 1, std::vector<double>(n, 0.0));
  Trajectory xi = models::to_trajectory(model, r.states);
  mtl::ChannelGradient cg;
  const double rho = evaluator_.value_and_gradient(xi, 0, beta, cg);
  if (!std::isfinite(rho) && rho < 0.0) {
    grad.assign(T, 0.0);
    return kInf;
  }
  if (std::isfinite(rho) && rho < margin_) {
    const double viol = (margin_ - rho) / scale_;
    J += mu * viol * viol;
    const double dJ_drho = -2.0 * mu * viol / scale_;
    const auto names = model.compartments();
    const bool suqc = model.kind == ModelKind::kSuqcQuarantine;
    const std::size_t cum = suqc ? 3 : 4;  // C or D
    for (const auto& [channel, g] : cg) {
      for (std::size_t k = 0; k <= T; ++k) {
        const double v = g[k] * dJ_drho;
        if (v == 0.0) continue;
        if (channel == "N") {
          for (std::size_t j = 0; j < 4; ++j) seed[k][j] += v;
        } else if (channel == "dD" || channel == "dC") {
          if (k >= 1) {
            seed[k][cum] += v;
            seed[k - 1][cum] -= v;
          }
        } else {
          auto it = std::find(names.begin(), names.end(), channel);
          seed[k][static_cast<std::size_t>(it - names.begin())] += v;
        }
      }
    }
  }

  // Adjoint sweep.
  grad.assign(T, 0.0);
  std::vector<double> lambda = seed[T];
  std::vector<double> next_lambda(n);
  models::StepJacobian jac;
  const bool vaccination = model.kind == ModelKind::kSeirVaccination;
  for (std::size_t k = T; k-- > 0;) {
    models::step(model, r.states[k], r.u[k], k, &jac);
    double gu = du[k];
    for (std::size_t i = 0; i < n; ++i) gu += lambda[i] * jac.du[i];
    const double zk = project(z[k]);
    grad[k] = gu * r.cap[k];
    for (std::size_t j = 0; j < n; ++j) {
      double acc = seed[k][j];
      for (std::size_t i = 0; i < n; ++i) acc += lambda[i] * jac.dx[i * n + j];
      next_lambda[j] = acc;
    }
    if (vaccination && gu != 0.0 && zk != 0.0) {
      // d cap / d x: either e_S or row S of the step Jacobian over ts.
      if (r.cap_is_s[k]) {
        next_lambda[2] += gu * zk;
      } else if (r.cap[k] > 0.0) {
        const double h = model.ts();
        for (std::size_t j = 0; j < n; ++j) next_lambda[j] += gu * zk * jac.dx[2 * n + j] / h;
      }
    }
    lambda.swap(next_lambda);
  }
  return J;
}

double PenaltyObjective::finite_difference_gradient(const std::vector<double>& z, double beta,
                                                    double mu, std::vector<double>& grad,
                                                    double h) const {
  const double f0 = value(z, beta, mu);
  grad.assign(z.size(), 0.0);
  std::vector<double> zp = z;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double orig = z[k];
    const double up = std::min(orig + h, 1.0);
    const double down = std::max(orig - h, 0.0);
    zp[k] = up;
    const double fu = up == orig ? f0 : value(zp, beta, mu);
    zp[k] = down;
    const double fd = down == orig ? f0 : value(zp, beta, mu);
    zp[k] = orig;
    grad[k] = up > down ? (fu - fd) / (up - down) : 0.0;
  }
  return f0;
}

// ---------------------------------------------------------------------------
// Solver

namespace {

struct Candidate {
  std::vector<double> z;
  double effort = kInf;
  double robustness = -kInf;
  bool feasible = false;
  int start = -1;
};

// Feasible beats infeasible; among feasible lower effort, then lower
// robustness (least over-control); among infeasible higher robustness.
bool better(const Candidate& a, const Candidate& b) {
  if (a.z.empty()) return false;
  if (b.z.empty()) return true;
  if (a.feasible != b.feasible) return a.feasible;
  if (a.feasible) {
    if (a.effort != b.effort) return a.effort < b.effort;
    if (a.robustness != b.robustness) return a.robustness < b.robustness;
    return a.start < b.start;
  }
  if (a.robustness != b.robustness) return a.robustness > b.robustness;
  return a.start < b.start;
}

struct StartOutcome {
  Candidate best;
  std::size_t iterations = 0;
};

class StartRunner {
 public:
  StartRunner(const SynthesisProblem& problem, const PenaltyObjective& objective, int start)
      : problem_(problem), objective_(objective), start_(start) {}

  StartOutcome run(std::vector<double> z) {
    const MethodOptions& opt = problem_.method;
    consider(z);
    std::vector<double> stages = opt.beta_stages;
    for (int extra = 0; extra < opt.extra_beta_stages; ++extra) {
      stages.push_back(stages.back() * 10.0);
    }
    double mu = opt.mu_initial;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (s >= opt.beta_stages.size() && outcome_.best.feasible) break;
      const double beta = stages[s] / objective_.scale();
      for (int round = 0; round < opt.mu_rounds; ++round) {
        inner_solve(z, beta, mu);
        if (smooth_satisfied_) break;
        mu *= opt.mu_growth;
      }
    }
    return outcome_;
  }

 private:
  double evaluate(const std::vector<double>& z, double beta, double mu, std::vector<double>& g) {
    if (problem_.method.gradient == GradientMode::kAnalytic) {
      return objective_.value_and_gradient(z, beta, mu, g);
    }
    return objective_.finite_difference_gradient(z, beta, mu, g);
  }

  // Records z when it beats the best exact candidate so far.
  void consider(const std::vector<double>& z) {
    std::vector<double> u = objective_.controls(z);
    Trajectory xi = models::simulate(problem_.model, u, problem_.horizon_t);
    Candidate c;
    c.feasible = mtl::eval_bool(problem_.spec, xi, 0);
    c.robustness = mtl::eval_robustness(problem_.spec, xi, 0);
    c.effort = effort(u, problem_.effort_norm);
    c.start = start_;
    c.z = z;
    if (better(c, outcome_.best)) outcome_.best = std::move(c);
  }

  // Projected gradient with Barzilai-Borwein trial steps and Armijo
  // backtracking.
  void inner_solve(std::vector<double>& z, double beta, double mu) {
    const MethodOptions& opt = problem_.method;
    const std::size_t n = z.size();
    std::vector<double> g, g_new, z_new(n);
    double f = evaluate(z, beta, mu, g);
    double step = 1.0;
    std::vector<double> s_prev, y_prev;
    for (int it = 0; it < opt.max_inner_iterations; ++it) {
      double pg = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double d = project(z[k] - g[k]) - z[k];
        pg += d * d;
      }
      if (std::sqrt(pg) < opt.tolerance) break;

      bool accepted = false;
      double f_new = f;
      for (int bt = 0; bt < 60; ++bt) {
        double decrease = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          z_new[k] = project(z[k] - step * g[k]);
          decrease += g[k] * (z_new[k] - z[k]);
        }
        if (decrease == 0.0) break;
        f_new = objective_.value(z_new, beta, mu);
        if (f_new <= f + 1e-4 * decrease) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      ++outcome_.iterations;
      f_new = evaluate(z_new, beta, mu, g_new);
      double ss = 0.0, sy = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double sk = z_new[k] - z[k];
        const double yk = g_new[k] - g[k];
        ss += sk * sk;
        sy += sk * yk;
      }
      step = sy > 0.0 ? std::clamp(ss / sy, 1e-12, 1e12) : std::min(step * 4.0, 1e12);
      z.swap(z_new);
      g.swap(g_new);
      f = f_new;
      consider(z);
    }
    smooth_satisfied_ = objective_.smooth_robustness(z, beta) >= objective_.margin();
  }

  const SynthesisProblem& problem_;
  const PenaltyObjective& objective_;
  int start_;
  StartOutcome outcome_;
  bool smooth_satisfied_ = false;
};

std::vector<std::vector<double>> initial_points(const SynthesisProblem& problem) {
  const std::size_t T = problem.horizon_t;
  std::vector<std::vector<double>> starts;
  starts.emplace_back(T, 0.0);
  starts.emplace_back(T, 0.5);
  std::vector<double> front(T, 0.0);
  const std::size_t quarter = std::max<std::size_t>(T / 4, T > 0 ? 1 : 0);
  for (std::size_t k = 0; k < quarter; ++k) front[k] = 1.0;
  starts.push_back(std::move(front));
  std::mt19937_64 rng(problem.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < problem.method.random_starts; ++i) {
    std::vector<double> z(T);
    for (double& v : z) v = unit(rng);
    starts.push_back(std::move(z));
  }
  return starts;
}

}  // namespace

SynthesisResult synthesize(const SynthesisProblem& problem) {
  const auto t0 = std::chrono::steady_clock::now();
  problem.validate();
  const PenaltyObjective objective(problem);
  const auto starts = initial_points(problem);

  std::vector<StartOutcome> outcomes(starts.size());
  std::size_t workers = problem.method.threads == 0
                            ? std::max(1u, std::thread::hardware_concurrency())
                            : static_cast<std::size_t>(problem.method.threads);
  workers = std::min(workers, starts.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < starts.size(); ++i) {
      outcomes[i] = StartRunner(problem, objective, static_cast<int>(i)).run(starts[i]);
    }
  } else {
    // Strided assignment; every start writes only its own slot.
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < starts.size(); i += workers) {
          outcomes[i] = StartRunner(problem, objective, static_cast<int>(i)).run(starts[i]);
        }
      }));
    }
    for (auto& j : jobs) j.get();
  }

  Candidate best;
  std::size_t iterations = 0;
  for (const auto& o : outcomes) {
    iterations += o.iterations;
    if (better(o.best, best)) best = o.best;
  }

  SynthesisResult result;
  std::vector<double> u = objective.controls(best.z);
  result.trajectory = models::simulate(problem.model, u, problem.horizon_t);
  result.control.kind = problem.model.kind;
  result.control.upper = control_upper(problem.model, result.trajectory, problem.horizon_t);
  result.control.values = std::move(u);
  const VerifyReport check = verify(result.control.values, problem);
  result.satisfied = check.satisfied;
  result.marginal = check.marginal;
  result.robustness = check.robustness;
  result.effort = check.effort;
  result.infeasible = !check.satisfied;
  result.iterations = iterations;
  result.method = problem.method.gradient == GradientMode::kAnalytic ? "penalty" : "penalty-fd";
  result.seed = problem.seed;
  result.start_index = best.start;
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace episynth::synth
