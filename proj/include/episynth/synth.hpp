#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "episynth/models.hpp"
#include "episynth/mtl.hpp"
#include "episynth/trajectory.hpp"

namespace episynth::synth {

enum class EffortNorm { kSumOfSquares, kSum, kSup };

std::string to_string(EffortNorm norm);
EffortNorm effort_norm_from_string(const std::string& name);

// Daily control values u[0..T-1] with their bounds. `upper` is the bound in
// force at each step: S[k] for vaccination, the static maximum otherwise.
struct ControlSequence {
  models::ModelKind kind = models::ModelKind::kSeirVaccination;
  std::vector<double> values;
  std::vector<double> upper;
};

double effort(const std::vector<double>& u, EffortNorm norm);
inline double effort(const ControlSequence& u, EffortNorm norm) { return effort(u.values, norm); }

enum class GradientMode { kAnalytic, kFiniteDifference };

struct MethodOptions {
  GradientMode gradient = GradientMode::kAnalytic;
  // Soft min/max temperatures, as multiples of 1/threshold_scale.
  std::vector<double> beta_stages = {1.0, 10.0, 100.0, 1000.0};
  // Extra stages (each 10x the previous) tried while no exactly feasible
  // point has been found.
  int extra_beta_stages = 2;
  double mu_initial = 1e2;
  double mu_growth = 10.0;
  int mu_rounds = 6;
  // Required smooth margin, as a multiple of threshold_scale.
  double margin = 1e-3;
  int max_inner_iterations = 500;
  double tolerance = 1e-6;
  int random_starts = 5;
  // Worker threads for multi-start; 0 picks hardware concurrency.
  int threads = 1;
};

struct SynthesisProblem {
  models::ModelSpec model;
  mtl::Formula spec = mtl::Formula::truth();
  std::string spec_text = "TRUE";
  std::size_t horizon_t = 0;
  EffortNorm effort_norm = EffortNorm::kSumOfSquares;
  MethodOptions method;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument when the spec horizon exceeds T or the spec
  // names a channel the model does not produce.
  void validate() const;
};

struct VerifyReport {
  bool satisfied = false;
  // Robustness is exactly zero: satisfied by convention, on the boundary.
  bool marginal = false;
  double robustness = 0.0;
  double effort = 0.0;
};

struct SynthesisResult {
  ControlSequence control;
  Trajectory trajectory;
  double effort = 0.0;
  double robustness = 0.0;
  bool satisfied = false;
  bool marginal = false;
  // No exactly feasible point was found; control is the most robust one.
  bool infeasible = false;
  std::size_t iterations = 0;
  double wall_time = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  // Index of the start that produced the answer (0: zero, 1: half,
  // 2: front-loaded, 3+: random).
  int start_index = -1;
};

// Simulates the control, then evaluates the spec exactly at k = 0.
VerifyReport verify(const std::vector<double>& control, const SynthesisProblem& problem);
inline VerifyReport verify(const ControlSequence& control, const SynthesisProblem& problem) {
  return verify(control.values, problem);
}

// Minimum-effort control whose trajectory satisfies the spec. The
// satisfied flag always comes from exact Boolean re-evaluation.
SynthesisResult synthesize(const SynthesisProblem& problem);

// Smallest nonzero |threshold| over the spec atoms (1 when there is none).
double threshold_scale(const mtl::Formula& f);

// Penalty objective over normalized decisions z in [0,1]^T:
//   J(z) = effort(u)/effort_scale + mu * (max(0, margin - rho_beta(xi(u))) / scale)^2
// with u[k] = z[k] * cap[k]. cap[k] is the static bound for shield and
// quarantine; for vaccination it is min(S[k], S_free[k]/ts) where S_free is
// the susceptible count after one step without vaccination, which keeps
// V <= S and S[k+1] >= 0.
class PenaltyObjective {
 public:
  explicit PenaltyObjective(const SynthesisProblem& problem);

  double value(const std::vector<double>& z, double beta, double mu) const;
  double value_and_gradient(const std::vector<double>& z, double beta, double mu,
                            std::vector<double>& grad) const;
  // Central differences with step h (one-sided at the box faces).
  double finite_difference_gradient(const std::vector<double>& z, double beta, double mu,
                                    std::vector<double>& grad, double h = 1e-6) const;

  // Controls u for a decision vector.
  std::vector<double> controls(const std::vector<double>& z) const;
  double smooth_robustness(const std::vector<double>& z, double beta) const;

  double scale() const { return scale_; }
  double effort_scale() const { return effort_scale_; }
  double margin() const { return margin_; }
  std::size_t dimension() const { return problem_.horizon_t; }

 private:
  struct Rollout {
    std::vector<std::vector<double>> states;
    std::vector<double> u;
    std::vector<double> cap;
    std::vector<bool> cap_is_s;
  };
  Rollout run(const std::vector<double>& z) const;
  double effort_term(const std::vector<double>& u, std::vector<double>* du) const;

  SynthesisProblem problem_;
  mtl::SmoothEvaluator evaluator_;
  double scale_;
  double effort_scale_;
  double margin_;
};

}  // namespace episynth::synth
