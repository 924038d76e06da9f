#pragma once

#include <cstddef>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "episynth/trajectory.hpp"

namespace episynth::models {

// Rates are per day, populations in millions.
struct SeirParams {
  double lambda = 0.0;   // birth rate
  double mu = 0.0;       // natural death rate
  double alpha = 0.0;    // virus-induced fatality rate
  double beta = 0.0;     // transmission rate
  double epsilon = 0.0;  // exposed -> infectious
  double gamma = 0.0;    // recovery rate
  double n0 = 0.0;       // initial total population
  double ts = 1.0;       // sampling period, days

  void validate() const;
  static SeirParams lombardy();
  bool operator==(const SeirParams&) const = default;
};

struct SeirState {
  double i = 0.0;
  double e = 0.0;
  double s = 0.0;
  double r = 0.0;
  double d = 0.0;
  bool operator==(const SeirState&) const = default;
};

struct SuqcParams {
  double beta0 = 0.0;   // infection rate
  double gamma2 = 0.0;  // confirmation rate
  double sigma = 0.0;   // subsequent confirmation rate
  double n0_hat = 0.0;  // initial population
  double ts = 1.0;

  void validate() const;
  static SuqcParams wuhan();
  // Outflow rate from Q into C.
  double confirmation_rate() const { return gamma2 + (1.0 - gamma2) * sigma; }
  bool operator==(const SuqcParams&) const = default;
};

struct SuqcState {
  double s = 0.0;
  double u = 0.0;
  double q = 0.0;
  double c = 0.0;
  bool operator==(const SuqcState&) const = default;
};

// Thrown for out-of-range controls, non-finite states and compartments that
// drift below -1e-6. `step()` is the offending time index.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::size_t step, const std::string& message);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Vaccination model. The transmission denominator is N[k] = i+e+s+r, or n0
// when use_n0_approx is set. d is recomputed as the complement of n0.
SeirState step_seir_vaccination(const SeirState& x, double v, const SeirParams& p,
                                bool use_n0_approx);

// Shield immunity model with denominator N[k] + chi * R[k].
SeirState step_seir_shield(const SeirState& x, double chi, const SeirParams& p,
                           double chi_max = std::numeric_limits<double>::infinity());

// Quarantine model. The quarantine flux ts*q*U enters both the U and the Q
// update so that the four compartments are conserved.
SuqcState step_suqc(const SuqcState& x, double q, const SuqcParams& p, bool use_n0_approx = false,
                    double q_max = std::numeric_limits<double>::infinity());

enum class ModelKind { kSeirVaccination, kSeirShield, kSuqcQuarantine };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// One model family with its parameters, initial state and control bound.
struct ModelSpec {
  ModelKind kind = ModelKind::kSeirVaccination;
  std::variant<SeirParams, SuqcParams> params;
  std::variant<SeirState, SuqcState> initial;
  // chi_max or q_max. Vaccination uses the state-dependent bound V <= S.
  double control_max = std::numeric_limits<double>::infinity();
  bool use_n0_approx = false;

  void validate() const;
  const SeirParams& seir() const { return std::get<SeirParams>(params); }
  const SuqcParams& suqc() const { return std::get<SuqcParams>(params); }
  double population() const;
  double ts() const;
  // Compartment names in state-vector order.
  std::vector<std::string> compartments() const;
  std::size_t state_dim() const { return compartments().size(); }
  // Every channel a trajectory of this model carries.
  std::set<std::string> channel_set() const;
  std::vector<std::string> channel_order() const;
  std::vector<double> initial_vector() const;
  // Name of the control input in files and plots.
  std::string control_name() const;
};

ModelSpec lombardy_vaccination();
ModelSpec lombardy_shield();
ModelSpec wuhan_quarantine();

// Sensitivities of one step in state-vector order: dx is row-major
// d next[i] / d x[j], du is d next[i] / d u.
struct StepJacobian {
  std::vector<double> dx;
  std::vector<double> du;
};

// Steps a state vector; optionally fills the Jacobian. The `k` argument only
// labels errors.
std::vector<double> step(const ModelSpec& model, std::span<const double> x, double u,
                         std::size_t k = 0, StepJacobian* jac = nullptr);

// Checks the control bound at state x: 0 <= u <= S for vaccination,
// 0 <= u <= control_max otherwise.
double control_upper_bound(const ModelSpec& model, std::span<const double> x);

// States x[0..T] under controls u[0..T-1].
std::vector<std::vector<double>> rollout(const ModelSpec& model, std::span<const double> controls);

// Builds the channel view of a rollout, including dD/dC (0 at k = 0) and N.
Trajectory to_trajectory(const ModelSpec& model, const std::vector<std::vector<double>>& states);

// rollout + to_trajectory; controls.size() must equal t_max.
Trajectory simulate(const ModelSpec& model, std::span<const double> controls, std::size_t t_max);

}  // namespace episynth::models
