#include "episynth/models.hpp"

#include <cmath>

namespace episynth::models {
namespace {

constexpr double kNegativeTolerance = 1e-6;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

// i+e+s+r summed in a fixed order. With d = n0 - living, living + d == n0
// holds exactly whenever living lies in [n0/2, 2*n0].
double living(double i, double e, double s, double r) { return ((i + e) + s) + r; }

void check_finite(const SeirState& x, std::size_t k) {
  if (!std::isfinite(x.i) || !std::isfinite(x.e) || !std::isfinite(x.s) || !std::isfinite(x.r) ||
      !std::isfinite(x.d)) {
    throw SimulationError(k, "non-finite state");
  }
}

}  // namespace

SimulationError::SimulationError(std::size_t step, const std::string& message)
    : std::runtime_error("step " + std::to_string(step) + ": " + message), step_(step) {}

void SeirParams::validate() const {
  for (double v : {lambda, mu, alpha, beta, epsilon, gamma}) {
    require(finite_nonneg(v), "SEIR rates must be finite and nonnegative");
  }
  require(std::isfinite(n0) && n0 > 0.0, "SEIR n0 must be positive");
  require(std::isfinite(ts) && ts > 0.0, "SEIR ts must be positive");
}

SeirParams SeirParams::lombardy() {
  SeirParams p;
  p.lambda = 1.0 / 30295.0;
  p.mu = 1.0 / 30295.0;
  p.alpha = 0.006;
  p.beta = 0.75;
  p.epsilon = 0.2;
  p.gamma = 0.2;
  p.n0 = 10.0;
  p.ts = 1.0;
  return p;
}

void SuqcParams::validate() const {
  for (double v : {beta0, gamma2, sigma}) {
    require(finite_nonneg(v), "SUQC rates must be finite and nonnegative");
  }
  require(gamma2 <= 1.0 && sigma <= 1.0, "SUQC gamma2 and sigma are probabilities");
  require(std::isfinite(n0_hat) && n0_hat > 0.0, "SUQC n0_hat must be positive");
  require(std::isfinite(ts) && ts > 0.0, "SUQC ts must be positive");
}

SuqcParams SuqcParams::wuhan() {
  SuqcParams p;
  p.beta0 = 0.2967;
  p.gamma2 = 0.05;
  p.sigma = 0.001;
  p.n0_hat = 8.9;
  p.ts = 1.0;
  return p;
}

SeirState step_seir_vaccination(const SeirState& x, double v, const SeirParams& p,
                                bool use_n0_approx) {
  check_finite(x, 0);
  if (!std::isfinite(v) || v < 0.0 || v > x.s) {
    throw std::invalid_argument("vaccination " + std::to_string(v) + " outside [0, S=" +
                                std::to_string(x.s) + "]");
  }
  const double h = p.ts;
  const double n = living(x.i, x.e, x.s, x.r);
  const double denom = use_n0_approx ? p.n0 : n;
  const double infection = p.beta * x.s * x.i / denom;
  SeirState y;
  y.i = x.i + h * p.epsilon * x.e - h * (p.gamma + p.mu + p.alpha) * x.i;
  y.e = x.e + h * infection - h * (p.mu + p.epsilon) * x.e;
  y.s = x.s + h * p.lambda * n - h * p.mu * x.s - h * infection - h * v;
  y.r = x.r + h * p.gamma * x.i - h * p.mu * x.r + h * v;
  y.d = p.n0 - living(y.i, y.e, y.s, y.r);
  return y;
}

SeirState step_seir_shield(const SeirState& x, double chi, const SeirParams& p, double chi_max) {
  check_finite(x, 0);
  if (!std::isfinite(chi) || chi < 0.0 || chi > chi_max) {
    throw std::invalid_argument("shield strength " + std::to_string(chi) + " outside [0, " +
                                std::to_string(chi_max) + "]");
  }
  const double h = p.ts;
  const double n = living(x.i, x.e, x.s, x.r);
  const double denom = n + chi * x.r;
  if (!(denom > 0.0)) throw std::invalid_argument("shield denominator N + chi*R is not positive");
  const double infection = p.beta * x.s * x.i / denom;
  SeirState y;
  y.i = x.i + h * p.epsilon * x.e - h * (p.gamma + p.mu + p.alpha) * x.i;
  y.e = x.e + h * infection - h * (p.mu + p.epsilon) * x.e;
  y.s = x.s + h * p.lambda * n - h * p.mu * x.s - h * infection;
  y.r = x.r + h * p.gamma * x.i - h * p.mu * x.r;
  y.d = p.n0 - living(y.i, y.e, y.s, y.r);
  return y;
}

SuqcState step_suqc(const SuqcState& x, double q, const SuqcParams& p, bool use_n0_approx,
                    double q_max) {
  if (!std::isfinite(x.s) || !std::isfinite(x.u) || !std::isfinite(x.q) || !std::isfinite(x.c)) {
    throw SimulationError(0, "non-finite state");
  }
  if (!std::isfinite(q) || q < 0.0 || q > q_max) {
    throw std::invalid_argument("quarantine rate " + std::to_string(q) + " outside [0, " +
                                std::to_string(q_max) + "]");
  }
  const double h = p.ts;
  const double n = use_n0_approx ? p.n0_hat : ((x.s + x.u) + x.q) + x.c;
  const double infection = p.beta0 * x.u * x.s / n;
  const double quarantined = h * q * x.u;
  const double confirmed = h * p.confirmation_rate() * x.q;
  SuqcState y;
  y.s = x.s - h * infection;
  y.u = x.u + h * infection - quarantined;
  y.q = x.q + quarantined - confirmed;
  y.c = x.c + confirmed;
  return y;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSeirVaccination:
      return "seir_vaccination";
    case ModelKind::kSeirShield:
      return "seir_shield";
    case ModelKind::kSuqcQuarantine:
      return "suqc_quarantine";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "seir_vaccination") return ModelKind::kSeirVaccination;
  if (name == "seir_shield") return ModelKind::kSeirShield;
  if (name == "suqc_quarantine") return ModelKind::kSuqcQuarantine;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected seir_vaccination, seir_shield or suqc_quarantine)");
}

void ModelSpec::validate() const {
  const bool seir_kind = kind != ModelKind::kSuqcQuarantine;
  require(seir_kind == std::holds_alternative<SeirParams>(params),
          "parameter set does not match model " + to_string(kind));
  require(seir_kind == std::holds_alternative<SeirState>(initial),
          "initial state does not match model " + to_string(kind));
  if (kind != ModelKind::kSeirVaccination) {
    require(!std::isnan(control_max) && control_max >= 0.0, "control_max must be nonnegative");
  }
  if (seir_kind) {
    const SeirParams& p = seir();
    p.validate();
    const SeirState& x = std::get<SeirState>(initial);
    for (double v : {x.i, x.e, x.s, x.r, x.d}) {
      require(std::isfinite(v) && v >= -1e-9, "initial compartments must be nonnegative");
    }
    require(std::abs(living(x.i, x.e, x.s, x.r) + x.d - p.n0) <= 1e-9 * p.n0,
            "initial compartments must sum to n0");
  } else {
    const SuqcParams& p = suqc();
    p.validate();
    const SuqcState& x = std::get<SuqcState>(initial);
    for (double v : {x.s, x.u, x.q, x.c}) {
      require(std::isfinite(v) && v >= 0.0, "initial compartments must be nonnegative");
    }
    require(std::abs(((x.s + x.u) + x.q) + x.c - p.n0_hat) <= 1e-9 * p.n0_hat,
            "initial compartments must sum to n0_hat");
  }
}

double ModelSpec::population() const {
  return kind == ModelKind::kSuqcQuarantine ? suqc().n0_hat : seir().n0;
}

double ModelSpec::ts() const { return kind == ModelKind::kSuqcQuarantine ? suqc().ts : seir().ts; }

std::vector<std::string> ModelSpec::compartments() const {
  if (kind == ModelKind::kSuqcQuarantine) return {"S", "U", "Q", "C"};
  return {"I", "E", "S", "R", "D"};
}

std::vector<std::string> ModelSpec::channel_order() const {
  if (kind == ModelKind::kSuqcQuarantine) return {"S", "U", "Q", "C", "dC", "N"};
  return {"I", "E", "S", "R", "D", "dD", "N"};
}

std::set<std::string> ModelSpec::channel_set() const {
  auto order = channel_order();
  return {order.begin(), order.end()};
}

std::vector<double> ModelSpec::initial_vector() const {
  if (kind == ModelKind::kSuqcQuarantine) {
    const auto& x = std::get<SuqcState>(initial);
    return {x.s, x.u, x.q, x.c};
  }
  const auto& x = std::get<SeirState>(initial);
  return {x.i, x.e, x.s, x.r, seir().n0 - living(x.i, x.e, x.s, x.r)};
}

std::string ModelSpec::control_name() const {
  switch (kind) {
    case ModelKind::kSeirVaccination:
      return "V";
    case ModelKind::kSeirShield:
      return "chi";
    case ModelKind::kSuqcQuarantine:
      return "q";
  }
  return "u";
}

ModelSpec lombardy_vaccination() {
  ModelSpec m;
  m.kind = ModelKind::kSeirVaccination;
  m.params = SeirParams::lombardy();
  m.initial = SeirState{0.001, 0.02, 9.979, 0.0, 0.0};
  return m;
}

ModelSpec lombardy_shield() {
  ModelSpec m = lombardy_vaccination();
  m.kind = ModelKind::kSeirShield;
  m.control_max = 100.0;
  return m;
}

ModelSpec wuhan_quarantine() {
  ModelSpec m;
  m.kind = ModelKind::kSuqcQuarantine;
  m.params = SuqcParams::wuhan();
  m.initial = SuqcState{8.899, 0.001, 0.0, 0.0};
  m.control_max = 1.0;
  return m;
}

double control_upper_bound(const ModelSpec& model, std::span<const double> x) {
  if (model.kind == ModelKind::kSeirVaccination) return x[2];
  return model.control_max;
}

std::vector<double> step(const ModelSpec& model, std::span<const double> x, double u, std::size_t k,
                         StepJacobian* jac) {
  for (double v : x) {
    if (!std::isfinite(v)) throw SimulationError(k, "non-finite state");
  }
  std::vector<double> next;
  try {
    switch (model.kind) {
      case ModelKind::kSeirVaccination: {
        SeirState y = step_seir_vaccination({x[0], x[1], x[2], x[3], x[4]}, u, model.seir(),
                                            model.use_n0_approx);
        next = {y.i, y.e, y.s, y.r, y.d};
        break;
      }
      case ModelKind::kSeirShield: {
        SeirState y = step_seir_shield({x[0], x[1], x[2], x[3], x[4]}, u, model.seir(),
                                       model.control_max);
        next = {y.i, y.e, y.s, y.r, y.d};
        break;
      }
      case ModelKind::kSuqcQuarantine: {
        SuqcState y = step_suqc({x[0], x[1], x[2], x[3]}, u, model.suqc(), model.use_n0_approx,
                                model.control_max);
        next = {y.s, y.u, y.q, y.c};
        break;
      }
    }
  } catch (const SimulationError& e) {
    throw SimulationError(k, e.what());
  } catch (const std::invalid_argument& e) {
    throw SimulationError(k, e.what());
  }
  if (!jac) return next;

  const std::size_t n = x.size();
  jac->dx.assign(n * n, 0.0);
  jac->du.assign(n, 0.0);
  auto J = [&](std::size_t row, std::size_t col) -> double& { return jac->dx[row * n + col]; };

  if (model.kind == ModelKind::kSuqcQuarantine) {
    const SuqcParams& p = model.suqc();
    const double h = p.ts;
    const double S = x[0], U = x[1];
    const double N = model.use_n0_approx ? p.n0_hat : ((x[0] + x[1]) + x[2]) + x[3];
    // infection = beta0 U S / N
    double dG[4];
    const double g = p.beta0 * U * S / N;
    if (model.use_n0_approx) {
      dG[0] = p.beta0 * U / N;
      dG[1] = p.beta0 * S / N;
      dG[2] = 0.0;
      dG[3] = 0.0;
    } else {
      dG[0] = p.beta0 * U / N - g / N;
      dG[1] = p.beta0 * S / N - g / N;
      dG[2] = -g / N;
      dG[3] = -g / N;
    }
    const double c = p.confirmation_rate();
    for (std::size_t j = 0; j < 4; ++j) {
      J(0, j) = -h * dG[j];
      J(1, j) = h * dG[j];
    }
    J(0, 0) += 1.0;
    J(1, 1) += 1.0 - h * u;
    J(2, 1) = h * u;
    J(2, 2) = 1.0 - h * c;
    J(3, 2) = h * c;
    J(3, 3) = 1.0;
    jac->du[1] = -h * U;
    jac->du[2] = h * U;
    return next;
  }

  const SeirParams& p = model.seir();
  const double h = p.ts;
  const double I = x[0], S = x[2], R = x[3];
  const double N = living(x[0], x[1], x[2], x[3]);
  // infection F = beta S I / M with M = N (exact), n0 (approx) or N + chi R.
  double M;
  double dM[4] = {1.0, 1.0, 1.0, 1.0};
  if (model.kind == ModelKind::kSeirShield) {
    M = N + u * R;
    dM[3] = 1.0 + u;
  } else if (model.use_n0_approx) {
    M = p.n0;
    dM[0] = dM[1] = dM[2] = dM[3] = 0.0;
  } else {
    M = N;
  }
  const double F = p.beta * S * I / M;
  double dF[4];
  for (std::size_t j = 0; j < 4; ++j) dF[j] = -F / M * dM[j];
  dF[0] += p.beta * S / M;
  dF[2] += p.beta * I / M;

  // I row
  J(0, 0) = 1.0 - h * (p.gamma + p.mu + p.alpha);
  J(0, 1) = h * p.epsilon;
  // E row
  for (std::size_t j = 0; j < 4; ++j) J(1, j) = h * dF[j];
  J(1, 1) += 1.0 - h * (p.mu + p.epsilon);
  // S row: birth term lambda * N uses the living population.
  for (std::size_t j = 0; j < 4; ++j) J(2, j) = h * p.lambda - h * dF[j];
  J(2, 2) += 1.0 - h * p.mu;
  // R row
  J(3, 0) = h * p.gamma;
  J(3, 3) = 1.0 - h * p.mu;
  // D row is the negated sum of the living rows; D itself feeds nothing.
  for (std::size_t j = 0; j < 5; ++j) J(4, j) = -(J(0, j) + J(1, j) + J(2, j) + J(3, j));

  if (model.kind == ModelKind::kSeirShield) {
    const double dFdchi = -F / M * R;
    jac->du[1] = h * dFdchi;
    jac->du[2] = -h * dFdchi;
  } else {
    jac->du[2] = -h;
    jac->du[3] = h;
  }
  jac->du[4] = -(jac->du[0] + jac->du[1] + jac->du[2] + jac->du[3]);
  return next;
}

std::vector<std::vector<double>> rollout(const ModelSpec& model, std::span<const double> controls) {
  std::vector<std::vector<double>> states;
  states.reserve(controls.size() + 1);
  states.push_back(model.initial_vector());
  for (std::size_t k = 0; k < controls.size(); ++k) {
    std::vector<double> next = step(model, states.back(), controls[k], k);
    for (std::size_t j = 0; j < next.size(); ++j) {
      if (!std::isfinite(next[j])) throw SimulationError(k + 1, "non-finite state");
      if (next[j] < -kNegativeTolerance) {
        throw SimulationError(k + 1, "compartment " + model.compartments()[j] +
                                         " dropped to " + std::to_string(next[j]));
      }
    }
    states.push_back(std::move(next));
  }
  return states;
}

Trajectory to_trajectory(const ModelSpec& model, const std::vector<std::vector<double>>& states) {
  Trajectory xi(model.ts());
  const auto names = model.compartments();
  const std::size_t L = states.size();
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<double> col(L);
    for (std::size_t k = 0; k < L; ++k) col[k] = states[k][j];
    xi.set_channel(names[j], std::move(col));
  }
  // Cumulative channel and its daily increment.
  const std::string cumulative = model.kind == ModelKind::kSuqcQuarantine ? "C" : "D";
  auto cum = xi.channel(cumulative);
  std::vector<double> delta(L, 0.0);
  for (std::size_t k = 1; k < L; ++k) delta[k] = cum[k] - cum[k - 1];
  std::vector<double> total(L);
  for (std::size_t k = 0; k < L; ++k) {
    const auto& x = states[k];
    total[k] = model.kind == ModelKind::kSuqcQuarantine ? ((x[0] + x[1]) + x[2]) + x[3]
                                                        : living(x[0], x[1], x[2], x[3]);
  }
  xi.set_channel("d" + cumulative, std::move(delta));
  xi.set_channel("N", std::move(total));
  return xi;
}

Trajectory simulate(const ModelSpec& model, std::span<const double> controls, std::size_t t_max) {
  if (controls.size() != t_max) {
    throw std::invalid_argument("expected " + std::to_string(t_max) + " control values, got " +
                                std::to_string(controls.size()));
  }
  return to_trajectory(model, rollout(model, controls));
}

}  // namespace episynth::models
