#include "episynth/scenario.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace episynth::scenario {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Defined in the generated bundled_scenarios.cpp.
extern const std::vector<std::pair<std::string, std::string>> kBundledScenarios;

ScenarioError::ScenarioError(std::string field, const std::string& message)
    : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

namespace {

std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ScenarioError(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) throw ScenarioError(join(path, key), "unknown key");
  }
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ScenarioError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ScenarioError(path, "must be finite");
  return v;
}

std::uint64_t count(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw ScenarioError(path, "expected a nonnegative integer");
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ScenarioError(path, "expected a string");
  return j.get<std::string>();
}

bool flag(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ScenarioError(path, "expected true or false");
  return j.get<bool>();
}

// Assigns obj[key] to *target when present; `required` reports absence.
void read_number(const json& obj, const std::string& path, const std::string& key, double* target,
                 bool required) {
  if (obj.contains(key)) {
    *target = number(obj.at(key), join(path, key));
  } else if (required) {
    throw ScenarioError(join(path, key), "missing (no preset to inherit from)");
  }
}

models::ModelSpec preset_model(const std::string& preset, models::ModelKind kind) {
  const bool seir = kind != models::ModelKind::kSuqcQuarantine;
  if (preset == "lombardy" && seir) {
    return kind == models::ModelKind::kSeirShield ? models::lombardy_shield() : models::lombardy_vaccination();
  }
  if (preset == "wuhan" && !seir) return models::wuhan_quarantine();
  if (preset == "lombardy" || preset == "wuhan") {
    throw ScenarioError("preset", "preset '" + preset + "' does not fit model " + models::to_string(kind));
  }
  throw ScenarioError("preset", "unknown preset '" + preset + "' (known: lombardy, wuhan)");
}

void read_params(const json& doc, models::ModelSpec& m, bool have_preset) {
  const bool required = !have_preset;
  const json empty = json::object();
  const json& params = doc.contains("params") ? doc.at("params") : empty;
  const json& init = doc.contains("init") ? doc.at("init") : empty;
  switch (m.kind) {
    case models::ModelKind::kSeirVaccination:
    case models::ModelKind::kSeirShield: {
      const bool shield = m.kind == models::ModelKind::kSeirShield;
      std::set<std::string> keys{"lambda", "mu", "alpha", "beta", "epsilon", "gamma", "n0", "use_n0_approx"};
      if (shield) keys.insert("chi_max");
      check_keys(params, "params", keys);
      if (!have_preset) {
        m.params = models::SeirParams{};
        m.initial = models::SeirState{};
      }
      auto& p = std::get<models::SeirParams>(m.params);
      read_number(params, "params", "lambda", &p.lambda, required);
      read_number(params, "params", "mu", &p.mu, required);
      read_number(params, "params", "alpha", &p.alpha, required);
      read_number(params, "params", "beta", &p.beta, required);
      read_number(params, "params", "epsilon", &p.epsilon, required);
      read_number(params, "params", "gamma", &p.gamma, required);
      read_number(params, "params", "n0", &p.n0, required);
      if (shield) read_number(params, "params", "chi_max", &m.control_max, required);
      check_keys(init, "init", {"I", "E", "S", "R", "D"});
      auto& x = std::get<models::SeirState>(m.initial);
      read_number(init, "init", "I", &x.i, required);
      read_number(init, "init", "E", &x.e, required);
      read_number(init, "init", "S", &x.s, required);
      read_number(init, "init", "R", &x.r, required);
      read_number(init, "init", "D", &x.d, required);
      break;
    }
    case models::ModelKind::kSuqcQuarantine: {
      check_keys(params, "params", {"beta0", "gamma2", "sigma", "n0_hat", "q_max", "use_n0_approx"});
      if (!have_preset) {
        m.params = models::SuqcParams{};
        m.initial = models::SuqcState{};
      }
      auto& p = std::get<models::SuqcParams>(m.params);
      read_number(params, "params", "beta0", &p.beta0, required);
      read_number(params, "params", "gamma2", &p.gamma2, required);
      read_number(params, "params", "sigma", &p.sigma, required);
      read_number(params, "params", "n0_hat", &p.n0_hat, required);
      read_number(params, "params", "q_max", &m.control_max, required);
      check_keys(init, "init", {"S", "U", "Q", "C"});
      auto& x = std::get<models::SuqcState>(m.initial);
      read_number(init, "init", "S", &x.s, required);
      read_number(init, "init", "U", &x.u, required);
      read_number(init, "init", "Q", &x.q, required);
      read_number(init, "init", "C", &x.c, required);
      break;
    }
  }
  if (params.contains("use_n0_approx")) m.use_n0_approx = flag(params.at("use_n0_approx"), "params.use_n0_approx");
  if (doc.contains("ts")) {
    const double ts = number(doc.at("ts"), "ts");
    if (auto* p = std::get_if<models::SeirParams>(&m.params)) p->ts = ts;
    if (auto* p = std::get_if<models::SuqcParams>(&m.params)) p->ts = ts;
  }
}

void read_method(const json& j, synth::MethodOptions& o) {
  check_keys(j, "method",
             {"gradient", "beta_stages", "extra_beta_stages", "mu_initial", "mu_growth", "mu_rounds", "margin",
              "max_inner_iterations", "tolerance", "random_starts", "threads"});
  if (j.contains("gradient")) {
    const std::string g = text(j.at("gradient"), "method.gradient");
    if (g == "analytic") {
      o.gradient = synth::GradientMode::kAnalytic;
    } else if (g == "finite_difference") {
      o.gradient = synth::GradientMode::kFiniteDifference;
    } else {
      throw ScenarioError("method.gradient", "expected analytic or finite_difference");
    }
  }
  if (j.contains("beta_stages")) {
    const json& b = j.at("beta_stages");
    if (!b.is_array() || b.empty()) throw ScenarioError("method.beta_stages", "expected a nonempty array");
    o.beta_stages.clear();
    for (std::size_t i = 0; i < b.size(); ++i) {
      const std::string path = "method.beta_stages[" + std::to_string(i) + "]";
      const double v = number(b[i], path);
      if (!(v > 0.0)) throw ScenarioError(path, "must be positive");
      o.beta_stages.push_back(v);
    }
  }
  auto positive = [&](const char* key, double* target) {
    if (!j.contains(key)) return;
    const double v = number(j.at(key), std::string("method.") + key);
    if (!(v > 0.0)) throw ScenarioError(std::string("method.") + key, "must be positive");
    *target = v;
  };
  auto integer = [&](const char* key, int* target) {
    if (!j.contains(key)) return;
    const std::uint64_t v = count(j.at(key), std::string("method.") + key);
    if (v > 1000000) throw ScenarioError(std::string("method.") + key, "too large");
    *target = static_cast<int>(v);
  };
  positive("mu_initial", &o.mu_initial);
  positive("mu_growth", &o.mu_growth);
  positive("margin", &o.margin);
  positive("tolerance", &o.tolerance);
  integer("extra_beta_stages", &o.extra_beta_stages);
  integer("mu_rounds", &o.mu_rounds);
  integer("max_inner_iterations", &o.max_inner_iterations);
  integer("random_starts", &o.random_starts);
  integer("threads", &o.threads);
}

void finish(Scenario& s, bool t_max_given) {
  try {
    s.spec = mtl::parse_formula(s.spec_text, s.model.channel_set());
  } catch (const mtl::ParseError& e) {
    throw ScenarioError("spec", e.what());
  }
  const std::size_t h = mtl::horizon(s.spec);
  if (!t_max_given) s.t_max = h;
  if (h > s.t_max) {
    throw ScenarioError("t_max", "spec horizon " + std::to_string(h) + " exceeds t_max " + std::to_string(s.t_max));
  }
  try {
    s.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("params", e.what());
  }
  if (s.model.kind != models::ModelKind::kSeirVaccination && !std::isfinite(s.model.control_max)) {
    throw ScenarioError("params", "control bound must be finite");
  }
}

}  // namespace

synth::SynthesisProblem Scenario::problem() const {
  synth::SynthesisProblem p;
  p.model = model;
  p.spec = spec;
  p.spec_text = spec_text;
  p.horizon_t = t_max;
  p.effort_norm = effort_norm;
  p.method = method;
  p.seed = seed;
  return p;
}

Scenario parse_scenario(const std::string& source, const std::string& name) {
  json doc;
  try {
    doc = json::parse(source);
  } catch (const json::parse_error& e) {
    throw ScenarioError("", std::string("invalid JSON: ") + e.what());
  }
  check_keys(doc, "",
             {"version", "model", "preset", "params", "init", "t_max", "ts", "spec", "effort_norm", "method", "seed",
              "out_dir"});
  // A missing version means the current one.
  if (doc.contains("version") && count(doc.at("version"), "version") != static_cast<std::uint64_t>(kSchemaVersion)) {
    throw ScenarioError("version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (!doc.contains("model")) throw ScenarioError("model", "missing");
  Scenario s;
  s.name = name;
  models::ModelKind kind;
  try {
    kind = models::model_kind_from_string(text(doc.at("model"), "model"));
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("model", e.what());
  }
  const bool have_preset = doc.contains("preset");
  if (have_preset) {
    s.preset = text(doc.at("preset"), "preset");
    s.model = preset_model(s.preset, kind);
  } else {
    s.model.kind = kind;
  }
  read_params(doc, s.model, have_preset);

  if (doc.contains("spec")) s.spec_text = text(doc.at("spec"), "spec");
  if (doc.contains("t_max")) s.t_max = count(doc.at("t_max"), "t_max");
  if (doc.contains("effort_norm")) {
    try {
      s.effort_norm = synth::effort_norm_from_string(text(doc.at("effort_norm"), "effort_norm"));
    } catch (const std::invalid_argument& e) {
      throw ScenarioError("effort_norm", e.what());
    }
  }
  if (doc.contains("method")) read_method(doc.at("method"), s.method);
  if (doc.contains("seed")) s.seed = count(doc.at("seed"), "seed");
  s.out_dir = doc.contains("out_dir") ? text(doc.at("out_dir"), "out_dir") : "out/" + name;
  finish(s, doc.contains("t_max"));
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("", "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.stem().string());
}

std::vector<std::string> bundled_names() {
  std::vector<std::string> out;
  for (const auto& [name, body] : kBundledScenarios) out.push_back(name);
  return out;
}

std::optional<std::string> bundled_text(const std::string& name) {
  for (const auto& [n, body] : kBundledScenarios) {
    if (n == name) return body;
  }
  return std::nullopt;
}

Scenario resolve_scenario(const std::string& path_or_name) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(path_or_name, ec)) return load_scenario(path_or_name);
  if (auto body = bundled_text(path_or_name)) return parse_scenario(*body, path_or_name);
  throw ScenarioError("", "no scenario file or bundled scenario named '" + path_or_name + "'");
}

void apply_overrides(Scenario& s, const Overrides& o) {
  if (o.seed) s.seed = *o.seed;
  if (o.spec) s.spec_text = *o.spec;
  if (o.norm) {
    try {
      s.effort_norm = synth::effort_norm_from_string(*o.norm);
    } catch (const std::invalid_argument& e) {
      throw ScenarioError("effort_norm", e.what());
    }
  }
  if (o.out_dir) s.out_dir = *o.out_dir;
  if (o.t_max) s.t_max = *o.t_max;
  finish(s, true);
}

std::vector<PresetRow> preset_table() {
  const models::SeirParams l = models::SeirParams::lombardy();
  const models::SuqcParams w = models::SuqcParams::wuhan();
  const models::ModelSpec lv = models::lombardy_vaccination();
  const models::ModelSpec ws = models::wuhan_quarantine();
  const auto& lx = std::get<models::SeirState>(lv.initial);
  const auto& wx = std::get<models::SuqcState>(ws.initial);
  return {
      {"lombardy",
       "seir_vaccination, seir_shield",
       {{"lambda", l.lambda},
        {"mu", l.mu},
        {"alpha", l.alpha},
        {"beta", l.beta},
        {"epsilon", l.epsilon},
        {"gamma", l.gamma},
        {"n0", l.n0},
        {"ts", l.ts},
        {"chi_max", models::lombardy_shield().control_max},
        {"I0", lx.i},
        {"E0", lx.e},
        {"S0", lx.s},
        {"R0", lx.r},
        {"D0", lx.d}}},
      {"wuhan",
       "suqc_quarantine",
       {{"beta0", w.beta0},
        {"gamma2", w.gamma2},
        {"sigma", w.sigma},
        {"n0_hat", w.n0_hat},
        {"ts", w.ts},
        {"q_max", ws.control_max},
        {"S0", wx.s},
        {"U0", wx.u},
        {"Q0", wx.q},
        {"C0", wx.c}}},
  };
}

namespace {

// Infinite robustness (spec TRUE) has no JSON number.
ordered_json real(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "+inf" : "-inf";
}

ordered_json header(const Scenario& s) {
  ordered_json j;
  j["scenario"] = s.name;
  j["model"] = models::to_string(s.model.kind);
  j["preset"] = s.preset;
  j["spec"] = mtl::to_string(s.spec);
  j["t_max"] = s.t_max;
  j["effort_norm"] = synth::to_string(s.effort_norm);
  j["seed"] = s.seed;
  return j;
}

}  // namespace

std::string result_report(const Scenario& s, const synth::SynthesisResult& r) {
  ordered_json j = header(s);
  j["method"] = r.method;
  j["satisfied"] = r.satisfied;
  j["marginal"] = r.marginal;
  j["infeasible"] = r.infeasible;
  j["effort"] = real(r.effort);
  j["robustness"] = real(r.robustness);
  j["iterations"] = r.iterations;
  j["start_index"] = r.start_index;
  j["control_name"] = s.model.control_name();
  j["control"] = r.control.values;
  return j.dump(2) + "\n";
}

std::string verify_report(const Scenario& s, const std::vector<double>& control, const synth::VerifyReport& r) {
  ordered_json j = header(s);
  j["satisfied"] = r.satisfied;
  j["marginal"] = r.marginal;
  j["effort"] = real(r.effort);
  j["robustness"] = real(r.robustness);
  j["control_name"] = s.model.control_name();
  j["control"] = control;
  return j.dump(2) + "\n";
}

}  // namespace episynth::scenario
