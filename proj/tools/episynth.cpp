#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "episynth/mip.hpp"
#include "episynth/scenario.hpp"

namespace {

using namespace episynth;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;
constexpr int kScenarioError = 3;

const char* const kGrammar = R"help(
Scenarios: a JSON file path or a bundled name (lombardy_phi_v1..3,
lombardy_phi_s1..3, wuhan_phi_q1..3).

MTL grammar (intervals are time-index offsets, Ts = 1 day in the presets):
  formula := disj [ "U[" int "," int "]" formula ]
  disj    := conj { "|" conj }
  conj    := unary { "&" unary }
  unary   := "!" unary | "G[" int "," int "]" unary | "F[" int "," int "]" unary
           | "(" formula ")" | atom | "TRUE"
  atom    := channel ("<=" | ">=") number
Precedence: ! and G/F bind tightest, then &, then |, then U (right-assoc).

Channels (millions of individuals):
  SEIR models: I E S R D dD N     (dD[k] = D[k] - D[k-1], dD[0] = 0)
  SUQC model:  S U Q C dC N       (dC analogous)

Exit codes: 0 success, 1 infeasible or not satisfied, 2 usage, 3 scenario error.
)help";

struct Common {
  std::string scenario;
  std::optional<std::size_t> t_max;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> spec;
  std::optional<std::string> norm;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("scenario", c.scenario, "Scenario file or bundled scenario name")->required();
  cmd->add_option("--t-max", c.t_max, "Horizon T in days");
  cmd->add_option("--seed", c.seed, "Random seed for multi-start");
  cmd->add_option("--spec", c.spec, "MTL specification text");
  cmd->add_option("--norm", c.norm, "Effort norm: sum_of_squares, sum or sup");
  cmd->add_option("--out", c.out, "Output directory (file for export-mip)");
}

scenario::Scenario load(const Common& c, bool out_is_dir = true) {
  scenario::Scenario s = scenario::resolve_scenario(c.scenario);
  scenario::Overrides o;
  o.t_max = c.t_max;
  o.seed = c.seed;
  o.spec = c.spec;
  o.norm = c.norm;
  if (out_is_dir) o.out_dir = c.out;
  scenario::apply_overrides(s, o);
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw scenario::ScenarioError("", "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << body)) throw std::runtime_error("cannot write " + path.string());
}

// Control file: one value per line, or CSV whose last column holds the
// values (header lines are skipped).
std::vector<double> read_controls(const std::string& path) {
  std::vector<double> u;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find_last_of(',');
    std::string field = comma == std::string::npos ? line : line.substr(comma + 1);
    field.erase(0, field.find_first_not_of(" \t\r"));
    field.erase(field.find_last_not_of(" \t\r") + 1);
    if (field.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') continue;
    u.push_back(v);
  }
  return u;
}

struct ControlSource {
  std::optional<std::string> file;
  std::optional<double> constant;
  std::optional<std::string> assignment;
};

void add_control_source(CLI::App* cmd, ControlSource& src) {
  auto* f = cmd->add_option("--control", src.file, "Control values file (CSV or one value per line)");
  auto* c = cmd->add_option("--constant", src.constant, "Constant control value for every day");
  auto* a = cmd->add_option("--assignment", src.assignment, "Solver variable assignment for the exported MIP");
  f->excludes(c)->excludes(a);
  c->excludes(a);
}

std::vector<double> resolve_controls(const ControlSource& src, const scenario::Scenario& s) {
  if (src.file) return read_controls(*src.file);
  if (src.constant) return std::vector<double>(s.t_max, *src.constant);
  if (src.assignment) {
    return mip::controls_from_assignment(mip::parse_assignment(read_file(*src.assignment)), s.model, s.t_max);
  }
  return std::vector<double>(s.t_max, 0.0);
}

void print_outcome(const char* what, bool satisfied, bool marginal, double effort, double robustness) {
  std::fprintf(stderr, "%s: %s%s, effort %.6g, robustness %.6g\n", what, satisfied ? "satisfied" : "NOT satisfied",
               marginal ? " (marginal)" : "", effort, robustness);
}

int run_simulate(const Common& c, const ControlSource& src) {
  const scenario::Scenario s = load(c);
  const std::vector<double> u = resolve_controls(src, s);
  if (u.size() != s.t_max) {
    std::fprintf(stderr, "error: %zu control values for t_max %zu\n", u.size(), s.t_max);
    return kScenarioError;
  }
  Trajectory xi = models::simulate(s.model, u, s.t_max);
  const auto files = scenario::emit_plots(s.model, xi, u, s.out_dir);
  std::fprintf(stderr, "simulated %zu days; wrote %zu files to %s\n", s.t_max, files.size(), s.out_dir.c_str());
  return kOk;
}

int run_synthesize(const Common& c, int threads) {
  scenario::Scenario s = load(c);
  if (threads >= 0) s.method.threads = threads;
  const synth::SynthesisResult r = synth::synthesize(s.problem());
  const std::filesystem::path dir = s.out_dir;
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", scenario::result_report(s, r));
  scenario::emit_plots(s.model, r.trajectory, r.control.values, dir);
  print_outcome(s.name.c_str(), r.satisfied, r.marginal, r.effort, r.robustness);
  std::fprintf(stderr, "iterations %zu, wall time %.2f s, report in %s\n", r.iterations, r.wall_time,
               (dir / "report.json").c_str());
  if (r.infeasible) std::fprintf(stderr, "no control satisfying the specification was found\n");
  return r.satisfied ? kOk : kFailed;
}

int run_verify(const Common& c, const ControlSource& src) {
  const scenario::Scenario s = load(c);
  const std::vector<double> u = resolve_controls(src, s);
  if (u.size() != s.t_max) {
    std::fprintf(stderr, "error: %zu control values for t_max %zu\n", u.size(), s.t_max);
    return kScenarioError;
  }
  const synth::VerifyReport r = synth::verify(u, s.problem());
  const std::filesystem::path dir = s.out_dir;
  std::filesystem::create_directories(dir);
  write_file(dir / "verify.json", scenario::verify_report(s, u, r));
  print_outcome(s.name.c_str(), r.satisfied, r.marginal, r.effort, r.robustness);
  return r.satisfied ? kOk : kFailed;
}

int run_export(const Common& c, bool approximate, double big_m) {
  const scenario::Scenario s = load(c, false);
  mip::EncodeOptions o;
  o.allow_approximate_shield = approximate;
  o.big_m = big_m;
  const mip::MipModel m = mip::encode_mip(s.problem(), o);
  const std::filesystem::path path = c.out ? std::filesystem::path(*c.out) : std::filesystem::path(s.out_dir) / "model.lp";
  write_file(path, mip::export_lp(m));
  std::fprintf(stderr, "wrote %s: %zu variables (%zu binary), %zu constraints\n", path.c_str(), m.variables.size(),
               m.binary_count(), m.constraints.size());
  return kOk;
}

int run_list_presets() {
  for (const auto& row : scenario::preset_table()) {
    std::fprintf(stderr, "%s (%s)\n", row.preset.c_str(), row.model.c_str());
    for (const auto& [key, value] : row.values) std::fprintf(stderr, "  %-8s %.10g\n", key.c_str(), value);
  }
  std::fprintf(stderr, "bundled scenarios:");
  for (const auto& n : scenario::bundled_names()) std::fprintf(stderr, " %s", n.c_str());
  std::fprintf(stderr, "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Epidemic control synthesis from metric temporal logic specifications"};
  app.footer(kGrammar);
  app.require_subcommand(1);

  Common sim_c, syn_c, ver_c, exp_c;
  ControlSource sim_src, ver_src;
  int threads = -1;
  bool approximate = false;
  double big_m = 0.0;

  auto* sim = app.add_subcommand("simulate", "Simulate a control sequence (zero by default); write CSV and plots");
  add_common(sim, sim_c);
  add_control_source(sim, sim_src);
  auto* syn = app.add_subcommand("synthesize", "Synthesize a minimum-effort satisfying control");
  add_common(syn, syn_c);
  syn->add_option("--threads", threads, "Worker threads for multi-start (0: all cores)");
  auto* ver = app.add_subcommand("verify", "Check a control sequence (zero by default) against the spec");
  add_common(ver, ver_c);
  add_control_source(ver, ver_src);
  auto* exp = app.add_subcommand("export-mip", "Write the mixed-integer encoding as an LP file");
  add_common(exp, exp_c);
  exp->add_flag("--allow-approximate", approximate,
                "Allow the shield model under the n0-denominator approximation");
  exp->add_option("--big-m", big_m, "Big-M constant (default 2 * population)");
  auto* presets = app.add_subcommand("list-presets", "Print preset parameters and bundled scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, std::cerr, std::cerr);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, std::cerr, std::cerr);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return kUsage;
  }

  try {
    if (*sim) return run_simulate(sim_c, sim_src);
    if (*syn) return run_synthesize(syn_c, threads);
    if (*ver) return run_verify(ver_c, ver_src);
    if (*exp) return run_export(exp_c, approximate, big_m);
    if (*presets) return run_list_presets();
  } catch (const scenario::ScenarioError& e) {
    std::fprintf(stderr, "scenario error: %s\n", e.what());
    return kScenarioError;
  } catch (const mip::UnsupportedError& e) {
    std::fprintf(stderr, "error: %s (pass --allow-approximate)\n", e.what());
    return kUsage;
  } catch (const models::SimulationError& e) {
    std::fprintf(stderr, "simulation error at step %zu: %s\n", e.step(), e.what());
    return kFailed;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kScenarioError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
  return kUsage;
}
