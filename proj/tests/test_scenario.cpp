#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "episynth/scenario.hpp"
#include "json.hpp"

using namespace episynth;
using namespace episynth::scenario;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("episynth_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string field_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ScenarioError& e) {
    return e.field();
  }
  return "<no error>";
}

std::size_t count_rows(const std::string& csv) {
  std::size_t n = 0;
  for (char c : csv) n += c == '\n';
  return n - 1;
}

// Vertex count of the polyline labelled `series`.
std::size_t vertices(const std::string& svg, const std::string& series) {
  const std::regex re("data-series=\"" + series + "\" points=\"([^\"]*)\"");
  std::smatch m;
  if (!std::regex_search(svg, m, re)) return 0;
  std::istringstream pts(m[1].str());
  std::size_t n = 0;
  std::string p;
  while (pts >> p) ++n;
  return n;
}

}  // namespace

TEST_CASE("bundled scenarios") {
  const auto names = bundled_names();
  CHECK(names.size() == 9);
  for (const std::string& n : names) {
    const Scenario s = resolve_scenario(n);
    CHECK(s.name == n);
    CHECK(s.effort_norm == synth::EffortNorm::kSumOfSquares);
    CHECK(s.seed == 0);
    CHECK(s.out_dir == "out/" + n);
    CHECK(mtl::horizon(s.spec) <= s.t_max);
  }
  const Scenario v1 = resolve_scenario("lombardy_phi_v1");
  CHECK(v1.model.kind == models::ModelKind::kSeirVaccination);
  CHECK(v1.model.seir() == models::SeirParams::lombardy());
  CHECK(v1.t_max == 100);
  CHECK(v1.spec == mtl::parse_formula("G[0,100](dD <= 0.001) & G[0,100](D <= 0.05) & F[40,60](R >= 6)"));

  const Scenario q3 = resolve_scenario("wuhan_phi_q3");
  CHECK(q3.model.kind == models::ModelKind::kSuqcQuarantine);
  CHECK(q3.model.suqc() == models::SuqcParams::wuhan());
  CHECK(q3.model.control_max == 1.0);
  CHECK(q3.t_max == 200);
  CHECK(q3.spec == mtl::parse_formula("G[0,200](dC <= 0.0005) & G[0,200](C <= 0.03)"));

  const Scenario s1 = resolve_scenario("lombardy_phi_s1");
  CHECK(s1.model.kind == models::ModelKind::kSeirShield);
  CHECK(s1.model.control_max == 100.0);
  CHECK_THROWS_AS(resolve_scenario("no_such_scenario"), ScenarioError);
}

TEST_CASE("minimal file gets defaults") {
  const Scenario s = parse_scenario(R"j({"model": "seir_vaccination", "preset": "lombardy", "spec": "G[0,30](D <= 0.05)"})j",
                                    "mini");
  CHECK(s.t_max == 30);
  CHECK(s.effort_norm == synth::EffortNorm::kSumOfSquares);
  CHECK(s.seed == 0);
  CHECK(s.out_dir == "out/mini");
  CHECK(s.method.beta_stages == synth::MethodOptions{}.beta_stages);
  CHECK(s.model.initial_vector() == models::lombardy_vaccination().initial_vector());
}

TEST_CASE("preset overrides and explicit parameters") {
  const Scenario s = parse_scenario(R"j({
    "version": 1, "model": "seir_shield", "preset": "lombardy",
    "params": {"chi_max": 50, "beta": 0.5},
    "init": {"I": 0.01, "S": 9.97},
    "t_max": 40, "ts": 1, "spec": "TRUE", "effort_norm": "sup",
    "method": {"random_starts": 2, "beta_stages": [1, 100], "gradient": "finite_difference"},
    "seed": 9, "out_dir": "elsewhere"})j");
  CHECK(s.model.control_max == 50.0);
  CHECK(s.model.seir().beta == 0.5);
  CHECK(s.model.seir().gamma == 0.2);
  const auto x = s.model.initial_vector();
  CHECK(x[0] == 0.01);
  CHECK(x[2] == 9.97);
  CHECK(s.t_max == 40);
  CHECK(s.effort_norm == synth::EffortNorm::kSup);
  CHECK(s.method.random_starts == 2);
  CHECK(s.method.gradient == synth::GradientMode::kFiniteDifference);
  CHECK(s.seed == 9);
  CHECK(s.out_dir == "elsewhere");

  const Scenario full = parse_scenario(R"j({
    "version": 1, "model": "suqc_quarantine",
    "params": {"beta0": 0.3, "gamma2": 0.05, "sigma": 0.001, "n0_hat": 1.0, "q_max": 1},
    "init": {"S": 0.99, "U": 0.01, "Q": 0, "C": 0}, "spec": "G[0,10](C <= 0.5)"})j");
  CHECK(full.model.population() == 1.0);
  CHECK(full.t_max == 10);
}

TEST_CASE("schema errors carry the field path") {
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "spec": "TRUE", "colour": 1})j") == "colour");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "method": {"mu_round": 3}})j") ==
        "method.mu_round");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "params": {"betta": 1}})j") == "params.betta");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "init": {"Q": 1}})j") == "init.Q");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "atlantis"})j") == "preset");
  CHECK(field_of(R"j({"model": "suqc_quarantine", "preset": "lombardy"})j") == "preset");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "spec": "G[0,5](C <= 1)"})j") == "spec");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "spec": "G[0,50](D <= 1)", "t_max": 10})j") ==
        "t_max");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "t_max": -3})j") == "t_max");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "effort_norm": "l7"})j") == "effort_norm");
  CHECK(field_of(R"j({"version": 2, "model": "seir_vaccination", "preset": "lombardy"})j") == "version");
  CHECK(field_of(R"j({"preset": "lombardy"})j") == "model");
  CHECK(field_of(R"j({"model": "seir_vaccination"})j") != "<no error>");
  CHECK(field_of(R"j({"model": "seir_vaccination", "preset": "lombardy", "init": {"S": 20}})j") == "params");
  CHECK(field_of("{not json") == "");
}

TEST_CASE("overrides are validated after loading") {
  Scenario s = resolve_scenario("lombardy_phi_v1");
  Overrides o;
  o.t_max = 120;
  o.seed = 4;
  o.norm = "sum";
  o.out_dir = "x";
  apply_overrides(s, o);
  CHECK(s.t_max == 120);
  CHECK(s.seed == 4);
  CHECK(s.effort_norm == synth::EffortNorm::kSum);
  CHECK(s.out_dir == "x");

  Scenario t = resolve_scenario("lombardy_phi_v1");
  Overrides shorter;
  shorter.t_max = 50;
  CHECK_THROWS_AS(apply_overrides(t, shorter), ScenarioError);
  Overrides spec;
  spec.spec = "F[0,3](E >= 0.1)";
  Scenario u = resolve_scenario("lombardy_phi_v1");
  apply_overrides(u, spec);
  CHECK(u.spec == mtl::parse_formula("F[0,3](E >= 0.1)"));
  Overrides bad;
  bad.spec = "F[0,3](U >= 0.1)";
  CHECK_THROWS_AS(apply_overrides(u, bad), ScenarioError);
}

TEST_CASE("reports") {
  const Scenario s = resolve_scenario("wuhan_phi_q1");
  const std::vector<double> u(200, 0.063);
  const synth::VerifyReport r = synth::verify(u, s.problem());
  const auto j = nlohmann::json::parse(verify_report(s, u, r));
  CHECK(j.at("satisfied") == false);
  CHECK(j.at("scenario") == "wuhan_phi_q1");
  CHECK(j.at("control").size() == 200);
  CHECK(verify_report(s, u, r) == verify_report(s, u, r));

  synth::SynthesisResult res;
  res.control.values = u;
  res.trajectory = models::simulate(s.model, u, 200);
  res.robustness = -std::numeric_limits<double>::infinity();
  res.wall_time = 1.5;
  const std::string a = result_report(s, res);
  res.wall_time = 7.0;
  CHECK(result_report(s, res) == a);
  CHECK(nlohmann::json::parse(a).at("robustness") == "-inf");
}

TEST_CASE("plots") {
  const models::ModelSpec v = models::lombardy_vaccination();
  const std::vector<double> u(100, 0.002);
  const Trajectory xi = models::simulate(v, u, 100);
  const fs::path dir = scratch("plots");
  const auto files = emit_plots(v, xi, u, dir);
  REQUIRE(files.size() == 6);
  for (const auto& f : files) CHECK(fs::exists(f));
  std::size_t svgs = 0;
  for (const auto& f : files) svgs += f.extension() == ".svg";
  CHECK(svgs == 4);

  CHECK(slurp(dir / "individuals.svg").find("Number of individuals") != std::string::npos);
  CHECK(slurp(dir / "control.svg").find("Vaccinated individuals per day") != std::string::npos);
  CHECK(slurp(dir / "cumulative.svg").find("Number of deaths") != std::string::npos);
  CHECK(slurp(dir / "per_day.svg").find("Number of deaths per day") != std::string::npos);
  CHECK(slurp(dir / "individuals.svg").find("days") != std::string::npos);
  CHECK(slurp(dir / "individuals.svg").find("millions") != std::string::npos);

  // One vertex per persisted CSV row.
  const std::string traj = slurp(dir / "trajectory.csv");
  CHECK(vertices(slurp(dir / "individuals.svg"), "S") == count_rows(traj));
  CHECK(vertices(slurp(dir / "per_day.svg"), "dD") == count_rows(traj));
  CHECK(vertices(slurp(dir / "control.svg"), "V") == count_rows(slurp(dir / "control.csv")));
  CHECK(traj == xi.to_csv(v.channel_order()));

  // Same input, same bytes.
  const fs::path again = scratch("plots_again");
  emit_plots(v, xi, u, again);
  for (const char* f : {"individuals.svg", "control.svg", "cumulative.svg", "per_day.svg", "trajectory.csv", "control.csv"}) {
    CHECK(slurp(dir / f) == slurp(again / f));
  }
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST_CASE("quarantine panels and the zero control line") {
  const models::ModelSpec q = models::wuhan_quarantine();
  const Trajectory xi = models::simulate(q, std::vector<double>(20, 0.0), 20);
  const fs::path dir = scratch("quarantine");
  emit_plots(q, xi, {}, dir);
  const std::string control = slurp(dir / "control.svg");
  CHECK(control.find("Quarantine rate") != std::string::npos);
  CHECK(vertices(control, "q") == 20);
  CHECK(slurp(dir / "cumulative.svg").find("Number of confirmed cases") != std::string::npos);
  CHECK(slurp(dir / "per_day.svg").find("Confirmed cases per day") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("unwritable directories are reported") {
  const fs::path file = scratch("blocker");
  std::ofstream(file) << "x";
  const models::ModelSpec q = models::wuhan_quarantine();
  const Trajectory xi = models::simulate(q, std::vector<double>(2, 0.0), 2);
  CHECK_THROWS(emit_plots(q, xi, {}, file / "sub"));
  fs::remove_all(file);
}

TEST_CASE("preset table") {
  const auto rows = preset_table();
  REQUIRE(rows.size() >= 2);
  bool saw_beta = false;
  for (const auto& row : rows) {
    if (row.preset != "lombardy") continue;
    for (const auto& [k, v] : row.values) {
      if (k == "beta") saw_beta = v == 0.75;
    }
  }
  CHECK(saw_beta);
}
