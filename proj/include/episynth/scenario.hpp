#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "episynth/models.hpp"
#include "episynth/mtl.hpp"
#include "episynth/synth.hpp"

namespace episynth::scenario {

// Schema or validation failure. `field()` is the JSON path of the offending
// entry, e.g. "method.mu_rounds"; empty for file-level problems.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

constexpr int kSchemaVersion = 1;

struct Scenario {
  std::string name;
  std::string preset;
  models::ModelSpec model;
  std::size_t t_max = 0;
  std::string spec_text = "TRUE";
  mtl::Formula spec = mtl::Formula::truth();
  synth::EffortNorm effort_norm = synth::EffortNorm::kSumOfSquares;
  synth::MethodOptions method;
  std::uint64_t seed = 0;
  std::string out_dir;

  synth::SynthesisProblem problem() const;
};

// Parses and validates scenario JSON. `name` labels reports.
Scenario parse_scenario(const std::string& text, const std::string& name = "scenario");
Scenario load_scenario(const std::filesystem::path& path);

// Bundled scenarios, compiled into the library.
std::vector<std::string> bundled_names();
std::optional<std::string> bundled_text(const std::string& name);
// A readable file path, else a bundled name.
Scenario resolve_scenario(const std::string& path_or_name);

// Command-line overrides; unset fields keep the scenario value.
struct Overrides {
  std::optional<std::size_t> t_max;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> spec;
  std::optional<std::string> norm;
  std::optional<std::string> out_dir;
};
// Applies the overrides and validates the result again.
void apply_overrides(Scenario& s, const Overrides& o);

// Preset names with one line per parameter, for listings.
struct PresetRow {
  std::string preset;
  std::string model;
  std::vector<std::pair<std::string, double>> values;
};
std::vector<PresetRow> preset_table();

// Deterministic JSON reports. Wall time is left out so that a fixed seed
// gives identical bytes.
std::string result_report(const Scenario& s, const synth::SynthesisResult& r);
std::string verify_report(const Scenario& s, const std::vector<double>& control,
                          const synth::VerifyReport& r);

// Writes trajectory.csv, control.csv and four SVG panels (individuals,
// control per day, cumulative deaths or confirmed cases, the same per day)
// into dir. Returns the files written in that order.
std::vector<std::filesystem::path> emit_plots(const models::ModelSpec& model, const Trajectory& xi,
                                              const std::vector<double>& control,
                                              const std::filesystem::path& dir);

// One SVG line chart. Each series has one vertex per sample at x = k * ts.
struct Series {
  std::string label;
  std::vector<double> values;
};
std::string line_chart_svg(const std::string& title, const std::string& y_label, double ts,
                           const std::vector<Series>& series);

}  // namespace episynth::scenario
