#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "episynth/scenario.hpp"

namespace episynth::scenario {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 24.0;
constexpr double kTop = 44.0;
constexpr double kBottom = 56.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string coord(double v) { return fmt("%.3f", v); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// Tick spacing from {1, 2, 5} x 10^n giving about `target` intervals.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

std::string tick_label(double v, double step) {
  if (std::fabs(v) < step * 1e-9) return "0";
  const int decimals = std::max(0, -static_cast<int>(std::floor(std::log10(step))));
  char buf[64];
  if (std::fabs(v) >= 1e5 || step < 1e-4) {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  }
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string control_csv(const std::string& name, double ts, const std::vector<double>& u) {
  std::ostringstream out;
  out << "k,t_days," << name << '\n';
  for (std::size_t k = 0; k < u.size(); ++k) {
    out << k << ',' << fmt("%.17g", static_cast<double>(k) * ts) << ',' << fmt("%.17g", u[k]) << '\n';
  }
  return out.str();
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& y_label, double ts,
                           const std::vector<Series>& series) {
  std::size_t n = 0;
  double lo = 0.0, hi = 0.0;
  for (const Series& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo <= 0.0) hi = lo + 1.0;
  const double x_max = n > 1 ? static_cast<double>(n - 1) * ts : 1.0;
  const double ystep = nice_step(hi - lo, 5);
  lo = std::floor(lo / ystep) * ystep;
  hi = std::ceil(hi / ystep) * ystep;
  const double xstep = nice_step(x_max, 8);

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * x / x_max; };
  auto py = [&](double y) { return kTop + ph * (1.0 - (y - lo) / (hi - lo)); };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n"
      << "<title>" << escape(title) << "</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
      << "<text x=\"" << coord(kWidth / 2) << "\" y=\"26\" font-size=\"16\" text-anchor=\"middle\">"
      << escape(title) << "</text>\n";

  out << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  const int ny = static_cast<int>(std::lround((hi - lo) / ystep));
  const int nx = static_cast<int>(std::floor(x_max / xstep + 1e-9));
  for (int i = 0; i <= ny; ++i) {
    const double y = lo + i * ystep;
    out << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(py(y)) << "\" x2=\"" << coord(kLeft + pw)
        << "\" y2=\"" << coord(py(y)) << "\"/>\n";
  }
  out << "</g>\n<g font-size=\"11\" fill=\"#333333\">\n";
  for (int i = 0; i <= ny; ++i) {
    const double y = lo + i * ystep;
    out << "<text x=\"" << coord(kLeft - 6) << "\" y=\"" << coord(py(y) + 4)
        << "\" text-anchor=\"end\">" << tick_label(y, ystep) << "</text>\n";
  }
  for (int i = 0; i <= nx; ++i) {
    const double x = i * xstep;
    out << "<text x=\"" << coord(px(x)) << "\" y=\"" << coord(kTop + ph + 16)
        << "\" text-anchor=\"middle\">" << tick_label(x, xstep) << "</text>\n";
  }
  out << "</g>\n"
      << "<rect x=\"" << coord(kLeft) << "\" y=\"" << coord(kTop) << "\" width=\"" << coord(pw) << "\" height=\""
      << coord(ph) << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"" << coord(kLeft + pw / 2) << "\" y=\"" << coord(kHeight - 14)
      << "\" font-size=\"13\" text-anchor=\"middle\">days</text>\n"
      << "<text x=\"18\" y=\"" << coord(kTop + ph / 2) << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << coord(kTop + ph / 2) << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const char* color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-series=\""
        << escape(s.label) << "\" points=\"";
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      if (k) out << ' ';
      out << coord(px(static_cast<double>(k) * ts)) << ',' << coord(py(s.values[k]));
    }
    out << "\"/>\n";
    const double ly = kTop + 16 + 16 * static_cast<double>(i);
    out << "<line x1=\"" << coord(kLeft + pw - 110) << "\" y1=\"" << coord(ly - 4) << "\" x2=\""
        << coord(kLeft + pw - 90) << "\" y2=\"" << coord(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << coord(kLeft + pw - 84) << "\" y=\"" << coord(ly) << "\" font-size=\"12\">"
        << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<std::filesystem::path> emit_plots(const models::ModelSpec& model, const Trajectory& xi,
                                              const std::vector<double>& control,
                                              const std::filesystem::path& dir) {
  if (xi.length() == 0) throw std::invalid_argument("empty trajectory");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }
  const double ts = xi.ts();
  auto column = [&](const std::string& name) {
    auto c = xi.channel(name);
    return std::vector<double>(c.begin(), c.end());
  };

  const bool suqc = model.kind == models::ModelKind::kSuqcQuarantine;
  std::vector<Series> people;
  for (const std::string& c : model.compartments()) {
    if (c == "D") continue;
    people.push_back({c, column(c)});
  }
  const std::string cum = suqc ? "C" : "D";

  // The zero line stands in for a run without control.
  std::vector<double> u = control;
  if (u.empty()) u.assign(std::max<std::size_t>(xi.length() - 1, 1), 0.0);

  std::string control_title, control_unit;
  switch (model.kind) {
    case models::ModelKind::kSeirVaccination:
      control_title = "Vaccinated individuals per day";
      control_unit = "millions per day";
      break;
    case models::ModelKind::kSeirShield:
      control_title = "Shield immunity strength";
      control_unit = "chi (dimensionless)";
      break;
    case models::ModelKind::kSuqcQuarantine:
      control_title = "Quarantine rate";
      control_unit = "q (1/day)";
      break;
  }

  const std::vector<std::filesystem::path> files = {dir / "trajectory.csv", dir / "control.csv",
                                                    dir / "individuals.svg", dir / "control.svg",
                                                    dir / "cumulative.svg", dir / "per_day.svg"};
  write_file(files[0], xi.to_csv(model.channel_order()));
  write_file(files[1], control_csv(model.control_name(), ts, control));
  write_file(files[2], line_chart_svg("Number of individuals", "millions", ts, people));
  write_file(files[3], line_chart_svg(control_title, control_unit, ts, {{model.control_name(), u}}));
  write_file(files[4], line_chart_svg(suqc ? "Number of confirmed cases" : "Number of deaths", "millions", ts,
                                      {{cum, column(cum)}}));
  write_file(files[5], line_chart_svg(suqc ? "Confirmed cases per day" : "Number of deaths per day",
                                      "millions per day", ts, {{"d" + cum, column("d" + cum)}}));
  return files;
}

}  // namespace episynth::scenario
