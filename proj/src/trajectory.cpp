#include "episynth/trajectory.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace episynth {
namespace {

std::string format_csv_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Trajectory::Trajectory(double ts, std::optional<std::string> t0_label)
    : ts_(ts), t0_label_(std::move(t0_label)) {
  if (!(ts > 0.0) || !std::isfinite(ts)) {
    throw std::invalid_argument("trajectory sampling period must be positive");
  }
}

void Trajectory::set_channel(const std::string& name, std::vector<double> values) {
  if (name.empty()) throw std::invalid_argument("empty channel name");
  if (values.empty()) throw std::invalid_argument("channel '" + name + "' has no samples");
  bool replacing_only = channels_.size() == 1 && channels_.count(name) == 1;
  if (!channels_.empty() && !replacing_only && values.size() != length_) {
    throw std::invalid_argument("channel '" + name + "' has length " +
                                std::to_string(values.size()) + ", expected " +
                                std::to_string(length_));
  }
  length_ = values.size();
  channels_[name] = std::move(values);
}

bool Trajectory::has_channel(const std::string& name) const {
  return channels_.count(name) != 0;
}

std::span<const double> Trajectory::channel(const std::string& name) const {
  auto it = channels_.find(name);
  if (it == channels_.end()) throw std::out_of_range("unknown channel '" + name + "'");
  return it->second;
}

std::vector<std::string> Trajectory::channel_names() const {
  std::vector<std::string> names;
  names.reserve(channels_.size());
  for (const auto& [name, values] : channels_) names.push_back(name);
  return names;
}

std::string Trajectory::to_csv(const std::vector<std::string>& order) const {
  std::vector<std::string> cols = order.empty() ? channel_names() : order;
  std::ostringstream out;
  out << "k,t_days";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  std::vector<std::span<const double>> data;
  for (const auto& c : cols) data.push_back(channel(c));
  for (std::size_t k = 0; k < length_; ++k) {
    out << k << ',' << format_csv_value(time_of(k));
    for (const auto& d : data) out << ',' << format_csv_value(d[k]);
    out << '\n';
  }
  return out.str();
}

std::string format_double(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, res.ptr);
}

}  // namespace episynth
