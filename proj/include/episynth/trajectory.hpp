#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace episynth {

// Uniformly sampled multi-channel time series. Values are in millions of
// individuals; sample k sits at t = k * ts days.
class Trajectory {
 public:
  explicit Trajectory(double ts = 1.0, std::optional<std::string> t0_label = {});

  // Adds or replaces a channel. All channels must share one length.
  void set_channel(const std::string& name, std::vector<double> values);

  bool has_channel(const std::string& name) const;
  std::span<const double> channel(const std::string& name) const;
  std::vector<std::string> channel_names() const;

  std::size_t length() const { return length_; }
  double ts() const { return ts_; }
  double time_of(std::size_t k) const { return static_cast<double>(k) * ts_; }
  const std::optional<std::string>& t0_label() const { return t0_label_; }

  // CSV with header `k,t_days,<channels...>`; channel order is `order` when
  // given, otherwise the lexicographic channel order.
  std::string to_csv(const std::vector<std::string>& order = {}) const;

 private:
  double ts_;
  std::optional<std::string> t0_label_;
  std::size_t length_ = 0;
  std::map<std::string, std::vector<double>> channels_;
};

// Shortest decimal form that parses back to the same double (17 significant
// digits at most).
std::string format_double(double v);

}  // namespace episynth
