#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "episynth/trajectory.hpp"

namespace episynth::mtl {

// Closed interval of time-index offsets [lo, hi].
struct TimeInterval {
  std::size_t lo = 0;
  std::size_t hi = 0;

  TimeInterval() = default;
  TimeInterval(std::size_t lo, std::size_t hi);
  bool operator==(const TimeInterval&) const = default;
};

enum class Comparison { kLessEqual, kGreaterEqual };

// Half-space predicate on a single channel: channel <= threshold or
// channel >= threshold.
struct AtomicProposition {
  std::string channel;
  Comparison op = Comparison::kLessEqual;
  double threshold = 0.0;

  AtomicProposition() = default;
  AtomicProposition(std::string channel, Comparison op, double threshold);
  bool holds(double value) const;
  // Signed distance to the boundary, positive inside.
  double margin(double value) const;
  bool operator==(const AtomicProposition&) const = default;
};

struct FormulaNode;

// Immutable MTL formula. Copies share structure.
class Formula {
 public:
  static Formula truth();
  static Formula atom(AtomicProposition ap);
  static Formula negation(Formula arg);
  static Formula conjunction(Formula lhs, Formula rhs);
  static Formula disjunction(Formula lhs, Formula rhs);
  static Formula until(TimeInterval interval, Formula lhs, Formula rhs);
  static Formula eventually(TimeInterval interval, Formula arg);
  static Formula always(TimeInterval interval, Formula arg);

  const FormulaNode& node() const { return *node_; }
  bool operator==(const Formula& other) const;

 private:
  explicit Formula(std::shared_ptr<const FormulaNode> node) : node_(std::move(node)) {}
  std::shared_ptr<const FormulaNode> node_;
};

struct True {
  bool operator==(const True&) const = default;
};
struct Atom {
  AtomicProposition ap;
  bool operator==(const Atom&) const = default;
};
struct Not {
  Formula arg;
  bool operator==(const Not&) const = default;
};
struct And {
  Formula lhs, rhs;
  bool operator==(const And&) const = default;
};
struct Or {
  Formula lhs, rhs;
  bool operator==(const Or&) const = default;
};
struct Until {
  TimeInterval interval;
  Formula lhs, rhs;
  bool operator==(const Until&) const = default;
};
struct Eventually {
  TimeInterval interval;
  Formula arg;
  bool operator==(const Eventually&) const = default;
};
struct Always {
  TimeInterval interval;
  Formula arg;
  bool operator==(const Always&) const = default;
};

struct FormulaNode {
  std::variant<True, Atom, Not, And, Or, Until, Eventually, Always> v;
};

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t position, const std::string& message);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Raised when a formula reads past the end of a trajectory.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grammar (whitespace-insensitive):
//   formula := disj [ "U[" int "," int "]" formula ]
//   disj    := conj { "|" conj }
//   conj    := unary { "&" unary }
//   unary   := "!" unary | "G[" int "," int "]" unary
//            | "F[" int "," int "]" unary | "(" formula ")" | "TRUE" | atom
//   atom    := ident ("<=" | ">=") number
// An empty known_channels set disables the channel check.
Formula parse_formula(std::string_view text, const std::set<std::string>& known_channels = {});

// Canonical text; parse_formula(to_string(f)) == f.
std::string to_string(const Formula& f);

// Largest time index read when evaluating at k = 0.
std::size_t horizon(const Formula& f);

// Channels referenced by atoms.
std::set<std::string> channels(const Formula& f);

// Number of nodes.
std::size_t size(const Formula& f);

bool eval_bool(const Formula& f, const Trajectory& xi, std::size_t k);

// Space robustness. TRUE has robustness +infinity.
double eval_robustness(const Formula& f, const Trajectory& xi, std::size_t k);

// Mean-normalized log-sum-exp relaxations at temperature beta:
//   soft_min(a) = -ln(mean(exp(-beta * a))) / beta
// evaluated relative to the extremum, so soft_min(a, a) == a exactly and
//   min(a) <= soft_min(a) <= min(a) + ln(n)/beta
//   max(a) - ln(n)/beta <= soft_max(a) <= max(a)
// Both approach the exact extremum monotonically as beta grows. Entries
// equal to the identity (+inf for min, -inf for max) are skipped and do not
// count toward n.
double soft_min(const std::vector<double>& values, double beta);
double soft_max(const std::vector<double>& values, double beta);

// Same recursion as eval_robustness with min/max replaced by soft_min and
// soft_max. Until flattens each disjunct into one soft_min over
// {rho(rhs, k')} and {rho(lhs, k'') : k <= k'' < k'}.
double smooth_robustness(const Formula& f, const Trajectory& xi, std::size_t k, double beta);

// Upper bound on |smooth_robustness - eval_robustness| at any index: each
// n-ary soft node adds ln(n)/beta to the worst child bound, so the error
// accumulates along root-to-leaf paths.
double smooth_robustness_error_bound(const Formula& f, double beta);

// d(rho)/d(channel[i]) for every referenced channel.
using ChannelGradient = std::map<std::string, std::vector<double>>;

// Formula flattened into arrays for repeated smooth evaluation with
// reverse-mode gradients. Immutable after construction.
class SmoothEvaluator {
 public:
  explicit SmoothEvaluator(const Formula& f);

  double value(const Trajectory& xi, std::size_t k, double beta) const;
  // Fills `grad` (overwriting) with the sensitivity of the smooth
  // robustness to each channel sample.
  double value_and_gradient(const Trajectory& xi, std::size_t k, double beta,
                            ChannelGradient& grad) const;

  std::size_t horizon() const { return horizon_; }

 private:
  enum class Kind { kTrue, kAtom, kNot, kAnd, kOr, kUntil, kEventually, kAlways };
  struct Node {
    Kind kind;
    AtomicProposition ap;
    TimeInterval interval;
    int lhs = -1;
    int rhs = -1;
    std::size_t horizon = 0;
  };
  struct Tape;

  int flatten(const Formula& f);
  void forward(const Trajectory& xi, double beta, Tape& tape) const;

  std::vector<Node> nodes_;  // children precede parents
  int root_ = -1;
  std::size_t horizon_ = 0;
};

}  // namespace episynth::mtl
