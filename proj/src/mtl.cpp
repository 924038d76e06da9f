#include "episynth/mtl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace episynth::mtl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TimeInterval::TimeInterval(std::size_t lo_, std::size_t hi_) : lo(lo_), hi(hi_) {
  if (lo > hi) {
    throw std::invalid_argument("interval [" + std::to_string(lo) + "," + std::to_string(hi) +
                                "] has lo > hi");
  }
}

AtomicProposition::AtomicProposition(std::string channel_, Comparison op_, double threshold_)
    : channel(std::move(channel_)), op(op_), threshold(threshold_) {
  if (channel.empty()) throw std::invalid_argument("atomic proposition needs a channel");
  if (!std::isfinite(threshold)) throw std::invalid_argument("threshold must be finite");
}

bool AtomicProposition::holds(double value) const {
  return op == Comparison::kLessEqual ? value <= threshold : value >= threshold;
}

double AtomicProposition::margin(double value) const {
  return op == Comparison::kLessEqual ? threshold - value : value - threshold;
}

Formula Formula::truth() { return Formula(std::make_shared<const FormulaNode>(FormulaNode{True{}})); }
Formula Formula::atom(AtomicProposition ap) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Atom{std::move(ap)}}));
}
Formula Formula::negation(Formula arg) {
  return Formula(std::make_shared<const FormulaNode>(FormulaNode{Not{std::move(arg)}}));
}
Formula Formula::conjunction(Formula lhs, Formula rhs) {
  return Formula(
      std::make_shared<const FormulaNode>(FormulaNode{And{std::move(lhs), std::move(rhs)}}));
}
Formula Formula::disjunction(Formula lhs, Formula rhs) {
  return Formula(
      std::make_shared<const FormulaNode>(FormulaNode{Or{std::move(lhs), std::move(rhs)}}));
}
Formula Formula::until(TimeInterval interval, Formula lhs, Formula rhs) {
  return Formula(std::make_shared<const FormulaNode>(
      FormulaNode{Until{interval, std::move(lhs), std::move(rhs)}}));
}
Formula Formula::eventually(TimeInterval interval, Formula arg) {
  return Formula(
      std::make_shared<const FormulaNode>(FormulaNode{Eventually{interval, std::move(arg)}}));
}
Formula Formula::always(TimeInterval interval, Formula arg) {
  return Formula(
      std::make_shared<const FormulaNode>(FormulaNode{Always{interval, std::move(arg)}}));
}

bool Formula::operator==(const Formula& other) const {
  return node_ == other.node_ || node_->v == other.node_->v;
}

ParseError::ParseError(std::size_t position, const std::string& message)
    : std::runtime_error("at position " + std::to_string(position) + ": " + message),
      position_(position) {}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Parser {
 public:
  Parser(std::string_view text, const std::set<std::string>& known)
      : text_(text), known_(known) {}

  Formula parse() {
    Formula f = formula();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(pos_, msg); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  bool accept(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view tok) {
    if (!accept(tok)) fail("expected '" + std::string(tok) + "'");
  }

  // True when the next token is `letter` immediately followed (modulo
  // whitespace) by '['. This is how the temporal keyword U is told apart
  // from the channel U.
  bool at_temporal(char letter) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != letter) return false;
    std::size_t p = pos_ + 1;
    if (p < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[p])) || text_[p] == '_'))
      return false;
    while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p]))) ++p;
    return p < text_.size() && text_[p] == '[';
  }

  std::size_t index() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) {
      fail("malformed interval: bounds must be nonnegative integers");
    }
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("malformed interval: expected an integer");
    if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E')) {
      pos_ = start;
      fail("malformed interval: bounds must be integers");
    }
    return static_cast<std::size_t>(std::stoull(std::string(text_.substr(start, pos_ - start))));
  }

  TimeInterval interval() {
    expect("[");
    std::size_t open = pos_;
    std::size_t lo = index();
    expect(",");
    std::size_t hi = index();
    expect("]");
    if (lo > hi) {
      pos_ = open;
      fail("malformed interval: lo > hi");
    }
    return TimeInterval(lo, hi);
  }

  Formula formula() {
    Formula lhs = disj();
    if (at_temporal('U')) {
      ++pos_;
      TimeInterval iv = interval();
      Formula rhs = formula();
      return Formula::until(iv, lhs, rhs);
    }
    return lhs;
  }

  Formula disj() {
    Formula f = conj();
    while (accept("|")) f = Formula::disjunction(f, conj());
    return f;
  }

  Formula conj() {
    Formula f = unary();
    while (accept("&")) f = Formula::conjunction(f, unary());
    return f;
  }

  Formula unary() {
    if (at_end()) fail("unexpected end of formula");
    if (accept("!")) return Formula::negation(unary());
    if (at_temporal('G')) {
      ++pos_;
      TimeInterval iv = interval();
      return Formula::always(iv, unary());
    }
    if (at_temporal('F')) {
      ++pos_;
      TimeInterval iv = interval();
      return Formula::eventually(iv, unary());
    }
    if (accept("(")) {
      Formula f = formula();
      expect(")");
      return f;
    }
    return atom();
  }

  Formula atom() {
    skip_ws();
    std::size_t start = pos_;
    auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    if (pos_ >= text_.size() || !(std::isalpha(static_cast<unsigned char>(text_[pos_])) ||
                                  text_[pos_] == '_')) {
      fail("expected a channel name, 'TRUE', '!', 'G[', 'F[' or '('");
    }
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    std::string name(text_.substr(start, pos_ - start));
    if (name == "TRUE") return Formula::truth();
    if (!known_.empty() && known_.count(name) == 0) {
      pos_ = start;
      fail("unknown channel '" + name + "'");
    }
    Comparison op;
    if (accept("<=")) {
      op = Comparison::kLessEqual;
    } else if (accept(">=")) {
      op = Comparison::kGreaterEqual;
    } else {
      fail("expected '<=' or '>=' after channel '" + name + "'");
    }
    skip_ws();
    const char* begin = text_.data() + pos_;
    std::string rest(begin, text_.size() - pos_);
    char* end = nullptr;
    double value = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("expected a number");
    if (!std::isfinite(value)) fail("threshold must be finite");
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return Formula::atom(AtomicProposition(name, op, value));
  }

  std::string_view text_;
  const std::set<std::string>& known_;
  std::size_t pos_ = 0;
};

// Precedence levels used by the printer: larger binds tighter.
int precedence(const Formula& f) {
  return std::visit(Overloaded{
                        [](const Until&) { return 1; },
                        [](const Or&) { return 2; },
                        [](const And&) { return 3; },
                        [](const auto&) { return 4; },
                    },
                    f.node().v);
}

std::string interval_text(const TimeInterval& iv) {
  return "[" + std::to_string(iv.lo) + "," + std::to_string(iv.hi) + "]";
}

std::string wrap_if(const Formula& f, bool cond) {
  return cond ? "(" + to_string(f) + ")" : to_string(f);
}

// Operand of a prefix operator: anything but TRUE and prefix chains gets
// parentheses so that atoms read as `G[0,5](x <= 1)`.
std::string prefix_operand(const Formula& f) {
  bool bare = std::holds_alternative<True>(f.node().v) || std::holds_alternative<Not>(f.node().v) ||
              std::holds_alternative<Eventually>(f.node().v) ||
              std::holds_alternative<Always>(f.node().v);
  return wrap_if(f, !bare);
}

}  // namespace

Formula parse_formula(std::string_view text, const std::set<std::string>& known_channels) {
  return Parser(text, known_channels).parse();
}

std::string to_string(const Formula& f) {
  return std::visit(
      Overloaded{
          [](const True&) -> std::string { return "TRUE"; },
          [](const Atom& a) -> std::string {
            return a.ap.channel + (a.ap.op == Comparison::kLessEqual ? " <= " : " >= ") +
                   format_double(a.ap.threshold);
          },
          [](const Not& n) -> std::string { return "!" + prefix_operand(n.arg); },
          [](const And& n) -> std::string {
            return wrap_if(n.lhs, precedence(n.lhs) < 3) + " & " + wrap_if(n.rhs, precedence(n.rhs) <= 3);
          },
          [](const Or& n) -> std::string {
            return wrap_if(n.lhs, precedence(n.lhs) < 2) + " | " + wrap_if(n.rhs, precedence(n.rhs) <= 2);
          },
          [](const Until& n) -> std::string {
            return wrap_if(n.lhs, precedence(n.lhs) <= 1) + " U" + interval_text(n.interval) + " " +
                   wrap_if(n.rhs, precedence(n.rhs) < 1);
          },
          [](const Eventually& n) -> std::string {
            return "F" + interval_text(n.interval) + prefix_operand(n.arg);
          },
          [](const Always& n) -> std::string {
            return "G" + interval_text(n.interval) + prefix_operand(n.arg);
          },
      },
      f.node().v);
}

std::size_t horizon(const Formula& f) {
  return std::visit(Overloaded{
                        [](const True&) -> std::size_t { return 0; },
                        [](const Atom&) -> std::size_t { return 0; },
                        [](const Not& n) { return horizon(n.arg); },
                        [](const And& n) { return std::max(horizon(n.lhs), horizon(n.rhs)); },
                        [](const Or& n) { return std::max(horizon(n.lhs), horizon(n.rhs)); },
                        [](const Until& n) {
                          // lhs is read on [k, k + hi - 1] only.
                          std::size_t h = n.interval.hi + horizon(n.rhs);
                          if (n.interval.hi > 0) h = std::max(h, n.interval.hi - 1 + horizon(n.lhs));
                          return h;
                        },
                        [](const Eventually& n) { return n.interval.hi + horizon(n.arg); },
                        [](const Always& n) { return n.interval.hi + horizon(n.arg); },
                    },
                    f.node().v);
}

std::set<std::string> channels(const Formula& f) {
  std::set<std::string> out;
  auto rec = [&out](const auto& self, const Formula& g) -> void {
    std::visit(Overloaded{
                   [](const True&) {},
                   [&](const Atom& a) { out.insert(a.ap.channel); },
                   [&](const Not& n) { self(self, n.arg); },
                   [&](const And& n) { self(self, n.lhs), self(self, n.rhs); },
                   [&](const Or& n) { self(self, n.lhs), self(self, n.rhs); },
                   [&](const Until& n) { self(self, n.lhs), self(self, n.rhs); },
                   [&](const Eventually& n) { self(self, n.arg); },
                   [&](const Always& n) { self(self, n.arg); },
               },
               g.node().v);
  };
  rec(rec, f);
  return out;
}

std::size_t size(const Formula& f) {
  return std::visit(Overloaded{
                        [](const True&) -> std::size_t { return 1; },
                        [](const Atom&) -> std::size_t { return 1; },
                        [](const Not& n) { return 1 + size(n.arg); },
                        [](const And& n) { return 1 + size(n.lhs) + size(n.rhs); },
                        [](const Or& n) { return 1 + size(n.lhs) + size(n.rhs); },
                        [](const Until& n) { return 1 + size(n.lhs) + size(n.rhs); },
                        [](const Eventually& n) { return 1 + size(n.arg); },
                        [](const Always& n) { return 1 + size(n.arg); },
                    },
                    f.node().v);
}

// ---------------------------------------------------------------------------
// Exact semantics

namespace {

void check_length(const Formula& f, const Trajectory& xi, std::size_t k) {
  std::size_t h = horizon(f);
  if (xi.length() == 0 || k + h > xi.length() - 1) {
    throw EvaluationError("trajectory of length " + std::to_string(xi.length()) +
                          " is too short to evaluate at k=" + std::to_string(k) +
                          " a formula with horizon " + std::to_string(h));
  }
}

bool bool_at(const Formula& f, const Trajectory& xi, std::size_t k) {
  return std::visit(
      Overloaded{
          [](const True&) { return true; },
          [&](const Atom& a) { return a.ap.holds(xi.channel(a.ap.channel)[k]); },
          [&](const Not& n) { return !bool_at(n.arg, xi, k); },
          [&](const And& n) { return bool_at(n.lhs, xi, k) && bool_at(n.rhs, xi, k); },
          [&](const Or& n) { return bool_at(n.lhs, xi, k) || bool_at(n.rhs, xi, k); },
          [&](const Until& n) {
            // lhs must hold on [k, k') for the first k' where rhs holds;
            // scanning forward lets the prefix be checked incrementally.
            for (std::size_t kp = k; kp <= k + n.interval.hi; ++kp) {
              if (kp >= k + n.interval.lo && bool_at(n.rhs, xi, kp)) return true;
              if (kp == k + n.interval.hi || !bool_at(n.lhs, xi, kp)) return false;
            }
            return false;
          },
          [&](const Eventually& n) {
            for (std::size_t kp = k + n.interval.lo; kp <= k + n.interval.hi; ++kp) {
              if (bool_at(n.arg, xi, kp)) return true;
            }
            return false;
          },
          [&](const Always& n) {
            for (std::size_t kp = k + n.interval.lo; kp <= k + n.interval.hi; ++kp) {
              if (!bool_at(n.arg, xi, kp)) return false;
            }
            return true;
          },
      },
      f.node().v);
}

double rob_at(const Formula& f, const Trajectory& xi, std::size_t k) {
  return std::visit(
      Overloaded{
          [](const True&) { return kInf; },
          [&](const Atom& a) { return a.ap.margin(xi.channel(a.ap.channel)[k]); },
          [&](const Not& n) { return -rob_at(n.arg, xi, k); },
          [&](const And& n) { return std::min(rob_at(n.lhs, xi, k), rob_at(n.rhs, xi, k)); },
          [&](const Or& n) { return std::max(rob_at(n.lhs, xi, k), rob_at(n.rhs, xi, k)); },
          [&](const Until& n) {
            double best = -kInf;
            double prefix = kInf;  // min of lhs over [k, k')
            for (std::size_t kp = k; kp <= k + n.interval.hi; ++kp) {
              if (kp >= k + n.interval.lo) {
                best = std::max(best, std::min(rob_at(n.rhs, xi, kp), prefix));
              }
              if (kp < k + n.interval.hi) prefix = std::min(prefix, rob_at(n.lhs, xi, kp));
            }
            return best;
          },
          [&](const Eventually& n) {
            double best = -kInf;
            for (std::size_t kp = k + n.interval.lo; kp <= k + n.interval.hi; ++kp) {
              best = std::max(best, rob_at(n.arg, xi, kp));
            }
            return best;
          },
          [&](const Always& n) {
            double worst = kInf;
            for (std::size_t kp = k + n.interval.lo; kp <= k + n.interval.hi; ++kp) {
              worst = std::min(worst, rob_at(n.arg, xi, kp));
            }
            return worst;
          },
      },
      f.node().v);
}

// Mean-normalized soft minimum over the non-identity entries. When
// `weights` is given it receives d(result)/d(values[i]).
double soft_min_impl(const double* values, std::size_t n, double beta, double* weights) {
  double m = kInf;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i] != kInf) {
      m = std::min(m, values[i]);
      ++count;
    }
  }
  if (weights) std::fill(weights, weights + n, 0.0);
  if (count == 0) return kInf;
  if (!std::isfinite(m)) {
    if (weights) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i) hits += values[i] == m;
      for (std::size_t i = 0; i < n; ++i) weights[i] = values[i] == m ? 1.0 / hits : 0.0;
    }
    return m;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i] != kInf) sum += std::exp(-beta * (values[i] - m));
  }
  if (weights) {
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] = values[i] != kInf ? std::exp(-beta * (values[i] - m)) / sum : 0.0;
    }
  }
  return m - std::log(sum / static_cast<double>(count)) / beta;
}

double soft_max_impl(const double* values, std::size_t n, double beta, double* weights,
                     std::vector<double>& scratch) {
  scratch.assign(values, values + n);
  for (double& v : scratch) v = -v;
  return -soft_min_impl(scratch.data(), n, beta, weights);
}

}  // namespace

bool eval_bool(const Formula& f, const Trajectory& xi, std::size_t k) {
  check_length(f, xi, k);
  return bool_at(f, xi, k);
}

double eval_robustness(const Formula& f, const Trajectory& xi, std::size_t k) {
  check_length(f, xi, k);
  return rob_at(f, xi, k);
}

double soft_min(const std::vector<double>& values, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("soft_min needs beta > 0");
  return soft_min_impl(values.data(), values.size(), beta, nullptr);
}

double soft_max(const std::vector<double>& values, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("soft_max needs beta > 0");
  std::vector<double> scratch;
  return soft_max_impl(values.data(), values.size(), beta, nullptr, scratch);
}

double smooth_robustness(const Formula& f, const Trajectory& xi, std::size_t k, double beta) {
  return SmoothEvaluator(f).value(xi, k, beta);
}

double smooth_robustness_error_bound(const Formula& f, double beta) {
  auto term = [beta](std::size_t n) { return n > 1 ? std::log(static_cast<double>(n)) / beta : 0.0; };
  return std::visit(
      Overloaded{
          [](const True&) { return 0.0; },
          [](const Atom&) { return 0.0; },
          [&](const Not& n) { return smooth_robustness_error_bound(n.arg, beta); },
          [&](const And& n) {
            return term(2) + std::max(smooth_robustness_error_bound(n.lhs, beta),
                                      smooth_robustness_error_bound(n.rhs, beta));
          },
          [&](const Or& n) {
            return term(2) + std::max(smooth_robustness_error_bound(n.lhs, beta),
                                      smooth_robustness_error_bound(n.rhs, beta));
          },
          [&](const Until& n) {
            return term(n.interval.hi - n.interval.lo + 1) + term(n.interval.hi + 1) +
                   std::max(smooth_robustness_error_bound(n.lhs, beta),
                            smooth_robustness_error_bound(n.rhs, beta));
          },
          [&](const Eventually& n) {
            return term(n.interval.hi - n.interval.lo + 1) + smooth_robustness_error_bound(n.arg, beta);
          },
          [&](const Always& n) {
            return term(n.interval.hi - n.interval.lo + 1) + smooth_robustness_error_bound(n.arg, beta);
          },
      },
      f.node().v);
}

// ---------------------------------------------------------------------------
// Smooth evaluator

struct SmoothEvaluator::Tape {
  // Per node: signal over k in [0, L - horizon(node)).
  std::vector<std::vector<double>> signal;
  std::vector<double> buf;
  std::vector<double> inner;
  std::vector<double> w_outer;
  std::vector<double> w_inner;
  std::vector<double> scratch;
};

SmoothEvaluator::SmoothEvaluator(const Formula& f) {
  root_ = flatten(f);
  horizon_ = nodes_[static_cast<std::size_t>(root_)].horizon;
}

int SmoothEvaluator::flatten(const Formula& f) {
  Node node{};
  std::visit(Overloaded{
                 [&](const True&) { node.kind = Kind::kTrue; },
                 [&](const Atom& a) {
                   node.kind = Kind::kAtom;
                   node.ap = a.ap;
                 },
                 [&](const Not& n) {
                   node.kind = Kind::kNot;
                   node.lhs = flatten(n.arg);
                 },
                 [&](const And& n) {
                   node.kind = Kind::kAnd;
                   node.lhs = flatten(n.lhs);
                   node.rhs = flatten(n.rhs);
                 },
                 [&](const Or& n) {
                   node.kind = Kind::kOr;
                   node.lhs = flatten(n.lhs);
                   node.rhs = flatten(n.rhs);
                 },
                 [&](const Until& n) {
                   node.kind = Kind::kUntil;
                   node.interval = n.interval;
                   node.lhs = flatten(n.lhs);
                   node.rhs = flatten(n.rhs);
                 },
                 [&](const Eventually& n) {
                   node.kind = Kind::kEventually;
                   node.interval = n.interval;
                   node.lhs = flatten(n.arg);
                 },
                 [&](const Always& n) {
                   node.kind = Kind::kAlways;
                   node.interval = n.interval;
                   node.lhs = flatten(n.arg);
                 },
             },
             f.node().v);
  node.horizon = mtl::horizon(f);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size() - 1);
}

void SmoothEvaluator::forward(const Trajectory& xi, double beta, Tape& tape) const {
  const std::size_t L = xi.length();
  tape.signal.assign(nodes_.size(), {});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    if (nd.horizon + 1 > L) continue;
    const std::size_t len = L - nd.horizon;
    std::vector<double>& out = tape.signal[i];
    out.resize(len);
    const std::vector<double>* a = nd.lhs >= 0 ? &tape.signal[static_cast<std::size_t>(nd.lhs)] : nullptr;
    const std::vector<double>* b = nd.rhs >= 0 ? &tape.signal[static_cast<std::size_t>(nd.rhs)] : nullptr;
    switch (nd.kind) {
      case Kind::kTrue:
        std::fill(out.begin(), out.end(), kInf);
        break;
      case Kind::kAtom: {
        auto ch = xi.channel(nd.ap.channel);
        for (std::size_t k = 0; k < len; ++k) out[k] = nd.ap.margin(ch[k]);
        break;
      }
      case Kind::kNot:
        for (std::size_t k = 0; k < len; ++k) out[k] = -(*a)[k];
        break;
      case Kind::kAnd:
      case Kind::kOr:
        for (std::size_t k = 0; k < len; ++k) {
          double pair[2] = {(*a)[k], (*b)[k]};
          out[k] = nd.kind == Kind::kAnd ? soft_min_impl(pair, 2, beta, nullptr)
                                         : soft_max_impl(pair, 2, beta, nullptr, tape.scratch);
        }
        break;
      case Kind::kEventually:
      case Kind::kAlways: {
        const std::size_t width = nd.interval.hi - nd.interval.lo + 1;
        for (std::size_t k = 0; k < len; ++k) {
          const double* window = a->data() + k + nd.interval.lo;
          out[k] = nd.kind == Kind::kAlways ? soft_min_impl(window, width, beta, nullptr)
                                            : soft_max_impl(window, width, beta, nullptr, tape.scratch);
        }
        break;
      }
      case Kind::kUntil: {
        for (std::size_t k = 0; k < len; ++k) {
          tape.inner.clear();
          for (std::size_t kp = k + nd.interval.lo; kp <= k + nd.interval.hi; ++kp) {
            tape.buf.assign(1, (*b)[kp]);
            tape.buf.insert(tape.buf.end(), a->begin() + static_cast<std::ptrdiff_t>(k),
                            a->begin() + static_cast<std::ptrdiff_t>(kp));
            tape.inner.push_back(soft_min_impl(tape.buf.data(), tape.buf.size(), beta, nullptr));
          }
          out[k] = soft_max_impl(tape.inner.data(), tape.inner.size(), beta, nullptr, tape.scratch);
        }
        break;
      }
    }
  }
}

double SmoothEvaluator::value(const Trajectory& xi, std::size_t k, double beta) const {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth robustness needs beta > 0");
  if (xi.length() == 0 || k + horizon_ > xi.length() - 1) {
    throw EvaluationError("trajectory of length " + std::to_string(xi.length()) +
                          " is too short to evaluate at k=" + std::to_string(k) +
                          " a formula with horizon " + std::to_string(horizon_));
  }
  Tape tape;
  forward(xi, beta, tape);
  return tape.signal[static_cast<std::size_t>(root_)][k];
}

double SmoothEvaluator::value_and_gradient(const Trajectory& xi, std::size_t k, double beta,
                                           ChannelGradient& grad) const {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth robustness needs beta > 0");
  if (xi.length() == 0 || k + horizon_ > xi.length() - 1) {
    throw EvaluationError("trajectory of length " + std::to_string(xi.length()) +
                          " is too short to evaluate at k=" + std::to_string(k) +
                          " a formula with horizon " + std::to_string(horizon_));
  }
  Tape tape;
  forward(xi, beta, tape);

  grad.clear();
  const std::size_t L = xi.length();
  for (const Node& nd : nodes_) {
    if (nd.kind == Kind::kAtom) grad[nd.ap.channel].assign(L, 0.0);
  }

  std::vector<std::vector<double>> adj(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) adj[i].assign(tape.signal[i].size(), 0.0);
  adj[static_cast<std::size_t>(root_)][k] = 1.0;

  std::vector<double> w;
  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    const Node& nd = nodes_[idx];
    const std::vector<double>& g = adj[idx];
    const std::vector<double>* a = nd.lhs >= 0 ? &tape.signal[static_cast<std::size_t>(nd.lhs)] : nullptr;
    const std::vector<double>* b = nd.rhs >= 0 ? &tape.signal[static_cast<std::size_t>(nd.rhs)] : nullptr;
    std::vector<double>* ga = nd.lhs >= 0 ? &adj[static_cast<std::size_t>(nd.lhs)] : nullptr;
    std::vector<double>* gb = nd.rhs >= 0 ? &adj[static_cast<std::size_t>(nd.rhs)] : nullptr;
    for (std::size_t t = 0; t < g.size(); ++t) {
      const double gt = g[t];
      if (gt == 0.0) continue;
      switch (nd.kind) {
        case Kind::kTrue:
          break;
        case Kind::kAtom: {
          double sign = nd.ap.op == Comparison::kLessEqual ? -1.0 : 1.0;
          grad[nd.ap.channel][t] += sign * gt;
          break;
        }
        case Kind::kNot:
          (*ga)[t] -= gt;
          break;
        case Kind::kAnd:
        case Kind::kOr: {
          double pair[2] = {(*a)[t], (*b)[t]};
          double pw[2];
          if (nd.kind == Kind::kAnd) {
            soft_min_impl(pair, 2, beta, pw);
          } else {
            soft_max_impl(pair, 2, beta, pw, tape.scratch);
          }
          (*ga)[t] += gt * pw[0];
          (*gb)[t] += gt * pw[1];
          break;
        }
        case Kind::kEventually:
        case Kind::kAlways: {
          const std::size_t width = nd.interval.hi - nd.interval.lo + 1;
          const std::size_t base = t + nd.interval.lo;
          w.resize(width);
          if (nd.kind == Kind::kAlways) {
            soft_min_impl(a->data() + base, width, beta, w.data());
          } else {
            soft_max_impl(a->data() + base, width, beta, w.data(), tape.scratch);
          }
          for (std::size_t j = 0; j < width; ++j) (*ga)[base + j] += gt * w[j];
          break;
        }
        case Kind::kUntil: {
          tape.inner.clear();
          for (std::size_t kp = t + nd.interval.lo; kp <= t + nd.interval.hi; ++kp) {
            tape.buf.assign(1, (*b)[kp]);
            tape.buf.insert(tape.buf.end(), a->begin() + static_cast<std::ptrdiff_t>(t),
                            a->begin() + static_cast<std::ptrdiff_t>(kp));
            tape.inner.push_back(soft_min_impl(tape.buf.data(), tape.buf.size(), beta, nullptr));
          }
          tape.w_outer.resize(tape.inner.size());
          soft_max_impl(tape.inner.data(), tape.inner.size(), beta, tape.w_outer.data(), tape.scratch);
          std::size_t j = 0;
          for (std::size_t kp = t + nd.interval.lo; kp <= t + nd.interval.hi; ++kp, ++j) {
            const double gj = gt * tape.w_outer[j];
            if (gj == 0.0) continue;
            tape.buf.assign(1, (*b)[kp]);
            tape.buf.insert(tape.buf.end(), a->begin() + static_cast<std::ptrdiff_t>(t),
                            a->begin() + static_cast<std::ptrdiff_t>(kp));
            tape.w_inner.resize(tape.buf.size());
            soft_min_impl(tape.buf.data(), tape.buf.size(), beta, tape.w_inner.data());
            (*gb)[kp] += gj * tape.w_inner[0];
            for (std::size_t m = 1; m < tape.buf.size(); ++m) (*ga)[t + m - 1] += gj * tape.w_inner[m];
          }
          break;
        }
      }
    }
  }
  return tape.signal[static_cast<std::size_t>(root_)][k];
}

}  // namespace episynth::mtl
