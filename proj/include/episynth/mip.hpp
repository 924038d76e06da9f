#pragma once

#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "episynth/mtl.hpp"
#include "episynth/synth.hpp"

namespace episynth::mip {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class VarType { kContinuous, kBinary };

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInfinity;
  VarType type = VarType::kContinuous;
  bool operator==(const Variable&) const = default;
};

struct Term {
  int var = -1;
  double coef = 0.0;
  bool operator==(const Term&) const = default;
};

enum class Sense { kLessEqual, kGreaterEqual, kEqual };

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::kLessEqual;
  double rhs = 0.0;
  bool operator==(const Constraint&) const = default;
};

// Entry of the bracketed quadratic objective block; the objective gains
// coef/2 * x * y (x == y for squares).
struct QuadTerm {
  int x = -1;
  int y = -1;
  double coef = 0.0;
  bool operator==(const QuadTerm&) const = default;
};

// w = x * y relaxed by its McCormick envelope on [xl,xu] x [yl,yu].
struct McCormickPair {
  int w = -1;
  int x = -1;
  int y = -1;
  double xl = 0.0, xu = 0.0, yl = 0.0, yu = 0.0;
  bool operator==(const McCormickPair&) const = default;
};

// Affine expression over model variables.
struct LinExpr {
  std::map<int, double> coefs;
  double constant = 0.0;

  LinExpr() = default;
  LinExpr(double c) : constant(c) {}  // NOLINT: constants convert implicitly
  static LinExpr variable(int v, double coef = 1.0);
  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double s);
  // No nonzero variable coefficient.
  bool is_constant() const;
};
LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator*(double s, LinExpr a);

class MipModel {
 public:
  // Free-form `\ key: value` header lines.
  std::vector<std::pair<std::string, std::string>> info;
  std::vector<Variable> variables;
  std::vector<Constraint> constraints;
  std::vector<Term> objective_linear;
  std::vector<QuadTerm> objective_quadratic;
  std::vector<McCormickPair> mccormick;
  double big_m = 0.0;

  int add_variable(const std::string& name, double lower, double upper,
                   VarType type = VarType::kContinuous);
  // Index of a variable, or -1.
  int find(const std::string& name) const;
  int var(const std::string& name) const;

  // Adds `expr sense 0`, moving the constant to the right-hand side. Zero
  // coefficients are dropped.
  void add_constraint(const std::string& name, const LinExpr& expr, Sense sense);
  // Adds w = x * y with the four envelope inequalities.
  int add_mccormick(const std::string& w_name, int x, int y);

  std::size_t binary_count() const;
  // Binaries whose name starts with `b_<node>_`.
  std::size_t binary_count_for_node(int node) const;
  // Every term references a declared variable and names are unique.
  bool well_formed() const;

  bool operator==(const MipModel& other) const;

 private:
  std::map<std::string, int> index_;
};

class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EncodeOptions {
  // 0 selects 2 * population.
  double big_m = 0.0;
  // Strictness gap for the false side of an atom indicator.
  double epsilon = 1e-6;
  // Consent to export the shield model under the n0 denominator.
  bool allow_approximate_shield = false;
};

// Linear expression of channel `name` at time index k.
using ChannelExpr = std::function<LinExpr(const std::string& name, std::size_t k)>;

// Adds the MTL satisfaction constraints for `spec` at k = 0. Subformulas
// reachable from the root through conjunction and always only are imposed
// directly; everything else gets an indicator. Atom indicators are the only
// binaries (`b_<node>_<k>`); conjunction, disjunction and temporal
// indicators are continuous in [0, 1] (`z_<node>_<k>`, `y_<node>_<k>_<k'>`)
// and pinned to 0/1 by two-sided big-M links. Nodes are numbered in
// preorder from 0. A robustness slack `rho` >= 0 tightens true atoms.
void encode_spec(MipModel& model, const mtl::Formula& spec, const ChannelExpr& channel,
                 double big_m, double epsilon);

// Full encoding of a synthesis problem: dynamics as equalities with the n0
// transmission denominator, bilinear products through McCormick envelopes,
// the spec via encode_spec, and the effort norm as objective.
MipModel encode_mip(const synth::SynthesisProblem& problem, const EncodeOptions& options = {});

// CPLEX LP text. Deterministic for a given model.
std::string export_lp(const MipModel& model);
// Parses text produced by export_lp (and the common subset of the format).
MipModel import_lp(const std::string& text);

// Solver solution text: one `name value` or `name = value` per line; other
// lines are ignored.
std::map<std::string, double> parse_assignment(const std::string& text);
// Extracts V_k / chi_k / q_k, k = 0..T-1. Missing entries are errors.
std::vector<double> controls_from_assignment(const std::map<std::string, double>& values,
                                             const models::ModelSpec& model, std::size_t T);

}  // namespace episynth::mip
