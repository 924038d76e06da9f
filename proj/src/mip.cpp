#include "episynth/mip.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace episynth::mip {

LinExpr LinExpr::variable(int v, double coef) {
  LinExpr e;
  e.coefs[v] = coef;
  return e;
}

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  for (const auto& [v, c] : o.coefs) coefs[v] += c;
  constant += o.constant;
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
  for (const auto& [v, c] : o.coefs) coefs[v] -= c;
  constant -= o.constant;
  return *this;
}

LinExpr& LinExpr::operator*=(double s) {
  for (auto& [v, c] : coefs) c *= s;
  constant *= s;
  return *this;
}

bool LinExpr::is_constant() const {
  return std::all_of(coefs.begin(), coefs.end(), [](const auto& kv) { return kv.second == 0.0; });
}

LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
LinExpr operator*(double s, LinExpr a) { return a *= s; }

int MipModel::add_variable(const std::string& name, double lower, double upper, VarType type) {
  if (name.empty()) throw std::invalid_argument("empty variable name");
  if (index_.count(name)) throw std::invalid_argument("duplicate variable " + name);
  if (!(lower <= upper)) throw std::invalid_argument("empty bounds for " + name);
  const int id = static_cast<int>(variables.size());
  variables.push_back({name, lower, upper, type});
  index_[name] = id;
  return id;
}

int MipModel::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int MipModel::var(const std::string& name) const {
  const int id = find(name);
  if (id < 0) throw std::out_of_range("unknown variable " + name);
  return id;
}

void MipModel::add_constraint(const std::string& name, const LinExpr& expr, Sense sense) {
  Constraint c;
  c.name = name;
  c.sense = sense;
  c.rhs = expr.constant == 0.0 ? 0.0 : -expr.constant;
  for (const auto& [v, coef] : expr.coefs) {
    if (coef != 0.0) c.terms.push_back({v, coef});
  }
  constraints.push_back(std::move(c));
}

int MipModel::add_mccormick(const std::string& w_name, int x, int y) {
  const Variable& vx = variables.at(x);
  const Variable& vy = variables.at(y);
  const double xl = vx.lower, xu = vx.upper, yl = vy.lower, yu = vy.upper;
  if (!std::isfinite(xl) || !std::isfinite(xu) || !std::isfinite(yl) || !std::isfinite(yu)) {
    throw std::invalid_argument("McCormick envelope needs finite bounds for " + w_name);
  }
  const double corners[] = {xl * yl, xl * yu, xu * yl, xu * yu};
  const int w = add_variable(w_name, *std::min_element(corners, corners + 4),
                             *std::max_element(corners, corners + 4));
  const LinExpr W = LinExpr::variable(w), X = LinExpr::variable(x), Y = LinExpr::variable(y);
  // w >= xl y + x yl - xl yl, w >= xu y + x yu - xu yu
  add_constraint("mc1_" + w_name, W - xl * Y - yl * X + LinExpr(xl * yl), Sense::kGreaterEqual);
  add_constraint("mc2_" + w_name, W - xu * Y - yu * X + LinExpr(xu * yu), Sense::kGreaterEqual);
  // w <= xu y + x yl - xu yl, w <= xl y + x yu - xl yu
  add_constraint("mc3_" + w_name, W - xu * Y - yl * X + LinExpr(xu * yl), Sense::kLessEqual);
  add_constraint("mc4_" + w_name, W - xl * Y - yu * X + LinExpr(xl * yu), Sense::kLessEqual);
  mccormick.push_back({w, x, y, xl, xu, yl, yu});
  return w;
}

std::size_t MipModel::binary_count() const {
  return static_cast<std::size_t>(std::count_if(variables.begin(), variables.end(), [](const Variable& v) {
    return v.type == VarType::kBinary;
  }));
}

std::size_t MipModel::binary_count_for_node(int node) const {
  const std::string prefix = "b_" + std::to_string(node) + "_";
  std::size_t n = 0;
  for (const Variable& v : variables) {
    if (v.type == VarType::kBinary && v.name.rfind(prefix, 0) == 0) ++n;
  }
  return n;
}

bool MipModel::well_formed() const {
  const int n = static_cast<int>(variables.size());
  std::set<std::string> names;
  for (const Variable& v : variables) {
    if (!names.insert(v.name).second) return false;
  }
  auto ok = [n](int v) { return v >= 0 && v < n; };
  for (const Constraint& c : constraints) {
    for (const Term& t : c.terms) {
      if (!ok(t.var)) return false;
    }
  }
  for (const Term& t : objective_linear) {
    if (!ok(t.var)) return false;
  }
  for (const QuadTerm& q : objective_quadratic) {
    if (!ok(q.x) || !ok(q.y)) return false;
  }
  for (const McCormickPair& m : mccormick) {
    if (!ok(m.w) || !ok(m.x) || !ok(m.y)) return false;
  }
  return true;
}

bool MipModel::operator==(const MipModel& o) const {
  return info == o.info && variables == o.variables && constraints == o.constraints &&
         objective_linear == o.objective_linear && objective_quadratic == o.objective_quadratic &&
         mccormick == o.mccormick && big_m == o.big_m;
}

namespace {

struct FlatNode {
  const mtl::FormulaNode* node;
  std::vector<int> children;
};

void flatten(const mtl::Formula& f, std::vector<FlatNode>& out) {
  const int id = static_cast<int>(out.size());
  out.push_back({&f.node(), {}});
  std::vector<const mtl::Formula*> kids = std::visit(
      mtl::Overloaded{
          [](const mtl::True&) { return std::vector<const mtl::Formula*>{}; },
          [](const mtl::Atom&) { return std::vector<const mtl::Formula*>{}; },
          [](const mtl::Not& n) { return std::vector<const mtl::Formula*>{&n.arg}; },
          [](const mtl::And& n) { return std::vector<const mtl::Formula*>{&n.lhs, &n.rhs}; },
          [](const mtl::Or& n) { return std::vector<const mtl::Formula*>{&n.lhs, &n.rhs}; },
          [](const mtl::Until& n) { return std::vector<const mtl::Formula*>{&n.lhs, &n.rhs}; },
          [](const mtl::Eventually& n) { return std::vector<const mtl::Formula*>{&n.arg}; },
          [](const mtl::Always& n) { return std::vector<const mtl::Formula*>{&n.arg}; },
      },
      f.node().v);
  for (const mtl::Formula* k : kids) {
    const int child = static_cast<int>(out.size());
    out[id].children.push_back(child);
    flatten(*k, out);
  }
}

class SpecEncoder {
 public:
  SpecEncoder(MipModel& model, const mtl::Formula& spec, const ChannelExpr& channel, double big_m,
              double epsilon)
      : m_(model), channel_(channel), big_m_(big_m), eps_(epsilon) {
    flatten(spec, nodes_);
    rho_ = m_.find("rho");
    if (rho_ < 0) rho_ = m_.add_variable("rho", 0.0, big_m / 2.0);
  }

  void encode_root() { force(0, 0); }

 private:
  std::string tag(int n, std::size_t k) const {
    return std::to_string(n) + "_" + std::to_string(k);
  }

  void add(const std::string& name, const LinExpr& e, Sense s) {
    if (e.is_constant()) {
      const double v = e.constant;
      const bool holds = s == Sense::kLessEqual      ? v <= 0.0
                         : s == Sense::kGreaterEqual ? v >= 0.0
                                                     : v == 0.0;
      // rho >= 0, so this row makes the model infeasible as it should be.
      if (!holds) m_.add_constraint(name, LinExpr::variable(rho_) + LinExpr(1.0), Sense::kLessEqual);
      return;
    }
    m_.add_constraint(name, e, s);
  }

  // Atom holds with margin rho: x + rho <= c, or x - rho >= c.
  LinExpr tight(const mtl::AtomicProposition& ap, std::size_t k) const {
    const LinExpr x = channel_(ap.channel, k);
    return ap.op == mtl::Comparison::kLessEqual ? x + LinExpr::variable(rho_) - LinExpr(ap.threshold)
                                                : x - LinExpr::variable(rho_) - LinExpr(ap.threshold);
  }

  void force(int n, std::size_t k) {
    const FlatNode& fn = nodes_[n];
    if (std::holds_alternative<mtl::True>(fn.node->v)) return;
    if (const auto* a = std::get_if<mtl::Atom>(&fn.node->v)) {
      add("spec_" + tag(n, k), tight(a->ap, k),
          a->ap.op == mtl::Comparison::kLessEqual ? Sense::kLessEqual : Sense::kGreaterEqual);
      return;
    }
    if (std::holds_alternative<mtl::Not>(fn.node->v)) {
      if (const auto* a = std::get_if<mtl::Atom>(&nodes_[fn.children[0]].node->v)) {
        // Strict complement of the atom, shifted by rho.
        const LinExpr x = channel_(a->ap.channel, k);
        const LinExpr r = LinExpr::variable(rho_);
        if (a->ap.op == mtl::Comparison::kLessEqual) {
          add("spec_" + tag(n, k), x - r - LinExpr(a->ap.threshold + eps_), Sense::kGreaterEqual);
        } else {
          add("spec_" + tag(n, k), x + r - LinExpr(a->ap.threshold - eps_), Sense::kLessEqual);
        }
        return;
      }
    }
    if (std::holds_alternative<mtl::And>(fn.node->v)) {
      force(fn.children[0], k);
      force(fn.children[1], k);
      return;
    }
    if (const auto* g = std::get_if<mtl::Always>(&fn.node->v)) {
      for (std::size_t kp = k + g->interval.lo; kp <= k + g->interval.hi; ++kp) force(fn.children[0], kp);
      return;
    }
    add("root_" + tag(n, k), indicator(n, k) - LinExpr(1.0), Sense::kGreaterEqual);
  }

  int indicator_var(const std::string& name) { return m_.add_variable(name, 0.0, 1.0); }

  // z = AND(parts) or OR(parts), two-sided.
  void link_and(const std::string& name, int z, const std::vector<LinExpr>& parts) {
    const LinExpr Z = LinExpr::variable(z);
    LinExpr sum;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      add(name + "_u" + std::to_string(j), Z - parts[j], Sense::kLessEqual);
      sum += parts[j];
    }
    add(name + "_l", Z - sum + LinExpr(static_cast<double>(parts.size()) - 1.0), Sense::kGreaterEqual);
  }

  void link_or(const std::string& name, int z, const std::vector<LinExpr>& parts) {
    const LinExpr Z = LinExpr::variable(z);
    LinExpr sum;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      add(name + "_l" + std::to_string(j), Z - parts[j], Sense::kGreaterEqual);
      sum += parts[j];
    }
    add(name + "_u", Z - sum, Sense::kLessEqual);
  }

  LinExpr indicator(int n, std::size_t k) {
    const auto key = std::make_pair(n, k);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const LinExpr out = build_indicator(n, k);
    memo_[key] = out;
    return out;
  }

  LinExpr build_indicator(int n, std::size_t k) {
    const FlatNode& fn = nodes_[n];
    const std::string t = tag(n, k);
    return std::visit(
        mtl::Overloaded{
            [&](const mtl::True&) { return LinExpr(1.0); },
            [&](const mtl::Atom& a) {
              const int b = m_.add_variable("b_" + t, 0.0, 1.0, VarType::kBinary);
              const LinExpr B = LinExpr::variable(b);
              const LinExpr x = channel_(a.ap.channel, k);
              if (a.ap.op == mtl::Comparison::kLessEqual) {
                // b = 1: x + rho <= c. b = 0: x >= c + eps.
                add("at_" + t + "_t", tight(a.ap, k) + big_m_ * B - LinExpr(big_m_), Sense::kLessEqual);
                add("at_" + t + "_f", x + big_m_ * B - LinExpr(a.ap.threshold + eps_),
                    Sense::kGreaterEqual);
              } else {
                add("at_" + t + "_t", tight(a.ap, k) - big_m_ * B + LinExpr(big_m_),
                    Sense::kGreaterEqual);
                add("at_" + t + "_f", x - big_m_ * B - LinExpr(a.ap.threshold - eps_),
                    Sense::kLessEqual);
              }
              return B;
            },
            [&](const mtl::Not&) { return LinExpr(1.0) - indicator(fn.children[0], k); },
            [&](const mtl::And&) {
              const int z = indicator_var("z_" + t);
              link_and("and_" + t, z, {indicator(fn.children[0], k), indicator(fn.children[1], k)});
              return LinExpr::variable(z);
            },
            [&](const mtl::Or&) {
              const int z = indicator_var("z_" + t);
              link_or("or_" + t, z, {indicator(fn.children[0], k), indicator(fn.children[1], k)});
              return LinExpr::variable(z);
            },
            [&](const mtl::Eventually& e) {
              std::vector<LinExpr> parts;
              for (std::size_t kp = k + e.interval.lo; kp <= k + e.interval.hi; ++kp) {
                parts.push_back(indicator(fn.children[0], kp));
              }
              const int z = indicator_var("z_" + t);
              link_or("ev_" + t, z, parts);
              return LinExpr::variable(z);
            },
            [&](const mtl::Always& g) {
              std::vector<LinExpr> parts;
              for (std::size_t kp = k + g.interval.lo; kp <= k + g.interval.hi; ++kp) {
                parts.push_back(indicator(fn.children[0], kp));
              }
              const int z = indicator_var("z_" + t);
              link_and("alw_" + t, z, parts);
              return LinExpr::variable(z);
            },
            [&](const mtl::Until& u) {
              // OR over k' of AND(rhs(k'), lhs(k..k'-1)).
              std::vector<LinExpr> terms;
              for (std::size_t kp = k + u.interval.lo; kp <= k + u.interval.hi; ++kp) {
                std::vector<LinExpr> parts{indicator(fn.children[1], kp)};
                for (std::size_t j = k; j < kp; ++j) parts.push_back(indicator(fn.children[0], j));
                const std::string yt = t + "_" + std::to_string(kp);
                const int y = indicator_var("y_" + yt);
                link_and("unt_" + yt, y, parts);
                terms.push_back(LinExpr::variable(y));
              }
              const int z = indicator_var("z_" + t);
              link_or("unt_" + t, z, terms);
              return LinExpr::variable(z);
            },
        },
        fn.node->v);
  }

  MipModel& m_;
  const ChannelExpr& channel_;
  double big_m_;
  double eps_;
  int rho_ = -1;
  std::vector<FlatNode> nodes_;
  std::map<std::pair<int, std::size_t>, LinExpr> memo_;
};

std::string kname(const std::string& base, std::size_t k) { return base + "_" + std::to_string(k); }

}  // namespace

void encode_spec(MipModel& model, const mtl::Formula& spec, const ChannelExpr& channel,
                 double big_m, double epsilon) {
  if (!(big_m > 0.0)) throw std::invalid_argument("big-M must be positive");
  SpecEncoder enc(model, spec, channel, big_m, epsilon);
  enc.encode_root();
}

MipModel encode_mip(const synth::SynthesisProblem& problem, const EncodeOptions& options) {
  problem.validate();
  const models::ModelSpec& ms = problem.model;
  if (ms.kind == models::ModelKind::kSeirShield && !options.allow_approximate_shield) {
    throw UnsupportedError(
        "the shield model has a control-dependent denominator; exporting it requires consent to "
        "the n0-denominator approximation");
  }
  const std::size_t T = problem.horizon_t;
  const double P = ms.population();
  const double h = ms.ts();
  const double big_m = options.big_m > 0.0 ? options.big_m : 2.0 * P;

  MipModel m;
  m.big_m = big_m;
  m.info = {{"format", "episynth-mip 1"},
            {"model", models::to_string(ms.kind)},
            {"horizon", std::to_string(T)},
            {"norm", synth::to_string(problem.effort_norm)},
            {"spec", mtl::to_string(problem.spec)},
            {"transmission_denominator", "n0"},
            {"epsilon", format_double(options.epsilon)}};
  if (ms.kind == models::ModelKind::kSeirShield) {
    m.info.push_back({"approximate", "yes"});
  }

  auto v = [&](const std::string& base, std::size_t k) { return LinExpr::variable(m.var(kname(base, k))); };
  const std::vector<std::string> comps = ms.compartments();
  const std::vector<double> x0 = ms.initial_vector();
  const std::string cname = ms.control_name();

  for (std::size_t k = 0; k <= T; ++k) {
    for (const std::string& c : comps) m.add_variable(kname(c, k), 0.0, P);
  }
  const double umax = ms.kind == models::ModelKind::kSeirVaccination ? P : ms.control_max;
  if (!std::isfinite(umax)) throw std::invalid_argument("control bound must be finite for export");
  for (std::size_t k = 0; k < T; ++k) m.add_variable(kname(cname, k), 0.0, umax);
  for (std::size_t i = 0; i < comps.size(); ++i) {
    m.add_constraint("init_" + comps[i], v(comps[i], 0) - LinExpr(x0[i]), Sense::kEqual);
  }

  if (ms.kind == models::ModelKind::kSuqcQuarantine) {
    const models::SuqcParams& p = ms.suqc();
    const double c = p.confirmation_rate();
    for (std::size_t k = 0; k < T; ++k) {
      const std::string ks = std::to_string(k);
      const LinExpr w = LinExpr::variable(m.add_mccormick(kname("w_US", k), m.var(kname("U", k)), m.var(kname("S", k))));
      const LinExpr z = LinExpr::variable(m.add_mccormick(kname("w_qU", k), m.var(kname("q", k)), m.var(kname("U", k))));
      const double inf = h * p.beta0 / p.n0_hat;
      m.add_constraint("dyn_S_" + ks, v("S", k + 1) - v("S", k) + inf * w, Sense::kEqual);
      m.add_constraint("dyn_U_" + ks, v("U", k + 1) - v("U", k) - inf * w + h * z, Sense::kEqual);
      m.add_constraint("dyn_Q_" + ks, v("Q", k + 1) - (1.0 - h * c) * v("Q", k) - h * z, Sense::kEqual);
      m.add_constraint("dyn_C_" + ks, v("C", k + 1) - v("C", k) - (h * c) * v("Q", k), Sense::kEqual);
    }
  } else {
    const models::SeirParams& p = ms.seir();
    const bool shield = ms.kind == models::ModelKind::kSeirShield;
    for (std::size_t k = 0; k < T; ++k) {
      const std::string ks = std::to_string(k);
      const LinExpr w = LinExpr::variable(m.add_mccormick(kname("w_SI", k), m.var(kname("S", k)), m.var(kname("I", k))));
      const LinExpr living = v("I", k) + v("E", k) + v("S", k) + v("R", k);
      // Infection flux per day.
      LinExpr flux;
      if (shield) {
        // f (n0 + chi R) = beta w with p = chi R and m = f p.
        const int f = m.add_variable(kname("y_flux", k), 0.0, p.beta * P / 4.0);
        const int pr = m.add_mccormick(kname("p_chiR", k), m.var(kname("chi", k)), m.var(kname("R", k)));
        const int mf = m.add_mccormick(kname("m_fp", k), f, pr);
        m.add_constraint("flux_" + ks,
                         p.n0 * LinExpr::variable(f) + LinExpr::variable(mf) - p.beta * w, Sense::kEqual);
        flux = LinExpr::variable(f);
      } else {
        flux = (p.beta / p.n0) * w;
        m.add_constraint("cap_V_" + ks, v("V", k) - v("S", k), Sense::kLessEqual);
      }
      const LinExpr vac = shield ? LinExpr() : v("V", k);
      m.add_constraint("dyn_I_" + ks,
                       v("I", k + 1) - (1.0 - h * (p.gamma + p.mu + p.alpha)) * v("I", k) -
                           (h * p.epsilon) * v("E", k),
                       Sense::kEqual);
      m.add_constraint("dyn_E_" + ks,
                       v("E", k + 1) - (1.0 - h * (p.mu + p.epsilon)) * v("E", k) - h * flux, Sense::kEqual);
      m.add_constraint("dyn_S_" + ks,
                       v("S", k + 1) - v("S", k) - (h * p.lambda) * living + (h * p.mu) * v("S", k) +
                           h * flux + h * vac,
                       Sense::kEqual);
      m.add_constraint("dyn_R_" + ks,
                       v("R", k + 1) - v("R", k) - (h * p.gamma) * v("I", k) + (h * p.mu) * v("R", k) -
                           h * vac,
                       Sense::kEqual);
      m.add_constraint("dyn_D_" + ks,
                       v("D", k + 1) + v("I", k + 1) + v("E", k + 1) + v("S", k + 1) + v("R", k + 1) -
                           LinExpr(p.n0),
                       Sense::kEqual);
    }
  }

  const bool seir = ms.kind != models::ModelKind::kSuqcQuarantine;
  const std::string cum = seir ? "D" : "C";
  ChannelExpr channel = [&, seir, cum](const std::string& name, std::size_t k) -> LinExpr {
    if (name == "d" + cum) return k == 0 ? LinExpr() : v(cum, k) - v(cum, k - 1);
    if (name == "N") {
      return seir ? v("I", k) + v("E", k) + v("S", k) + v("R", k)
                  : v("S", k) + v("U", k) + v("Q", k) + v("C", k);
    }
    return v(name, k);
  };
  encode_spec(m, problem.spec, channel, big_m, options.epsilon);

  switch (problem.effort_norm) {
    case synth::EffortNorm::kSumOfSquares:
      for (std::size_t k = 0; k < T; ++k) {
        const int u = m.var(kname(cname, k));
        m.objective_quadratic.push_back({u, u, 2.0});
      }
      break;
    case synth::EffortNorm::kSum:
      for (std::size_t k = 0; k < T; ++k) m.objective_linear.push_back({m.var(kname(cname, k)), 1.0});
      break;
    case synth::EffortNorm::kSup: {
      const int t = m.add_variable("t_sup", 0.0, umax);
      for (std::size_t k = 0; k < T; ++k) {
        m.add_constraint("sup_" + std::to_string(k), v(cname, k) - LinExpr::variable(t), Sense::kLessEqual);
      }
      m.objective_linear.push_back({t, 1.0});
      break;
    }
  }
  return m;
}

std::map<std::string, double> parse_assignment(const std::string& text) {
  std::map<std::string, double> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    for (char& c : line) {
      if (c == '=' || c == '\t' || c == ',') c = ' ';
    }
    std::istringstream ls(line);
    std::string name, value, extra;
    if (!(ls >> name >> value) || (ls >> extra)) continue;
    if (name.empty() || !(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_')) continue;
    try {
      std::size_t pos = 0;
      const double x = std::stod(value, &pos);
      if (pos == value.size()) out[name] = x;
    } catch (const std::exception&) {
    }
  }
  return out;
}

std::vector<double> controls_from_assignment(const std::map<std::string, double>& values,
                                             const models::ModelSpec& model, std::size_t T) {
  std::vector<double> u(T);
  const std::string c = model.control_name();
  for (std::size_t k = 0; k < T; ++k) {
    auto it = values.find(kname(c, k));
    if (it == values.end()) throw std::invalid_argument("assignment has no value for " + kname(c, k));
    // Solvers report tiny bound violations; clamp to the feasible box.
    double x = std::max(0.0, it->second);
    if (model.kind != models::ModelKind::kSeirVaccination) x = std::min(x, model.control_max);
    u[k] = x;
  }
  return u;
}

}  // namespace episynth::mip
