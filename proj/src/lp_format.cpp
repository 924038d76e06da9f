#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "episynth/mip.hpp"

namespace episynth::mip {

namespace {

constexpr std::size_t kTermsPerLine = 8;

std::string num(double v) {
  if (v == 0.0) return "0";
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return format_double(v);
}

void write_terms(std::ostringstream& out, const std::vector<Term>& terms, const MipModel& m) {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i > 0 && i % kTermsPerLine == 0) out << "\n  ";
    const Term& t = terms[i];
    out << (t.coef < 0 ? " - " : " + ") << num(std::fabs(t.coef)) << ' ' << m.variables.at(t.var).name;
  }
}

const char* sense_text(Sense s) {
  switch (s) {
    case Sense::kLessEqual:
      return "<=";
    case Sense::kGreaterEqual:
      return ">=";
    case Sense::kEqual:
      return "=";
  }
  return "?";
}

}  // namespace

std::string export_lp(const MipModel& m) {
  if (!m.well_formed()) throw std::invalid_argument("malformed MIP model");
  std::ostringstream out;
  for (const auto& [key, value] : m.info) {
    if (key.find_first_of(":\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw std::invalid_argument("header entry cannot be written: " + key);
    }
    out << "\\ " << key << ": " << value << '\n';
  }
  out << "\\ big_m: " << num(m.big_m) << '\n';
  for (const McCormickPair& p : m.mccormick) {
    out << "\\ mccormick: " << m.variables[p.w].name << ' ' << m.variables[p.x].name << ' '
        << m.variables[p.y].name << ' ' << num(p.xl) << ' ' << num(p.xu) << ' ' << num(p.yl) << ' '
        << num(p.yu) << '\n';
  }

  out << "Minimize\n obj:";
  write_terms(out, m.objective_linear, m);
  if (!m.objective_quadratic.empty()) {
    out << " + [";
    for (std::size_t i = 0; i < m.objective_quadratic.size(); ++i) {
      if (i > 0 && i % kTermsPerLine == 0) out << "\n  ";
      const QuadTerm& q = m.objective_quadratic[i];
      out << (q.coef < 0 ? " - " : " + ") << num(std::fabs(q.coef)) << ' ' << m.variables[q.x].name;
      if (q.x == q.y) {
        out << " ^ 2";
      } else {
        out << " * " << m.variables[q.y].name;
      }
    }
    out << " ] / 2";
  }
  out << "\nSubject To\n";
  for (const Constraint& c : m.constraints) {
    if (c.terms.empty()) throw std::invalid_argument("constraint " + c.name + " has no terms");
    out << ' ' << c.name << ':';
    write_terms(out, c.terms, m);
    out << ' ' << sense_text(c.sense) << ' ' << num(c.rhs) << '\n';
  }
  out << "Bounds\n";
  for (const Variable& v : m.variables) {
    if (std::isinf(v.lower) && v.lower < 0 && std::isinf(v.upper) && v.upper > 0) {
      out << ' ' << v.name << " free\n";
    } else {
      out << ' ' << num(v.lower) << " <= " << v.name << " <= " << num(v.upper) << '\n';
    }
  }
  bool any_binary = false;
  for (const Variable& v : m.variables) {
    if (v.type != VarType::kBinary) continue;
    if (!any_binary) out << "Binaries\n";
    any_binary = true;
    out << ' ' << v.name << '\n';
  }
  out << "End\n";
  return out.str();
}

namespace {

enum class Tok { kName, kNumber, kSymbol, kEnd };

struct Token {
  Tok kind = Tok::kEnd;
  std::string text;
  double value = 0.0;
};

bool name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '#' || c == '$';
}

std::vector<Token> tokenize(const std::string& text, int line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("LP line " + std::to_string(line_no) + ": " + what);
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      std::size_t used = 0;
      const double v = std::stod(text.substr(i), &used);
      out.push_back({Tok::kNumber, text.substr(i, used), v});
      i += used;
      continue;
    }
    if (c == '<' || c == '>' || c == '=') {
      // <=, >=, =, with =< / => and bare < / > as synonyms.
      char op = c;
      std::size_t len = 1;
      if (i + 1 < text.size()) {
        const char d = text[i + 1];
        if (d == '=') {
          len = 2;
        } else if (c == '=' && (d == '<' || d == '>')) {
          op = d;
          len = 2;
        }
      }
      out.push_back({Tok::kSymbol, op == '=' ? "=" : std::string(1, op) + "=", 0.0});
      i += len;
      continue;
    }
    if (c == '+' || c == '-' || c == '[' || c == ']' || c == '^' || c == '*' || c == '/' || c == ':') {
      out.push_back({Tok::kSymbol, std::string(1, c), 0.0});
      ++i;
      continue;
    }
    if (name_char(c)) {
      std::size_t j = i;
      while (j < text.size() && name_char(text[j])) ++j;
      std::string word = text.substr(i, j - i);
      std::string lower = word;
      for (char& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (lower == "inf" || lower == "infinity") {
        out.push_back({Tok::kNumber, word, kInfinity});
      } else {
        out.push_back({Tok::kName, word, 0.0});
      }
      i = j;
      continue;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
  return out;
}

class Parser {
 public:
  Parser(std::vector<Token> toks, std::string where) : toks_(std::move(toks)), where_(std::move(where)) {}

  bool done() const { return pos_ >= toks_.size(); }
  const Token& peek(std::size_t ahead = 0) const {
    static const Token end;
    return pos_ + ahead < toks_.size() ? toks_[pos_ + ahead] : end;
  }
  Token next() {
    if (done()) fail("unexpected end of section");
    return toks_[pos_++];
  }
  bool accept(const std::string& sym) {
    if (peek().kind == Tok::kSymbol && peek().text == sym) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(const std::string& sym) {
    if (!accept(sym)) fail("expected '" + sym + "'");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("LP " + where_ + ": " + what + " near token " + std::to_string(pos_));
  }

  // Optional sign, then a number (inf allowed).
  double signed_number() {
    double s = 1.0;
    while (peek().kind == Tok::kSymbol && (peek().text == "+" || peek().text == "-")) {
      if (next().text == "-") s = -s;
    }
    const Token t = next();
    if (t.kind != Tok::kNumber) fail("expected a number");
    return s * t.value;
  }

  bool at_sense() const {
    return peek().kind == Tok::kSymbol && (peek().text == "<=" || peek().text == ">=" || peek().text == "=");
  }

  // Linear terms, optionally followed by a bracketed quadratic block.
  template <class Resolve>
  void expression(std::vector<Term>& linear, std::vector<QuadTerm>* quad, Resolve&& resolve) {
    while (!done() && !at_sense()) {
      double s = 1.0;
      while (peek().kind == Tok::kSymbol && (peek().text == "+" || peek().text == "-")) {
        if (next().text == "-") s = -s;
      }
      if (accept("[")) {
        if (!quad) fail("quadratic block outside the objective");
        quadratic(*quad, resolve);
        continue;
      }
      double coef = 1.0;
      if (peek().kind == Tok::kNumber) coef = next().value;
      if (peek().kind != Tok::kName) {
        // A bare constant such as the `0` of an empty objective.
        if (coef == 0.0) continue;
        fail("expected a variable");
      }
      const int v = resolve(next().text);
      if (coef != 0.0) linear.push_back({v, s * coef});
    }
  }

  template <class Resolve>
  void quadratic(std::vector<QuadTerm>& quad, Resolve&& resolve) {
    while (!accept("]")) {
      double s = 1.0;
      while (peek().kind == Tok::kSymbol && (peek().text == "+" || peek().text == "-")) {
        if (next().text == "-") s = -s;
      }
      double coef = 1.0;
      if (peek().kind == Tok::kNumber) coef = next().value;
      const Token a = next();
      if (a.kind != Tok::kName) fail("expected a variable in quadratic block");
      const int x = resolve(a.text);
      int y = x;
      if (accept("^")) {
        const Token two = next();
        if (two.kind != Tok::kNumber || two.value != 2.0) fail("only squares are supported");
      } else {
        expect("*");
        const Token b = next();
        if (b.kind != Tok::kName) fail("expected a variable after '*'");
        y = resolve(b.text);
      }
      quad.push_back({x, y, s * coef});
    }
    expect("/");
    const Token two = next();
    if (two.kind != Tok::kNumber || two.value != 2.0) fail("quadratic block must be divided by 2");
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::string where_;
};

struct Section {
  std::string name;
  std::vector<std::pair<int, std::string>> lines;
};

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<Token> section_tokens(const Section& s) {
  std::vector<Token> all;
  for (const auto& [no, text] : s.lines) {
    auto t = tokenize(text, no);
    all.insert(all.end(), t.begin(), t.end());
  }
  return all;
}

}  // namespace

MipModel import_lp(const std::string& text) {
  MipModel m;
  std::vector<Section> sections;
  std::vector<std::tuple<std::string, std::string, std::string, double, double, double, double>> mc;
  bool ended = false;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '\\') {
      const std::string body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(body.substr(0, colon));
      const std::string value = body.size() > colon + 1 && body[colon + 1] == ' ' ? body.substr(colon + 2)
                                                                                 : body.substr(colon + 1);
      if (key == "big_m") {
        m.big_m = std::stod(value);
      } else if (key == "mccormick") {
        std::istringstream ms(value);
        std::string w, x, y, xl, xu, yl, yu;
        if (!(ms >> w >> x >> y >> xl >> xu >> yl >> yu)) {
          throw std::invalid_argument("LP line " + std::to_string(line_no) + ": bad mccormick header");
        }
        mc.emplace_back(w, x, y, std::stod(xl), std::stod(xu), std::stod(yl), std::stod(yu));
      } else if (sections.empty()) {
        m.info.emplace_back(key, value);
      }
      continue;
    }
    const std::string head = lowercase(line);
    if (head == "minimize" || head == "minimise" || head == "min") {
      sections.push_back({"objective", {}});
    } else if (head == "subject to" || head == "such that" || head == "st" || head == "s.t.") {
      sections.push_back({"constraints", {}});
    } else if (head == "bounds") {
      sections.push_back({"bounds", {}});
    } else if (head == "binaries" || head == "binary" || head == "bin") {
      sections.push_back({"binaries", {}});
    } else if (head == "end") {
      ended = true;
      break;
    } else if (head == "maximize" || head == "maximise" || head == "max" || head == "generals" ||
               head == "general") {
      throw std::invalid_argument("LP line " + std::to_string(line_no) + ": unsupported section " + line);
    } else {
      if (sections.empty()) throw std::invalid_argument("LP line " + std::to_string(line_no) + ": text before Minimize");
      sections.back().lines.emplace_back(line_no, line);
    }
  }
  if (!ended) throw std::invalid_argument("LP text has no End line");

  // Bounds first so that variables keep their declaration order.
  for (const Section& s : sections) {
    if (s.name != "bounds") continue;
    for (const auto& [no, text] : s.lines) {
      Parser p(tokenize(text, no), "line " + std::to_string(no));
      if (p.peek().kind == Tok::kName && p.peek(1).kind == Tok::kName && lowercase(p.peek(1).text) == "free") {
        m.add_variable(p.next().text, -kInfinity, kInfinity);
        continue;
      }
      const double lo = p.signed_number();
      p.expect("<=");
      const Token name = p.next();
      if (name.kind != Tok::kName) p.fail("expected a variable");
      p.expect("<=");
      const double hi = p.signed_number();
      if (!p.done()) p.fail("trailing tokens");
      if (const int id = m.find(name.text); id >= 0) {
        m.variables[id].lower = lo;
        m.variables[id].upper = hi;
      } else {
        m.add_variable(name.text, lo, hi);
      }
    }
  }
  auto resolve = [&m](const std::string& name) {
    const int id = m.find(name);
    return id >= 0 ? id : m.add_variable(name, 0.0, kInfinity);
  };

  for (const Section& s : sections) {
    if (s.name == "objective") {
      Parser p(section_tokens(s), "objective");
      if (p.peek().kind == Tok::kName && p.peek(1).kind == Tok::kSymbol && p.peek(1).text == ":") {
        p.next();
        p.next();
      }
      p.expression(m.objective_linear, &m.objective_quadratic, resolve);
      if (!p.done()) p.fail("unexpected comparison in objective");
    } else if (s.name == "constraints") {
      Parser p(section_tokens(s), "constraints");
      while (!p.done()) {
        Constraint c;
        const Token name = p.next();
        if (name.kind != Tok::kName) p.fail("expected a constraint name");
        p.expect(":");
        c.name = name.text;
        p.expression(c.terms, nullptr, resolve);
        const Token sense = p.next();
        c.sense = sense.text == "<=" ? Sense::kLessEqual : sense.text == ">=" ? Sense::kGreaterEqual : Sense::kEqual;
        c.rhs = p.signed_number();
        if (c.rhs == 0.0) c.rhs = 0.0;
        m.constraints.push_back(std::move(c));
      }
    } else if (s.name == "binaries") {
      Parser p(section_tokens(s), "binaries");
      while (!p.done()) {
        const Token name = p.next();
        if (name.kind != Tok::kName) p.fail("expected a variable");
        const int id = m.find(name.text);
        if (id < 0) {
          m.add_variable(name.text, 0.0, 1.0, VarType::kBinary);
        } else {
          m.variables[id].type = VarType::kBinary;
        }
      }
    }
  }
  for (const auto& [w, x, y, xl, xu, yl, yu] : mc) {
    m.mccormick.push_back({m.var(w), m.var(x), m.var(y), xl, xu, yl, yu});
  }
  return m;
}

}  // namespace episynth::mip
