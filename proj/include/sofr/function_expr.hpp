#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "sofr/errors.hpp"

namespace sofr {

inline constexpr std::size_t kMaxPolynomialDegree = 16;

/// The constant function 1.
struct Constant {
  friend bool operator==(const Constant&, const Constant&) = default;
};

/// cos(pi k t), k >= 1.
struct Cosine {
  int k;
  friend bool operator==(const Cosine&, const Cosine&) = default;
};

/// sin(pi k t), k >= 1.
struct Sine {
  int k;
  friend bool operator==(const Sine&, const Sine&) = default;
};

/// sum_j c_j t^j, coefficients in monomial order.
struct Polynomial {
  std::vector<double> coeffs;
  friend bool operator==(const Polynomial&, const Polynomial&) = default;
};

/// 1 on [a, b], 0 elsewhere, with -1 <= a < b <= 1.
struct Indicator {
  double a;
  double b;
  friend bool operator==(const Indicator&, const Indicator&) = default;
};

using FunctionAtom = std::variant<Constant, Cosine, Sine, Polynomial, Indicator>;

inline FunctionAtom make_cosine(int k) {
  if (k < 1) throw std::invalid_argument("Cosine(k) requires k >= 1");
  return Cosine{k};
}

inline FunctionAtom make_sine(int k) {
  if (k < 1) throw std::invalid_argument("Sine(k) requires k >= 1");
  return Sine{k};
}

inline FunctionAtom make_polynomial(std::vector<double> coeffs) {
  if (coeffs.empty()) coeffs.push_back(0.0);
  if (coeffs.size() > kMaxPolynomialDegree + 1)
    throw std::invalid_argument("Polynomial degree exceeds " + std::to_string(kMaxPolynomialDegree));
  return Polynomial{std::move(coeffs)};
}

inline FunctionAtom make_indicator(double a, double b) {
  if (!(a >= -1.0 && a < b && b <= 1.0))
    throw std::invalid_argument("Indicator(a,b) requires -1 <= a < b <= 1");
  return Indicator{a, b};
}

/// True for atoms whose pairwise L2 products are known in closed form
/// (the orthogonal trigonometric system {1, cos(pi k t), sin(pi k t)}).
inline bool is_trigonometric(const FunctionAtom& atom) {
  return std::holds_alternative<Constant>(atom) || std::holds_alternative<Cosine>(atom) ||
         std::holds_alternative<Sine>(atom);
}

inline double eval_atom(const FunctionAtom& atom, double t) {
  return std::visit(
      [t](const auto& a) -> double {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, Constant>) {
          return 1.0;
        } else if constexpr (std::is_same_v<A, Cosine>) {
          return std::cos(std::numbers::pi * a.k * t);
        } else if constexpr (std::is_same_v<A, Sine>) {
          return std::sin(std::numbers::pi * a.k * t);
        } else if constexpr (std::is_same_v<A, Polynomial>) {
          double v = 0.0;
          for (auto it = a.coeffs.rbegin(); it != a.coeffs.rend(); ++it) v = v * t + *it;
          return v;
        } else {
          return (t >= a.a && t <= a.b) ? 1.0 : 0.0;
        }
      },
      atom);
}

struct Term {
  double weight;
  FunctionAtom atom;
};

/// A function on T = [-1, 1] as a finite weighted sum of atoms.
///
/// Instances are values: arithmetic returns new expressions in canonical
/// form (like atoms merged, all polynomial terms folded into one, exact zeros
/// dropped). Equality of functions is never tested on the term list; compare
/// in L2 with an explicit tolerance instead.
class FunctionExpr {
 public:
  FunctionExpr() = default;
  explicit FunctionExpr(std::vector<Term> terms) : terms_(std::move(terms)) { canonicalize(); }
  FunctionExpr(double weight, FunctionAtom atom) : FunctionExpr(std::vector<Term>{{weight, std::move(atom)}}) {}

  static FunctionExpr zero() { return {}; }
  static FunctionExpr constant(double c) { return {c, Constant{}}; }
  static FunctionExpr cosine(int k, double w = 1.0) { return {w, make_cosine(k)}; }
  static FunctionExpr sine(int k, double w = 1.0) { return {w, make_sine(k)}; }
  static FunctionExpr polynomial(std::vector<double> c, double w = 1.0) {
    return {w, make_polynomial(std::move(c))};
  }
  static FunctionExpr indicator(double a, double b, double w = 1.0) { return {w, make_indicator(a, b)}; }

  const std::vector<Term>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }

  /// Value at t; t outside [-1, 1] is a contract violation.
  double operator()(double t) const {
    if (!(t >= -1.0 && t <= 1.0)) throw std::domain_error("FunctionExpr evaluated outside [-1, 1]");
    double v = 0.0;
    for (const auto& term : terms_) v += term.weight * eval_atom(term.atom, t);
    return v;
  }

  /// Discontinuities of the indicator atoms.
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (const auto& term : terms_)
      if (const auto* ind = std::get_if<Indicator>(&term.atom)) {
        out.push_back(ind->a);
        out.push_back(ind->b);
      }
    return out;
  }

  bool is_trigonometric() const {
    return std::all_of(terms_.begin(), terms_.end(), [](const Term& t) { return sofr::is_trigonometric(t.atom); });
  }

  FunctionExpr& operator+=(const FunctionExpr& o) {
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    canonicalize();
    return *this;
  }
  FunctionExpr& operator-=(const FunctionExpr& o) { return *this += (-1.0) * o; }
  FunctionExpr& operator*=(double s) {
    for (auto& t : terms_) t.weight *= s;
    canonicalize();
    return *this;
  }

  friend FunctionExpr operator+(FunctionExpr a, const FunctionExpr& b) { return a += b; }
  friend FunctionExpr operator-(FunctionExpr a, const FunctionExpr& b) { return a -= b; }
  friend FunctionExpr operator*(double s, FunctionExpr f) { return f *= s; }
  friend FunctionExpr operator*(FunctionExpr f, double s) { return f *= s; }
  friend FunctionExpr operator-(FunctionExpr f) { return f *= -1.0; }

 private:
  // Ordering key of an atom inside canonical form.
  static std::tuple<int, double, double> key(const FunctionAtom& a) {
    return std::visit(
        [](const auto& x) -> std::tuple<int, double, double> {
          using A = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<A, Constant>) return {0, 0.0, 0.0};
          else if constexpr (std::is_same_v<A, Polynomial>) return {1, 0.0, 0.0};
          else if constexpr (std::is_same_v<A, Cosine>) return {2, x.k, 0.0};
          else if constexpr (std::is_same_v<A, Sine>) return {3, x.k, 0.0};
          else return {4, x.a, x.b};
        },
        a);
  }

  void canonicalize() {
    std::vector<double> poly;
    bool has_poly = false;
    std::map<std::tuple<int, double, double>, double> weights;
    for (const auto& t : terms_) {
      if (const auto* p = std::get_if<Polynomial>(&t.atom)) {
        if (p->coeffs.size() > poly.size()) poly.resize(p->coeffs.size(), 0.0);
        for (std::size_t j = 0; j < p->coeffs.size(); ++j) poly[j] += t.weight * p->coeffs[j];
        has_poly = true;
      } else {
        weights[key(t.atom)] += t.weight;
      }
    }
    std::vector<Term> out;
    for (const auto& [k, w] : weights) {
      if (w == 0.0) continue;
      const auto [kind, p, q] = k;
      switch (kind) {
        case 0: out.push_back({w, Constant{}}); break;
        case 2: out.push_back({w, Cosine{static_cast<int>(p)}}); break;
        case 3: out.push_back({w, Sine{static_cast<int>(p)}}); break;
        default: out.push_back({w, Indicator{p, q}}); break;
      }
    }
    if (has_poly) {
      while (poly.size() > 1 && poly.back() == 0.0) poly.pop_back();
      if (!(poly.size() == 1 && poly[0] == 0.0)) {
        const auto pos = std::find_if(out.begin(), out.end(),
                                      [](const Term& t) { return !std::holds_alternative<Constant>(t.atom); });
        out.insert(pos, Term{1.0, Polynomial{std::move(poly)}});
      }
    }
    terms_ = std::move(out);
  }

  std::vector<Term> terms_;
};

/// sum_j coeffs[j] * fs[j].
inline FunctionExpr linear_combination(std::span<const double> coeffs, std::span<const FunctionExpr> fs) {
  if (coeffs.size() != fs.size()) throw std::invalid_argument("linear_combination: size mismatch");
  std::vector<Term> terms;
  for (std::size_t j = 0; j < fs.size(); ++j) {
    if (coeffs[j] == 0.0) continue;
    for (const auto& t : fs[j].terms()) terms.push_back({coeffs[j] * t.weight, t.atom});
  }
  return FunctionExpr(std::move(terms));
}

// ---------------------------------------------------------------------------
// Plain-text term list: `w*kind(args) + w*kind(args) - ...`
//   kinds: const(), cos(k), sin(k), poly(c0,c1,...), ind(a,b)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class TermParser {
 public:
  explicit TermParser(std::string_view s) : s_(s) {}

  FunctionExpr parse() {
    std::vector<Term> terms;
    skip_ws();
    if (at_end()) throw err("empty term list");
    bool first = true;
    while (!at_end()) {
      double sign = 1.0;
      if (!first) {
        if (peek() == '+') {
          ++pos_;
        } else if (peek() == '-') {
          ++pos_;
          sign = -1.0;
        } else {
          throw err("expected '+' or '-' between terms");
        }
        skip_ws();
      }
      terms.push_back(parse_term(sign));
      first = false;
      skip_ws();
    }
    return FunctionExpr(std::move(terms));
  }

 private:
  Term parse_term(double sign) {
    double weight = 1.0;
    if (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.' || peek() == '-' || peek() == '+') {
      weight = parse_number();
      skip_ws();
      if (peek() != '*') throw err("expected '*' after weight");
      ++pos_;
      skip_ws();
    }
    std::string name;
    while (!at_end() && std::isalpha(static_cast<unsigned char>(peek()))) name += s_[pos_++];
    skip_ws();
    if (peek() != '(') throw err("expected '(' after atom name '" + name + "'");
    ++pos_;
    std::vector<double> args;
    skip_ws();
    if (peek() != ')') {
      for (;;) {
        skip_ws();
        args.push_back(parse_number());
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        break;
      }
    }
    if (peek() != ')') throw err("expected ')'");
    ++pos_;
    return {sign * weight, make_atom(name, args)};
  }

  FunctionAtom make_atom(const std::string& name, const std::vector<double>& args) {
    auto need = [&](std::size_t n) {
      if (args.size() != n) throw err(name + "() takes " + std::to_string(n) + " argument(s)");
    };
    auto as_int = [&](double v) {
      if (v != std::floor(v)) throw err(name + "() needs an integer argument");
      return static_cast<int>(v);
    };
    try {
      if (name == "const") {
        need(0);
        return Constant{};
      }
      if (name == "cos") {
        need(1);
        return make_cosine(as_int(args[0]));
      }
      if (name == "sin") {
        need(1);
        return make_sine(as_int(args[0]));
      }
      if (name == "poly") {
        if (args.empty()) throw err("poly() needs at least one coefficient");
        return make_polynomial(args);
      }
      if (name == "ind") {
        need(2);
        return make_indicator(args[0], args[1]);
      }
    } catch (const std::invalid_argument& e) {
      throw err(e.what());
    }
    throw err("unknown atom kind '" + name + "'");
  }

  double parse_number() {
    const char* begin = s_.data() + pos_;
    const char* end = s_.data() + s_.size();
    // from_chars rejects a leading '+'
    if (begin != end && *begin == '+') ++begin;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc()) throw err("expected a number");
    pos_ = static_cast<std::size_t>(ptr - s_.data());
    return v;
  }

  char peek() const { return at_end() ? '\0' : s_[pos_]; }
  bool at_end() const { return pos_ >= s_.size(); }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  Error err(const std::string& msg) const {
    return Error(ErrorKind::ParseError, msg + " at offset " + std::to_string(pos_) + " in '" + std::string(s_) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string to_string(const FunctionAtom& atom) {
  using detail::format_double;
  return std::visit(
      [](const auto& a) -> std::string {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, Constant>) {
          return "const()";
        } else if constexpr (std::is_same_v<A, Cosine>) {
          return "cos(" + std::to_string(a.k) + ")";
        } else if constexpr (std::is_same_v<A, Sine>) {
          return "sin(" + std::to_string(a.k) + ")";
        } else if constexpr (std::is_same_v<A, Polynomial>) {
          std::string s = "poly(";
          for (std::size_t j = 0; j < a.coeffs.size(); ++j) s += (j ? "," : "") + format_double(a.coeffs[j]);
          return s + ")";
        } else {
          return "ind(" + format_double(a.a) + "," + format_double(a.b) + ")";
        }
      },
      atom);
}

/// Round-trippable text form; the zero function is written as `0*const()`.
inline std::string to_string(const FunctionExpr& f) {
  if (f.empty()) return "0*const()";
  std::string s;
  for (std::size_t i = 0; i < f.terms().size(); ++i) {
    const auto& t = f.terms()[i];
    if (i > 0) s += " + ";
    s += detail::format_double(t.weight) + "*" + to_string(t.atom);
  }
  return s;
}

inline FunctionExpr parse_function(std::string_view text) { return detail::TermParser(text).parse(); }

}  // namespace sofr
