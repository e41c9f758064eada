#pragma once

#include <map>
#include <string>

#include "arclosure/rational.hpp"

namespace arclosure {

// Exponent form: a rational constant plus a rational-linear combination of named
// parameters, e.g. 3/2, gamma, 2-gamma. Rich enough for every weight power the
// toolkit manipulates while keeping exponent arithmetic exact and decidable.
class LinExp {
 public:
  LinExp() : c_(0) {}
  LinExp(const Rational& c) : c_(c) {}  // NOLINT: implicit by design
  LinExp(long n) : c_(n) {}             // NOLINT
  static LinExp param(const std::string& name, const Rational& coef = Rational(1)) {
    LinExp e;
    if (coef != 0) e.terms_[name] = coef;
    return e;
  }

  const Rational& constant() const { return c_; }
  const std::map<std::string, Rational>& terms() const { return terms_; }

  bool is_constant() const { return terms_.empty(); }
  bool is_integer() const { return is_constant() && arclosure::is_integer(c_); }
  long as_integer() const {
    if (!is_integer()) throw std::domain_error("exponent is not an integer constant");
    return to_long(c_);
  }
  const Rational& as_rational() const {
    if (!is_constant()) throw std::domain_error("exponent is not constant");
    return c_;
  }
  bool is_zero() const { return c_ == 0 && terms_.empty(); }
  bool is_one() const { return c_ == 1 && terms_.empty(); }

  LinExp& operator+=(const LinExp& o) {
    c_ += o.c_;
    for (const auto& [k, v] : o.terms_) add_term(k, v);
    return *this;
  }
  LinExp& operator-=(const LinExp& o) {
    c_ -= o.c_;
    for (const auto& [k, v] : o.terms_) add_term(k, -v);
    return *this;
  }
  LinExp& operator*=(const Rational& r) {
    if (r == 0) { c_ = 0; terms_.clear(); return *this; }
    c_ *= r;
    for (auto& [k, v] : terms_) v *= r;
    return *this;
  }
  friend LinExp operator+(LinExp a, const LinExp& b) { return a += b; }
  friend LinExp operator-(LinExp a, const LinExp& b) { return a -= b; }
  friend LinExp operator*(LinExp a, const Rational& r) { return a *= r; }
  friend LinExp operator-(LinExp a) { return a *= Rational(-1); }

  friend bool operator==(const LinExp& a, const LinExp& b) {
    return a.c_ == b.c_ && a.terms_ == b.terms_;
  }
  friend bool operator!=(const LinExp& a, const LinExp& b) { return !(a == b); }

  // Deterministic total order for canonical factor sorting.
  int compare(const LinExp& o) const {
    int cc = rat_cmp(c_, o.c_);
    if (cc != 0) return cc;
    auto it = terms_.begin(), jt = o.terms_.begin();
    for (; it != terms_.end() && jt != o.terms_.end(); ++it, ++jt) {
      if (it->first != jt->first) return it->first < jt->first ? -1 : 1;
      cc = rat_cmp(it->second, jt->second);
      if (cc != 0) return cc;
    }
    if (it != terms_.end()) return 1;
    if (jt != o.terms_.end()) return -1;
    return 0;
  }

  double eval(const std::map<std::string, double>& env) const {
    double v = to_double(c_);
    for (const auto& [k, coef] : terms_) {
      auto it = env.find(k);
      if (it == env.end()) throw std::domain_error("unbound parameter in exponent: " + k);
      v += to_double(coef) * it->second;
    }
    return v;
  }

  bool depends_on(const std::string& name) const { return terms_.count(name) != 0; }

  // Substitute a rational value for one parameter.
  LinExp with_param(const std::string& name, const Rational& value) const {
    LinExp r = *this;
    auto it = r.terms_.find(name);
    if (it != r.terms_.end()) {
      r.c_ += it->second * value;
      r.terms_.erase(it);
    }
    return r;
  }

  std::string str() const {
    if (terms_.empty()) return to_string(c_);
    std::string s;
    bool first = true;
    if (c_ != 0) { s = to_string(c_); first = false; }
    for (const auto& [k, v] : terms_) {
      if (v > 0 && !first) s += "+";
      if (v == -1) s += "-";
      else if (v != 1) s += to_string(v) + "*";
      s += k;
      first = false;
    }
    return s;
  }

 private:
  void add_term(const std::string& k, const Rational& v) {
    auto [it, inserted] = terms_.emplace(k, v);
    if (!inserted) {
      it->second += v;
      if (it->second == 0) terms_.erase(it);
    }
  }

  Rational c_;
  std::map<std::string, Rational> terms_;
};

}  // namespace arclosure
