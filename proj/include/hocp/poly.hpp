#pragma once

// Sparse multivariate polynomials over named, role-tagged variable spaces.
// Every higher layer (problem models, moment indexing, generators, controller
// extraction) is built on the types in this header.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace hocp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class VarRole { Time, State, Control };

// Ordered variable list with roles. Variables appear time-first, then states,
// then controls; names are unique; at most one time variable.
struct VarSpace {
  std::vector<std::string> names;
  std::vector<VarRole> roles;

  static VarSpace make(std::vector<std::string> names, std::vector<VarRole> roles) {
    if (names.size() != roles.size()) throw Error("VarSpace: names/roles size mismatch");
    int time_count = 0;
    for (std::size_t i = 0; i < roles.size(); ++i) {
      if (roles[i] == VarRole::Time) {
        ++time_count;
        if (i != 0) throw Error("VarSpace: time variable must come first");
      }
    }
    if (time_count > 1) throw Error("VarSpace: more than one time variable");
    bool seen_control = false;
    for (const auto& r : roles) {
      if (r == VarRole::Control) seen_control = true;
      else if (r == VarRole::State && seen_control)
        throw Error("VarSpace: state variables must precede control variables");
    }
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw Error("VarSpace: duplicate variable name");
    return VarSpace{std::move(names), std::move(roles)};
  }

  int dim() const { return static_cast<int>(names.size()); }

  int find(const std::string& name) const {
    for (int i = 0; i < dim(); ++i)
      if (names[i] == name) return i;
    return -1;
  }

  bool has_time() const { return !roles.empty() && roles[0] == VarRole::Time; }

  bool operator==(const VarSpace& o) const { return names == o.names && roles == o.roles; }
  bool operator!=(const VarSpace& o) const { return !(*this == o); }
};

using Expo = std::vector<int>;

inline int total_degree(const Expo& e) { return std::accumulate(e.begin(), e.end(), 0); }

// Canonical monomial order: graded lexicographic. Lower total degree first;
// within a degree block, higher power on earlier variables first, so the
// sequence over (t, x) reads 1, t, x, t^2, t*x, x^2, ...
inline bool grlex_before(const Expo& a, const Expo& b) {
  const int da = total_degree(a), db = total_degree(b);
  if (da != db) return da < db;
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

struct GrlexBefore {
  bool operator()(const Expo& a, const Expo& b) const { return grlex_before(a, b); }
};

struct ExpoHash {
  std::size_t operator()(const Expo& e) const {
    std::size_t h = 1469598103934665603ull;
    for (int v : e) {
      h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return h;
  }
};

// Exact for the sizes used here (fits in signed 64-bit well past C(40,20)).
inline long long nchoosek(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// All exponent tuples over nvars variables with total degree <= maxdeg, in
// canonical order. Size is C(nvars + maxdeg, maxdeg).
inline std::vector<Expo> monomials_up_to(int nvars, int maxdeg) {
  std::vector<Expo> out;
  out.reserve(static_cast<std::size_t>(nchoosek(nvars + maxdeg, maxdeg)));
  Expo cur(nvars, 0);
  auto rec = [&](auto&& self, int pos, int rem) -> void {
    if (pos == nvars - 1) {
      cur[pos] = rem;
      out.push_back(cur);
      cur[pos] = 0;
      return;
    }
    for (int e = rem; e >= 0; --e) {
      cur[pos] = e;
      self(self, pos + 1, rem - e);
    }
    cur[pos] = 0;
  };
  for (int d = 0; d <= maxdeg; ++d) {
    if (nvars == 0) {
      if (d == 0) out.push_back(Expo{});
      continue;
    }
    rec(rec, 0, d);
  }
  return out;
}

inline double powi(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

// Immutable sparse polynomial with double coefficients. Terms are held in
// canonical monomial order; coefficients that are exactly 0.0 are pruned and
// no epsilon-based dropping ever happens.
class Polynomial {
 public:
  VarSpace space;
  std::map<Expo, double, GrlexBefore> terms;

  Polynomial() = default;
  explicit Polynomial(VarSpace s) : space(std::move(s)) {}

  static Polynomial constant(const VarSpace& s, double c) {
    Polynomial p(s);
    if (c != 0.0) p.terms.emplace(Expo(s.dim(), 0), c);
    return p;
  }

  static Polynomial variable(const VarSpace& s, int index) {
    if (index < 0 || index >= s.dim()) throw Error("Polynomial::variable: index out of range");
    Polynomial p(s);
    Expo e(s.dim(), 0);
    e[index] = 1;
    p.terms.emplace(std::move(e), 1.0);
    return p;
  }

  static Polynomial variable(const VarSpace& s, const std::string& name) {
    const int i = s.find(name);
    if (i < 0) throw Error("Polynomial::variable: unknown variable " + name);
    return variable(s, i);
  }

  static Polynomial monomial(const VarSpace& s, Expo e, double c) {
    if (static_cast<int>(e.size()) != s.dim()) throw Error("Polynomial::monomial: exponent size mismatch");
    for (int v : e)
      if (v < 0) throw Error("Polynomial::monomial: negative exponent");
    Polynomial p(s);
    if (c != 0.0) p.terms.emplace(std::move(e), c);
    return p;
  }

  bool is_zero() const { return terms.empty(); }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms) d = std::max(d, total_degree(e));
    return d;
  }

  double coefficient(const Expo& e) const {
    auto it = terms.find(e);
    return it == terms.end() ? 0.0 : it->second;
  }

  std::string str() const {
    if (terms.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [e, c] : terms) {
      if (!first) os << (c < 0 ? " - " : " + ");
      else if (c < 0) os << "-";
      first = false;
      const double a = std::abs(c);
      bool printed = false;
      if (a != 1.0 || total_degree(e) == 0) {
        os << a;
        printed = true;
      }
      for (int i = 0; i < space.dim(); ++i) {
        if (e[i] == 0) continue;
        if (printed) os << "*";
        os << space.names[i];
        if (e[i] > 1) os << "^" << e[i];
        printed = true;
      }
    }
    return os.str();
  }
};

inline void check_same_space(const Polynomial& a, const Polynomial& b, const char* op) {
  if (a.space != b.space) throw Error(std::string("polynomial ") + op + ": operands live in different variable spaces");
}

inline Polynomial operator+(const Polynomial& a, const Polynomial& b) {
  check_same_space(a, b, "add");
  Polynomial r = a;
  for (const auto& [e, c] : b.terms) {
    auto [it, inserted] = r.terms.emplace(e, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) r.terms.erase(it);
    }
  }
  return r;
}

inline Polynomial operator-(const Polynomial& a) {
  Polynomial r = a;
  for (auto& [e, c] : r.terms) c = -c;
  return r;
}

inline Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + (-b); }

inline Polynomial operator*(const Polynomial& a, double s) {
  Polynomial r(a.space);
  if (s == 0.0) return r;
  r.terms = a.terms;
  for (auto& [e, c] : r.terms) c *= s;
  return r;
}

inline Polynomial operator*(double s, const Polynomial& a) { return a * s; }

inline Polynomial operator*(const Polynomial& a, const Polynomial& b) {
  check_same_space(a, b, "mul");
  Polynomial r(a.space);
  const int n = a.space.dim();
  Expo e(n, 0);
  for (const auto& [ea, ca] : a.terms) {
    for (const auto& [eb, cb] : b.terms) {
      for (int i = 0; i < n; ++i) e[i] = ea[i] + eb[i];
      auto [it, inserted] = r.terms.emplace(e, ca * cb);
      if (!inserted) {
        it->second += ca * cb;
        if (it->second == 0.0) r.terms.erase(it);
      }
    }
  }
  return r;
}

inline Polynomial operator+(const Polynomial& a, double c) { return a + Polynomial::constant(a.space, c); }
inline Polynomial operator+(double c, const Polynomial& a) { return a + c; }
inline Polynomial operator-(const Polynomial& a, double c) { return a + (-c); }
inline Polynomial operator-(double c, const Polynomial& a) { return (-a) + c; }

// d/d(var index) with exact coefficient arithmetic.
inline Polynomial partial(const Polynomial& p, int var) {
  if (var < 0 || var >= p.space.dim()) throw Error("partial: variable index out of range");
  Polynomial r(p.space);
  for (const auto& [e, c] : p.terms) {
    if (e[var] == 0) continue;
    Expo d = e;
    d[var] -= 1;
    r.terms.emplace(std::move(d), c * e[var]);
  }
  return r;
}

inline Polynomial partial(const Polynomial& p, const std::string& name) {
  const int i = p.space.find(name);
  if (i < 0) throw Error("partial: unknown variable " + name);
  return partial(p, i);
}

// Substitute images[i] for variable i; all images share one target space.
// The result is fully expanded.
inline Polynomial compose(const Polynomial& p, const VarSpace& target, const std::vector<Polynomial>& images) {
  if (static_cast<int>(images.size()) != p.space.dim())
    throw Error("compose: need one image polynomial per source variable");
  for (const auto& img : images)
    if (img.space != target) throw Error("compose: image polynomial lives outside the target space");
  // Per-variable power cache up to the largest exponent used.
  std::vector<int> max_exp(p.space.dim(), 0);
  for (const auto& [e, c] : p.terms)
    for (int i = 0; i < p.space.dim(); ++i) max_exp[i] = std::max(max_exp[i], e[i]);
  std::vector<std::vector<Polynomial>> pow(p.space.dim());
  for (int i = 0; i < p.space.dim(); ++i) {
    pow[i].push_back(Polynomial::constant(target, 1.0));
    for (int k = 1; k <= max_exp[i]; ++k) pow[i].push_back(pow[i][k - 1] * images[i]);
  }
  Polynomial r(target);
  for (const auto& [e, c] : p.terms) {
    Polynomial term = Polynomial::constant(target, c);
    for (int i = 0; i < p.space.dim(); ++i)
      if (e[i] > 0) term = term * pow[i][e[i]];
    r = r + term;
  }
  return r;
}

// Embed into a larger space by variable name. Every source variable must
// exist in the target.
inline Polynomial lift(const Polynomial& p, const VarSpace& target) {
  std::vector<int> map(p.space.dim());
  for (int i = 0; i < p.space.dim(); ++i) {
    map[i] = target.find(p.space.names[i]);
    if (map[i] < 0) throw Error("lift: target space lacks variable " + p.space.names[i]);
  }
  Polynomial r(target);
  for (const auto& [e, c] : p.terms) {
    Expo t(target.dim(), 0);
    for (int i = 0; i < p.space.dim(); ++i) t[map[i]] = e[i];
    r.terms.emplace(std::move(t), c);
  }
  return r;
}

inline double eval(const Polynomial& p, const std::vector<double>& point) {
  if (static_cast<int>(point.size()) != p.space.dim())
    throw Error("eval: point dimension does not match variable space");
  double r = 0.0;
  for (const auto& [e, c] : p.terms) {
    double t = c;
    for (int i = 0; i < p.space.dim(); ++i)
      if (e[i] > 0) t *= powi(point[i], e[i]);
    r += t;
  }
  return r;
}

// Drop all terms of total degree greater than maxdeg.
inline Polynomial truncate(const Polynomial& p, int maxdeg) {
  Polynomial r(p.space);
  for (const auto& [e, c] : p.terms)
    if (total_degree(e) <= maxdeg) r.terms.emplace(e, c);
  return r;
}

enum class Trig { Sin, Cos };

// Maclaurin polynomial of sin/cos in one variable, truncated at total degree
// `order` inclusive: sin -> x - x^3/6 + ..., cos -> 1 - x^2/2 + ...
inline Polynomial taylor_trig(const VarSpace& s, Trig kind, int var, int order) {
  if (var < 0 || var >= s.dim()) throw Error("taylor_trig: variable index out of range");
  if (order < 0) throw Error("taylor_trig: negative order");
  Polynomial r(s);
  double fact = 1.0;
  for (int j = 0; j <= order; ++j) {
    if (j > 0) fact *= j;
    const bool odd = (j % 2 == 1);
    if ((kind == Trig::Sin) != odd) continue;
    const int half = (kind == Trig::Sin) ? (j - 1) / 2 : j / 2;
    const double coef = ((half % 2 == 0) ? 1.0 : -1.0) / fact;
    Expo e(s.dim(), 0);
    e[var] = j;
    r.terms.emplace(std::move(e), coef);
  }
  return r;
}

inline Polynomial taylor_trig(const VarSpace& s, Trig kind, const std::string& name, int order) {
  const int i = s.find(name);
  if (i < 0) throw Error("taylor_trig: unknown variable " + name);
  return taylor_trig(s, kind, i, order);
}

}  // namespace hocp
