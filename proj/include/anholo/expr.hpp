#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace anholo::sym {

/// Coordinate point: variable name -> value.
using Point = std::map<std::string, double>;

enum class UnaryOp { Neg, Exp, Ln, Sin, Cos, Tan, Tanh, Sqrt, Abs, Atan };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

inline const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "neg";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Ln: return "ln";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Tan: return "tan";
    case UnaryOp::Tanh: return "tanh";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Abs: return "abs";
    case UnaryOp::Atan: return "atan";
  }
  return "?";
}

inline const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Pow: return "^";
  }
  return "?";
}

/// Raised when evaluation hits a domain problem (division by zero, ln/sqrt of
/// a negative number, ...).  Carries the offending operation and the input
/// point instead of propagating NaN.
class EvalError : public std::runtime_error {
 public:
  EvalError(std::string what, std::string op, Point point)
      : std::runtime_error(what + " [op " + op + "]"),
        op_(std::move(op)),
        point_(std::move(point)) {}

  const std::string& op() const { return op_; }
  const Point& point() const { return point_; }

 private:
  std::string op_;
  Point point_;
};

/// Raised by the parser; offset() is the byte offset into the source string.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

namespace detail {

// Cumulative antiderivative table on a uniform grid, one per tuple of values
// of the integrand's non-dummy variables.
struct CumTable {
  double lo = 0, hi = 0, step = 0;
  std::vector<double> value;  // value[j] = integral from `lower` to lo + j*step
};

struct IntegralCache {
  std::mutex mu;
  std::map<std::vector<double>, CumTable> tables;
};

}  // namespace detail

struct Node {
  enum class Kind { Constant, Variable, Unary, Binary, Integral };

  Kind kind;
  double value = 0.0;           // Constant
  std::string name;             // Variable; also dummy variable of Integral
  UnaryOp uop = UnaryOp::Neg;   // Unary
  BinaryOp bop = BinaryOp::Add; // Binary
  NodePtr a, b;                 // children (a = integrand for Integral)
  double lower = 0.0;           // Integral lower limit
  double cache_lo = std::numeric_limits<double>::quiet_NaN();  // Integral
  double cache_hi = std::numeric_limits<double>::quiet_NaN();  //   cache range
  std::size_t src_offset = static_cast<std::size_t>(-1);
  mutable std::shared_ptr<detail::IntegralCache> cache;
};

namespace detail {

inline NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Constant;
  n->value = v;
  return n;
}

inline NodePtr make_var(std::string name, std::size_t off = static_cast<std::size_t>(-1)) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Variable;
  n->name = std::move(name);
  n->src_offset = off;
  return n;
}

inline bool is_const(const NodePtr& n, double v) {
  return n->kind == Node::Kind::Constant && n->value == v;
}

inline NodePtr make_unary(UnaryOp op, NodePtr a);

// Smart constructor: constant folding plus x*0 / x*1 style eliminations.
// Deliberately no deeper rewriting.
inline NodePtr make_binary(BinaryOp op, NodePtr a, NodePtr b) {
  const bool ca = a->kind == Node::Kind::Constant;
  const bool cb = b->kind == Node::Kind::Constant;
  if (ca && cb) {
    const double x = a->value, y = b->value;
    switch (op) {
      case BinaryOp::Add: return make_const(x + y);
      case BinaryOp::Sub: return make_const(x - y);
      case BinaryOp::Mul: return make_const(x * y);
      case BinaryOp::Div:
        if (y != 0.0) return make_const(x / y);
        break;  // keep the node; evaluation reports the domain error
      case BinaryOp::Pow: {
        const double r = std::pow(x, y);
        if (std::isfinite(r)) return make_const(r);
        break;
      }
    }
  }
  switch (op) {
    case BinaryOp::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case BinaryOp::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make_unary(UnaryOp::Neg, b);
      break;
    case BinaryOp::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      if (is_const(a, -1.0)) return make_unary(UnaryOp::Neg, b);
      if (is_const(b, -1.0)) return make_unary(UnaryOp::Neg, a);
      break;
    case BinaryOp::Div:
      if (is_const(b, 1.0)) return a;
      if (is_const(b, -1.0)) return make_unary(UnaryOp::Neg, a);
      break;
    case BinaryOp::Pow:
      if (is_const(b, 1.0)) return a;
      if (is_const(b, 0.0)) return make_const(1.0);
      break;
  }
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Binary;
  n->bop = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline NodePtr make_unary(UnaryOp op, NodePtr a) {
  if (a->kind == Node::Kind::Constant) {
    const double x = a->value;
    double r = std::numeric_limits<double>::quiet_NaN();
    switch (op) {
      case UnaryOp::Neg: r = -x; break;
      case UnaryOp::Exp: r = std::exp(x); break;
      case UnaryOp::Ln: r = x > 0 ? std::log(x) : r; break;
      case UnaryOp::Sin: r = std::sin(x); break;
      case UnaryOp::Cos: r = std::cos(x); break;
      case UnaryOp::Tan: r = std::tan(x); break;
      case UnaryOp::Tanh: r = std::tanh(x); break;
      case UnaryOp::Sqrt: r = x >= 0 ? std::sqrt(x) : r; break;
      case UnaryOp::Abs: r = std::fabs(x); break;
      case UnaryOp::Atan: r = std::atan(x); break;
    }
    if (std::isfinite(r)) return make_const(r);
  }
  if (op == UnaryOp::Neg && a->kind == Node::Kind::Unary && a->uop == UnaryOp::Neg)
    return a->a;
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Unary;
  n->uop = op;
  n->a = std::move(a);
  return n;
}

inline NodePtr make_integral(NodePtr integrand, std::string ivar, double lower,
                             double cache_lo, double cache_hi) {
  if (is_const(integrand, 0.0)) return make_const(0.0);
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Integral;
  n->a = std::move(integrand);
  n->name = std::move(ivar);
  n->lower = lower;
  n->cache_lo = cache_lo;
  n->cache_hi = cache_hi;
  n->cache = std::make_shared<IntegralCache>();
  return n;
}

}  // namespace detail

/// Immutable symbolic expression over named real variables.
///
/// Node set: constants, variables, unary {neg, exp, ln, sin, cos, tan, tanh,
/// sqrt, abs}, binary {+, -, *, /, ^}, plus an integral node
/// integral(f, s, s0) meaning  F(.., s) = \int_{s0}^{s} f(.., t) dt,
/// which the solution generator uses for polarization factors.  cosh/sinh are
/// accepted by the parser as sugar and expand through exp.
class Expression {
 public:
  Expression() : node_(detail::make_const(0.0)) {}
  explicit Expression(NodePtr n) : node_(std::move(n)) {}

  static Expression constant(double v) { return Expression(detail::make_const(v)); }
  static Expression variable(const std::string& name) {
    return Expression(detail::make_var(name));
  }
  /// Running integral of `integrand` in its variable `ivar` from `lower`.
  /// [cache_lo, cache_hi], when finite, enables the cached-grid evaluation
  /// path; queries outside the range fall back to direct quadrature.
  static Expression integral(const Expression& integrand, const std::string& ivar,
                             double lower,
                             double cache_lo = std::numeric_limits<double>::quiet_NaN(),
                             double cache_hi = std::numeric_limits<double>::quiet_NaN()) {
    return Expression(detail::make_integral(integrand.node_, ivar, lower, cache_lo, cache_hi));
  }

  const NodePtr& node() const { return node_; }
  bool is_zero() const { return detail::is_const(node_, 0.0); }

  friend Expression operator+(const Expression& x, const Expression& y) {
    return Expression(detail::make_binary(BinaryOp::Add, x.node_, y.node_));
  }
  friend Expression operator-(const Expression& x, const Expression& y) {
    return Expression(detail::make_binary(BinaryOp::Sub, x.node_, y.node_));
  }
  friend Expression operator*(const Expression& x, const Expression& y) {
    return Expression(detail::make_binary(BinaryOp::Mul, x.node_, y.node_));
  }
  friend Expression operator/(const Expression& x, const Expression& y) {
    return Expression(detail::make_binary(BinaryOp::Div, x.node_, y.node_));
  }
  friend Expression operator-(const Expression& x) {
    return Expression(detail::make_unary(UnaryOp::Neg, x.node_));
  }
  friend Expression operator+(const Expression& x, double c) { return x + constant(c); }
  friend Expression operator+(double c, const Expression& x) { return constant(c) + x; }
  friend Expression operator-(const Expression& x, double c) { return x - constant(c); }
  friend Expression operator-(double c, const Expression& x) { return constant(c) - x; }
  friend Expression operator*(const Expression& x, double c) { return x * constant(c); }
  friend Expression operator*(double c, const Expression& x) { return constant(c) * x; }
  friend Expression operator/(const Expression& x, double c) { return x / constant(c); }
  friend Expression operator/(double c, const Expression& x) { return constant(c) / x; }

  Expression pow(const Expression& e) const {
    return Expression(detail::make_binary(BinaryOp::Pow, node_, e.node_));
  }
  Expression pow(double e) const { return pow(constant(e)); }

  static Expression apply(UnaryOp op, const Expression& x) {
    return Expression(detail::make_unary(op, x.node_));
  }

  /// Evaluate at a point.  Shared subtrees are evaluated once.
  double eval(const Point& p) const {
    std::unordered_map<const Node*, double> memo;
    return eval_node(node_.get(), p, memo);
  }

  /// Exact partial derivative; apply repeatedly for higher order.
  Expression diff(const std::string& var) const {
    std::unordered_map<const Node*, NodePtr> memo;
    return Expression(diff_node(node_, var, memo));
  }

  /// Names of all variables the expression depends on.
  std::set<std::string> variables() const {
    std::set<std::string> out;
    collect_vars(node_.get(), out, nullptr);
    return out;
  }

  std::string to_string() const { return print(node_.get(), 0); }

 private:
  NodePtr node_;

  static void collect_vars(const Node* n, std::set<std::string>& out,
                           const std::string* skip) {
    switch (n->kind) {
      case Node::Kind::Constant: return;
      case Node::Kind::Variable:
        if (!skip || n->name != *skip) out.insert(n->name);
        return;
      case Node::Kind::Unary: collect_vars(n->a.get(), out, skip); return;
      case Node::Kind::Binary:
        collect_vars(n->a.get(), out, skip);
        collect_vars(n->b.get(), out, skip);
        return;
      case Node::Kind::Integral: {
        // The dummy variable doubles as the upper limit, so it stays free.
        collect_vars(n->a.get(), out, skip);
        if (!skip || n->name != *skip) out.insert(n->name);
        return;
      }
    }
  }

  static double eval_node(const Node* n, const Point& p,
                          std::unordered_map<const Node*, double>& memo) {
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    double r = 0.0;
    switch (n->kind) {
      case Node::Kind::Constant: r = n->value; break;
      case Node::Kind::Variable: {
        auto v = p.find(n->name);
        if (v == p.end())
          throw EvalError("unbound variable '" + n->name + "'", "var", p);
        r = v->second;
        break;
      }
      case Node::Kind::Unary: {
        const double x = eval_node(n->a.get(), p, memo);
        switch (n->uop) {
          case UnaryOp::Neg: r = -x; break;
          case UnaryOp::Exp: r = std::exp(x); break;
          case UnaryOp::Ln:
            if (x <= 0.0) throw EvalError("ln of non-positive value", "ln", p);
            r = std::log(x);
            break;
          case UnaryOp::Sin: r = std::sin(x); break;
          case UnaryOp::Cos: r = std::cos(x); break;
          case UnaryOp::Tan: r = std::tan(x); break;
          case UnaryOp::Tanh: r = std::tanh(x); break;
          case UnaryOp::Sqrt:
            if (x < 0.0) throw EvalError("sqrt of negative value", "sqrt", p);
            r = std::sqrt(x);
            break;
          case UnaryOp::Abs: r = std::fabs(x); break;
          case UnaryOp::Atan: r = std::atan(x); break;
        }
        break;
      }
      case Node::Kind::Binary: {
        const double x = eval_node(n->a.get(), p, memo);
        const double y = eval_node(n->b.get(), p, memo);
        switch (n->bop) {
          case BinaryOp::Add: r = x + y; break;
          case BinaryOp::Sub: r = x - y; break;
          case BinaryOp::Mul: r = x * y; break;
          case BinaryOp::Div:
            if (y == 0.0) throw EvalError("division by zero", "/", p);
            r = x / y;
            break;
          case BinaryOp::Pow: {
            if (x > 0.0) {
              r = std::pow(x, y);
            } else if (x == 0.0) {
              if (y > 0.0) r = 0.0;
              else if (y == 0.0) r = 1.0;
              else throw EvalError("pow: zero base, negative exponent", "^", p);
            } else {
              if (std::nearbyint(y) == y) r = std::pow(x, y);
              else
                throw EvalError("pow: negative base, non-integer exponent", "^", p);
            }
            break;
          }
        }
        break;
      }
      case Node::Kind::Integral: {
        auto v = p.find(n->name);
        if (v == p.end())
          throw EvalError("unbound variable '" + n->name + "'", "integral", p);
        r = eval_integral(n, p, v->second);
        break;
      }
    }
    if (!std::isfinite(r)) throw EvalError("non-finite result", describe(n), p);
    memo.emplace(n, r);
    return r;
  }

  static std::string describe(const Node* n) {
    switch (n->kind) {
      case Node::Kind::Constant: return "const";
      case Node::Kind::Variable: return "var " + n->name;
      case Node::Kind::Unary: return unary_name(n->uop);
      case Node::Kind::Binary: return binary_name(n->bop);
      case Node::Kind::Integral: return "integral d" + n->name;
    }
    return "?";
  }

  // --- integral evaluation --------------------------------------------------

  static double integrand_at(const Node* n, Point& scratch, double s) {
    scratch[n->name] = s;
    std::unordered_map<const Node*, double> memo;
    return eval_node(n->a.get(), scratch, memo);
  }

  // Adaptive Simpson with Richardson correction.
  static double simpson_rec(const Node* n, Point& scratch, double a, double b,
                            double fa, double fm, double fb, double whole,
                            double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = integrand_at(n, scratch, lm);
    const double frm = integrand_at(n, scratch, rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * tol)
      return left + right + delta / 15.0;
    return simpson_rec(n, scratch, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(n, scratch, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  }

  static double integrate(const Node* n, Point& scratch, double a, double b,
                          double tol) {
    if (a == b) return 0.0;
    const double fa = integrand_at(n, scratch, a);
    const double fb = integrand_at(n, scratch, b);
    const double fm = integrand_at(n, scratch, 0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(n, scratch, a, b, fa, fm, fb, whole, tol, kMaxDepth);
  }

  static constexpr int kMaxDepth = 40;
  static constexpr double kTol = 1e-10;
  static constexpr int kGridN = 257;

  static double eval_integral(const Node* n, const Point& p, double upper) {
    Point scratch = p;
    const bool cached = std::isfinite(n->cache_lo) && std::isfinite(n->cache_hi) &&
                        n->cache_hi > n->cache_lo && upper >= n->cache_lo &&
                        upper <= n->cache_hi;
    if (!cached) return integrate(n, scratch, n->lower, upper, kTol);

    std::set<std::string> free;
    collect_vars(n->a.get(), free, &n->name);
    std::vector<double> key;
    key.reserve(free.size());
    for (const auto& name : free) {
      auto it = p.find(name);
      if (it == p.end())
        throw EvalError("unbound variable '" + name + "'", "integral", p);
      key.push_back(it->second);
    }

    std::lock_guard<std::mutex> lock(n->cache->mu);
    auto& table = n->cache->tables[key];
    if (table.value.empty()) {
      table.lo = n->cache_lo;
      table.hi = n->cache_hi;
      table.step = (table.hi - table.lo) / (kGridN - 1);
      table.value.resize(kGridN);
      const double seg_tol = kTol / kGridN;
      table.value[0] = integrate(n, scratch, n->lower, table.lo, kTol);
      for (int j = 1; j < kGridN; ++j) {
        const double a = table.lo + (j - 1) * table.step;
        table.value[j] = table.value[j - 1] +
                         integrate(n, scratch, a, a + table.step, seg_tol);
      }
    }
    // Cubic 4-point Lagrange interpolation on the uniform grid.
    double t = (upper - table.lo) / table.step;
    int j = static_cast<int>(std::floor(t)) - 1;
    j = std::max(0, std::min(j, kGridN - 4));
    const double x = t - j;
    const double* f = &table.value[j];
    const double c0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
    const double c1 = x * (x - 2.0) * (x - 3.0) / 2.0;
    const double c2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
    const double c3 = x * (x - 1.0) * (x - 2.0) / 6.0;
    return c0 * f[0] + c1 * f[1] + c2 * f[2] + c3 * f[3];
  }

  // --- differentiation ------------------------------------------------------

  static NodePtr diff_node(const NodePtr& n, const std::string& var,
                           std::unordered_map<const Node*, NodePtr>& memo) {
    auto it = memo.find(n.get());
    if (it != memo.end()) return it->second;
    using namespace detail;
    NodePtr r;
    switch (n->kind) {
      case Node::Kind::Constant: r = make_const(0.0); break;
      case Node::Kind::Variable: r = make_const(n->name == var ? 1.0 : 0.0); break;
      case Node::Kind::Unary: {
        NodePtr du = diff_node(n->a, var, memo);
        const NodePtr& u = n->a;
        switch (n->uop) {
          case UnaryOp::Neg: r = make_unary(UnaryOp::Neg, du); break;
          case UnaryOp::Exp: r = make_binary(BinaryOp::Mul, make_unary(UnaryOp::Exp, u), du); break;
          case UnaryOp::Ln: r = make_binary(BinaryOp::Div, du, u); break;
          case UnaryOp::Sin:
            r = make_binary(BinaryOp::Mul, make_unary(UnaryOp::Cos, u), du);
            break;
          case UnaryOp::Cos:
            r = make_unary(UnaryOp::Neg,
                           make_binary(BinaryOp::Mul, make_unary(UnaryOp::Sin, u), du));
            break;
          case UnaryOp::Tan: {
            NodePtr t = make_unary(UnaryOp::Tan, u);
            NodePtr sec2 = make_binary(BinaryOp::Add, make_const(1.0),
                                       make_binary(BinaryOp::Mul, t, t));
            r = make_binary(BinaryOp::Mul, sec2, du);
            break;
          }
          case UnaryOp::Tanh: {
            NodePtr t = make_unary(UnaryOp::Tanh, u);
            NodePtr d = make_binary(BinaryOp::Sub, make_const(1.0),
                                    make_binary(BinaryOp::Mul, t, t));
            r = make_binary(BinaryOp::Mul, d, du);
            break;
          }
          case UnaryOp::Sqrt: {
            NodePtr den = make_binary(BinaryOp::Mul, make_const(2.0),
                                      make_unary(UnaryOp::Sqrt, u));
            r = make_binary(BinaryOp::Div, du, den);
            break;
          }
          case UnaryOp::Abs: {
            // sign(u) * u'; evaluating the sign at u == 0 reports a domain
            // error through the division, which is the documented behaviour.
            NodePtr sign = make_binary(BinaryOp::Div, u, make_unary(UnaryOp::Abs, u));
            r = make_binary(BinaryOp::Mul, sign, du);
            break;
          }
          case UnaryOp::Atan: {
            NodePtr d = make_binary(BinaryOp::Add, make_const(1.0),
                                    make_binary(BinaryOp::Mul, u, u));
            r = make_binary(BinaryOp::Div, du, d);
            break;
          }
        }
        break;
      }
      case Node::Kind::Binary: {
        NodePtr da = diff_node(n->a, var, memo);
        NodePtr db = diff_node(n->b, var, memo);
        const NodePtr& u = n->a;
        const NodePtr& w = n->b;
        switch (n->bop) {
          case BinaryOp::Add: r = make_binary(BinaryOp::Add, da, db); break;
          case BinaryOp::Sub: r = make_binary(BinaryOp::Sub, da, db); break;
          case BinaryOp::Mul:
            r = make_binary(BinaryOp::Add, make_binary(BinaryOp::Mul, da, w),
                            make_binary(BinaryOp::Mul, u, db));
            break;
          case BinaryOp::Div: {
            NodePtr num = make_binary(BinaryOp::Sub, make_binary(BinaryOp::Mul, da, w),
                                      make_binary(BinaryOp::Mul, u, db));
            r = make_binary(BinaryOp::Div, num, make_binary(BinaryOp::Mul, w, w));
            break;
          }
          case BinaryOp::Pow: {
            if (w->kind == Node::Kind::Constant) {
              // d(u^c) = c u^(c-1) u', valid for negative bases as well.
              NodePtr p = make_binary(BinaryOp::Pow, u, make_const(w->value - 1.0));
              r = make_binary(BinaryOp::Mul, make_const(w->value),
                              make_binary(BinaryOp::Mul, p, da));
            } else {
              // u^w (w' ln u + w u' / u), base must stay positive.
              NodePtr t1 = make_binary(BinaryOp::Mul, db, make_unary(UnaryOp::Ln, u));
              NodePtr t2 = make_binary(BinaryOp::Div, make_binary(BinaryOp::Mul, w, da), u);
              r = make_binary(BinaryOp::Mul, make_binary(BinaryOp::Pow, u, w),
                              make_binary(BinaryOp::Add, t1, t2));
            }
            break;
          }
        }
        break;
      }
      case Node::Kind::Integral: {
        if (var == n->name) {
          r = n->a;  // d/ds of int_{s0}^{s} f(.., t) dt = f(.., s)
        } else {
          NodePtr di = diff_node(n->a, var, memo);
          r = make_integral(di, n->name, n->lower, n->cache_lo, n->cache_hi);
        }
        break;
      }
    }
    memo.emplace(n.get(), r);
    return r;
  }

  // --- printing -------------------------------------------------------------

  // Precedence: 1 add/sub, 2 mul/div, 3 unary minus, 4 pow, 5 atom.
  static std::string print(const Node* n, int parent_prec) {
    std::string s;
    int prec = 5;
    switch (n->kind) {
      case Node::Kind::Constant: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", n->value);
        s = buf;
        if (n->value < 0) prec = 3;
        break;
      }
      case Node::Kind::Variable: s = n->name; break;
      case Node::Kind::Unary:
        if (n->uop == UnaryOp::Neg) {
          prec = 3;
          s = "-" + print(n->a.get(), 3);
        } else {
          s = std::string(unary_name(n->uop)) + "(" + print(n->a.get(), 0) + ")";
        }
        break;
      case Node::Kind::Binary: {
        switch (n->bop) {
          case BinaryOp::Add:
          case BinaryOp::Sub: prec = 1; break;
          case BinaryOp::Mul:
          case BinaryOp::Div: prec = 2; break;
          case BinaryOp::Pow: prec = 4; break;
        }
        const bool right_assoc = n->bop == BinaryOp::Pow;
        s = print(n->a.get(), right_assoc ? prec + 1 : prec) + binary_name(n->bop) +
            print(n->b.get(), right_assoc ? prec : prec + 1);
        break;
      }
      case Node::Kind::Integral: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", n->lower);
        s = "integral(" + print(n->a.get(), 0) + ", " + n->name + ", " + buf + ")";
        break;
      }
    }
    if (prec < parent_prec) return "(" + s + ")";
    return s;
  }
};

// ---------------------------------------------------------------------------
// Parser: infix grammar with ^ right-associative, precedence
// ^  >  unary minus  >  * /  >  + -.
// ---------------------------------------------------------------------------

class Parser {
 public:
  Parser(const std::string& src, const std::set<std::string>& vars)
      : src_(src), vars_(vars) {}

  Expression parse() {
    NodePtr e = parse_sum();
    skip_ws();
    if (pos_ != src_.size())
      throw ParseError("unexpected trailing input", pos_);
    return Expression(e);
  }

 private:
  const std::string& src_;
  const std::set<std::string>& vars_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr parse_sum() {
    NodePtr e = parse_term();
    for (;;) {
      if (eat('+')) e = detail::make_binary(BinaryOp::Add, e, parse_term());
      else if (eat('-')) e = detail::make_binary(BinaryOp::Sub, e, parse_term());
      else return e;
    }
  }

  NodePtr parse_term() {
    NodePtr e = parse_unary();
    for (;;) {
      if (eat('*')) e = detail::make_binary(BinaryOp::Mul, e, parse_unary());
      else if (eat('/')) e = detail::make_binary(BinaryOp::Div, e, parse_unary());
      else return e;
    }
  }

  NodePtr parse_unary() {
    if (eat('-')) return detail::make_unary(UnaryOp::Neg, parse_unary());
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (eat('^')) {
      // Right operand parses at unary level: x^-2 and x^y^z both work.
      NodePtr e = parse_unary();
      return detail::make_binary(BinaryOp::Pow, base, e);
    }
    return base;
  }

  NodePtr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      const std::size_t open = pos_;
      ++pos_;
      NodePtr e = parse_sum();
      if (!eat(')')) throw ParseError("unbalanced parenthesis", open);
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.'))
      ++end;
    if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < src_.size() && (src_[e] == '+' || src_[e] == '-')) ++e;
      std::size_t digits = e;
      while (digits < src_.size() && std::isdigit(static_cast<unsigned char>(src_[digits])))
        ++digits;
      if (digits > e) end = digits;
    }
    const std::string text = src_.substr(start, end - start);
    char* parse_end = nullptr;
    const double v = std::strtod(text.c_str(), &parse_end);
    if (parse_end != text.c_str() + text.size())
      throw ParseError("malformed number '" + text + "'", start);
    pos_ = end;
    return detail::make_const(v);
  }

  NodePtr parse_ident() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string name = src_.substr(start, pos_ - start);
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      ++pos_;
      NodePtr arg = parse_sum();
      if (!eat(')')) throw ParseError("unbalanced parenthesis in call", start);
      return apply_function(name, arg, start);
    }
    if (name == "pi") return detail::make_const(3.14159265358979323846);
    if (vars_.count(name)) return detail::make_var(name, start);
    throw ParseError("unknown identifier '" + name + "'", start);
  }

  NodePtr apply_function(const std::string& name, NodePtr arg, std::size_t off) {
    using detail::make_binary;
    using detail::make_const;
    using detail::make_unary;
    if (name == "exp") return make_unary(UnaryOp::Exp, arg);
    if (name == "ln") return make_unary(UnaryOp::Ln, arg);
    if (name == "sin") return make_unary(UnaryOp::Sin, arg);
    if (name == "cos") return make_unary(UnaryOp::Cos, arg);
    if (name == "tan") return make_unary(UnaryOp::Tan, arg);
    if (name == "tanh") return make_unary(UnaryOp::Tanh, arg);
    if (name == "sqrt") return make_unary(UnaryOp::Sqrt, arg);
    if (name == "abs") return make_unary(UnaryOp::Abs, arg);
    if (name == "atan") return make_unary(UnaryOp::Atan, arg);
    if (name == "cosh") {
      NodePtr e = make_unary(UnaryOp::Exp, arg);
      NodePtr em = make_unary(UnaryOp::Exp, make_unary(UnaryOp::Neg, arg));
      return make_binary(BinaryOp::Div, make_binary(BinaryOp::Add, e, em), make_const(2.0));
    }
    if (name == "sinh") {
      NodePtr e = make_unary(UnaryOp::Exp, arg);
      NodePtr em = make_unary(UnaryOp::Exp, make_unary(UnaryOp::Neg, arg));
      return make_binary(BinaryOp::Div, make_binary(BinaryOp::Sub, e, em), make_const(2.0));
    }
    throw ParseError("unknown function '" + name + "'", off);
  }
};

inline Expression parse(const std::string& src, const std::set<std::string>& vars) {
  return Parser(src, vars).parse();
}

inline Expression exp(const Expression& x) { return Expression::apply(UnaryOp::Exp, x); }
inline Expression ln(const Expression& x) { return Expression::apply(UnaryOp::Ln, x); }
inline Expression sin(const Expression& x) { return Expression::apply(UnaryOp::Sin, x); }
inline Expression cos(const Expression& x) { return Expression::apply(UnaryOp::Cos, x); }
inline Expression tan(const Expression& x) { return Expression::apply(UnaryOp::Tan, x); }
inline Expression tanh(const Expression& x) { return Expression::apply(UnaryOp::Tanh, x); }
inline Expression sqrt(const Expression& x) { return Expression::apply(UnaryOp::Sqrt, x); }
inline Expression abs(const Expression& x) { return Expression::apply(UnaryOp::Abs, x); }
inline Expression atan(const Expression& x) { return Expression::apply(UnaryOp::Atan, x); }

// ---------------------------------------------------------------------------
// Small symbolic linear algebra used for metric inverses.
// ---------------------------------------------------------------------------

using ExprMat = std::vector<std::vector<Expression>>;

inline ExprMat expr_mat(std::size_t r, std::size_t c) {
  return ExprMat(r, std::vector<Expression>(c));
}

inline Expression determinant(const ExprMat& m) {
  const std::size_t n = m.size();
  if (n == 1) return m[0][0];
  if (n == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
  Expression det = Expression::constant(0.0);
  double sign = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    ExprMat minor = expr_mat(n - 1, n - 1);
    for (std::size_t r = 1; r < n; ++r) {
      std::size_t cc = 0;
      for (std::size_t c = 0; c < n; ++c) {
        if (c == j) continue;
        minor[r - 1][cc++] = m[r][c];
      }
    }
    det = det + Expression::constant(sign) * m[0][j] * determinant(minor);
    sign = -sign;
  }
  return det;
}

/// Symbolic inverse via adjugate / determinant; intended for the small
/// (n, m <= 4) metric blocks handled here.
inline ExprMat inverse(const ExprMat& m) {
  const std::size_t n = m.size();
  Expression det = determinant(m);
  ExprMat inv = expr_mat(n, n);
  if (n == 1) {
    inv[0][0] = Expression::constant(1.0) / det;
    return inv;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      ExprMat minor = expr_mat(n - 1, n - 1);
      std::size_t rr = 0;
      for (std::size_t r = 0; r < n; ++r) {
        if (r == j) continue;  // adjugate transposes the cofactor matrix
        std::size_t cc = 0;
        for (std::size_t c = 0; c < n; ++c) {
          if (c == i) continue;
          minor[rr][cc++] = m[r][c];
        }
        ++rr;
      }
      const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
      inv[i][j] = Expression::constant(sign) * determinant(minor) / det;
    }
  }
  return inv;
}

}  // namespace anholo::sym
