#pragma once

#include <anholo/connection.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace anholo::grav {

using geo::DConnection;
using geo::DMetric;
using geo::Frames;
using geo::NConnection;
using geo::Nonholonomy;
using geo::Splitting;
using sym::Expression;
using sym::Point;

/// Diagonal source pattern in mixed indices: the first two slots share one
/// profile (a function of x1, x2, v), the last two share another (x1, x2).
struct SourceSpec {
  Expression Upsilon1 = Expression::constant(0.0);
  Expression Upsilon3 = Expression::constant(0.0);
  double kappa = 1.0;
};

/// Functional data for the 4D two-plus-two ansatz on coordinates
/// (x1, x2, v, y4).  The chart box doubles as the validation region and as
/// the cache window for v-integrals; v0 is their lower limit.
struct AnsatzData {
  Expression psi = Expression::constant(0.0);     // psi(x1,x2)
  Expression f;                                   // f(x1,x2,v), df/dv != 0
  Expression f0 = Expression::constant(0.0);      // (x1,x2)
  Expression sigma0 = Expression::constant(1.0);  // (x1,x2)
  Expression h0bar = Expression::constant(1.0);   // (x1,x2)
  double h0 = 1.0;
  std::array<int, 4> eps{1, 1, -1, -1};
  std::array<Expression, 2> n1{Expression::constant(0.0), Expression::constant(0.0)};
  std::array<Expression, 2> n2{Expression::constant(0.0), Expression::constant(0.0)};
  // Optional override for the vertical-leg coefficients in vacuum mode,
  // where the generic formula degenerates to 0/0; default 0.
  std::array<Expression, 2> w_vac{Expression::constant(0.0), Expression::constant(0.0)};
  Splitting chart;  // n=2, m=2, names {x1, x2, v, y4}
  double v0 = 0.0;

  void validate() const {
    chart.validate();
    if (chart.n != 2 || chart.m != 2)
      throw std::invalid_argument("ansatz: chart must be 2+2");
    const std::vector<std::string> want = {"x1", "x2", "v", "y4"};
    if (chart.names != want)
      throw std::invalid_argument("ansatz: coordinates must be x1, x2, v, y4");
    for (int e : eps)
      if (e != 1 && e != -1) throw std::invalid_argument("ansatz: eps signs");
  }
};

struct GeneratedSolution {
  Splitting s;
  NConnection N;   // column 0: w_i, column 1: n_i
  DMetric dm;      // g = diag(e1 e^psi, e2 e^psi), h = diag(h3, h4)
  Expression sigma, h3, h4;
  std::array<Expression, 2> w, nk;
  bool vacuum = false;
  std::vector<std::string> warnings;
  AnsatzData input;
  SourceSpec source;
};

class AnsatzError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Polarization factor: sigma0 - (eps3/8) h0bar^2 * running v-integral of
/// Upsilon1 f* (f - f0) from v0.  The integral is cached over the chart's
/// v-range per (x1, x2).
inline Expression polarization(const AnsatzData& ad, const SourceSpec& u1) {
  ad.validate();
  const Expression fstar = ad.f.diff("v");
  const Expression integrand = u1.Upsilon1 * fstar * (ad.f - ad.f0);
  if (integrand.is_zero()) return ad.sigma0;
  const auto& vbox = ad.chart.box[2];
  Expression integral =
      Expression::integral(integrand, "v", ad.v0, vbox[0], vbox[1]);
  const double c = -static_cast<double>(ad.eps[2]) / 8.0;
  return ad.sigma0 + Expression::constant(c) * ad.h0bar * ad.h0bar * integral;
}

namespace detail {

// Scan the chart in (x1, x2) and along a uniform v-grid; report zero
// crossings or near-zeros of `q`.  Used for the degeneracy contracts.
inline bool scan_for_zero(const Expression& q, const Splitting& chart,
                          std::uint64_t seed) {
  SplitMix64 rng(seed);
  const auto& vbox = chart.box[2];
  for (int t = 0; t < 16; ++t) {
    Point p = geo::sample_point(chart, rng);
    double first = 0.0;
    for (int j = 0; j <= 128; ++j) {
      p["v"] = vbox[0] + (vbox[1] - vbox[0]) * j / 128.0;
      const double val = q.eval(p);
      if (std::fabs(val) < 1e-12) return true;
      if (j == 0) first = val;
      else if (val * first < 0.0) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Build the ansatz blocks.  h3 = eps3 h0^2 (f*)^2 |sigma|,
/// h4 = eps4 (f - f0)^2, w_i = -d_i sigma / d_v sigma (vacuum: override),
/// n_k = n1_k + n2_k * integral of sqrt|h3| / sqrt|h4|^3.  The integrand is
/// the exact first integral of the off-diagonal equation; a commonly quoted
/// variant with |h3| in place of its square root coincides with it only for
/// f linear in v and fails the field equations otherwise.
inline GeneratedSolution generate_solution(const AnsatzData& ad, const SourceSpec& u1,
                                           bool vacuum) {
  ad.validate();
  const Expression fstar = ad.f.diff("v");
  const Expression F = ad.f - ad.f0;
  if (detail::scan_for_zero(fstar, ad.chart, 0xF0u))
    throw AnsatzError("generate_solution: f* vanishes on the chart box");

  GeneratedSolution sol;
  sol.s = ad.chart;
  sol.vacuum = vacuum;
  sol.input = ad;
  sol.source = u1;
  sol.sigma = vacuum ? Expression::constant(1.0) : polarization(ad, u1);

  const Expression h0sq = Expression::constant(static_cast<double>(ad.eps[2]) *
                                               ad.h0 * ad.h0);
  sol.h3 = h0sq * fstar * fstar * sym::abs(sol.sigma);
  sol.h4 = Expression::constant(static_cast<double>(ad.eps[3])) * F * F;

  const Expression sstar = sol.sigma.diff("v");
  if (vacuum || sstar.is_zero()) {
    // The generic w formula is 0/0 for v-independent polarization.
    sol.w = ad.w_vac;
  } else {
    sol.w[0] = -sol.sigma.diff("x1") / sstar;
    sol.w[1] = -sol.sigma.diff("x2") / sstar;
  }

  const bool need_n_integral = !ad.n2[0].is_zero() || !ad.n2[1].is_zero();
  if (need_n_integral) {
    if (detail::scan_for_zero(F, ad.chart, 0xF1u))
      throw AnsatzError("generate_solution: f-degeneracy (f - f0 crosses zero)");
    const auto& vbox = ad.chart.box[2];
    Expression nint = Expression::integral(
        sym::sqrt(sym::abs(sol.h3)) * sym::abs(sol.h4).pow(-1.5), "v", ad.v0,
        vbox[0], vbox[1]);
    for (int k = 0; k < 2; ++k) sol.nk[k] = ad.n1[k] + ad.n2[k] * nint;
  } else {
    for (int k = 0; k < 2; ++k) sol.nk[k] = ad.n1[k];
  }

  if (!vacuum && detail::scan_for_zero(sol.sigma, ad.chart, 0xF2u))
    sol.warnings.push_back("polarization changes sign inside the box; "
                           "h3 degenerates where it vanishes");

  sol.N = NConnection(2, std::vector<Expression>(2));
  sol.N[0][0] = sol.w[0];
  sol.N[1][0] = sol.w[1];
  sol.N[0][1] = sol.nk[0];
  sol.N[1][1] = sol.nk[1];

  const Expression epsi = sym::exp(ad.psi);
  sol.dm.g = sym::expr_mat(2, 2);
  sol.dm.g[0][0] = Expression::constant(static_cast<double>(ad.eps[0])) * epsi;
  sol.dm.g[1][1] = Expression::constant(static_cast<double>(ad.eps[1])) * epsi;
  sol.dm.g[0][1] = sol.dm.g[1][0] = Expression::constant(0.0);
  sol.dm.h = sym::expr_mat(2, 2);
  sol.dm.h[0][0] = sol.h3;
  sol.dm.h[1][1] = sol.h4;
  sol.dm.h[0][1] = sol.dm.h[1][0] = Expression::constant(0.0);
  return sol;
}

struct EinsteinReport {
  // Vacuum: per-component max |Ric_ab| over points.  Sourced: per-component
  // max |G^a_b - kappa Ups^a_b| in mixed indices.
  std::array<std::array<double, 4>, 4> component{};
  double max_residual = 0.0;
  double psi_residual = 0.0;  // |eps1 psi.. + eps2 psi'' - Upsilon3|, reported only
  std::vector<std::string> warnings;
};

/// Evaluate the field-equation residuals of a solution at `npoints` samples.
inline EinsteinReport einstein_residual(const GeneratedSolution& sol,
                                        const SourceSpec& u1, int npoints,
                                        std::uint64_t seed = 0xE15u) {
  const Splitting& s = sol.s;
  Frames fr(s, sol.N);
  Nonholonomy w(s, sol.N);
  DConnection conn = geo::canonical_connection(s, sol.N, sol.dm);
  auto R = geo::curvature(s, fr, w, conn);
  auto ric = geo::ricci(s, R);

  const bool vac = u1.Upsilon1.is_zero() && u1.Upsilon3.is_zero();
  EinsteinReport rep;

  sym::ExprMat mixed;  // G^a_b - kappa Ups^a_b when sourced
  if (!vac) {
    sym::ExprMat ginv = sym::inverse(sol.dm.g);
    sym::ExprMat hinv = sym::inverse(sol.dm.h);
    sym::ExprMat ricup = sym::expr_mat(4, 4);  // R^a_b
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t i = 0; i < 2; ++i) {
        Expression acc = Expression::constant(0.0);
        for (std::size_t j = 0; j < 2; ++j) acc = acc + ginv[i][j] * ric[j][b];
        ricup[i][b] = acc;
      }
      for (std::size_t a = 0; a < 2; ++a) {
        Expression acc = Expression::constant(0.0);
        for (std::size_t c = 0; c < 2; ++c) acc = acc + hinv[a][c] * ric[2 + c][b];
        ricup[2 + a][b] = acc;
      }
    }
    Expression scal = ricup[0][0] + ricup[1][1] + ricup[2][2] + ricup[3][3];
    const Expression kap = Expression::constant(u1.kappa);
    mixed = sym::expr_mat(4, 4);
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        Expression e = ricup[a][b];
        if (a == b) {
          e = e - Expression::constant(0.5) * scal;
          e = e - kap * (a < 2 ? u1.Upsilon1 : u1.Upsilon3);
        }
        mixed[a][b] = e;
      }
  }

  const Expression psi_res =
      Expression::constant(static_cast<double>(sol.input.eps[0])) *
          sol.input.psi.diff("x1").diff("x1") +
      Expression::constant(static_cast<double>(sol.input.eps[1])) *
          sol.input.psi.diff("x2").diff("x2") -
      u1.Upsilon3;

  SplitMix64 rng(seed);
  for (int t = 0; t < npoints; ++t) {
    Point p = geo::sample_point(s, rng);
    try {
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
          const double r = vac ? std::fabs(ric[a][b].eval(p))
                               : std::fabs(mixed[a][b].eval(p));
          rep.component[a][b] = std::max(rep.component[a][b], r);
          rep.max_residual = std::max(rep.max_residual, r);
        }
      rep.psi_residual = std::max(rep.psi_residual, std::fabs(psi_res.eval(p)));
    } catch (const sym::EvalError& e) {
      rep.warnings.push_back(std::string("skipped point: ") + e.what());
    }
  }
  return rep;
}

struct LcConstraintReport {
  double r_phi = 0.0;  // |h4* phi / (h3 h4) - Upsilon1|
  double r_w = 0.0;    // |w1' - w2. + w2 w1* - w1 w2*|
  double r_n = 0.0;    // |n1' - n2.|
  bool phi_degenerate = false;  // h4* ~ 0 branch: constraint read as Upsilon1 -> 0
  std::vector<std::string> warnings;
};

/// Report (never enforce) the extra closure conditions selecting
/// torsion-free configurations from a generated family.
inline LcConstraintReport lc_constraint_residual(const GeneratedSolution& sol,
                                                 const SourceSpec& u1, int npoints,
                                                 std::uint64_t seed = 0x1Cu) {
  const Expression h4s = sol.h4.diff("v");
  const Expression phi = sym::ln(sym::abs(h4s / sym::sqrt(sym::abs(sol.h3 * sol.h4))));
  const Expression c_phi = h4s * phi / (sol.h3 * sol.h4) - u1.Upsilon1;
  const Expression c_w = sol.w[0].diff("x2") - sol.w[1].diff("x1") +
                         sol.w[1] * sol.w[0].diff("v") - sol.w[0] * sol.w[1].diff("v");
  const Expression c_n = sol.nk[0].diff("x2") - sol.nk[1].diff("x1");

  LcConstraintReport rep;
  SplitMix64 rng(seed);
  for (int t = 0; t < npoints; ++t) {
    Point p = geo::sample_point(sol.s, rng);
    try {
      rep.r_w = std::max(rep.r_w, std::fabs(c_w.eval(p)));
      rep.r_n = std::max(rep.r_n, std::fabs(c_n.eval(p)));
      if (std::fabs(h4s.eval(p)) < 1e-12) {
        rep.phi_degenerate = true;  // degenerate branch, Upsilon1 -> 0 reading
        continue;
      }
      rep.r_phi = std::max(rep.r_phi, std::fabs(c_phi.eval(p)));
    } catch (const sym::EvalError& e) {
      rep.warnings.push_back(std::string("skipped point: ") + e.what());
    }
  }
  return rep;
}

}  // namespace anholo::grav
