#pragma once

#include <anholo/expr.hpp>
#include <anholo/rng.hpp>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace anholo::geo {

using sym::Expression;
using sym::ExprMat;
using sym::Point;

/// Coordinate split into n horizontal and m vertical directions.
/// Frame indices run 0..n+m-1 with the horizontal block first; `box` bounds
/// the region tests and residual scans sample from.
struct Splitting {
  std::size_t n = 0, m = 0;
  std::vector<std::string> names;               // size n + m, horizontal first
  std::vector<std::array<double, 2>> box;       // one [lo, hi] per coordinate

  std::size_t dim() const { return n + m; }
  bool horizontal(std::size_t alpha) const { return alpha < n; }
  const std::string& name(std::size_t alpha) const { return names[alpha]; }
  /// Name of vertical coordinate with local index a in 0..m-1.
  const std::string& vname(std::size_t a) const { return names[n + a]; }

  void validate() const {
    if (names.size() != n + m || box.size() != n + m)
      throw std::invalid_argument("splitting: names/box size mismatch");
    for (const auto& b : box)
      if (!(b[0] < b[1])) throw std::invalid_argument("splitting: empty box");
  }
};

inline Point sample_point(const Splitting& s, SplitMix64& rng) {
  Point p;
  for (std::size_t k = 0; k < s.dim(); ++k)
    p[s.names[k]] = rng.uniform(s.box[k][0], s.box[k][1]);
  return p;
}

/// N[i][a]: coefficient of the i-th horizontal frame leg along the a-th
/// vertical coordinate, e_i = d_i - N[i][a] d_a.
using NConnection = std::vector<std::vector<Expression>>;

inline NConnection zero_nconnection(const Splitting& s) {
  return NConnection(s.n, std::vector<Expression>(s.m));
}

/// Metric blocks in the adapted frame: g on the horizontal distribution,
/// h on the vertical one.  Both symmetric.
struct DMetric {
  ExprMat g;  // n x n
  ExprMat h;  // m x m
};

/// Adapted frame fields e_i = d_i - N_i^a d_a (horizontal), e_a = d_a
/// (vertical), acting on scalars.
class Frames {
 public:
  Frames(const Splitting& s, const NConnection& N) : s_(s), N_(N) {
    if (N.size() != s.n) throw std::invalid_argument("frames: N rows != n");
    for (const auto& row : N)
      if (row.size() != s.m) throw std::invalid_argument("frames: N cols != m");
  }

  const Splitting& splitting() const { return s_; }
  const NConnection& nconnection() const { return N_; }

  Expression apply(std::size_t alpha, const Expression& q) const {
    Expression d = q.diff(s_.name(alpha));
    if (!s_.horizontal(alpha)) return d;
    for (std::size_t a = 0; a < s_.m; ++a)
      d = d - N_[alpha][a] * q.diff(s_.vname(a));
    return d;
  }

 private:
  Splitting s_;
  NConnection N_;
};

/// Frame bracket coefficients: [e_alpha, e_beta] = coeff(gamma, alpha, beta) e_gamma.
/// Only vertical outputs occur; omega is the purely horizontal-pair block.
class Nonholonomy {
 public:
  Nonholonomy(const Splitting& s, const NConnection& N) : s_(s) {
    Frames fr(s, N);
    omega_.assign(s.m, sym::expr_mat(s.n, s.n));
    dNdy_.assign(s.m, sym::expr_mat(s.n, s.m));
    for (std::size_t a = 0; a < s.m; ++a) {
      for (std::size_t i = 0; i < s.n; ++i) {
        for (std::size_t j = 0; j < s.n; ++j) {
          // d_j N_i^a - d_i N_j^a + N_i^b d_b N_j^a - N_j^b d_b N_i^a
          Expression w = N[i][a].diff(s.name(j)) - N[j][a].diff(s.name(i));
          for (std::size_t b = 0; b < s.m; ++b)
            w = w + N[i][b] * N[j][a].diff(s.vname(b)) -
                N[j][b] * N[i][a].diff(s.vname(b));
          omega_[a][i][j] = w;
        }
        for (std::size_t c = 0; c < s.m; ++c)
          dNdy_[a][i][c] = N[i][c].diff(s.vname(a));
      }
    }
  }

  const Expression& omega(std::size_t a, std::size_t i, std::size_t j) const {
    return omega_[a][i][j];
  }

  Expression coeff(std::size_t gamma, std::size_t alpha, std::size_t beta) const {
    const std::size_t n = s_.n;
    if (gamma < n) return Expression::constant(0.0);
    const std::size_t c = gamma - n;
    const bool ha = s_.horizontal(alpha), hb = s_.horizontal(beta);
    if (ha && hb) return omega_[c][alpha][beta];
    if (ha && !hb) return dNdy_[beta - n][alpha][c];
    if (!ha && hb) return -dNdy_[alpha - n][beta][c];
    return Expression::constant(0.0);
  }

 private:
  Splitting s_;
  std::vector<ExprMat> omega_;  // [a](i, j)
  std::vector<ExprMat> dNdy_;   // [a](i, c) = d N_i^c / d y^a
};

/// Coordinate-basis metric of the split structure:
///   G_ij    = g_ij + N_i^a N_j^b h_ab
///   G_i,a   = N_i^b h_ba
///   G_a,b   = h_ab.
inline ExprMat assemble_offdiagonal(const Splitting& s, const NConnection& N,
                                    const DMetric& dm) {
  const std::size_t n = s.n, m = s.m, d = n + m;
  ExprMat G = sym::expr_mat(d, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Expression e = dm.g[i][j];
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          e = e + N[i][a] * N[j][b] * dm.h[a][b];
      G[i][j] = e;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < m; ++a) {
      Expression e = Expression::constant(0.0);
      for (std::size_t b = 0; b < m; ++b) e = e + N[i][b] * dm.h[b][a];
      G[i][n + a] = e;
      G[n + a][i] = e;
    }
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) G[n + a][n + b] = dm.h[a][b];
  return G;
}

struct SplitMetric {
  NConnection N;
  DMetric metric;
};

/// Recover (N, g, h) from a coordinate-basis metric with invertible vertical
/// block: N_i^a = h^{ab} G_i,b and g_ij = G_ij - N_i^a N_j^b h_ab.
/// The vertical block determinant is probed at `samples` points of the box;
/// a near-zero value (|det| < 1e-12) is rejected.
inline SplitMetric transform_nconnection(const Splitting& s, const ExprMat& G,
                                         std::uint64_t seed = 0x5EEDu,
                                         int samples = 32) {
  const std::size_t n = s.n, m = s.m;
  ExprMat h = sym::expr_mat(m, m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) h[a][b] = G[n + a][n + b];

  Expression det = sym::determinant(h);
  SplitMix64 rng(seed);
  for (int t = 0; t < samples; ++t) {
    Point p = sample_point(s, rng);
    if (std::fabs(det.eval(p)) < 1e-12)
      throw std::runtime_error("transform_nconnection: vertical block singular in box");
  }

  ExprMat hinv = sym::inverse(h);
  SplitMetric out;
  out.N = NConnection(n, std::vector<Expression>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < m; ++a) {
      Expression e = Expression::constant(0.0);
      for (std::size_t b = 0; b < m; ++b) e = e + hinv[a][b] * G[i][n + b];
      out.N[i][a] = e;
    }
  out.metric.h = h;
  out.metric.g = sym::expr_mat(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Expression e = G[i][j];
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          e = e - out.N[i][a] * out.N[j][b] * h[a][b];
      out.metric.g[i][j] = e;
    }
  return out;
}

/// Frame-basis metric components G(e_alpha, e_beta): block diagonal by
/// construction of the adapted frame.
inline Expression frame_metric(const Splitting& s, const DMetric& dm,
                               std::size_t alpha, std::size_t beta) {
  const bool ha = s.horizontal(alpha), hb = s.horizontal(beta);
  if (ha && hb) return dm.g[alpha][beta];
  if (!ha && !hb) return dm.h[alpha - s.n][beta - s.n];
  return Expression::constant(0.0);
}

}  // namespace anholo::geo
