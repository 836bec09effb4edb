#pragma once

#include <anholo/manifold.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace anholo::geo {

/// Linear connection in the adapted frame, direction index last:
/// nabla_{e_beta} e_alpha = Gamma[gamma][alpha][beta] e_gamma.
struct DConnection {
  std::vector<ExprMat> Gamma;

  static DConnection zero(std::size_t dim) {
    DConnection c;
    c.Gamma.assign(dim, sym::expr_mat(dim, dim));
    return c;
  }
};

inline DConnection operator+(const DConnection& x, const DConnection& y) {
  const std::size_t d = x.Gamma.size();
  DConnection out = DConnection::zero(d);
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        out.Gamma[g][a][b] = x.Gamma[g][a][b] + y.Gamma[g][a][b];
  return out;
}

/// Metric-compatible distribution-preserving connection determined by (N, g, h).
/// Horizontal and vertical blocks only; mixed coefficients vanish.
inline DConnection canonical_connection(const Splitting& s, const NConnection& N,
                                        const DMetric& dm) {
  const std::size_t n = s.n, m = s.m;
  Frames fr(s, N);
  DConnection conn = DConnection::zero(s.dim());
  const Expression half = Expression::constant(0.5);

  if (n > 0) {
    ExprMat ginv = sym::inverse(dm.g);
    // L^i_jk = 1/2 g^ir (e_k g_jr + e_j g_kr - e_r g_jk)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
          Expression acc = Expression::constant(0.0);
          for (std::size_t r = 0; r < n; ++r)
            acc = acc + ginv[i][r] * (fr.apply(k, dm.g[j][r]) + fr.apply(j, dm.g[k][r]) -
                                      fr.apply(r, dm.g[j][k]));
          conn.Gamma[i][j][k] = half * acc;
        }
    // C^i_jc = 1/2 g^ik e_c g_jk
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < m; ++c) {
          Expression acc = Expression::constant(0.0);
          for (std::size_t k = 0; k < n; ++k)
            acc = acc + ginv[i][k] * fr.apply(s.n + c, dm.g[j][k]);
          conn.Gamma[i][j][n + c] = half * acc;
        }
  }

  if (m > 0) {
    ExprMat hinv = sym::inverse(dm.h);
    // L^a_bk = d_b N_k^a + 1/2 h^ac (e_k h_bc - h_dc d_b N_k^d - h_db d_c N_k^d)
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t k = 0; k < n; ++k) {
          Expression acc = N[k][a].diff(s.vname(b));
          for (std::size_t c = 0; c < m; ++c) {
            Expression inner = fr.apply(k, dm.h[b][c]);
            for (std::size_t d = 0; d < m; ++d)
              inner = inner - dm.h[d][c] * N[k][d].diff(s.vname(b)) -
                      dm.h[d][b] * N[k][d].diff(s.vname(c));
            acc = acc + half * hinv[a][c] * inner;
          }
          conn.Gamma[n + a][n + b][k] = acc;
        }
    // C^a_bc = 1/2 h^ad (e_c h_bd + e_b h_cd - e_d h_bc)
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t c = 0; c < m; ++c) {
          Expression acc = Expression::constant(0.0);
          for (std::size_t d = 0; d < m; ++d)
            acc = acc + hinv[a][d] *
                            (fr.apply(n + c, dm.h[b][d]) + fr.apply(n + b, dm.h[c][d]) -
                             fr.apply(n + d, dm.h[b][c]));
          conn.Gamma[n + a][n + b][n + c] = half * acc;
        }
  }
  return conn;
}

/// T[gamma](alpha, beta): torsion components in the adapted frame,
/// T(e_alpha wedge e_beta) = Gamma^g_ab - Gamma^g_ba + bracket coefficient.
inline std::vector<ExprMat> torsion(const Splitting& s, const Nonholonomy& w,
                                    const DConnection& conn) {
  const std::size_t d = s.dim();
  std::vector<ExprMat> T(d, sym::expr_mat(d, d));
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        T[g][a][b] = conn.Gamma[g][a][b] - conn.Gamma[g][b][a] + w.coeff(g, a, b);
  return T;
}

/// R[gamma][delta](alpha, beta): curvature of the connection in the adapted
/// frame, antisymmetric in (alpha, beta),
///   R^g_{d ab} = e_b G^g_{da} - e_a G^g_{db}
///              + G^m_{da} G^g_{mb} - G^m_{db} G^g_{ma} + w^m_{ab} G^g_{dm}.
using Curvature = std::vector<std::vector<ExprMat>>;

inline Curvature curvature(const Splitting& s, const Frames& fr, const Nonholonomy& w,
                           const DConnection& conn) {
  const std::size_t d = s.dim();
  Curvature R(d, std::vector<ExprMat>(d, sym::expr_mat(d, d)));
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t de = 0; de < d; ++de)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          Expression acc = fr.apply(b, conn.Gamma[g][de][a]) -
                           fr.apply(a, conn.Gamma[g][de][b]);
          for (std::size_t mu = 0; mu < d; ++mu)
            acc = acc + conn.Gamma[mu][de][a] * conn.Gamma[g][mu][b] -
                  conn.Gamma[mu][de][b] * conn.Gamma[g][mu][a] +
                  w.coeff(mu, a, b) * conn.Gamma[g][de][mu];
          R[g][de][a][b] = acc;
        }
  return R;
}

/// Ricci contraction Ric(delta, alpha) = R^gamma_{delta alpha gamma}.
inline ExprMat ricci(const Splitting& s, const Curvature& R) {
  const std::size_t d = s.dim();
  ExprMat ric = sym::expr_mat(d, d);
  for (std::size_t de = 0; de < d; ++de)
    for (std::size_t a = 0; a < d; ++a) {
      Expression acc = Expression::constant(0.0);
      for (std::size_t g = 0; g < d; ++g) acc = acc + R[g][de][a][g];
      ric[de][a] = acc;
    }
  return ric;
}

/// Scalar curvature with the block-diagonal frame metric:
/// g^ij Ric_ij + h^ab Ric_ab.
inline Expression scalar_curvature(const Splitting& s, const DMetric& dm,
                                   const ExprMat& ric) {
  Expression acc = Expression::constant(0.0);
  if (s.n > 0) {
    ExprMat ginv = sym::inverse(dm.g);
    for (std::size_t i = 0; i < s.n; ++i)
      for (std::size_t j = 0; j < s.n; ++j) acc = acc + ginv[i][j] * ric[i][j];
  }
  if (s.m > 0) {
    ExprMat hinv = sym::inverse(dm.h);
    for (std::size_t a = 0; a < s.m; ++a)
      for (std::size_t b = 0; b < s.m; ++b)
        acc = acc + hinv[a][b] * ric[s.n + a][s.n + b];
  }
  return acc;
}

/// Residual of metric compatibility: out[gamma](alpha, beta) =
/// e_gamma G_ab - Gamma^mu_{alpha gamma} G_mb - Gamma^mu_{beta gamma} G_am,
/// with G the block-diagonal frame metric.  Identically zero for a
/// metric-compatible connection.
inline std::vector<ExprMat> metric_compat_residual(const Splitting& s, const Frames& fr,
                                                   const DMetric& dm,
                                                   const DConnection& conn) {
  const std::size_t d = s.dim();
  std::vector<ExprMat> out(d, sym::expr_mat(d, d));
  for (std::size_t g = 0; g < d; ++g)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        Expression acc = fr.apply(g, frame_metric(s, dm, a, b));
        for (std::size_t mu = 0; mu < d; ++mu)
          acc = acc - conn.Gamma[mu][a][g] * frame_metric(s, dm, mu, b) -
                conn.Gamma[mu][b][g] * frame_metric(s, dm, a, mu);
        out[g][a][b] = acc;
      }
  return out;
}

/// Prescribed constant data for the vertical L-block: h0 is the constant
/// vertical metric, L0[a][b][k] the target coefficients.
struct ConstantConnectionSpec {
  std::vector<std::vector<double>> h0;
  std::vector<std::vector<std::vector<double>>> L0;
};

/// Residual of the constant-coefficient condition
///   2 L0^a_bk = dN^a_k/dy^b - h0^ac h0_db dN^d_k/dy^c,
/// maximized over sample points and indices.  Zero means the canonical
/// vertical L-block of (N, const g, h0) equals L0 everywhere.
inline double constant_connection_check(const Splitting& s, const NConnection& N,
                                        const ConstantConnectionSpec& spec,
                                        int npoints, std::uint64_t seed = 0xCCu) {
  const std::size_t n = s.n, m = s.m;
  if (spec.h0.size() != m || spec.L0.size() != m)
    throw std::invalid_argument("constant_connection_check: spec size mismatch");
  ExprMat h0e = sym::expr_mat(m, m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) h0e[a][b] = Expression::constant(spec.h0[a][b]);
  ExprMat hinv_e = sym::inverse(h0e);
  std::vector<std::vector<double>> hinv(m, std::vector<double>(m));
  const Point origin;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) hinv[a][b] = hinv_e[a][b].eval(origin);

  std::vector<ExprMat> dN(m, sym::expr_mat(n, m));  // dN[b](k, a) = dN^a_k/dy^b
  for (std::size_t b = 0; b < m; ++b)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t a = 0; a < m; ++a) dN[b][k][a] = N[k][a].diff(s.vname(b));

  SplitMix64 rng(seed);
  double worst = 0.0;
  for (int t = 0; t < npoints; ++t) {
    Point p = geo::sample_point(s, rng);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t k = 0; k < n; ++k) {
          double rhs = dN[b][k][a].eval(p);
          for (std::size_t c = 0; c < m; ++c)
            for (std::size_t d = 0; d < m; ++d)
              rhs -= hinv[a][c] * spec.h0[d][b] * dN[c][k][d].eval(p);
          worst = std::max(worst, std::fabs(2.0 * spec.L0[a][b][k] - rhs));
        }
  }
  return worst;
}

/// Distortion from the canonical connection to the torsion-free
/// metric-compatible one: lc = canonical + distortion.  The canonical
/// coefficients are passed in so the vertical L-block can be reused.
inline DConnection lc_distortion(const Splitting& s, const NConnection& N,
                                 const DMetric& dm, const DConnection& canonical) {
  const std::size_t n = s.n, m = s.m;
  Frames fr(s, N);
  Nonholonomy w(s, N);
  DConnection Z = DConnection::zero(s.dim());
  if (n == 0 || m == 0) return Z;  // single-block frame is already torsion-free

  ExprMat ginv = sym::inverse(dm.g);
  ExprMat hinv = sym::inverse(dm.h);
  const Expression half = Expression::constant(0.5);

  // deg[a](j, k) = e_{n+a} g_jk;  rol[a](b, k) = L^a_bk - d_b N_k^a.
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        // vertical leg of nabla_k e_j: -1/2 h^ab e_b g_jk - 1/2 Omega^a_jk
        Expression acc = -half * w.omega(a, j, k);
        for (std::size_t b = 0; b < m; ++b)
          acc = acc - half * hinv[a][b] * fr.apply(n + b, dm.g[j][k]);
        Z.Gamma[n + a][j][k] = acc;
      }

  // omh(i, k, b) = 1/2 Omega^c_jk h_cb g^ji, shared by two blocks below.
  auto omh = [&](std::size_t i, std::size_t k, std::size_t b) {
    Expression acc = Expression::constant(0.0);
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t j = 0; j < n; ++j)
        acc = acc + w.omega(c, j, k) * dm.h[c][b] * ginv[j][i];
    return half * acc;
  };

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t b = 0; b < m; ++b) {
        // horizontal leg of nabla_k e_b picks up the canonical C-coefficient
        Z.Gamma[i][n + b][k] = omh(i, k, b) + canonical.Gamma[i][k][n + b];
        // horizontal leg of nabla_b e_k
        Z.Gamma[i][k][n + b] = omh(i, k, b);
      }

  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t k = 0; k < n; ++k)
        // vertical leg of nabla_b e_k: L^a_bk - d_b N_k^a
        Z.Gamma[n + a][k][n + b] =
            canonical.Gamma[n + a][n + b][k] - N[k][a].diff(s.vname(b));

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t c = 0; c < m; ++c) {
        // horizontal leg of nabla_c e_b
        Expression acc = Expression::constant(0.0);
        for (std::size_t j = 0; j < n; ++j) {
          Expression inner = Expression::constant(0.0) - fr.apply(j, dm.h[b][c]);
          for (std::size_t d = 0; d < m; ++d)
            inner = inner + dm.h[d][b] * N[j][d].diff(s.vname(c)) +
                    dm.h[d][c] * N[j][d].diff(s.vname(b));
          acc = acc + ginv[i][j] * inner;
        }
        Z.Gamma[i][n + b][n + c] = half * acc;
      }

  return Z;
}

}  // namespace anholo::geo
