#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "anholo/expr.hpp"
#include "anholo/fft.hpp"

namespace anholo::flow {

using sym::Expression;

/// Requested periodic antiderivative does not exist (component mean too large).
class MeanError : public std::runtime_error {
 public:
  MeanError(std::size_t component, double mean)
      : std::runtime_error("dx_inverse: component " + std::to_string(component) +
                           " has nonzero mean " + std::to_string(mean)),
        component_(component),
        mean_(mean) {}
  std::size_t component() const { return component_; }
  double mean() const { return mean_; }

 private:
  std::size_t component_;
  double mean_;
};

/// Time step exceeds the documented stability bound for the requested flow.
class StabilityError : public std::runtime_error {
 public:
  StabilityError(double dt, double bound)
      : std::runtime_error("evolve: dt = " + std::to_string(dt) +
                           " exceeds the stability bound " + std::to_string(bound)),
        bound_(bound) {}
  double bound() const { return bound_; }

 private:
  double bound_;
};

// ---------------------------------------------------------------------------
// Periodic vector field sampled on a uniform grid.

/// R^p-valued field on N equispaced nodes of a periodic box of length Lbox.
/// comp[q][j] is component q at node j, l_j = j*Lbox/N.
struct CurveField {
  std::size_t p = 1;
  std::size_t N = 0;
  double Lbox = 0.0;
  std::vector<std::vector<double>> comp;

  double dl() const { return Lbox / static_cast<double>(N); }
  double node(std::size_t j) const { return static_cast<double>(j) * dl(); }
};

inline CurveField make_field(std::size_t p, std::size_t N, double Lbox) {
  if (p < 1) throw std::invalid_argument("make_field: p must be >= 1");
  if (N < 64 || !fft::is_power_of_two(N))
    throw std::invalid_argument("make_field: N must be a power of two >= 64");
  if (!(Lbox > 0.0)) throw std::invalid_argument("make_field: Lbox must be positive");
  CurveField f;
  f.p = p;
  f.N = N;
  f.Lbox = Lbox;
  f.comp.assign(p, std::vector<double>(N, 0.0));
  return f;
}

/// Sample symbolic components (functions of the variable "l") on the grid.
inline CurveField field_from_expr(const std::vector<Expression>& comps, std::size_t N,
                                  double Lbox) {
  CurveField f = make_field(comps.size(), N, Lbox);
  for (std::size_t q = 0; q < f.p; ++q) {
    for (std::size_t j = 0; j < N; ++j) {
      f.comp[q][j] = comps[q].eval({{"l", f.node(j)}});
    }
  }
  return f;
}

inline double field_rms(const CurveField& u) {
  double s = 0.0;
  for (const auto& c : u.comp)
    for (double x : c) s += x * x;
  return std::sqrt(s / (static_cast<double>(u.p) * static_cast<double>(u.N)));
}

inline double field_max_abs(const CurveField& u) {
  double m = 0.0;
  for (const auto& c : u.comp)
    for (double x : c) m = std::max(m, std::fabs(x));
  return m;
}

namespace detail {

constexpr double kPi = 3.14159265358979323846;

inline void check_shapes(const CurveField& a, const CurveField& b, const char* who) {
  if (a.p != b.p || a.N != b.N || a.Lbox != b.Lbox)
    throw std::invalid_argument(std::string(who) + ": field shapes differ");
}

inline double series_mean(const std::vector<double>& u) {
  double s = 0.0;
  for (double x : u) s += x;
  return s / static_cast<double>(u.size());
}

inline double series_rms(const std::vector<double>& u) {
  double s = 0.0;
  for (double x : u) s += x * x;
  return std::sqrt(s / static_cast<double>(u.size()));
}

// Spectral derivative of one periodic series.  Odd orders zero the Nyquist
// bin so real input stays real.
inline std::vector<double> series_deriv(const std::vector<double>& u, int order, double L) {
  const std::size_t n = u.size();
  std::vector<std::complex<double>> a(n);
  for (std::size_t j = 0; j < n; ++j) a[j] = u[j];
  fft::transform(a, false);
  for (std::size_t j = 0; j < n; ++j) {
    const long f = (j <= n / 2) ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
    if ((order % 2) != 0 && j == n / 2) {
      a[j] = 0.0;
      continue;
    }
    const std::complex<double> ik(0.0, 2.0 * kPi * static_cast<double>(f) / L);
    std::complex<double> fac(1.0, 0.0);
    for (int o = 0; o < order; ++o) fac *= ik;
    a[j] *= fac;
  }
  fft::transform(a, true);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = a[j].real();
  return out;
}

// Mean-zero spectral antiderivative; the k = 0 and Nyquist bins are dropped.
// The caller owns the mean-size contract.
inline std::vector<double> series_antideriv(const std::vector<double>& u, double L) {
  const std::size_t n = u.size();
  std::vector<std::complex<double>> a(n);
  for (std::size_t j = 0; j < n; ++j) a[j] = u[j];
  fft::transform(a, false);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == 0 || j == n / 2) {
      a[j] = 0.0;
      continue;
    }
    const long f = (j <= n / 2) ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
    const std::complex<double> ik(0.0, 2.0 * kPi * static_cast<double>(f) / L);
    a[j] /= ik;
  }
  fft::transform(a, true);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = a[j].real();
  return out;
}

// Checked mean-zero antiderivative of a scalar series.
inline std::vector<double> antideriv_checked(const std::vector<double>& u, double L,
                                             std::size_t component_tag) {
  const double m = series_mean(u);
  if (std::fabs(m) >= 1e-8 * (series_rms(u) + 1e-30)) throw MeanError(component_tag, m);
  return series_antideriv(u, L);
}

inline std::vector<double> series_dot(const CurveField& a, const CurveField& b) {
  std::vector<double> s(a.N, 0.0);
  for (std::size_t q = 0; q < a.p; ++q)
    for (std::size_t j = 0; j < a.N; ++j) s[j] += a.comp[q][j] * b.comp[q][j];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spectral calculus.

/// order-th spectral derivative, order in 1..5.
inline CurveField dx(const CurveField& u, int order = 1) {
  if (order < 1 || order > 5) throw std::invalid_argument("dx: order must be in 1..5");
  CurveField out = u;
  for (std::size_t q = 0; q < u.p; ++q)
    out.comp[q] = detail::series_deriv(u.comp[q], order, u.Lbox);
  return out;
}

/// Mean-zero periodic antiderivative per component.  Components whose grid
/// mean is not negligible against the field rms have no periodic
/// antiderivative and are rejected.
inline CurveField dx_inverse(const CurveField& u) {
  const double scale = field_rms(u) + 1e-30;
  CurveField out = u;
  for (std::size_t q = 0; q < u.p; ++q) {
    const double m = detail::series_mean(u.comp[q]);
    if (std::fabs(m) >= 1e-8 * scale) throw MeanError(q, m);
    out.comp[q] = detail::series_antideriv(u.comp[q], u.Lbox);
  }
  return out;
}

/// Spectral translation: returns w with w(l) = u(l - s).
inline CurveField translate(const CurveField& u, double s) {
  CurveField out = u;
  for (std::size_t q = 0; q < u.p; ++q) {
    const std::size_t n = u.N;
    std::vector<std::complex<double>> a(n);
    for (std::size_t j = 0; j < n; ++j) a[j] = u.comp[q][j];
    fft::transform(a, false);
    for (std::size_t j = 0; j < n; ++j) {
      const long f = (j <= n / 2) ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
      const double k = 2.0 * detail::kPi * static_cast<double>(f) / u.Lbox;
      a[j] *= std::complex<double>(std::cos(k * s), -std::sin(k * s));
    }
    fft::transform(a, true);
    for (std::size_t j = 0; j < n; ++j) out.comp[q][j] = a[j].real();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Symplectic / cosymplectic operator pair.

/// J(e) = D_x e + D^{-1}(v.e) v.
inline CurveField apply_J(const CurveField& v, const CurveField& e) {
  detail::check_shapes(v, e, "apply_J");
  CurveField out = dx(e);
  const std::vector<double> S =
      detail::antideriv_checked(detail::series_dot(v, e), v.Lbox, 0);
  for (std::size_t q = 0; q < v.p; ++q)
    for (std::size_t j = 0; j < v.N; ++j) out.comp[q][j] += S[j] * v.comp[q][j];
  return out;
}

/// H(w) = D_x w + v -| D^{-1}(v /\ w) with (A /\ B)_{qr} = A_q B_r - B_q A_r
/// and (v -| M)_q = sum_r v_r M_{rq}.
inline CurveField apply_H(const CurveField& v, const CurveField& w) {
  detail::check_shapes(v, w, "apply_H");
  CurveField out = dx(w);
  const std::size_t p = v.p, n = v.N;
  for (std::size_t q = 0; q < p; ++q) {
    for (std::size_t r = q + 1; r < p; ++r) {
      std::vector<double> entry(n);
      for (std::size_t j = 0; j < n; ++j)
        entry[j] = v.comp[q][j] * w.comp[r][j] - v.comp[r][j] * w.comp[q][j];
      const std::vector<double> M = detail::antideriv_checked(entry, v.Lbox, q * p + r);
      // M_{qr} = M, M_{rq} = -M; diagonal entries vanish
      for (std::size_t j = 0; j < n; ++j) {
        out.comp[r][j] += v.comp[q][j] * M[j];
        out.comp[q][j] -= v.comp[r][j] * M[j];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recursion hierarchy.

namespace detail {

// Closed form of the first recursion image: v_3l + (3/2)|v|^2 v_l.
inline CurveField closed_form_1(const CurveField& v) {
  CurveField vl = dx(v, 1);
  CurveField out = dx(v, 3);
  const std::vector<double> a = series_dot(v, v);
  for (std::size_t q = 0; q < v.p; ++q)
    for (std::size_t j = 0; j < v.N; ++j) out.comp[q][j] += 1.5 * a[j] * vl.comp[q][j];
  return out;
}

// Closed form of the second recursion image:
// v_5l + (5/2)(|v|^2 v_2l)_l + (5/2)((|v|^2)_2l - |v_l|^2 + (3/4)|v|^4) v_l.
inline CurveField closed_form_2(const CurveField& v) {
  const std::size_t p = v.p, n = v.N;
  CurveField vl = dx(v, 1);
  CurveField v2 = dx(v, 2);
  CurveField out = dx(v, 5);
  const std::vector<double> a = series_dot(v, v);
  const std::vector<double> a2 = series_deriv(a, 2, v.Lbox);
  const std::vector<double> b = series_dot(vl, vl);
  for (std::size_t q = 0; q < p; ++q) {
    std::vector<double> av2(n);
    for (std::size_t j = 0; j < n; ++j) av2[j] = a[j] * v2.comp[q][j];
    const std::vector<double> dav2 = series_deriv(av2, 1, v.Lbox);
    for (std::size_t j = 0; j < n; ++j) {
      out.comp[q][j] += 2.5 * dav2[j] +
                        2.5 * (a2[j] - b[j] + 0.75 * a[j] * a[j]) * vl.comp[q][j];
    }
  }
  return out;
}

// Grid mean of the conserved-density primitive G_k (dG_k/dl = v.e(k)); G_k is
// the constant-free differential polynomial, so its mean is exactly the
// antiderivative constant the mean-zero D^{-1} drops.
inline double density_mean(const CurveField& v, int k) {
  const std::size_t n = v.N;
  const std::vector<double> a = series_dot(v, v);
  if (k == 0) {
    double s = 0.0;
    for (double x : a) s += x;
    return 0.5 * s / static_cast<double>(n);
  }
  CurveField vl = dx(v, 1);
  CurveField v2 = dx(v, 2);
  const std::vector<double> b = series_dot(vl, vl);
  const std::vector<double> c = series_dot(v, v2);
  if (k == 1) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += c[j] - 0.5 * b[j] + 0.375 * a[j] * a[j];
    return s / static_cast<double>(n);
  }
  if (k == 2) {
    CurveField v3 = dx(v, 3);
    CurveField v4 = dx(v, 4);
    const std::vector<double> d04 = series_dot(v, v4);
    const std::vector<double> d13 = series_dot(vl, v3);
    const std::vector<double> d22 = series_dot(v2, v2);
    const std::vector<double> al = series_deriv(a, 1, v.Lbox);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += d04[j] - d13[j] + 0.5 * d22[j] + 2.5 * a[j] * c[j] - 1.25 * a[j] * b[j] +
           0.625 * al[j] * al[j] + 0.3125 * a[j] * a[j] * a[j];
    }
    return s / static_cast<double>(n);
  }
  throw std::invalid_argument("density_mean: k must be 0..2");
}

// Grid means of the upper-triangle entries of the wedge primitive W_k
// (dW_k/dl = v /\ w(k)); same constant-fixing role on the cosymplectic side.
inline std::vector<double> wedge_primitive_mean(const CurveField& v, int k) {
  const std::size_t p = v.p, n = v.N;
  std::vector<double> out(p * (p - 1) / 2, 0.0);
  CurveField vl = dx(v, 1);
  auto add_wedge_mean = [&](const CurveField& x, const CurveField& y, double scale,
                            const std::vector<double>* weight) {
    std::size_t idx = 0;
    for (std::size_t q = 0; q < p; ++q) {
      for (std::size_t r = q + 1; r < p; ++r, ++idx) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double e = x.comp[q][j] * y.comp[r][j] - x.comp[r][j] * y.comp[q][j];
          s += (weight ? (*weight)[j] : 1.0) * e;
        }
        out[idx] += scale * s / static_cast<double>(n);
      }
    }
  };
  if (k == 1) {
    // W_1 = v /\ v_l
    add_wedge_mean(v, vl, 1.0, nullptr);
    return out;
  }
  if (k == 2) {
    // W_2 = v /\ e(1) - v_l /\ v_2l
    CurveField e1 = closed_form_1(v);
    CurveField v2 = dx(v, 2);
    add_wedge_mean(v, e1, 1.0, nullptr);
    add_wedge_mean(vl, v2, -1.0, nullptr);
    return out;
  }
  if (k == 3) {
    // W_3 = v /\ e(2) - (v_l /\ v_4l - v_2l /\ v_3l + (5/2)|v|^2 v_l /\ v_2l)
    CurveField e2 = closed_form_2(v);
    CurveField v2 = dx(v, 2);
    CurveField v3 = dx(v, 3);
    CurveField v4 = dx(v, 4);
    const std::vector<double> a = series_dot(v, v);
    add_wedge_mean(v, e2, 1.0, nullptr);
    add_wedge_mean(vl, v4, -1.0, nullptr);
    add_wedge_mean(v2, v3, 1.0, nullptr);
    add_wedge_mean(vl, v2, -2.5, &a);
    return out;
  }
  throw std::invalid_argument("wedge_primitive_mean: k must be 1..3");
}

}  // namespace detail

/// k-th hierarchy vector field (H o J)^k applied to dx(v), k in 0..3.  The
/// mean-zero D^{-1} drops the antiderivative constants of the telescoped
/// densities; they are restored from their closed-form grid means so the
/// composition lands on the differential-polynomial hierarchy members.
inline CurveField hierarchy_field(const CurveField& v, int k) {
  if (k < 0 || k > 3) throw std::invalid_argument("hierarchy_field: k must be in 0..3");
  CurveField e = dx(v);
  const std::size_t p = v.p, n = v.N;
  for (int stage = 1; stage <= k; ++stage) {
    // symplectic half: w = D_x e + (D^{-1}(v.e) + <G_{stage-1}>) v
    const std::vector<double> S =
        detail::antideriv_checked(detail::series_dot(v, e), v.Lbox, 0);
    const double gbar = detail::density_mean(v, stage - 1);
    CurveField w = dx(e);
    for (std::size_t q = 0; q < p; ++q)
      for (std::size_t j = 0; j < n; ++j) w.comp[q][j] += (S[j] + gbar) * v.comp[q][j];
    // cosymplectic half: e = D_x w + v -| (D^{-1}(v /\ w) + <W_stage>)
    CurveField enew = dx(w);
    if (p > 1) {
      const std::vector<double> wbar = detail::wedge_primitive_mean(v, stage);
      std::size_t idx = 0;
      for (std::size_t q = 0; q < p; ++q) {
        for (std::size_t r = q + 1; r < p; ++r, ++idx) {
          std::vector<double> entry(n);
          for (std::size_t j = 0; j < n; ++j)
            entry[j] = v.comp[q][j] * w.comp[r][j] - v.comp[r][j] * w.comp[q][j];
          const std::vector<double> M =
              detail::antideriv_checked(entry, v.Lbox, q * p + r);
          for (std::size_t j = 0; j < n; ++j) {
            enew.comp[r][j] += v.comp[q][j] * (M[j] + wbar[idx]);
            enew.comp[q][j] -= v.comp[r][j] * (M[j] + wbar[idx]);
          }
        }
      }
    }
    e = enew;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Flows.

/// Right-hand side of the k-th flow.  k = 0 is the convective flow v_l; for
/// k >= 1 the field is e(k) - Rbar*e(k-1) evaluated in closed form.
inline CurveField flow_rhs(const CurveField& v, int k, double Rbar) {
  if (k < 0 || k > 2) throw std::invalid_argument("flow_rhs: k must be in {0,1,2}");
  if (k == 0) return dx(v);
  if (k == 1) {
    CurveField out = detail::closed_form_1(v);
    if (Rbar != 0.0) {
      CurveField vl = dx(v);
      for (std::size_t q = 0; q < v.p; ++q)
        for (std::size_t j = 0; j < v.N; ++j) out.comp[q][j] -= Rbar * vl.comp[q][j];
    }
    return out;
  }
  CurveField out = detail::closed_form_2(v);
  if (Rbar != 0.0) {
    CurveField e1 = detail::closed_form_1(v);
    for (std::size_t q = 0; q < v.p; ++q)
      for (std::size_t j = 0; j < v.N; ++j) out.comp[q][j] -= Rbar * e1.comp[q][j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conserved functionals.

enum class H2Variant { Printed, Squared };

struct Hamiltonians {
  double H0 = 0.0;
  double H1 = 0.0;
  double H2 = 0.0;          // selected variant
  double H2_printed = 0.0;  // density term -1/2 (v.v_l)
  double H2_squared = 0.0;  // density term -1/2 (v.v_l)^2
};

/// Period integrals of the first three conserved densities; the H2 density
/// exists in two variants and both are reported, with cfg selecting which one
/// populates H2.
inline Hamiltonians hamiltonians(const CurveField& v,
                                 H2Variant variant = H2Variant::Squared) {
  const std::size_t n = v.N;
  CurveField vl = dx(v, 1);
  CurveField v2 = dx(v, 2);
  const std::vector<double> a = detail::series_dot(v, v);
  const std::vector<double> b = detail::series_dot(vl, vl);
  const std::vector<double> c2 = detail::series_dot(v2, v2);
  const std::vector<double> vd = detail::series_dot(v, vl);
  double h0 = 0.0, h1 = 0.0, base = 0.0, lin = 0.0, sq = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    h0 += 0.5 * a[j];
    h1 += -0.5 * b[j] + 0.125 * a[j] * a[j];
    base += 0.5 * c2[j] - 0.75 * a[j] * b[j] + 0.0625 * a[j] * a[j] * a[j];
    lin += -0.5 * vd[j];
    sq += -0.5 * vd[j] * vd[j];
  }
  const double w = v.Lbox / static_cast<double>(n);
  Hamiltonians H;
  H.H0 = h0 * w;
  H.H1 = h1 * w;
  H.H2_printed = (base + lin) * w;
  H.H2_squared = (base + sq) * w;
  H.H2 = (variant == H2Variant::Printed) ? H.H2_printed : H.H2_squared;
  return H;
}

// ---------------------------------------------------------------------------
// Time evolution.

struct FlowState {
  CurveField v;
  double tau = 0.0;
  double Rbar = 0.0;
};

struct HierarchyConfig {
  int k = 1;
  double dt = 0.0;
  long steps = 0;
  long stride = 100;             // snapshot every this many steps
  bool override_dt = false;      // accept dt above the stability bound
  bool dealias = false;          // 2/3-rule truncation of the RHS
  H2Variant h2 = H2Variant::Squared;
};

struct FlowSnapshot {
  double tau = 0.0;
  CurveField v;
  Hamiltonians H;
};

struct Trajectory {
  std::vector<FlowSnapshot> snaps;
  bool blew_up = false;
};

/// Stability bound dt <= 0.05*dl^(2k+1) for the k-th flow.
inline double dt_bound(double dl, int k) { return 0.05 * std::pow(dl, 2 * k + 1); }

namespace detail {

inline void axpy(CurveField& y, double a, const CurveField& x) {
  for (std::size_t q = 0; q < y.p; ++q)
    for (std::size_t j = 0; j < y.N; ++j) y.comp[q][j] += a * x.comp[q][j];
}

// 2/3-rule: zero all modes with |frequency index| > N/3.
inline void truncate_spectrum(CurveField& u) {
  const std::size_t n = u.N;
  const long cut = static_cast<long>(n) / 3;
  for (std::size_t q = 0; q < u.p; ++q) {
    std::vector<std::complex<double>> a(n);
    for (std::size_t j = 0; j < n; ++j) a[j] = u.comp[q][j];
    fft::transform(a, false);
    for (std::size_t j = 0; j < n; ++j) {
      const long f = (j <= n / 2) ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
      if (std::labs(f) > cut) a[j] = 0.0;
    }
    fft::transform(a, true);
    for (std::size_t j = 0; j < n; ++j) u.comp[q][j] = a[j].real();
  }
}

}  // namespace detail

/// Classical RK4 integration of the k-th flow.  Snapshots (with Hamiltonian
/// diagnostics) are recorded at cfg.stride intervals plus the final state; on
/// blow-up (|v| > 1e6) the last good state closes the trajectory.
inline Trajectory evolve(const FlowState& state, const HierarchyConfig& cfg) {
  if (cfg.k < 0 || cfg.k > 2) throw std::invalid_argument("evolve: k must be in {0,1,2}");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("evolve: dt must be positive");
  if (cfg.steps < 0) throw std::invalid_argument("evolve: steps must be >= 0");
  const double bound = dt_bound(state.v.dl(), cfg.k);
  if (cfg.dt > bound && !cfg.override_dt) throw StabilityError(cfg.dt, bound);

  auto rhs = [&](const CurveField& u) {
    CurveField r = flow_rhs(u, cfg.k, state.Rbar);
    if (cfg.dealias) detail::truncate_spectrum(r);
    return r;
  };

  Trajectory traj;
  CurveField v = state.v;
  double tau = state.tau;
  auto record = [&](void) {
    traj.snaps.push_back({tau, v, hamiltonians(v, cfg.h2)});
  };
  record();
  const long stride = cfg.stride > 0 ? cfg.stride : cfg.steps + 1;
  for (long step = 1; step <= cfg.steps; ++step) {
    CurveField k1 = rhs(v);
    CurveField y = v;
    detail::axpy(y, 0.5 * cfg.dt, k1);
    CurveField k2 = rhs(y);
    y = v;
    detail::axpy(y, 0.5 * cfg.dt, k2);
    CurveField k3 = rhs(y);
    y = v;
    detail::axpy(y, cfg.dt, k3);
    CurveField k4 = rhs(y);
    CurveField vnew = v;
    detail::axpy(vnew, cfg.dt / 6.0, k1);
    detail::axpy(vnew, cfg.dt / 3.0, k2);
    detail::axpy(vnew, cfg.dt / 3.0, k3);
    detail::axpy(vnew, cfg.dt / 6.0, k4);
    if (field_max_abs(vnew) > 1e6) {
      traj.blew_up = true;
      if (traj.snaps.back().tau != tau) record();
      return traj;
    }
    v = std::move(vnew);
    tau = state.tau + static_cast<double>(step) * cfg.dt;
    if (step % stride == 0 || step == cfg.steps) record();
  }
  return traj;
}

// ---------------------------------------------------------------------------
// The -1 flow: light-cone sine-Gordon reduction.

struct SgConfig {
  std::size_t N = 256;
  double Lbox = 0.0;
  double dt = 0.0;
  long steps = 0;
  long stride = 10;
};

struct SgSnapshot {
  double tau = 0.0;
  std::vector<double> theta;
  std::vector<double> w;  // theta_l
  double energy = 0.0;    // integral of 1/2 w^2 + (1 - cos theta)
};

struct SgTrajectory {
  std::vector<SgSnapshot> snaps;
};

/// theta_{l,tau} = -sin(theta) evolved as w = theta_l, w_tau = -sin(theta)
/// (projected onto mean-zero, which conserves the winding exactly).  theta is
/// recovered from w by the mean-zero spectral antiderivative plus a winding
/// ramp and a tracked zero mode.  The equation leaves the zero-mode velocity
/// free; it is fixed so the grid mean of sin(theta) is preserved, the
/// compatibility constraint of the periodic light-cone form.  On that
/// constraint the projection is inert and translating kinks stay exact.
/// theta0 must close up: the mean of theta0_l has to be 2*pi*(integer)/Lbox.
inline SgTrajectory sg_evolve(const Expression& theta0, const SgConfig& cfg) {
  if (cfg.N < 64 || !fft::is_power_of_two(cfg.N))
    throw std::invalid_argument("sg_evolve: N must be a power of two >= 64");
  if (!(cfg.Lbox > 0.0)) throw std::invalid_argument("sg_evolve: Lbox must be positive");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("sg_evolve: dt must be positive");
  const std::size_t n = cfg.N;
  const double L = cfg.Lbox;
  const double dl = L / static_cast<double>(n);

  const Expression dtheta = theta0.diff("l");
  std::vector<double> w(n), th0(n), lnode(n);
  for (std::size_t j = 0; j < n; ++j) {
    lnode[j] = static_cast<double>(j) * dl;
    th0[j] = theta0.eval({{"l", lnode[j]}});
    w[j] = dtheta.eval({{"l", lnode[j]}});
  }
  const double winding = detail::series_mean(w) * L / (2.0 * detail::kPi);
  if (std::fabs(winding - std::round(winding)) > 1e-6)
    throw std::invalid_argument("sg_evolve: theta0 winding " + std::to_string(winding) +
                                " is not an integer");
  const double lbar = detail::series_mean(lnode);
  double thbar = detail::series_mean(th0);

  auto reconstruct = [&](const std::vector<double>& wf, double zb) {
    const double W = detail::series_mean(wf);
    std::vector<double> dev(n);
    for (std::size_t j = 0; j < n; ++j) dev[j] = wf[j] - W;
    std::vector<double> th = detail::series_antideriv(dev, L);
    for (std::size_t j = 0; j < n; ++j) th[j] += zb + W * (lnode[j] - lbar);
    return th;
  };
  // d/dtau of (w, thbar): wdot = -(sin theta - <sin theta>); the zero-mode
  // velocity solves <cos theta * thetadot> = 0 with thetadot = zbdot + D^{-1}wdot.
  auto rhs = [&](const std::vector<double>& wf, double zb, std::vector<double>& wdot,
                 double& zbdot) {
    std::vector<double> th = reconstruct(wf, zb);
    double sbar = 0.0;
    for (std::size_t j = 0; j < n; ++j) sbar += std::sin(th[j]);
    sbar /= static_cast<double>(n);
    wdot.resize(n);
    for (std::size_t j = 0; j < n; ++j) wdot[j] = -std::sin(th[j]) + sbar;
    const std::vector<double> P = detail::series_antideriv(wdot, L);
    double cbar = 0.0, num = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = std::cos(th[j]);
      cbar += c;
      num += c * P[j];
    }
    cbar /= static_cast<double>(n);
    num /= static_cast<double>(n);
    zbdot = (std::fabs(cbar) > 1e-8) ? -num / cbar : 0.0;
  };
  auto energy_of = [&](const std::vector<double>& wf, const std::vector<double>& th) {
    double e = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      e += 0.5 * wf[j] * wf[j] + (1.0 - std::cos(th[j]));
    return e * dl;
  };

  SgTrajectory traj;
  double tau = 0.0;
  auto record = [&](void) {
    std::vector<double> th = reconstruct(w, thbar);
    traj.snaps.push_back({tau, th, w, energy_of(w, th)});
  };
  record();
  const long stride = cfg.stride > 0 ? cfg.stride : cfg.steps + 1;
  std::vector<double> k1(n), k2(n), k3(n), k4(n), y(n);
  double z1 = 0.0, z2 = 0.0, z3 = 0.0, z4 = 0.0;
  for (long step = 1; step <= cfg.steps; ++step) {
    rhs(w, thbar, k1, z1);
    for (std::size_t j = 0; j < n; ++j) y[j] = w[j] + 0.5 * cfg.dt * k1[j];
    rhs(y, thbar + 0.5 * cfg.dt * z1, k2, z2);
    for (std::size_t j = 0; j < n; ++j) y[j] = w[j] + 0.5 * cfg.dt * k2[j];
    rhs(y, thbar + 0.5 * cfg.dt * z2, k3, z3);
    for (std::size_t j = 0; j < n; ++j) y[j] = w[j] + cfg.dt * k3[j];
    rhs(y, thbar + cfg.dt * z3, k4, z4);
    for (std::size_t j = 0; j < n; ++j)
      w[j] += cfg.dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    thbar += cfg.dt / 6.0 * (z1 + 2.0 * z2 + 2.0 * z3 + z4);
    tau = static_cast<double>(step) * cfg.dt;
    if (step % stride == 0 || step == cfg.steps) record();
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Hyperbolic system residual.

/// Max over interior snapshots and grid of |D_x(v_tau) + sqrt(1-|v_tau|^2) v|
/// with v_tau formed by central differencing at spacing dtau.  |v_tau| must
/// stay within the unit ball.
inline double heq_residual(const std::vector<CurveField>& vtraj, double dtau) {
  if (vtraj.size() < 3)
    throw std::invalid_argument("heq_residual: need at least three snapshots");
  if (!(dtau > 0.0)) throw std::invalid_argument("heq_residual: dtau must be positive");
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < vtraj.size(); ++i) {
    const CurveField& prev = vtraj[i - 1];
    const CurveField& cur = vtraj[i];
    const CurveField& next = vtraj[i + 1];
    detail::check_shapes(prev, cur, "heq_residual");
    detail::check_shapes(next, cur, "heq_residual");
    CurveField vt = cur;
    for (std::size_t q = 0; q < cur.p; ++q)
      for (std::size_t j = 0; j < cur.N; ++j)
        vt.comp[q][j] = (next.comp[q][j] - prev.comp[q][j]) / (2.0 * dtau);
    CurveField dvt = dx(vt);
    for (std::size_t j = 0; j < cur.N; ++j) {
      double n2 = 0.0;
      for (std::size_t q = 0; q < cur.p; ++q) n2 += vt.comp[q][j] * vt.comp[q][j];
      if (n2 > 1.0 + 1e-9)
        throw std::domain_error("heq_residual: |v_tau| exceeds 1 at a grid point");
      const double root = std::sqrt(std::max(0.0, 1.0 - n2));
      for (std::size_t q = 0; q < cur.p; ++q) {
        const double r = dvt.comp[q][j] + root * cur.comp[q][j];
        worst = std::max(worst, std::fabs(r));
      }
    }
  }
  return worst;
}

}  // namespace anholo::flow
