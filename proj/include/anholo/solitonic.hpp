#pragma once

#include <array>
#include <cmath>

#include "anholo/einstein.hpp"
#include "anholo/rng.hpp"

namespace anholo::grav {

/// Max residual of  h4.. + eps*(h4' + 6 h4 h4* + h4***)*  over random points
/// of the (x1, x2, v) box, where dot = d/dx1, prime = d/dx2, star = d/dv.
inline double solit1_residual(const sym::Expression& h4, int eps,
                              const std::array<std::array<double, 2>, 3>& box,
                              int npoints = 64, std::uint64_t seed = 0x501D) {
  const sym::Expression h4s = h4.diff("v");
  const sym::Expression inner =
      h4.diff("x2") + 6.0 * h4 * h4s + h4s.diff("v").diff("v");
  const sym::Expression res =
      h4.diff("x1").diff("x1") + static_cast<double>(eps) * inner.diff("v");
  SplitMix64 gen(seed);
  const char* names[3] = {"x1", "x2", "v"};
  double worst = 0.0;
  for (int i = 0; i < npoints; ++i) {
    sym::Point pt;
    for (int d = 0; d < 3; ++d) pt[names[d]] = gen.uniform(box[d][0], box[d][1]);
    worst = std::max(worst, std::fabs(res.eval(pt)));
  }
  return worst;
}

/// Build the vacuum off-diagonal metric whose v-sector is driven by a given
/// sign-definite h4: f is recovered from h4 = eps4*(f - f0)^2, the
/// polarization is frozen at 1 and the quadrature part of n_k is dropped.
inline GeneratedSolution solitonic_metric(const sym::Expression& h4, AnsatzData ad) {
  ad.validate();
  // sign-definiteness on the box
  if (detail::scan_for_zero(h4, ad.chart, 0x5016))
    throw AnsatzError("solitonic_metric: h4 vanishes or changes sign on the box");
  sym::Point center;
  for (std::size_t d = 0; d < ad.chart.dim(); ++d) {
    center[ad.chart.names[d]] = 0.5 * (ad.chart.box[d][0] + ad.chart.box[d][1]);
  }
  const bool positive = h4.eval(center) > 0.0;
  if (positive != (ad.eps[3] > 0))
    throw AnsatzError("solitonic_metric: eps4 inconsistent with the sign of h4");
  ad.f = ad.f0 + sym::sqrt(sym::abs(h4));
  ad.sigma0 = sym::Expression::constant(1.0);
  ad.n2 = {sym::Expression::constant(0.0), sym::Expression::constant(0.0)};
  SourceSpec none;
  return generate_solution(ad, none, /*vacuum=*/true);
}

}  // namespace anholo::grav
