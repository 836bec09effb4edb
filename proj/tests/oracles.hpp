#pragma once

// Independent reference implementations the test suites check against.
// These are deliberately written in the most naive way possible and must not
// call into the code paths they are used to verify.

#include <anholo/expr.hpp>
#include <anholo/rng.hpp>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

namespace oracle {

/// 4th-order central finite difference, step h:
/// f'(x) ~ (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / (12 h).
inline double fd_derivative(const anholo::sym::Expression& e, const std::string& var,
                            anholo::sym::Point p, double h = 1e-2) {
  const double x0 = p.at(var);
  auto at = [&](double x) {
    p[var] = x;
    return e.eval(p);
  };
  return (-at(x0 + 2 * h) + 8 * at(x0 + h) - 8 * at(x0 - h) + at(x0 - 2 * h)) /
         (12 * h);
}

/// Plain O(N^2) discrete Fourier transform, forward sign convention
/// X_k = sum_n x_n exp(-2 pi i k n / N).
inline std::vector<std::complex<double>> naive_dft(
    const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const double w = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      acc += x[j] * std::polar(1.0, w * static_cast<double>(k * j));
    out[k] = acc;
  }
  return out;
}

}  // namespace oracle
