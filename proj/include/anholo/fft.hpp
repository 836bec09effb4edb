#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace anholo::fft {

using Complex = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

// Forward twiddles exp(-2*pi*i*j/n), j < n/2, cached per size.  Direct trig
// evaluation keeps the noise floor flat; a multiplicative recurrence would
// leak into high bins that spectral derivatives then amplify.
inline std::shared_ptr<const std::vector<Complex>> twiddles(std::size_t n) {
  static std::mutex mu;
  static std::unordered_map<std::size_t, std::shared_ptr<const std::vector<Complex>>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const double pi = 3.14159265358979323846;
  auto tw = std::make_shared<std::vector<Complex>>(n / 2);
  for (std::size_t j = 0; j < n / 2; ++j) {
    const double ang = -2.0 * pi * static_cast<double>(j) / static_cast<double>(n);
    (*tw)[j] = Complex(std::cos(ang), std::sin(ang));
  }
  auto r = std::shared_ptr<const std::vector<Complex>>(tw);
  cache.emplace(n, r);
  return r;
}

}  // namespace detail

/// In-place iterative radix-2 transform.  Forward convention
/// X_k = sum_n x_n exp(-2*pi*i*k*n/N); the inverse divides by N.
inline void radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("radix2: size must be a power of two");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto tw = detail::twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        Complex w = (*tw)[j * stride];
        if (inverse) w = std::conj(w);
        const Complex u = a[i + j];
        const Complex v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

/// Reference O(N^2) transform, same sign and normalization conventions.
/// Used directly for non-power-of-two sizes.
inline std::vector<Complex> dft_naive(const std::vector<Complex>& x, bool inverse = false) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n, Complex(0.0, 0.0));
  const double pi = 3.14159265358979323846;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = (inverse ? 2.0 : -2.0) * pi * static_cast<double>(k) *
                         static_cast<double>(j) / static_cast<double>(n);
      out[k] += x[j] * Complex(std::cos(ang), std::sin(ang));
    }
  }
  if (inverse) {
    for (auto& v : out) v /= static_cast<double>(n);
  }
  return out;
}

/// Dispatch: radix-2 when possible, otherwise the reference transform.
inline void transform(std::vector<Complex>& a, bool inverse) {
  if (is_power_of_two(a.size())) {
    radix2(a, inverse);
  } else {
    a = dft_naive(a, inverse);
  }
}

}  // namespace anholo::fft
