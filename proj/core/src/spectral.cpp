#include "spikefuse/spectral.hpp"

#include <cmath>
#include <numbers>

namespace spikefuse {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void dft_naive(std::span<const double> re_in, std::span<const double> im_in, std::span<double> re_out,
               std::span<double> im_out, int sign) {
  const std::size_t n = re_in.size();
  for (std::size_t k = 0; k < n; ++k) {
    double sr = 0.0, si = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // index reduction keeps the angle small for long sequences
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      const double c = std::cos(ang), s = std::sin(ang);
      sr += re_in[t] * c - im_in[t] * s;
      si += re_in[t] * s + im_in[t] * c;
    }
    re_out[k] = sr;
    im_out[k] = si;
  }
}

void fft_radix2(std::span<double> re, std::span<double> im, int sign) {
  const std::size_t n = re.size();
  if (!is_power_of_two(n)) throw InvalidInput("fft_radix2: length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len)
      for (std::size_t k = 0; k < len / 2; ++k) {
        const double wr = std::cos(ang * static_cast<double>(k)), wi = std::sin(ang * static_cast<double>(k));
        const std::size_t a = start + k, b = a + len / 2;
        const double xr = re[b] * wr - im[b] * wi;
        const double xi = re[b] * wi + im[b] * wr;
        re[b] = re[a] - xr;
        im[b] = im[a] - xi;
        re[a] += xr;
        im[a] += xi;
      }
  }
}

namespace {

bool use_radix2(std::size_t n, DftAlgorithm algo) {
  if (algo == DftAlgorithm::kRadix2) {
    if (!is_power_of_two(n)) throw InvalidInput("radix-2 transform requires a power-of-two length");
    return true;
  }
  return algo == DftAlgorithm::kAuto && is_power_of_two(n);
}

void transform_row(std::span<const double> re_in, std::span<const double> im_in, std::span<double> re_out,
                   std::span<double> im_out, int sign, bool radix2) {
  if (radix2) {
    std::copy(re_in.begin(), re_in.end(), re_out.begin());
    std::copy(im_in.begin(), im_in.end(), im_out.begin());
    fft_radix2(re_out, im_out, sign);
  } else {
    dft_naive(re_in, im_in, re_out, im_out, sign);
  }
}

}  // namespace

ComplexSpectrum dft(const Tensor& x, DftAlgorithm algo) {
  if (!x.defined() || x.rank() == 0) throw InvalidInput("dft: empty input");
  const std::size_t n = x.shape().back();
  if (n == 0) throw InvalidInput("dft: empty transform axis");
  const bool radix2 = use_radix2(n, algo);
  const std::size_t rows = x.size() / n;
  std::vector<double> re(x.size()), im(x.size());
  const std::vector<double> zeros(n, 0.0);
  auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r)
    transform_row(xv.subspan(r * n, n), zeros, std::span(re).subspan(r * n, n), std::span(im).subspan(r * n, n), -1,
                  radix2);
  return {Tensor::from(x.shape(), std::move(re)), Tensor::from(x.shape(), std::move(im))};
}

Tensor idft(const ComplexSpectrum& s, DftAlgorithm algo) {
  if (!s.real.defined() || !s.imag.defined() || s.real.shape() != s.imag.shape())
    throw InvalidInput("idft: real and imaginary parts must have identical shapes");
  const std::size_t n = s.real.shape().back();
  const bool radix2 = use_radix2(n, algo);
  const std::size_t rows = s.real.size() / n;
  auto rv = s.real.values(), iv = s.imag.values();
  std::vector<double> out(s.real.size()), im_tmp(n), re_tmp(n);
  for (std::size_t r = 0; r < rows; ++r) {
    auto rr = rv.subspan(r * n, n), ii = iv.subspan(r * n, n);
    transform_row(rr, ii, re_tmp, im_tmp, +1, radix2);
    // conjugate symmetry: X_k = conj(X_{N-k})
    bool symmetric = true;
    double scale_ref = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t m = (n - k) % n;
      scale_ref = std::max(scale_ref, std::abs(rr[k]) + std::abs(ii[k]));
      if (std::abs(rr[k] - rr[m]) > 1e-9 * scale_ref || std::abs(ii[k] + ii[m]) > 1e-9 * scale_ref) symmetric = false;
    }
    for (std::size_t t = 0; t < n; ++t) {
      const double re_val = re_tmp[t] / static_cast<double>(n);
      const double im_val = im_tmp[t] / static_cast<double>(n);
      if (symmetric && std::abs(im_val) >= 1e-6)
        throw NumericError("idft: imaginary residue exceeds 1e-6 for a conjugate-symmetric spectrum");
      out[r * n + t] = re_val;
    }
  }
  return Tensor::from(s.real.shape(), std::move(out));
}

DftMatrices dft_matrices(std::size_t n) {
  if (n == 0) throw InvalidInput("dft_matrices: empty axis");
  DftMatrices m;
  m.n = n;
  m.fwd_cos.resize(n * n);
  m.fwd_sin.resize(n * n);
  m.inv_cos.resize(n * n);
  m.inv_sin.resize(n * n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      m.fwd_cos[k * n + t] = std::cos(ang);
      m.fwd_sin[k * n + t] = -std::sin(ang);
      // inverse rows are indexed [t][k]
      m.inv_cos[t * n + k] = std::cos(ang) * inv_n;
      m.inv_sin[t * n + k] = -std::sin(ang) * inv_n;
    }
  return m;
}

}  // namespace spikefuse
