#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spikefuse/tensor.hpp"

namespace spikefuse {

/// Real and imaginary parts of a transform along the last axis, stored as two
/// same-shape real tensors so each part can be processed on its own.
struct ComplexSpectrum {
  Tensor real;
  Tensor imag;
};

enum class DftAlgorithm { kAuto, kNaive, kRadix2 };

/// Unnormalized forward DFT along the last axis: X_k = sum_n x_n exp(-2 pi i k n / N).
/// kAuto uses radix-2 for power-of-two lengths and the direct sum otherwise.
ComplexSpectrum dft(const Tensor& x, DftAlgorithm algo = DftAlgorithm::kAuto);

/// Inverse DFT with 1/N normalization, real part returned. When the spectrum is
/// conjugate-symmetric the discarded imaginary residue is checked to be below 1e-6.
Tensor idft(const ComplexSpectrum& s, DftAlgorithm algo = DftAlgorithm::kAuto);

bool is_power_of_two(std::size_t n);

// In-place complex transform of one sequence; sign = -1 forward, +1 inverse (unnormalized).
void fft_radix2(std::span<double> re, std::span<double> im, int sign);
void dft_naive(std::span<const double> re_in, std::span<const double> im_in, std::span<double> re_out,
               std::span<double> im_out, int sign);

/// Row-major N x N matrices for the time-axis transforms used inside the network:
/// forward real/imag rows (cos, -sin) and inverse rows (cos/N, -sin/N) so that
/// x = inv_cos * R + inv_sin * I recovers the real part of the inverse transform.
struct DftMatrices {
  std::size_t n = 0;
  std::vector<double> fwd_cos, fwd_sin, inv_cos, inv_sin;
};

DftMatrices dft_matrices(std::size_t n);

}  // namespace spikefuse
