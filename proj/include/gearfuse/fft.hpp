#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace gearfuse {

/// In-place iterative radix-2 FFT. Length must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse = false);

/// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

/// One-sided magnitude spectrum of a real signal, zero-padded to a power of
/// two. Returns next_pow2(n)/2 + 1 bins; bin b is |X(b / fft_len)|.
std::vector<double> real_magnitude_spectrum(const std::vector<double>& x);

}  // namespace gearfuse
