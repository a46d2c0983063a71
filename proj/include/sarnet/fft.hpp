#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace sarnet {

// Smallest power of two >= n (n >= 1).
std::size_t next_pow2(std::size_t n);

// In-place radix-2 Cooley-Tukey. size() must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

// One-sided magnitude spectrum |X_k| for k = 0..N/2 of the real signal,
// zero-padded to the next power of two. Returns N/2+1 values.
std::vector<double> one_sided_magnitudes(std::span<const double> samples);

} // namespace sarnet
