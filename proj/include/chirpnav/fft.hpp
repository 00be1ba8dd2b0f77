#pragma once

#include "chirpnav/common.hpp"

#include <span>
#include <vector>

namespace chirpnav::fft {

/// Forward DFT, X[k] = sum_n x[n] exp(-j 2 pi k n / N). Thread-safe.
std::vector<Complex> forward(std::span<const Complex> x);

/// Inverse DFT without 1/N scaling, x[n] = sum_k X[k] exp(+j 2 pi k n / N).
std::vector<Complex> inverse(std::span<const Complex> x);

}  // namespace chirpnav::fft
