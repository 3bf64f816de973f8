#pragma once

#include <complex>
#include <span>
#include <vector>

namespace sonicgauss::audio {

using Complex = std::complex<double>;

// Real-input DFT; returns n/2 + 1 bins, unnormalized.
std::vector<Complex> rfft(std::span<const double> x);
// Inverse of rfft for length n, including the 1/n factor.
std::vector<double> irfft(std::span<const Complex> spectrum, int n);

}  // namespace sonicgauss::audio
