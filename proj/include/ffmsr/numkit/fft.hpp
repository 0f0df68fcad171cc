#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "ffmsr/numkit/tensor.hpp"

namespace ffmsr::FFMSR_PRECISION::numkit {

/// Complex counterpart of Tensor (no gradient tracking). Split storage.
struct ComplexTensor {
    Shape shape;
    std::vector<Real> re;
    std::vector<Real> im;

    static ComplexTensor zeros(Shape shape);
    std::size_t numel() const { return re.size(); }
};

/// Number of one-sided bins for a length-m real signal.
constexpr std::size_t rfft_bins(std::size_t m) { return m / 2 + 1; }

/// In-place complex DFT of any length (radix-2 for powers of two, Bluestein
/// otherwise). `inverse` uses the positive exponent and does not scale.
void fft_inplace(std::span<std::complex<double>> data, bool inverse);

/// One-sided transform of a real sequence.
void rfft_1d(std::span<const double> x, std::span<std::complex<double>> out);
/// Inverse of rfft_1d for a length-m signal; imaginary parts of the DC and
/// Nyquist bins are ignored.
void irfft_1d(std::span<const std::complex<double>> spectrum, std::span<double> out);

/// rfft along the sequence axis (axis -2) of x: [..., m, d] -> [..., m/2+1, d].
ComplexTensor rfft(const Tensor& x);
/// Inverse of rfft for target length m.
Tensor irfft(const ComplexTensor& y, std::size_t m);

}  // namespace ffmsr::FFMSR_PRECISION::numkit
