#include "ffmsr/numkit/fft.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ffmsr::FFMSR_PRECISION::numkit {

using cplx = std::complex<double>;

ComplexTensor ComplexTensor::zeros(Shape shape) {
    const auto n = shape_numel(shape);
    return ComplexTensor{std::move(shape), std::vector<Real>(n, Real(0)), std::vector<Real>(n, Real(0))};
}

namespace {

// exp(-2 pi i k / n) for k < n/2, computed directly per entry.
const std::vector<cplx>& twiddles(std::size_t n) {
    thread_local std::map<std::size_t, std::vector<cplx>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        std::vector<cplx> w(n / 2);
        for (std::size_t k = 0; k < w.size(); ++k) {
            w[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
        }
        it = cache.emplace(n, std::move(w)).first;
    }
    return it->second;
}

void radix2(std::span<cplx> a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const auto& tw = twiddles(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const cplx w = inverse ? std::conj(tw[k * stride]) : tw[k * stride];
                const cplx u = a[i + k];
                const cplx v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
}

// Chirp and its padded transform for one (length, direction) pair.
struct BluesteinPlan {
    std::size_t n = 0;
    std::size_t padded = 0;
    std::vector<cplx> chirp;     // exp(sign * i*pi*k^2/n)
    std::vector<cplx> kernel_f;  // FFT of conj(chirp) laid out circularly
};

BluesteinPlan make_plan(std::size_t n, bool inverse) {
    BluesteinPlan p;
    p.n = n;
    p.padded = std::bit_ceil(2 * n - 1);
    p.chirp.resize(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n avoids precision loss in the angle for larger k.
        const auto k2 = static_cast<double>((k * k) % (2 * n));
        p.chirp[k] = std::polar(1.0, sign * std::numbers::pi * k2 / static_cast<double>(n));
    }
    p.kernel_f.assign(p.padded, cplx{});
    p.kernel_f[0] = std::conj(p.chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        p.kernel_f[k] = std::conj(p.chirp[k]);
        p.kernel_f[p.padded - k] = std::conj(p.chirp[k]);
    }
    radix2(p.kernel_f, false);
    return p;
}

const BluesteinPlan& cached_plan(std::size_t n, bool inverse) {
    thread_local std::map<std::pair<std::size_t, bool>, BluesteinPlan> cache;
    auto key = std::make_pair(n, inverse);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, make_plan(n, inverse)).first;
    return it->second;
}

void bluestein(std::span<cplx> a, bool inverse) {
    const auto& p = cached_plan(a.size(), inverse);
    thread_local std::vector<cplx> work;
    work.assign(p.padded, cplx{});
    for (std::size_t k = 0; k < p.n; ++k) work[k] = a[k] * p.chirp[k];
    radix2(work, false);
    for (std::size_t k = 0; k < p.padded; ++k) work[k] *= p.kernel_f[k];
    radix2(work, true);
    const double scale = 1.0 / static_cast<double>(p.padded);
    for (std::size_t k = 0; k < p.n; ++k) a[k] = work[k] * scale * p.chirp[k];
}

void check_sequence_rank(const Shape& s, const char* what) {
    if (s.size() < 2) {
        throw std::invalid_argument(std::string(what) + ": expected [..., m, d], got " + shape_to_string(s));
    }
}

}  // namespace

void fft_inplace(std::span<cplx> data, bool inverse) {
    const std::size_t n = data.size();
    if (n <= 1) return;
    if (std::has_single_bit(n)) {
        radix2(data, inverse);
    } else {
        bluestein(data, inverse);
    }
}

void rfft_1d(std::span<const double> x, std::span<cplx> out) {
    const std::size_t m = x.size();
    if (m == 0) throw std::invalid_argument("rfft: empty sequence");
    if (out.size() != rfft_bins(m)) throw std::invalid_argument("rfft: output bin count mismatch");
    thread_local std::vector<cplx> buf;
    buf.assign(x.begin(), x.end());
    fft_inplace(buf, false);
    std::copy_n(buf.begin(), out.size(), out.begin());
}

void irfft_1d(std::span<const cplx> spectrum, std::span<double> out) {
    const std::size_t m = out.size();
    if (m == 0) throw std::invalid_argument("irfft: empty target length");
    if (spectrum.size() != rfft_bins(m)) {
        throw std::invalid_argument("irfft: " + std::to_string(spectrum.size()) +
                                    " bins do not match target length " + std::to_string(m));
    }
    thread_local std::vector<cplx> buf;
    buf.assign(m, cplx{});
    buf[0] = cplx(spectrum[0].real(), 0.0);
    for (std::size_t k = 1; k < spectrum.size(); ++k) {
        if (2 * k == m) {
            buf[k] = cplx(spectrum[k].real(), 0.0);
        } else {
            buf[k] = spectrum[k];
            buf[m - k] = std::conj(spectrum[k]);
        }
    }
    fft_inplace(buf, true);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = buf[i].real() * scale;
}

ComplexTensor rfft(const Tensor& x) {
    const auto& s = x.shape();
    check_sequence_rank(s, "rfft");
    const std::size_t m = s[s.size() - 2];
    const std::size_t d = s.back();
    if (m == 0) throw std::invalid_argument("rfft: empty sequence");
    const std::size_t batch = x.numel() / (m * d);
    const std::size_t bins = rfft_bins(m);

    Shape out_shape = s;
    out_shape[s.size() - 2] = bins;
    auto out = ComplexTensor::zeros(out_shape);
    std::vector<double> col(m);
    std::vector<cplx> spec(bins);
    const auto xd = x.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t t = 0; t < m; ++t) col[t] = xd[(b * m + t) * d + j];
            rfft_1d(col, spec);
            for (std::size_t k = 0; k < bins; ++k) {
                out.re[(b * bins + k) * d + j] = static_cast<Real>(spec[k].real());
                out.im[(b * bins + k) * d + j] = static_cast<Real>(spec[k].imag());
            }
        }
    }
    return out;
}

Tensor irfft(const ComplexTensor& y, std::size_t m) {
    const auto& s = y.shape;
    check_sequence_rank(s, "irfft");
    const std::size_t bins = s[s.size() - 2];
    const std::size_t d = s.back();
    if (m == 0 || bins != rfft_bins(m)) {
        throw std::invalid_argument("irfft: " + std::to_string(bins) + " bins do not match target length " +
                                    std::to_string(m));
    }
    const std::size_t batch = d == 0 ? 0 : y.numel() / (bins * d);
    Shape out_shape = s;
    out_shape[s.size() - 2] = m;
    std::vector<Real> out(shape_numel(out_shape));
    std::vector<cplx> spec(bins);
    std::vector<double> col(m);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t k = 0; k < bins; ++k) {
                const auto idx = (b * bins + k) * d + j;
                spec[k] = cplx(y.re[idx], y.im[idx]);
            }
            irfft_1d(spec, col);
            for (std::size_t t = 0; t < m; ++t) out[(b * m + t) * d + j] = static_cast<Real>(col[t]);
        }
    }
    return Tensor::from_data(std::move(out_shape), std::move(out));
}

}  // namespace ffmsr::FFMSR_PRECISION::numkit
