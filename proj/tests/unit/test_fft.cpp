#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "ffmsr/numkit/fft.hpp"

using namespace ffmsr::numkit;
using ffmsr::Real;
using cplx = std::complex<double>;

namespace {

std::vector<cplx> naive_dft(const std::vector<double>& x) {
    const std::size_t m = x.size();
    std::vector<cplx> out(m / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        cplx acc{};
        for (std::size_t t = 0; t < m; ++t) {
            const double ang = -2.0 * std::numbers::pi * double(k * t) / double(m);
            acc += x[t] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

std::vector<double> random_signal(std::size_t m, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x(m);
    for (auto& v : x) v = n(rng);
    return x;
}

}  // namespace

TEST_CASE("rfft matches a direct DFT for lengths 1..64") {
    std::mt19937_64 rng(3);
    for (std::size_t m = 1; m <= 64; ++m) {
        const auto x = random_signal(m, rng);
        std::vector<cplx> y(rfft_bins(m));
        rfft_1d(x, y);
        const auto ref = naive_dft(x);
        for (std::size_t k = 0; k < y.size(); ++k) {
            CHECK(std::abs(y[k] - ref[k]) < 1e-5 * std::max(1.0, std::abs(ref[k])));
        }
    }
}

TEST_CASE("constant and impulse spectra") {
    std::vector<double> c{2.5, 2.5, 2.5, 2.5};
    std::vector<cplx> y(3);
    rfft_1d(c, y);
    CHECK(std::abs(y[0] - cplx(10.0, 0)) < 1e-12);
    CHECK(std::abs(y[1]) < 1e-12);
    CHECK(std::abs(y[2]) < 1e-12);

    std::vector<double> imp{1, 0, 0, 0};
    rfft_1d(imp, y);
    for (const auto& v : y) CHECK(std::abs(v - cplx(1, 0)) < 1e-12);
}

TEST_CASE("irfft inverts rfft") {
    std::mt19937_64 rng(5);
    for (std::size_t m = 1; m <= 64; ++m) {
        const auto x = random_signal(m, rng);
        std::vector<cplx> y(rfft_bins(m));
        rfft_1d(x, y);
        std::vector<double> back(m);
        irfft_1d(y, back);
        for (std::size_t t = 0; t < m; ++t) CHECK(std::abs(back[t] - x[t]) < 1e-5);
    }
}

TEST_CASE("zero spectrum gives zero signal") {
    std::vector<cplx> y(5);
    std::vector<double> out(8, 1.0);
    irfft_1d(y, out);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("cosine transform pair") {
    // x_t = A cos(2 pi k0 t / m) has X[k0] = A m / 2 and nothing else.
    for (std::size_t m : {8u, 12u, 15u, 32u}) {
        const std::size_t k0 = 3;
        const double A = 1.7;
        std::vector<cplx> y(rfft_bins(m));
        y[k0] = cplx(A * double(m) / 2.0, 0.0);
        std::vector<double> x(m);
        irfft_1d(y, x);
        for (std::size_t t = 0; t < m; ++t) {
            CHECK(std::abs(x[t] - A * std::cos(2.0 * std::numbers::pi * double(k0 * t) / double(m))) < 1e-5);
        }
        std::vector<cplx> back(rfft_bins(m));
        rfft_1d(x, back);
        for (std::size_t k = 0; k < back.size(); ++k) CHECK(std::abs(back[k] - y[k]) < 1e-5 * double(m));
    }
}

TEST_CASE("Parseval over the one-sided spectrum") {
    std::mt19937_64 rng(11);
    for (std::size_t m = 1; m <= 40; ++m) {
        const auto x = random_signal(m, rng);
        std::vector<cplx> y(rfft_bins(m));
        rfft_1d(x, y);
        double time = 0;
        for (double v : x) time += v * v;
        double freq = 0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const bool edge = k == 0 || (m % 2 == 0 && k == m / 2);
            freq += (edge ? 1.0 : 2.0) * std::norm(y[k]);
        }
        freq /= double(m);
        CHECK(std::abs(time - freq) <= 1e-4 * time);
    }
}

TEST_CASE("tensor rfft works per column along the sequence axis") {
    std::mt19937_64 rng(1);
    const std::size_t m = 6, d = 3;
    std::vector<Real> vals(m * d);
    std::normal_distribution<double> n(0, 1);
    for (auto& v : vals) v = static_cast<Real>(n(rng));
    const auto x = Tensor::from_data({2, m, d}, [&] {
        std::vector<Real> two(vals);
        two.insert(two.end(), vals.begin(), vals.end());
        return two;
    }());
    const auto y = rfft(x);
    REQUIRE(y.shape == Shape{2, 4, 3});
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<double> col(m);
        for (std::size_t t = 0; t < m; ++t) col[t] = vals[t * d + c];
        const auto ref = naive_dft(col);
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t k = 0; k < 4; ++k) {
                const std::size_t i = (b * 4 + k) * d + c;
                CHECK(std::abs(cplx(y.re[i], y.im[i]) - ref[k]) < 1e-4);
            }
        }
    }
    const auto back = irfft(y, m);
    for (std::size_t i = 0; i < back.numel(); ++i) CHECK(std::abs(back.at(i) - x.at(i)) < 1e-5);
}

TEST_CASE("fft shape errors") {
    std::vector<double> empty;
    std::vector<cplx> out(1);
    CHECK_THROWS_AS(rfft_1d(empty, out), std::invalid_argument);
    std::vector<cplx> y(3);
    std::vector<double> x(8);
    CHECK_THROWS_AS(irfft_1d(y, x), std::invalid_argument);
    CHECK_THROWS_AS(irfft(ComplexTensor::zeros({3, 2}), 8), std::invalid_argument);
}
