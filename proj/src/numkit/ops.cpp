#include "ffmsr/numkit/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ffmsr/numkit/fft.hpp"

namespace ffmsr::FFMSR_PRECISION::numkit {

namespace {

using detail::Node;
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using StridedMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

// Gradient buffer of a parent, or nullptr when it does not take gradients.
Real* grad_of(Node& n, std::size_t i) {
    Node& p = parent(n, i);
    return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                    " vs " + shape_to_string(b.shape()));
    }
}

std::size_t last_dim(const Tensor& x, const char* op) {
    if (x.rank() == 0) throw std::invalid_argument(std::string(op) + ": scalar input");
    return x.shape().back();
}

std::size_t row_count(const Tensor& x, std::size_t d) { return d == 0 ? 0 : x.numel() / d; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Real> out(a.numel());
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (Real* g = grad_of(n, p)) {
                for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<Real> out(a.numel());
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
        if (Real* g = grad_of(n, 1)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Real> out(a.numel());
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
        const auto& av = parent(n, 0).data;
        const auto& bv = parent(n, 1).data;
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (Real* g = grad_of(n, 1)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

Tensor scale(const Tensor& a, Real factor) {
    std::vector<Real> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& n) {
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * factor;
        }
    });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
    const std::size_t d = last_dim(x, "add_row");
    if (bias.numel() != d) {
        throw std::invalid_argument("add_row: bias of shape " + shape_to_string(bias.shape()) +
                                    " for rows of width " + std::to_string(d));
    }
    const std::size_t rows = row_count(x, d);
    std::vector<Real> out(x.data().begin(), x.data().end());
    const auto bd = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bd[j];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x, bias}, [rows, d](Node& n) {
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
        if (Real* g = grad_of(n, 1)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < d; ++j) g[j] += n.grad[r * d + j];
            }
        }
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    const std::size_t d = last_dim(x, "scale_rows");
    const std::size_t rows = row_count(x, d);
    if (s.numel() != rows || s.shape().back() != 1) {
        throw std::invalid_argument("scale_rows: scale of shape " + shape_to_string(s.shape()) + " for " +
                                    shape_to_string(x.shape()));
    }
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    const auto sd = s.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xd[r * d + j] * sd[r];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x, s}, [rows, d](Node& n) {
        const auto& xv = parent(n, 0).data;
        const auto& sv = parent(n, 1).data;
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < d; ++j) g[r * d + j] += n.grad[r * d + j] * sv[r];
            }
        }
        if (Real* g = grad_of(n, 1)) {
            for (std::size_t r = 0; r < rows; ++r) {
                Real acc = 0;
                for (std::size_t j = 0; j < d; ++j) acc += n.grad[r * d + j] * xv[r * d + j];
                g[r] += acc;
            }
        }
    });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
    if (w.rank() != 2) throw std::invalid_argument("matmul: weight must be 2-D, got " + shape_to_string(w.shape()));
    const std::size_t k = last_dim(x, "matmul");
    if (w.dim(0) != k) {
        throw std::invalid_argument("matmul: " + shape_to_string(x.shape()) + " @ " + shape_to_string(w.shape()));
    }
    const std::size_t p = w.dim(1);
    const std::size_t rows = row_count(x, k);
    Shape out_shape = x.shape();
    out_shape.back() = p;
    std::vector<Real> out(rows * p);
    const auto R = static_cast<Eigen::Index>(rows);
    const auto K = static_cast<Eigen::Index>(k);
    const auto P = static_cast<Eigen::Index>(p);
    MatMap(out.data(), R, P).noalias() = ConstMatMap(x.data().data(), R, K) * ConstMatMap(w.data().data(), K, P);
    return Tensor::make_result(std::move(out_shape), std::move(out), {x, w}, [R, K, P](Node& n) {
        ConstMatMap gy(n.grad.data(), R, P);
        if (Real* g = grad_of(n, 0)) {
            MatMap(g, R, K).noalias() += gy * ConstMatMap(parent(n, 1).data.data(), K, P).transpose();
        }
        if (Real* g = grad_of(n, 1)) {
            MatMap(g, K, P).noalias() += ConstMatMap(parent(n, 0).data.data(), R, K).transpose() * gy;
        }
    });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: expected 2-D, got " + shape_to_string(a.shape()));
    const auto r = static_cast<Eigen::Index>(a.dim(0));
    const auto c = static_cast<Eigen::Index>(a.dim(1));
    std::vector<Real> out(a.numel());
    MatMap(out.data(), c, r) = ConstMatMap(a.data().data(), r, c).transpose();
    return Tensor::make_result({a.dim(1), a.dim(0)}, std::move(out), {a}, [r, c](Node& n) {
        if (Real* g = grad_of(n, 0)) MatMap(g, r, c) += ConstMatMap(n.grad.data(), c, r).transpose();
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
    }
    std::vector<Real> out(a.data().begin(), a.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& n) {
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Tensor softmax(const Tensor& x) {
    const std::size_t d = last_dim(x, "softmax");
    const std::size_t rows = row_count(x, d);
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = xd.data() + r * d;
        Real* o = out.data() + r * d;
        const Real mx = *std::max_element(in, in + d);
        Real total = 0;
        for (std::size_t j = 0; j < d; ++j) total += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < d; ++j) o[j] /= total;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, d](Node& n) {
        Real* g = grad_of(n, 0);
        if (!g) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const Real* y = n.data.data() + r * d;
            const Real* gy = n.grad.data() + r * d;
            Real dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
    const std::size_t d = last_dim(x, "layer_norm");
    if (gamma.numel() != d || beta.numel() != d) throw std::invalid_argument("layer_norm: affine size mismatch");
    const std::size_t rows = row_count(x, d);
    std::vector<Real> out(x.numel());
    std::vector<Real> xhat(x.numel());
    std::vector<Real> rstd(rows);
    const auto xd = x.data();
    const auto gd = gamma.data();
    const auto bd = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = xd.data() + r * d;
        Real mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<Real>(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<Real>(d);
        rstd[r] = Real(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (in[j] - mu) * rstd[r];
            out[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gamma, beta},
        [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& n) {
            const auto& gam = parent(n, 1).data;
            Real* gx = grad_of(n, 0);
            Real* gg = grad_of(n, 1);
            Real* gb = grad_of(n, 2);
            std::vector<Real> gxhat(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const Real* gy = n.grad.data() + r * d;
                const Real* xh = xhat.data() + r * d;
                Real mean_g = 0;
                Real mean_gx = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    if (gg) gg[j] += gy[j] * xh[j];
                    if (gb) gb[j] += gy[j];
                    gxhat[j] = gy[j] * gam[j];
                    mean_g += gxhat[j];
                    mean_gx += gxhat[j] * xh[j];
                }
                if (!gx) continue;
                mean_g /= static_cast<Real>(d);
                mean_gx /= static_cast<Real>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    gx[r * d + j] += rstd[r] * (gxhat[j] - mean_g - xh[j] * mean_gx);
                }
            }
        });
}

Tensor leaky_relu(const Tensor& x, Real slope) {
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0 ? v : v * slope;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [slope](Node& n) {
        Real* g = grad_of(n, 0);
        if (!g) return;
        const auto& xv = parent(n, 0).data;
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * (xv[i] > 0 ? Real(1) : slope);
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Branch keeps exp() from overflowing for large |x|.
        const Real v = xd[i];
        if (v >= 0) {
            out[i] = Real(1) / (Real(1) + std::exp(-v));
        } else {
            const Real e = std::exp(v);
            out[i] = e / (Real(1) + e);
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& n) {
        Real* g = grad_of(n, 0);
        if (!g) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * n.data[i] * (Real(1) - n.data[i]);
    });
}

Tensor gelu(const Tensor& x) {
    constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = Real(0.5) * xd[i] * (Real(1) + std::erf(xd[i] * inv_sqrt2));
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& n) {
        Real* g = grad_of(n, 0);
        if (!g) return;
        const Real inv_sqrt_2pi = Real(1) / std::sqrt(Real(2) * std::numbers::pi_v<Real>);
        const auto& xv = parent(n, 0).data;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const Real v = xv[i];
            const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
            const Real pdf = inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
            g[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
}

Tensor dropout(const Tensor& x, Real rate, const ForwardContext& ctx) {
    if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (!ctx.training || rate == 0) return x;
    auto& rng = ctx.require_rng();
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
    const Real factor = Real(1) / (Real(1) - rate);
    std::vector<Real> mask(x.numel());
    std::vector<Real> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = keep(rng) ? factor : Real(0);
        out[i] = xd[i] * mask[i];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& n) {
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * mask[i];
        }
    });
}

Tensor spectral_filter(const Tensor& x, const Tensor& w_re, const Tensor& w_im) {
    using cplx = std::complex<double>;
    if (x.rank() < 2) throw std::invalid_argument("spectral_filter: expected [..., m, d], got " + shape_to_string(x.shape()));
    const std::size_t m = x.dim(-2);
    const std::size_t d = x.dim(-1);
    if (m == 0) throw std::invalid_argument("spectral_filter: empty sequence");
    const std::size_t bins = rfft_bins(m);
    if (w_re.shape() != Shape{bins, d} || w_im.shape() != Shape{bins, d}) {
        throw std::invalid_argument("spectral_filter: filter of shape " + shape_to_string(w_re.shape()) +
                                    " does not match " + std::to_string(bins) + " bins x " + std::to_string(d));
    }
    const std::size_t batch = x.numel() / (m * d);

    // Keep the input spectrum for the filter gradient.
    std::vector<cplx> spectra(batch * bins * d);
    std::vector<Real> out(x.numel());
    std::vector<double> col(m);
    std::vector<cplx> spec(bins);
    const auto xd = x.data();
    const auto wr = w_re.data();
    const auto wi = w_im.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t t = 0; t < m; ++t) col[t] = xd[(b * m + t) * d + j];
            rfft_1d(col, spec);
            for (std::size_t k = 0; k < bins; ++k) {
                spectra[(b * bins + k) * d + j] = spec[k];
                spec[k] *= cplx(wr[k * d + j], wi[k * d + j]);
            }
            irfft_1d(spec, col);
            for (std::size_t t = 0; t < m; ++t) out[(b * m + t) * d + j] = static_cast<Real>(col[t]);
        }
    }

    return Tensor::make_result(
        x.shape(), std::move(out), {x, w_re, w_im},
        [m, d, bins, batch, spectra = std::move(spectra)](Node& n) {
            Real* gx = grad_of(n, 0);
            Real* gwr = grad_of(n, 1);
            Real* gwi = grad_of(n, 2);
            const auto& wr = parent(n, 1).data;
            const auto& wi = parent(n, 2).data;
            // Hermitian multiplicity of each one-sided bin.
            auto mult = [m](std::size_t k) { return (k == 0 || 2 * k == m) ? 1.0 : 2.0; };
            std::vector<double> col(m);
            std::vector<cplx> gz(bins);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t j = 0; j < d; ++j) {
                    for (std::size_t t = 0; t < m; ++t) col[t] = n.grad[(b * m + t) * d + j];
                    rfft_1d(col, gz);
                    for (std::size_t k = 0; k < bins; ++k) {
                        gz[k] *= mult(k) / static_cast<double>(m);
                        const auto idx = (b * bins + k) * d + j;
                        const cplx w(wr[k * d + j], wi[k * d + j]);
                        if (gwr || gwi) {
                            const cplx gw = gz[k] * std::conj(spectra[idx]);
                            if (gwr) gwr[k * d + j] += static_cast<Real>(gw.real());
                            if (gwi) gwi[k * d + j] += static_cast<Real>(gw.imag());
                        }
                        gz[k] = gz[k] * std::conj(w) / mult(k);
                    }
                    if (!gx) continue;
                    irfft_1d(gz, col);
                    for (std::size_t t = 0; t < m; ++t) {
                        gx[(b * m + t) * d + j] += static_cast<Real>(col[t] * static_cast<double>(m));
                    }
                }
            }
        });
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, Shape batch_shape) {
    if (table.rank() != 2) throw std::invalid_argument("embedding: table must be 2-D");
    if (shape_numel(batch_shape) != ids.size()) throw std::invalid_argument("embedding: id count does not match batch shape");
    const std::size_t rows = table.dim(0);
    const std::size_t d = table.dim(1);
    std::vector<std::int64_t> index(ids.begin(), ids.end());
    std::vector<Real> out(ids.size() * d, Real(0));
    const auto td = table.data();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto id = index[i];
        if (id == -1) continue;
        if (id < 0 || static_cast<std::size_t>(id) >= rows) {
            throw std::invalid_argument("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(rows));
        }
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(id) * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    batch_shape.push_back(d);
    return Tensor::make_result(std::move(batch_shape), std::move(out), {table}, [d, index = std::move(index)](Node& n) {
        Real* g = grad_of(n, 0);
        if (!g) return;
        for (std::size_t i = 0; i < index.size(); ++i) {
            if (index[i] < 0) continue;
            Real* row = g + static_cast<std::size_t>(index[i]) * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += n.grad[i * d + j];
        }
    });
}

Tensor resize_seq(const Tensor& x, std::size_t m_new) {
    if (x.rank() < 2) throw std::invalid_argument("resize_seq: expected [..., m, d], got " + shape_to_string(x.shape()));
    const std::size_t m = x.dim(-2);
    const std::size_t d = x.dim(-1);
    const std::size_t batch = m * d == 0 ? 0 : x.numel() / (m * d);
    const std::size_t keep = std::min(m, m_new);
    Shape shape = x.shape();
    shape[shape.size() - 2] = m_new;
    std::vector<Real> out(batch * m_new * d, Real(0));
    const auto xd = x.data();
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(b * m * d), keep * d,
                    out.begin() + static_cast<std::ptrdiff_t>(b * m_new * d));
    }
    return Tensor::make_result(std::move(shape), std::move(out), {x}, [m, m_new, d, batch, keep](Node& n) {
        Real* g = grad_of(n, 0);
        if (!g) return;
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < keep * d; ++i) g[b * m * d + i] += n.grad[b * m_new * d + i];
        }
    });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last: no inputs");
    Shape lead = parts[0].shape();
    lead.pop_back();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        widths.push_back(s.back());
        s.pop_back();
        if (s != lead) throw std::invalid_argument("concat_last: leading extents differ");
        total += widths.back();
    }
    const std::size_t rows = shape_numel(lead);
    std::vector<Real> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto pd = parts[i].data();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(r * widths[i]), widths[i],
                        out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
        }
        offset += widths[i];
    }
    Shape out_shape = lead;
    out_shape.push_back(total);
    return Tensor::make_result(std::move(out_shape), std::move(out), parts, [rows, total, widths](Node& n) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            if (Real* g = grad_of(n, i)) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < widths[i]; ++j) g[r * widths[i] + j] += n.grad[r * total + off + j];
                }
            }
            off += widths[i];
        }
    });
}

Tensor stack_experts(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("stack_experts: no inputs");
    const Shape& s0 = parts[0].shape();
    if (s0.size() != 2) throw std::invalid_argument("stack_experts: inputs must be [N, d]");
    for (const auto& p : parts) {
        if (p.shape() != s0) throw std::invalid_argument("stack_experts: shape mismatch");
    }
    const std::size_t rows = s0[0];
    const std::size_t d = s0[1];
    const std::size_t g_count = parts.size();
    std::vector<Real> out(rows * g_count * d);
    for (std::size_t g = 0; g < g_count; ++g) {
        const auto pd = parts[g].data();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(r * d), d,
                        out.begin() + static_cast<std::ptrdiff_t>((r * g_count + g) * d));
        }
    }
    return Tensor::make_result({rows, g_count, d}, std::move(out), parts, [rows, g_count, d](Node& n) {
        for (std::size_t g = 0; g < g_count; ++g) {
            Real* gp = grad_of(n, g);
            if (!gp) continue;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < d; ++j) gp[r * d + j] += n.grad[(r * g_count + g) * d + j];
            }
        }
    });
}

Tensor mix(const Tensor& weights, const Tensor& values) {
    if (weights.rank() != 2 || values.rank() != 3 || values.dim(0) != weights.dim(0) ||
        values.dim(1) != weights.dim(1)) {
        throw std::invalid_argument("mix: weights " + shape_to_string(weights.shape()) + " vs values " +
                                    shape_to_string(values.shape()));
    }
    const std::size_t rows = values.dim(0);
    const std::size_t g_count = values.dim(1);
    const std::size_t d = values.dim(2);
    std::vector<Real> out(rows * d, Real(0));
    const auto wd = weights.data();
    const auto vd = values.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t g = 0; g < g_count; ++g) {
            const Real w = wd[r * g_count + g];
            const Real* v = vd.data() + (r * g_count + g) * d;
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] += w * v[j];
        }
    }
    return Tensor::make_result({rows, d}, std::move(out), {weights, values}, [rows, g_count, d](Node& n) {
        const auto& wv = parent(n, 0).data;
        const auto& vv = parent(n, 1).data;
        Real* gw = grad_of(n, 0);
        Real* gv = grad_of(n, 1);
        for (std::size_t r = 0; r < rows; ++r) {
            const Real* gy = n.grad.data() + r * d;
            for (std::size_t g = 0; g < g_count; ++g) {
                const std::size_t base = (r * g_count + g) * d;
                if (gw) {
                    Real acc = 0;
                    for (std::size_t j = 0; j < d; ++j) acc += gy[j] * vv[base + j];
                    gw[r * g_count + g] += acc;
                }
                if (gv) {
                    const Real w = wv[r * g_count + g];
                    for (std::size_t j = 0; j < d; ++j) gv[base + j] += w * gy[j];
                }
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    Real total = 0;
    for (Real v : x.data()) total += v;
    return Tensor::make_result({}, {total}, {x}, [](Node& n) {
        if (Real* g = grad_of(n, 0)) {
            const auto size = parent(n, 0).data.size();
            for (std::size_t i = 0; i < size; ++i) g[i] += n.grad[0];
        }
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

Tensor sum_last(const Tensor& x) {
    const std::size_t d = last_dim(x, "sum_last");
    const std::size_t rows = row_count(x, d);
    std::vector<Real> out(rows, Real(0));
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) out[r] += xd[r * d + j];
    }
    Shape s = x.shape();
    s.back() = 1;
    return Tensor::make_result(std::move(s), std::move(out), {x}, [rows, d](Node& n) {
        if (Real* g = grad_of(n, 0)) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < d; ++j) g[r * d + j] += n.grad[r];
            }
        }
    });
}

Tensor l2_norm_last(const Tensor& x) {
    const std::size_t d = last_dim(x, "l2_norm_last");
    const std::size_t rows = row_count(x, d);
    std::vector<Real> out(rows, Real(0));
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        Real acc = 0;
        for (std::size_t j = 0; j < d; ++j) acc += xd[r * d + j] * xd[r * d + j];
        out[r] = std::sqrt(acc);
    }
    Shape s = x.shape();
    s.back() = 1;
    return Tensor::make_result(std::move(s), std::move(out), {x}, [rows, d](Node& n) {
        Real* g = grad_of(n, 0);
        if (!g) return;
        const auto& xv = parent(n, 0).data;
        for (std::size_t r = 0; r < rows; ++r) {
            const Real norm = n.data[r];
            if (norm == Real(0)) continue;
            for (std::size_t j = 0; j < d; ++j) g[r * d + j] += n.grad[r] * xv[r * d + j] / norm;
        }
    });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
                 std::span<const std::size_t> lengths, Real dropout_rate, const ForwardContext& ctx,
                 std::vector<Real>* weights_out) {
    require_same_shape(q, k, "attention");
    require_same_shape(q, v, "attention");
    if (q.rank() != 3) throw std::invalid_argument("attention: expected [B, m, d], got " + shape_to_string(q.shape()));
    const std::size_t B = q.dim(0);
    const std::size_t m = q.dim(1);
    const std::size_t d = q.dim(2);
    if (heads == 0 || d % heads != 0) throw std::invalid_argument("attention: width not divisible by head count");
    if (lengths.size() != B) throw std::invalid_argument("attention: one length per sequence required");
    if (dropout_rate < 0 || dropout_rate >= 1) throw std::invalid_argument("attention: dropout rate must be in [0, 1)");
    const std::size_t dk = d / heads;
    const Real inv_scale = Real(1) / std::sqrt(static_cast<Real>(dk));
    const bool use_dropout = ctx.training && dropout_rate > 0;
    const Real keep_scale = Real(1) / (Real(1) - dropout_rate);

    const auto M = static_cast<Eigen::Index>(m);
    const auto DK = static_cast<Eigen::Index>(dk);
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));

    std::vector<Real> probs(B * heads * m * m, Real(0));
    std::vector<Real> drop_mask;
    if (use_dropout) drop_mask.assign(probs.size(), Real(0));
    std::bernoulli_distribution keep(1.0 - static_cast<double>(dropout_rate));
    std::vector<Real> out(q.numel(), Real(0));
    Mat scores(M, M);
    Mat applied(M, M);

    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t len = std::min(lengths[b], m);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = b * m * d + h * dk;
            ConstStridedMap Q(q.data().data() + off, M, DK, stride);
            ConstStridedMap K(k.data().data() + off, M, DK, stride);
            ConstStridedMap V(v.data().data() + off, M, DK, stride);
            scores.noalias() = (Q * K.transpose()) * inv_scale;
            MatMap P(probs.data() + (b * heads + h) * m * m, M, M);
            for (std::size_t t = 0; t < m; ++t) {
                const std::size_t limit = causal ? std::min(len, t + 1) : len;
                if (limit == 0) continue;
                Real mx = -std::numeric_limits<Real>::infinity();
                for (std::size_t s = 0; s < limit; ++s) mx = std::max(mx, scores(t, s));
                Real total = 0;
                for (std::size_t s = 0; s < limit; ++s) total += (P(t, s) = std::exp(scores(t, s) - mx));
                for (std::size_t s = 0; s < limit; ++s) P(t, s) /= total;
            }
            if (use_dropout) {
                MatMap D(drop_mask.data() + (b * heads + h) * m * m, M, M);
                auto& rng = ctx.require_rng();
                for (Eigen::Index t = 0; t < M; ++t) {
                    for (Eigen::Index s = 0; s < M; ++s) D(t, s) = keep(rng) ? keep_scale : Real(0);
                }
                applied = P.cwiseProduct(D);
            } else {
                applied = P;
            }
            StridedMap O(out.data() + off, M, DK, stride);
            O.noalias() = applied * V;
        }
    }
    if (weights_out) *weights_out = probs;

    return Tensor::make_result(
        q.shape(), std::move(out), {q, k, v},
        [B, m, d, heads, dk, inv_scale, use_dropout, probs = std::move(probs),
         drop_mask = std::move(drop_mask)](Node& n) {
            const auto M = static_cast<Eigen::Index>(m);
            const auto DK = static_cast<Eigen::Index>(dk);
            const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
            Real* gq = grad_of(n, 0);
            Real* gk = grad_of(n, 1);
            Real* gv = grad_of(n, 2);
            const auto& qv = parent(n, 0).data;
            const auto& kv = parent(n, 1).data;
            const auto& vv = parent(n, 2).data;
            Mat dP(M, M);
            Mat dS(M, M);
            Mat applied(M, M);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t off = b * m * d + h * dk;
                    const std::size_t poff = (b * heads + h) * m * m;
                    ConstMatMap P(probs.data() + poff, M, M);
                    ConstStridedMap Q(qv.data() + off, M, DK, stride);
                    ConstStridedMap K(kv.data() + off, M, DK, stride);
                    ConstStridedMap V(vv.data() + off, M, DK, stride);
                    ConstStridedMap dO(n.grad.data() + off, M, DK, stride);
                    if (use_dropout) {
                        ConstMatMap D(drop_mask.data() + poff, M, M);
                        applied = P.cwiseProduct(D);
                    } else {
                        applied = P;
                    }
                    if (gv) StridedMap(gv + off, M, DK, stride).noalias() += applied.transpose() * dO;
                    if (!gq && !gk) continue;
                    dP.noalias() = dO * V.transpose();
                    if (use_dropout) dP = dP.cwiseProduct(ConstMatMap(drop_mask.data() + poff, M, M));
                    // Softmax backward row by row; masked entries have P = 0.
                    for (Eigen::Index t = 0; t < M; ++t) {
                        const Real dot = P.row(t).dot(dP.row(t));
                        dS.row(t) = P.row(t).cwiseProduct((dP.row(t).array() - dot).matrix());
                    }
                    dS *= inv_scale;
                    if (gq) StridedMap(gq + off, M, DK, stride).noalias() += dS * K;
                    if (gk) StridedMap(gk + off, M, DK, stride).noalias() += dS.transpose() * Q;
                }
            }
        });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets) {
    if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [B, M]");
    const std::size_t B = logits.dim(0);
    const std::size_t M = logits.dim(1);
    if (targets.size() != B) throw std::invalid_argument("cross_entropy: one target per row required");
    if (B == 0) throw std::invalid_argument("cross_entropy: empty batch");
    std::vector<Real> probs(B * M);
    std::vector<std::int64_t> tgt(targets.begin(), targets.end());
    const auto ld = logits.data();
    double loss = 0;
    for (std::size_t r = 0; r < B; ++r) {
        if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= M) {
            throw std::invalid_argument("cross_entropy: target " + std::to_string(tgt[r]) + " outside " +
                                        std::to_string(M) + " classes");
        }
        const Real* row = ld.data() + r * M;
        const Real mx = *std::max_element(row, row + M);
        double total = 0;
        for (std::size_t j = 0; j < M; ++j) total += std::exp(static_cast<double>(row[j] - mx));
        const double log_z = std::log(total) + static_cast<double>(mx);
        loss += log_z - static_cast<double>(row[tgt[r]]);
        for (std::size_t j = 0; j < M; ++j) probs[r * M + j] = static_cast<Real>(std::exp(static_cast<double>(row[j]) - log_z));
    }
    loss /= static_cast<double>(B);
    return Tensor::make_result({}, {static_cast<Real>(loss)}, {logits},
                               [B, M, probs = std::move(probs), tgt = std::move(tgt)](Node& n) {
                                   Real* g = grad_of(n, 0);
                                   if (!g) return;
                                   const Real s = n.grad[0] / static_cast<Real>(B);
                                   for (std::size_t r = 0; r < B; ++r) {
                                       for (std::size_t j = 0; j < M; ++j) g[r * M + j] += s * probs[r * M + j];
                                       g[r * M + static_cast<std::size_t>(tgt[r])] -= s;
                                   }
                               });
}

}  // namespace ffmsr::FFMSR_PRECISION::numkit
