#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ffmsr/numkit/tensor.hpp"

// Differentiable primitives. Unless noted, "rows" means the tensor viewed as
// [numel / d, d] with d the last extent.

namespace ffmsr::FFMSR_PRECISION::numkit {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real factor);

/// x[..., d] + bias[d] on every row.
Tensor add_row(const Tensor& x, const Tensor& bias);
/// x[..., d] * s[..., 1]: one scalar per row.
Tensor scale_rows(const Tensor& x, const Tensor& s);

/// x[..., k] @ w[k, p] -> [..., p].
Tensor matmul(const Tensor& x, const Tensor& w);
/// 2-D transpose.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor softmax(const Tensor& x);  // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = Real(1e-8));
Tensor leaky_relu(const Tensor& x, Real slope = Real(0.01));
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
/// Inverted dropout; identity unless ctx.training and rate > 0.
Tensor dropout(const Tensor& x, Real rate, const ForwardContext& ctx);

/// irfft(W ⊙ rfft(x)) along axis -2 of x[..., m, d], with the complex filter
/// given as w_re/w_im of shape [m/2+1, d].
Tensor spectral_filter(const Tensor& x, const Tensor& w_re, const Tensor& w_im);

/// Row lookup: table[M, d], ids -> [batch_shape..., d]. Id -1 yields a zero row.
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, Shape batch_shape);

/// Zero-pad or crop axis -2 of x[..., m, d] to length m_new at the end.
Tensor resize_seq(const Tensor& x, std::size_t m_new);

/// Concatenate along the last axis; leading extents must agree.
Tensor concat_last(const std::vector<Tensor>& parts);
/// Stack G tensors of shape [N, d] into [N, G, d].
Tensor stack_experts(const std::vector<Tensor>& parts);
/// out[n, :] = sum_g weights[n, g] * values[n, g, :].
Tensor mix(const Tensor& weights, const Tensor& values);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum over the last axis, keeping it as extent 1.
Tensor sum_last(const Tensor& x);
/// Euclidean norm over the last axis, keeping it as extent 1. The gradient at
/// a zero row is taken as zero.
Tensor l2_norm_last(const Tensor& x);

/// Multi-head scaled dot-product attention over q, k, v of shape [B, m, d].
/// Keys at positions >= lengths[b] are masked out; `causal` additionally
/// masks keys after the query. When `weights_out` is given it receives the
/// post-softmax weights as [B, heads, m, m].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal,
                 std::span<const std::size_t> lengths, Real dropout_rate, const ForwardContext& ctx,
                 std::vector<Real>* weights_out = nullptr);

/// Mean over rows of -log softmax(logits)[target]. logits: [B, M].
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets);

}  // namespace ffmsr::FFMSR_PRECISION::numkit
