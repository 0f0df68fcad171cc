#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ffmsr/numkit/tensor.hpp"

namespace ffmsr::FFMSR_PRECISION::model {

using numkit::ForwardContext;
using numkit::NamedTensor;
using numkit::Rng;
using numkit::Tensor;

/// Learnable complex filter along the sequence axis.
///
///   y = irfft(W ⊙ rfft(x))                       without residual
///   y = LayerNorm(x + dropout(irfft(W ⊙ rfft(x))))  with residual
///
/// Inputs shorter than m_max are zero-padded to m_max before the transform
/// and cropped back afterwards.
class FilterLayer {
public:
    FilterLayer() = default;
    FilterLayer(std::size_t m_max, std::size_t d, Real dropout_rate, bool residual);

    /// x: [..., m, d] with m <= m_max.
    Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

    std::size_t m_max() const { return m_max_; }
    bool residual() const { return residual_; }
    std::vector<NamedTensor> parameters(const std::string& prefix) const;

    Tensor& w_re() { return w_re_; }
    Tensor& w_im() { return w_im_; }

private:
    std::size_t m_max_ = 0;
    Real dropout_rate_ = 0;
    bool residual_ = false;
    Tensor w_re_;  // [m_max/2+1, d], starts at 1
    Tensor w_im_;  // [m_max/2+1, d], starts at 0
    Tensor ln_gamma_;
    Tensor ln_beta_;
};

/// e' = sigmoid(e · w) e with one shared w: [d, 1].
class GateLayer {
public:
    GateLayer() = default;
    GateLayer(std::size_t d, Rng& init_rng);

    /// e: [..., d].
    Tensor forward(const Tensor& e) const;
    /// The scalar gate per row, [..., 1].
    Tensor gate(const Tensor& e) const;

    std::vector<NamedTensor> parameters(const std::string& prefix) const;
    Tensor& weight() { return w_; }

private:
    Tensor w_;
};

/// Post-norm self-attention block with a GELU feed-forward of width 4d.
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(std::size_t d, std::size_t heads, Real hidden_dropout, Real attn_dropout, Rng& init_rng);

    /// x: [B, m, d]; keys at positions >= lengths[b] are ignored.
    Tensor forward(const Tensor& x, std::span<const std::size_t> lengths, bool causal, const ForwardContext& ctx,
                   std::vector<Real>* attn_weights = nullptr) const;

    std::vector<NamedTensor> parameters(const std::string& prefix) const;

private:
    std::size_t heads_ = 1;
    Real hidden_dropout_ = 0;
    Real attn_dropout_ = 0;
    Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
    Tensor ln1_gamma_, ln1_beta_;
    Tensor ff1_w_, ff1_b_, ff2_w_, ff2_b_;
    Tensor ln2_gamma_, ln2_beta_;
};

class TransformerStack {
public:
    TransformerStack() = default;
    TransformerStack(std::size_t n_blocks, std::size_t d, std::size_t heads, Real hidden_dropout, Real attn_dropout,
                     bool causal, Rng& init_rng);

    /// x: [B, m, d] -> hidden states of every position, [B, m, d].
    /// attn_weights, when given, receives one [B, heads, m, m] block per layer.
    Tensor forward(const Tensor& x, std::span<const std::size_t> lengths, const ForwardContext& ctx,
                   std::vector<std::vector<Real>>* attn_weights = nullptr) const;

    std::size_t n_blocks() const { return blocks_.size(); }
    bool causal() const { return causal_; }
    std::vector<NamedTensor> parameters(const std::string& prefix) const;

private:
    std::vector<TransformerBlock> blocks_;
    bool causal_ = true;
};

/// Zero every row at position >= lengths[b] of x: [B, m, d].
Tensor mask_padding(const Tensor& x, std::span<const std::size_t> lengths);

/// Row lengths[b]-1 of x: [B, m, d] for every b -> [B, d].
Tensor gather_last(const Tensor& x, std::span<const std::size_t> lengths);

/// Elementwise sum of the three item representations.
Tensor combine(const Tensor& f, const Tensor& e, const Tensor& t);

}  // namespace ffmsr::FFMSR_PRECISION::model
