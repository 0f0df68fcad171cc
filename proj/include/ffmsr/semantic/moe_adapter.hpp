#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ffmsr/numkit/tensor.hpp"

namespace ffmsr::FFMSR_PRECISION::semantic {

using numkit::ForwardContext;
using numkit::NamedTensor;
using numkit::Rng;
using numkit::Tensor;

/// Mixture of parametric-whitening experts with a noisy softmax gate.
///
///   expert_k(x) = (dropout(x) - b_k) W_k
///   g           = softmax(x W_gate + noise)
///   out         = sum_k g_k expert_k(x)
///
/// Noise is N(0, noise_scale^2) per gate logit and is only drawn in training.
class MoEAdapter {
public:
    MoEAdapter() = default;
    MoEAdapter(std::size_t in_dim, std::size_t out_dim, std::size_t n_experts, Real noise_scale, Real dropout_rate,
               Rng& init_rng);

    /// x: [N, in_dim] -> [N, out_dim].
    Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
    /// Gate probabilities [N, n_experts].
    Tensor gate(const Tensor& x, const ForwardContext& ctx) const;

    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }
    std::size_t n_experts() const { return w_pw_.size(); }
    Real noise_scale() const { return noise_scale_; }
    Real dropout_rate() const { return dropout_rate_; }

    std::vector<NamedTensor> parameters(const std::string& prefix) const;

    std::vector<Tensor>& expert_weights() { return w_pw_; }
    std::vector<Tensor>& expert_biases() { return b_pw_; }
    Tensor& gate_weights() { return w_gate_; }

private:
    std::size_t in_dim_ = 0;
    std::size_t out_dim_ = 0;
    Real noise_scale_ = 1;
    Real dropout_rate_ = 0;
    std::vector<Tensor> w_pw_;  // [in, out] per expert
    std::vector<Tensor> b_pw_;  // [in] per expert
    Tensor w_gate_;             // [in, G]
};

}  // namespace ffmsr::FFMSR_PRECISION::semantic
