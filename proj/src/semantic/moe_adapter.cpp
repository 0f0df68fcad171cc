#include "ffmsr/semantic/moe_adapter.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ffmsr/numkit/ops.hpp"

namespace ffmsr::FFMSR_PRECISION::semantic {

using namespace numkit;

MoEAdapter::MoEAdapter(std::size_t in_dim, std::size_t out_dim, std::size_t n_experts, Real noise_scale,
                       Real dropout_rate, Rng& init_rng)
    : in_dim_(in_dim), out_dim_(out_dim), noise_scale_(noise_scale), dropout_rate_(dropout_rate) {
    if (n_experts == 0) throw std::invalid_argument("moe adapter: at least one expert");
    if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("moe adapter: dimensions must be positive");
    if (dropout_rate < 0 || dropout_rate >= 1) throw std::invalid_argument("moe adapter: dropout rate must be in [0, 1)");
    if (noise_scale < 0) throw std::invalid_argument("moe adapter: noise scale must be non-negative");
    const Real bound = Real(1) / std::sqrt(static_cast<Real>(in_dim));
    for (std::size_t k = 0; k < n_experts; ++k) {
        w_pw_.push_back(uniform_tensor({in_dim, out_dim}, bound, init_rng));
        b_pw_.push_back(Tensor::zeros({in_dim}, true));
    }
    w_gate_ = Tensor::zeros({in_dim, n_experts}, true);
}

Tensor MoEAdapter::gate(const Tensor& x, const ForwardContext& ctx) const {
    if (x.rank() != 2 || x.dim(-1) != in_dim_) {
        throw std::invalid_argument("moe adapter: expected [N, " + std::to_string(in_dim_) + "], got " +
                                    shape_to_string(x.shape()));
    }
    Tensor logits = matmul(x, w_gate_);
    if (ctx.training && noise_scale_ > 0) {
        auto& rng = ctx.require_rng();
        logits = add(logits, normal_tensor(logits.shape(), noise_scale_, rng, false));
    }
    return softmax(logits);
}

Tensor MoEAdapter::forward(const Tensor& x, const ForwardContext& ctx) const {
    const Tensor g = gate(x, ctx);
    std::vector<Tensor> experts;
    experts.reserve(w_pw_.size());
    for (std::size_t k = 0; k < w_pw_.size(); ++k) {
        const Tensor xd = dropout(x, dropout_rate_, ctx);
        experts.push_back(matmul(add_row(xd, scale(b_pw_[k], Real(-1))), w_pw_[k]));
    }
    if (experts.size() == 1) return experts.front();
    return mix(g, stack_experts(experts));
}

std::vector<NamedTensor> MoEAdapter::parameters(const std::string& prefix) const {
    std::vector<NamedTensor> out;
    for (std::size_t k = 0; k < w_pw_.size(); ++k) {
        out.push_back({prefix + ".expert" + std::to_string(k) + ".weight", w_pw_[k]});
        out.push_back({prefix + ".expert" + std::to_string(k) + ".bias", b_pw_[k]});
    }
    out.push_back({prefix + ".gate", w_gate_});
    return out;
}

}  // namespace ffmsr::FFMSR_PRECISION::semantic
