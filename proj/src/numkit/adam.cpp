#include "ffmsr/numkit/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ffmsr::FFMSR_PRECISION::numkit {

void adam_step(AdamState& state, const AdamOptions& options, std::span<Real> param, std::span<const Real> grad) {
    if (param.size() != grad.size()) {
        throw std::invalid_argument("adam_step: parameter has " + std::to_string(param.size()) +
                                    " values but gradient has " + std::to_string(grad.size()));
    }
    if (state.first_moment.empty() && state.second_moment.empty()) {
        state.first_moment.assign(param.size(), Real(0));
        state.second_moment.assign(param.size(), Real(0));
    }
    if (state.first_moment.size() != param.size() || state.second_moment.size() != param.size()) {
        throw std::invalid_argument("adam_step: moment buffers do not match the parameter");
    }
    ++state.step_count;
    const auto t = static_cast<Real>(state.step_count);
    const Real bc1 = Real(1) - std::pow(options.beta1, t);
    const Real bc2 = Real(1) - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const Real g = grad[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = options.beta1 * m + (Real(1) - options.beta1) * g;
        v = options.beta2 * v + (Real(1) - options.beta2) * g * g;
        const Real m_hat = m / bc1;
        const Real v_hat = v / bc2;
        param[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), states_(params_.size()), options_(options) {}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.requires_grad() || !p.has_grad()) continue;
        adam_step(states_[i], options_, p.mutable_data(), p.grad());
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace ffmsr::FFMSR_PRECISION::numkit
