#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ffmsr/numkit/tensor.hpp"

namespace ffmsr::FFMSR_PRECISION::numkit {

struct AdamOptions {
    Real lr = Real(1e-3);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
};

/// Moment estimates for one parameter buffer.
struct AdamState {
    std::int64_t step_count = 0;
    std::vector<Real> first_moment;
    std::vector<Real> second_moment;
};

/// Bias-corrected Adam update of `param` in place. An empty state is sized
/// on first use; afterwards all three buffers must agree in length.
void adam_step(AdamState& state, const AdamOptions& options, std::span<Real> param, std::span<const Real> grad);

/// Adam over a fixed parameter list. Parameters that are frozen or have no
/// gradient in a step are skipped, including their step counters.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamOptions options);

    void step();
    void zero_grad();

    const AdamOptions& options() const { return options_; }
    const std::vector<AdamState>& states() const { return states_; }

private:
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
    AdamOptions options_;
};

}  // namespace ffmsr::FFMSR_PRECISION::numkit
