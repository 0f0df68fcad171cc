#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ffmsr/numkit/tensor.hpp"

namespace ffmsr::testing {

struct GradCheck {
    double max_rel_error = 0;
    std::string worst;  // input with the largest error
    std::size_t entries = 0;
};

/// Central finite differences against the tape gradient of `loss` for every
/// input leaf. Per input the error is |g_tape - g_fd| / max(|g_tape|, |g_fd|, 1e-6)
/// over the checked entries. When max_entries is non-zero at most that many
/// entries per input are probed, chosen at random.
GradCheck check_gradients(const std::vector<numkit::NamedTensor>& inputs, const std::function<numkit::Tensor()>& loss,
                          double h = 1e-3, std::size_t max_entries = 0, std::uint64_t sample_seed = 0);

struct GradCase {
    std::string name;
    std::function<GradCheck(std::uint64_t seed)> run;
};

/// Every differentiable primitive.
const std::vector<GradCase>& primitive_grad_cases();
/// Modules, losses, prediction head and a full client forward pass.
const std::vector<GradCase>& module_grad_cases();

}  // namespace ffmsr::testing
