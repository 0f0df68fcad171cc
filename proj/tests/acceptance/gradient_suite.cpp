#include <cstdio>

#include "../support/grad_cases.hpp"
#include "outcome.hpp"

namespace ffmsr::acceptance {

Outcome gradient_suite() {
    constexpr double kTol = 1e-4;
    double worst = 0;
    std::string worst_name;
    std::size_t checks = 0, failed = 0;
    for (const auto* cases : {&testing::primitive_grad_cases(), &testing::module_grad_cases()}) {
        for (const auto& c : *cases) {
            for (std::uint64_t seed = 1; seed <= 3; ++seed) {
                const auto r = c.run(seed);
                ++checks;
                if (!(r.max_rel_error < kTol)) ++failed;
                if (r.max_rel_error > worst || worst_name.empty()) {
                    worst = r.max_rel_error;
                    worst_name = c.name + "/" + r.worst;
                }
            }
        }
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu checks, %zu over %.0e, worst %.2e (%s)", checks, failed, kTol, worst,
                  worst_name.c_str());
    return {failed == 0, buf};
}

}  // namespace ffmsr::acceptance
