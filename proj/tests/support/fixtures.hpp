#pragma once

#include <cstdint>
#include <vector>

#include "ffmsr/data/synth.hpp"
#include "ffmsr/fed/federation.hpp"

namespace ffmsr::testing {

inline std::vector<fed::DomainData> synth_domains(const data::SynthOptions& options) {
    std::vector<fed::DomainData> out;
    for (auto& d : data::synth_generate(options).domains) out.push_back({std::move(d.data), std::move(d.bank)});
    return out;
}

/// Two small domains, quick enough for unit tests.
inline data::SynthOptions tiny_synth(std::uint64_t seed) {
    data::SynthOptions o;
    o.items_per_domain = 24;
    o.users_per_domain = 16;
    o.dim = 8;
    o.min_len = 5;
    o.max_len = 9;
    o.seed = seed;
    return o;
}

inline fed::TrainConfig tiny_config(std::uint64_t seed) {
    fed::TrainConfig c;
    c.d_v = 8;
    c.n_experts = 2;
    c.m_max = 8;
    c.n_blocks = 1;
    c.K = 4;
    c.batch_size = 16;
    c.lr = Real(5e-3);
    c.pretrain_rounds = 1;
    c.patience = 2;
    c.max_finetune_epochs = 3;
    c.seed = seed;
    return c;
}

}  // namespace ffmsr::testing
