#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ffmsr/data/dataset.hpp"
#include "ffmsr/data/encoding_bank.hpp"

namespace ffmsr::data {

/// Knobs of the synthetic benchmark. Topics are shared by every domain;
/// items and users are disjoint across domains.
struct SynthOptions {
    std::size_t topics = 8;
    std::size_t domains = 2;
    std::size_t items_per_domain = 200;
    std::size_t users_per_domain = 300;
    std::size_t layers = 3;
    std::size_t dim = 32;
    /// Expected distance between two topic centres of the same layer.
    double separation = 10.0;
    /// Expected norm of the per-item encoding noise.
    double noise = 1.0;
    std::size_t min_len = 6;
    std::size_t max_len = 15;
    /// Topic chain: stay with stay_prob, move to the next topic with
    /// next_prob, otherwise jump uniformly.
    double stay_prob = 0.6;
    double next_prob = 0.3;
    /// Within-topic popularity follows 1 / (rank + 1)^exponent.
    double popularity_exponent = 1.0;
    /// Fraction of interactions replaced by a uniformly random item.
    double interaction_noise = 0.0;
    std::uint64_t seed = 0;
};

struct SynthDomain {
    InteractionDataset data;
    EncodingBank bank;
    std::vector<std::int32_t> item_topic;
};

struct SynthResult {
    std::vector<SynthDomain> domains;
};

/// Throws std::invalid_argument for fewer than two topics, empty domains,
/// fewer items than topics or inconsistent probabilities.
SynthResult synth_generate(const SynthOptions& options);

/// Single-letter domain name for index i ("A", "B", ...).
std::string synth_domain_name(std::size_t i);

}  // namespace ffmsr::data
