#include "ffmsr/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace ffmsr::data {

std::string synth_domain_name(std::size_t i) {
    std::string name;
    do {
        name.insert(name.begin(), static_cast<char>('A' + i % 26));
        i /= 26;
    } while (i-- > 0);
    return name;
}

SynthResult synth_generate(const SynthOptions& o) {
    if (o.topics < 2) throw std::invalid_argument("synth: at least two topics are required");
    if (o.domains == 0 || o.items_per_domain == 0 || o.users_per_domain == 0 || o.layers == 0 || o.dim == 0) {
        throw std::invalid_argument("synth: counts must be positive");
    }
    if (o.items_per_domain < o.topics) throw std::invalid_argument("synth: every topic needs at least one item");
    if (o.min_len == 0 || o.min_len > o.max_len) throw std::invalid_argument("synth: need 0 < min_len <= max_len");
    if (o.stay_prob < 0 || o.next_prob < 0 || o.stay_prob + o.next_prob > 1) {
        throw std::invalid_argument("synth: transition probabilities must be non-negative and sum to at most 1");
    }
    if (o.interaction_noise < 0 || o.interaction_noise > 1 || o.noise < 0 || o.separation < 0) {
        throw std::invalid_argument("synth: noise levels must be non-negative");
    }

    std::mt19937_64 rng(o.seed);
    const double dim = static_cast<double>(o.dim);
    // Per-coordinate scales so that the expected distances match the options.
    std::normal_distribution<double> center_coord(0.0, o.separation / std::sqrt(2.0 * dim));
    std::normal_distribution<double> noise_coord(0.0, o.noise / std::sqrt(dim));

    std::vector<std::vector<double>> centers(o.layers * o.topics, std::vector<double>(o.dim));
    for (auto& c : centers) {
        for (auto& v : c) v = center_coord(rng);
    }

    SynthResult result;
    for (std::size_t d = 0; d < o.domains; ++d) {
        SynthDomain dom;
        const std::string name = synth_domain_name(d);
        const std::size_t n_items = o.items_per_domain;

        std::vector<std::size_t> order(n_items);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        dom.item_topic.assign(n_items, 0);
        std::vector<std::vector<ItemId>> by_topic(o.topics);
        for (std::size_t pos = 0; pos < n_items; ++pos) {
            const auto topic = pos % o.topics;
            dom.item_topic[order[pos]] = static_cast<std::int32_t>(topic);
            by_topic[topic].push_back(static_cast<ItemId>(order[pos]));
        }

        dom.bank = EncodingBank::zeros(n_items, o.layers, o.dim);
        for (std::size_t i = 0; i < n_items; ++i) {
            for (std::size_t l = 0; l < o.layers; ++l) {
                const auto& c = centers[l * o.topics + static_cast<std::size_t>(dom.item_topic[i])];
                auto row = dom.bank.at(i, l);
                for (std::size_t j = 0; j < o.dim; ++j) row[j] = static_cast<float>(c[j] + noise_coord(rng));
            }
        }

        std::vector<std::discrete_distribution<std::size_t>> pick(o.topics);
        for (std::size_t t = 0; t < o.topics; ++t) {
            std::vector<double> w(by_topic[t].size());
            for (std::size_t r = 0; r < w.size(); ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), o.popularity_exponent);
            pick[t] = std::discrete_distribution<std::size_t>(w.begin(), w.end());
        }

        std::uniform_int_distribution<std::size_t> len_dist(o.min_len, o.max_len);
        std::uniform_int_distribution<std::size_t> topic_dist(0, o.topics - 1);
        std::uniform_int_distribution<ItemId> any_item(0, static_cast<ItemId>(n_items - 1));
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        dom.data.domain = name;
        dom.data.n_items = n_items;
        for (std::size_t i = 0; i < n_items; ++i) dom.data.item_ids.push_back(std::to_string(i));
        for (std::size_t u = 0; u < o.users_per_domain; ++u) {
            const std::size_t len = len_dist(rng);
            std::size_t topic = topic_dist(rng);
            auto& seq = dom.data.sequences.emplace_back();
            seq.reserve(len);
            for (std::size_t s = 0; s < len; ++s) {
                ItemId item = by_topic[topic][pick[topic](rng)];
                if (unit(rng) < o.interaction_noise) item = any_item(rng);
                seq.push_back(item);
                const double r = unit(rng);
                if (r >= o.stay_prob) topic = r < o.stay_prob + o.next_prob ? (topic + 1) % o.topics : topic_dist(rng);
            }
            dom.data.user_ids.push_back(name + "_u" + std::to_string(u));
        }
        result.domains.push_back(std::move(dom));
    }
    return result;
}

}  // namespace ffmsr::data
