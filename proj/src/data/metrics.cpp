#include "ffmsr/data/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ffmsr::data {

namespace {

std::size_t cutoff_index(const std::vector<std::size_t>& cutoffs, std::size_t n) {
    const auto it = std::find(cutoffs.begin(), cutoffs.end(), n);
    if (it == cutoffs.end()) throw std::out_of_range("metrics: cutoff " + std::to_string(n) + " was not computed");
    return static_cast<std::size_t>(it - cutoffs.begin());
}

}  // namespace

double MetricsReport::recall_at(std::size_t n) const { return recall[cutoff_index(cutoffs, n)]; }

double MetricsReport::ndcg_at(std::size_t n) const { return ndcg[cutoff_index(cutoffs, n)]; }

std::size_t rank_of(std::span<const float> scores, ItemId target, std::span<const ItemId> excluded) {
    if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) {
        throw std::invalid_argument("rank_of: target " + std::to_string(target) + " outside catalog");
    }
    const auto t = static_cast<std::size_t>(target);
    const float ts = scores[t];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j == t) continue;
        if (scores[j] > ts || (scores[j] == ts && j < t)) ++rank;
    }
    // Excluded items that would have outranked the target no longer count.
    for (std::size_t e = 0; e < excluded.size(); ++e) {
        const ItemId id = excluded[e];
        if (id == target || id < 0 || static_cast<std::size_t>(id) >= scores.size()) continue;
        if (std::find(excluded.begin(), excluded.begin() + static_cast<std::ptrdiff_t>(e), id) !=
            excluded.begin() + static_cast<std::ptrdiff_t>(e)) {
            continue;  // duplicate in history
        }
        const auto j = static_cast<std::size_t>(id);
        if (scores[j] > ts || (scores[j] == ts && j < t)) --rank;
    }
    return rank;
}

MetricsReport metrics_from_ranks(std::span<const std::size_t> ranks, std::span<const std::size_t> cutoffs) {
    MetricsReport r;
    r.cutoffs.assign(cutoffs.begin(), cutoffs.end());
    r.recall.assign(cutoffs.size(), 0.0);
    r.ndcg.assign(cutoffs.size(), 0.0);
    r.n_users = ranks.size();
    if (ranks.empty()) return r;
    for (std::size_t rank : ranks) {
        for (std::size_t c = 0; c < cutoffs.size(); ++c) {
            if (rank <= cutoffs[c]) {
                r.recall[c] += 1.0;
                r.ndcg[c] += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
            }
        }
    }
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
        r.recall[c] /= static_cast<double>(ranks.size());
        r.ndcg[c] /= static_cast<double>(ranks.size());
    }
    return r;
}

std::vector<std::size_t> rank_cases(const BatchScorer& scorer, std::span<const SequenceExample> cases,
                                    std::size_t n_items, const EvalOptions& options) {
    if (options.batch_size == 0) throw std::invalid_argument("evaluate: batch size must be positive");
    std::vector<std::size_t> ranks;
    ranks.reserve(cases.size());
    std::vector<float> scores;
    for (std::size_t start = 0; start < cases.size(); start += options.batch_size) {
        const auto batch = cases.subspan(start, std::min(options.batch_size, cases.size() - start));
        scores.clear();
        scorer(batch, scores);
        if (scores.size() != batch.size() * n_items) {
            throw std::runtime_error("evaluate: scorer returned " + std::to_string(scores.size()) +
                                     " scores for " + std::to_string(batch.size()) + " cases");
        }
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const std::span<const float> row(scores.data() + i * n_items, n_items);
            const auto excluded = options.mask_history ? std::span<const ItemId>(batch[i].context)
                                                       : std::span<const ItemId>{};
            ranks.push_back(rank_of(row, batch[i].target, excluded));
        }
    }
    return ranks;
}

MetricsReport evaluate(const BatchScorer& scorer, std::span<const SequenceExample> cases, std::size_t n_items,
                       const EvalOptions& options) {
    const auto ranks = rank_cases(scorer, cases, n_items, options);
    return metrics_from_ranks(ranks, options.cutoffs);
}

}  // namespace ffmsr::data
