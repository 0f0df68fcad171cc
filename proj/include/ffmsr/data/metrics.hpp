#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ffmsr/data/split.hpp"

namespace ffmsr::data {

/// Mean Recall@N / NDCG@N over evaluated users, one entry per cutoff.
struct MetricsReport {
    std::vector<std::size_t> cutoffs;
    std::vector<double> recall;
    std::vector<double> ndcg;
    std::size_t n_users = 0;

    double recall_at(std::size_t n) const;
    double ndcg_at(std::size_t n) const;
};

/// 1-based position of `target` when all items are sorted by descending
/// score, ties going to the lower item id. Items listed in `excluded` (other
/// than the target) are left out of the ranking.
std::size_t rank_of(std::span<const float> scores, ItemId target, std::span<const ItemId> excluded = {});

/// Recall@N = [rank <= N]; NDCG@N = 1/log2(rank + 1) if rank <= N else 0.
MetricsReport metrics_from_ranks(std::span<const std::size_t> ranks, std::span<const std::size_t> cutoffs);

/// Fills `scores` with cases.size() * n_items row-major scores.
using BatchScorer = std::function<void(std::span<const SequenceExample> cases, std::vector<float>& scores)>;

struct EvalOptions {
    std::vector<std::size_t> cutoffs{10, 50};
    std::size_t batch_size = 256;
    bool mask_history = false;
};

/// Full-ranking evaluation: every case is ranked against the whole catalog.
MetricsReport evaluate(const BatchScorer& scorer, std::span<const SequenceExample> cases, std::size_t n_items,
                       const EvalOptions& options = {});

/// The per-case ranks evaluate() would use.
std::vector<std::size_t> rank_cases(const BatchScorer& scorer, std::span<const SequenceExample> cases,
                                    std::size_t n_items, const EvalOptions& options = {});

}  // namespace ffmsr::data
