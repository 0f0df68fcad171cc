#include "ffmsr/data/split.hpp"

#include <algorithm>
#include <span>
#include <stdexcept>

namespace ffmsr::data {

namespace {

SequenceExample make_case(std::span<const ItemId> history, ItemId target, std::size_t max_len) {
    if (max_len == 0) throw std::invalid_argument("examples: max_len must be positive");
    const std::size_t keep = std::min(history.size(), max_len);
    SequenceExample ex;
    ex.context.assign(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
    ex.target = target;
    return ex;
}

}  // namespace

SplitDataset leave_one_out_split(const InteractionDataset& ds) {
    SplitDataset split;
    split.domain = ds.domain;
    split.n_items = ds.n_items;
    for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
        const auto& s = ds.sequences[u];
        if (s.size() < 3) {
            ++split.excluded_users;
            continue;
        }
        UserSplit us;
        us.user = u;
        us.train.assign(s.begin(), s.end() - 2);
        us.valid = s[s.size() - 2];
        us.test = s.back();
        split.users.push_back(std::move(us));
    }
    return split;
}

std::vector<SequenceExample> training_examples(const SplitDataset& split, std::size_t max_len) {
    std::vector<SequenceExample> out;
    for (const auto& u : split.users) {
        const std::span<const ItemId> train(u.train);
        for (std::size_t t = 1; t < train.size(); ++t) out.push_back(make_case(train.first(t), train[t], max_len));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<SequenceExample> validation_cases(const SplitDataset& split, std::size_t max_len) {
    std::vector<SequenceExample> out;
    out.reserve(split.users.size());
    for (const auto& u : split.users) out.push_back(make_case(u.train, u.valid, max_len));
    return out;
}

std::vector<SequenceExample> test_cases(const SplitDataset& split, std::size_t max_len) {
    std::vector<SequenceExample> out;
    out.reserve(split.users.size());
    for (const auto& u : split.users) {
        std::vector<ItemId> history = u.train;
        history.push_back(u.valid);
        out.push_back(make_case(history, u.test, max_len));
    }
    return out;
}

std::vector<SequenceExample> train_target_cases(const SplitDataset& split, std::size_t max_len) {
    std::vector<SequenceExample> out;
    for (const auto& u : split.users) {
        if (u.train.size() < 2) continue;
        const std::span<const ItemId> train(u.train);
        out.push_back(make_case(train.first(train.size() - 1), train.back(), max_len));
    }
    return out;
}

}  // namespace ffmsr::data
