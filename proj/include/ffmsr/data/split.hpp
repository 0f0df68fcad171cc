#pragma once

#include <cstddef>
#include <vector>

#include "ffmsr/data/dataset.hpp"

namespace ffmsr::data {

/// Leave-one-out split of one user: the last item is the test target, the
/// one before it the validation target, everything earlier is training.
struct UserSplit {
    std::size_t user = 0;
    std::vector<ItemId> train;
    ItemId valid = -1;
    ItemId test = -1;
};

struct SplitDataset {
    std::string domain;
    std::size_t n_items = 0;
    std::vector<UserSplit> users;
    std::size_t excluded_users = 0;  // sequences shorter than three items
};

SplitDataset leave_one_out_split(const InteractionDataset& ds);

/// A context (oldest first, at most max_len items) and the item that follows.
struct SequenceExample {
    std::vector<ItemId> context;
    ItemId target = -1;

    friend auto operator<=>(const SequenceExample&, const SequenceExample&) = default;
};

/// Every prefix of every training sequence predicting its next item. The
/// result is sorted, so it depends only on the multiset of sequences and not
/// on which user owns which sequence.
std::vector<SequenceExample> training_examples(const SplitDataset& split, std::size_t max_len);
/// Per user: training sequence -> validation target.
std::vector<SequenceExample> validation_cases(const SplitDataset& split, std::size_t max_len);
/// Per user: training sequence + validation item -> test target.
std::vector<SequenceExample> test_cases(const SplitDataset& split, std::size_t max_len);
/// Per user with at least two training items: the last training item as
/// target, preceded by the rest of the training sequence.
std::vector<SequenceExample> train_target_cases(const SplitDataset& split, std::size_t max_len);

}  // namespace ffmsr::data
