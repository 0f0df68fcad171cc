#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ffmsr::data {

using ItemId = std::int32_t;

/// One user's chronological history with the ids as they appear in a raw file.
struct RawSequence {
    std::string user;
    std::vector<std::string> items;
};

/// Chronological per-user item sequences of one domain, item ids dense in
/// [0, n_items). `user_ids`/`item_ids` keep the original identifiers.
struct InteractionDataset {
    std::string domain;
    std::vector<std::vector<ItemId>> sequences;
    std::size_t n_items = 0;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;

    std::size_t n_users() const { return sequences.size(); }
    std::size_t n_interactions() const;
    /// Throws std::invalid_argument if an id is outside [0, n_items).
    void validate() const;
};

class EmptyDatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Repeatedly drop users and items with fewer than `min_count` interactions
/// until nothing changes, then renumber items densely in order of first
/// appearance. Throws EmptyDatasetError if nothing survives.
InteractionDataset five_core_filter(const std::vector<RawSequence>& raw, std::string domain,
                                    std::size_t min_count = 5);

/// Sequences file: `user_id<TAB>item,item,...` per line.
std::vector<RawSequence> read_sequences(std::istream& in);
std::vector<RawSequence> read_sequences(const std::filesystem::path& path);
void write_sequences(std::ostream& out, const InteractionDataset& ds);
void write_sequences(const std::filesystem::path& path, const InteractionDataset& ds);

/// Interpret raw sequences whose item tokens are already dense integer ids.
InteractionDataset dataset_from_dense(const std::vector<RawSequence>& raw, std::string domain, std::size_t n_items);

/// Catalog file: `item_id<TAB>description` per line.
using Catalog = std::vector<std::pair<std::string, std::string>>;
Catalog read_catalog(const std::filesystem::path& path);
void write_catalog(const std::filesystem::path& path, const Catalog& catalog);

}  // namespace ffmsr::data
