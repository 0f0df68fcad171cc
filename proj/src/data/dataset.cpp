#include "ffmsr/data/dataset.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace ffmsr::data {

std::size_t InteractionDataset::n_interactions() const {
    std::size_t total = 0;
    for (const auto& s : sequences) total += s.size();
    return total;
}

void InteractionDataset::validate() const {
    for (std::size_t u = 0; u < sequences.size(); ++u) {
        for (ItemId id : sequences[u]) {
            if (id < 0 || static_cast<std::size_t>(id) >= n_items) {
                throw std::invalid_argument("dataset " + domain + ": user " + std::to_string(u) + " has item " +
                                            std::to_string(id) + " outside [0, " + std::to_string(n_items) + ")");
            }
        }
    }
}

InteractionDataset five_core_filter(const std::vector<RawSequence>& raw, std::string domain, std::size_t min_count) {
    // Intern item tokens in order of first appearance.
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::string> tokens;
    std::vector<std::vector<std::size_t>> seqs;
    seqs.reserve(raw.size());
    for (const auto& r : raw) {
        auto& s = seqs.emplace_back();
        s.reserve(r.items.size());
        for (const auto& tok : r.items) {
            auto [it, inserted] = index.try_emplace(tok, tokens.size());
            if (inserted) tokens.push_back(tok);
            s.push_back(it->second);
        }
    }

    std::vector<bool> user_alive(seqs.size(), true);
    std::vector<bool> item_alive(tokens.size(), true);
    std::vector<std::size_t> item_count(tokens.size());
    for (bool changed = true; changed;) {
        changed = false;
        std::fill(item_count.begin(), item_count.end(), 0);
        for (std::size_t u = 0; u < seqs.size(); ++u) {
            if (!user_alive[u]) continue;
            std::size_t len = 0;
            for (auto it : seqs[u]) {
                if (item_alive[it]) ++len;
            }
            if (len < min_count) {
                user_alive[u] = false;
                changed = true;
                continue;
            }
            for (auto it : seqs[u]) {
                if (item_alive[it]) ++item_count[it];
            }
        }
        if (changed) continue;  // recount with the reduced user set first
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (item_alive[i] && item_count[i] < min_count) {
                item_alive[i] = false;
                changed = true;
            }
        }
    }

    InteractionDataset ds;
    ds.domain = std::move(domain);
    std::vector<ItemId> remap(tokens.size(), -1);
    for (std::size_t u = 0; u < seqs.size(); ++u) {
        if (!user_alive[u]) continue;
        auto& out = ds.sequences.emplace_back();
        for (auto it : seqs[u]) {
            if (!item_alive[it]) continue;
            if (remap[it] < 0) {
                remap[it] = static_cast<ItemId>(ds.item_ids.size());
                ds.item_ids.push_back(tokens[it]);
            }
            out.push_back(remap[it]);
        }
        ds.user_ids.push_back(raw[u].user);
    }
    ds.n_items = ds.item_ids.size();
    if (ds.sequences.empty()) {
        throw EmptyDatasetError("five-core filter removed every user of domain " + ds.domain);
    }
    return ds;
}

std::vector<RawSequence> read_sequences(std::istream& in) {
    std::vector<RawSequence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("sequences: line " + std::to_string(line_no) + " has no tab separator");
        }
        RawSequence r;
        r.user = line.substr(0, tab);
        std::stringstream items(line.substr(tab + 1));
        std::string tok;
        while (std::getline(items, tok, ',')) {
            if (!tok.empty()) r.items.push_back(tok);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RawSequence> read_sequences(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("sequences: cannot open " + path.string());
    return read_sequences(in);
}

void write_sequences(std::ostream& out, const InteractionDataset& ds) {
    for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
        out << (u < ds.user_ids.size() ? ds.user_ids[u] : std::to_string(u)) << '\t';
        for (std::size_t j = 0; j < ds.sequences[u].size(); ++j) {
            if (j) out << ',';
            out << ds.sequences[u][j];
        }
        out << '\n';
    }
}

void write_sequences(const std::filesystem::path& path, const InteractionDataset& ds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("sequences: cannot open " + path.string() + " for writing");
    write_sequences(out, ds);
}

InteractionDataset dataset_from_dense(const std::vector<RawSequence>& raw, std::string domain, std::size_t n_items) {
    InteractionDataset ds;
    ds.domain = std::move(domain);
    ds.n_items = n_items;
    for (const auto& r : raw) {
        auto& s = ds.sequences.emplace_back();
        for (const auto& tok : r.items) {
            ItemId id = 0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
            if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
                throw std::runtime_error("sequences: item token '" + tok + "' is not an integer id");
            }
            s.push_back(id);
        }
        ds.user_ids.push_back(r.user);
    }
    ds.item_ids.reserve(n_items);
    for (std::size_t i = 0; i < n_items; ++i) ds.item_ids.push_back(std::to_string(i));
    ds.validate();
    return ds;
}

Catalog read_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("catalog: cannot open " + path.string());
    Catalog out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            out.emplace_back(line, "");
        } else {
            out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
        }
    }
    return out;
}

void write_catalog(const std::filesystem::path& path, const Catalog& catalog) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("catalog: cannot open " + path.string() + " for writing");
    for (const auto& [id, text] : catalog) out << id << '\t' << text << '\n';
}

}  // namespace ffmsr::data
