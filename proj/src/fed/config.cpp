#include "ffmsr/fed/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ffmsr::FFMSR_PRECISION::fed {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::string real_text(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

struct Field {
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define FFMSR_SIZE(name) \
    {#name, {[](TrainConfig& c, const std::string& k, const std::string& v) { c.name = parse_size(k, v); }, \
             [](const TrainConfig& c) { return std::to_string(c.name); }}}
#define FFMSR_REAL(name) \
    {#name, {[](TrainConfig& c, const std::string& k, const std::string& v) { c.name = static_cast<decltype(c.name)>(parse_double(k, v)); }, \
             [](const TrainConfig& c) { return real_text(static_cast<double>(c.name)); }}}
#define FFMSR_BOOL(name) \
    {#name, {[](TrainConfig& c, const std::string& k, const std::string& v) { c.name = parse_bool(k, v); }, \
             [](const TrainConfig& c) { return std::string(c.name ? "true" : "false"); }}}
#define FFMSR_TEXT(name) \
    {#name, {[](TrainConfig& c, const std::string&, const std::string& v) { c.name = v; }, \
             [](const TrainConfig& c) { return c.name; }}}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        FFMSR_TEXT(data_dir),
        FFMSR_TEXT(out_dir),
        {"domains",
         {[](TrainConfig& c, const std::string& k, const std::string& v) {
              c.domains.clear();
              std::stringstream ss(v);
              std::string part;
              while (std::getline(ss, part, ',')) {
                  part = trim(part);
                  if (part.empty()) throw ConfigError("config: " + k + " has an empty entry");
                  c.domains.push_back(part);
              }
          },
          [](const TrainConfig& c) {
              std::string out;
              for (const auto& d : c.domains) out += (out.empty() ? "" : ",") + d;
              return out;
          }}},
        FFMSR_BOOL(five_core),
        FFMSR_SIZE(d_v),
        FFMSR_SIZE(n_experts),
        FFMSR_SIZE(m_max),
        FFMSR_SIZE(n_filters),
        FFMSR_SIZE(n_blocks),
        FFMSR_SIZE(heads),
        FFMSR_REAL(hidden_dropout),
        FFMSR_REAL(attn_dropout),
        FFMSR_REAL(adapter_dropout),
        FFMSR_REAL(sigma),
        FFMSR_BOOL(cluster_filter),
        FFMSR_BOOL(cluster_filter_residual),
        FFMSR_BOOL(use_gate),
        FFMSR_BOOL(federated),
        FFMSR_SIZE(pretrain_rounds),
        FFMSR_SIZE(epochs_per_round),
        FFMSR_SIZE(K),
        FFMSR_SIZE(cluster_iters),
        FFMSR_REAL(shift_tol),
        FFMSR_REAL(cluster_epsilon),
        FFMSR_SIZE(batch_size),
        FFMSR_REAL(lr),
        FFMSR_SIZE(patience),
        FFMSR_SIZE(max_finetune_epochs),
        FFMSR_SIZE(max_finetune_steps),
        FFMSR_BOOL(orthogonal_loss),
        FFMSR_BOOL(finetune_orthogonal_loss),
        FFMSR_BOOL(freeze_cluster_adapter),
        {"seed",
         {[](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_size(k, v); },
          [](const TrainConfig& c) { return std::to_string(c.seed); }}},
    };
    return table;
}

#undef FFMSR_SIZE
#undef FFMSR_REAL
#undef FFMSR_BOOL
#undef FFMSR_TEXT

}  // namespace

void TrainConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    positive(d_v, "d_v");
    positive(n_experts, "n_experts");
    positive(m_max, "m_max");
    positive(heads, "heads");
    positive(epochs_per_round, "epochs_per_round");
    positive(K, "K");
    positive(cluster_iters, "cluster_iters");
    positive(batch_size, "batch_size");
    positive(patience, "patience");
    positive(max_finetune_epochs, "max_finetune_epochs");
    if (domains.empty()) throw ConfigError("config: domains must not be empty");
    if (d_v % heads != 0) throw ConfigError("config: d_v must be divisible by heads");
    for (Real r : {hidden_dropout, attn_dropout, adapter_dropout}) {
        if (r < 0 || r >= 1) throw ConfigError("config: dropout rates must be in [0, 1)");
    }
    if (sigma < 0) throw ConfigError("config: sigma must be non-negative");
    if (!(lr > 0)) throw ConfigError("config: lr must be positive");
    if (!(shift_tol > 0) || !(cluster_epsilon > 0)) throw ConfigError("config: shift_tol and cluster_epsilon must be positive");
}

model::ModelConfig TrainConfig::model_config(std::size_t n_items, std::size_t enc_dim, std::size_t n_layers) const {
    model::ModelConfig m;
    m.n_items = n_items;
    m.enc_dim = enc_dim;
    m.n_layers = n_layers;
    m.d_v = d_v;
    m.n_experts = n_experts;
    m.m_max = m_max;
    m.n_filters = n_filters;
    m.n_blocks = n_blocks;
    m.heads = heads;
    m.hidden_dropout = hidden_dropout;
    m.attn_dropout = attn_dropout;
    m.adapter_dropout = adapter_dropout;
    m.noise_scale = sigma;
    m.use_cluster_branch = federated;
    m.cluster_filter = cluster_filter;
    m.cluster_filter_residual = cluster_filter_residual;
    m.use_gate = use_gate;
    return m;
}

cluster::ClusterOptions TrainConfig::cluster_options() const {
    return {K, cluster_iters, shift_tol, cluster_epsilon};
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, f] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
    for (const auto& [name, f] : fields()) {
        if (name == key) {
            f.set(config, key, value);
            return;
        }
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

TrainConfig parse_config(std::istream& in, TrainConfig base) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            set_config_value(base, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    base.validate();
    return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    return parse_config(in, std::move(base));
}

void write_config(std::ostream& out, const TrainConfig& config) {
    for (const auto& [name, f] : fields()) out << name << " = " << f.get(config) << '\n';
}

}  // namespace ffmsr::FFMSR_PRECISION::fed
