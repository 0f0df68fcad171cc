#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffmsr/cluster/kmeans.hpp"
#include "ffmsr/model/client_model.hpp"

namespace ffmsr::FFMSR_PRECISION::fed {

/// Bad or unknown configuration input. Maps to the usage exit code.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
    // data
    std::string data_dir = "data";
    std::string out_dir = "run";
    std::vector<std::string> domains{"A", "B"};
    bool five_core = true;

    // model
    std::size_t d_v = 300;
    std::size_t n_experts = 4;
    std::size_t m_max = 50;
    std::size_t n_filters = 2;
    std::size_t n_blocks = 2;
    std::size_t heads = 2;
    Real hidden_dropout = Real(0.2);
    Real attn_dropout = Real(0.2);
    Real adapter_dropout = Real(0.2);
    Real sigma = Real(1);
    bool cluster_filter = true;
    bool cluster_filter_residual = false;
    bool use_gate = true;

    // federation
    bool federated = true;
    std::size_t pretrain_rounds = 5;
    std::size_t epochs_per_round = 1;
    std::size_t K = 120;
    std::size_t cluster_iters = 50;
    double shift_tol = 1e-4;
    double cluster_epsilon = 1e-8;

    // optimisation
    std::size_t batch_size = 1024;
    Real lr = Real(1e-3);
    std::size_t patience = 10;
    std::size_t max_finetune_epochs = 200;
    std::size_t max_finetune_steps = 0;  // 0: no cap
    bool orthogonal_loss = true;
    bool finetune_orthogonal_loss = true;
    bool freeze_cluster_adapter = true;
    std::uint64_t seed = 0;

    /// Throws ConfigError when a count is zero or a rate is out of range.
    void validate() const;

    model::ModelConfig model_config(std::size_t n_items, std::size_t enc_dim, std::size_t n_layers) const;
    cluster::ClusterOptions cluster_options() const;
};

/// The documented key set, in file order.
const std::vector<std::string>& config_keys();

/// Apply one `key = value` assignment. Unknown keys and unparsable values
/// throw ConfigError.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` text; `#` starts a comment, blank lines are skipped.
TrainConfig parse_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void write_config(std::ostream& out, const TrainConfig& config);

}  // namespace ffmsr::FFMSR_PRECISION::fed
