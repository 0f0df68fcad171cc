#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ffmsr/data/encoding_bank.hpp"
#include "ffmsr/data/split.hpp"
#include "ffmsr/model/layers.hpp"
#include "ffmsr/semantic/fusion.hpp"
#include "ffmsr/semantic/moe_adapter.hpp"

namespace ffmsr::FFMSR_PRECISION::model {

struct ModelConfig {
    std::size_t n_items = 0;
    std::size_t enc_dim = 0;
    std::size_t n_layers = 3;
    std::size_t d_v = 64;
    std::size_t n_experts = 4;
    std::size_t m_max = 50;
    std::size_t n_filters = 2;  // encoder filter layers; 0 drops them
    std::size_t n_blocks = 2;
    std::size_t heads = 2;
    Real hidden_dropout = Real(0.2);
    Real attn_dropout = Real(0.2);
    Real adapter_dropout = Real(0.2);
    Real noise_scale = Real(1);
    bool causal = true;
    bool use_cluster_branch = true;
    bool cluster_filter = true;
    bool cluster_filter_residual = false;
    bool use_gate = true;

    void validate() const;
    std::map<std::string, std::string> to_kv() const;
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// Right-padded id block for a batch of contexts. Padding ids are -1.
struct SequenceBatch {
    std::size_t batch = 0;
    std::size_t m = 0;
    std::vector<std::int64_t> ids;      // [batch * m]
    std::vector<std::size_t> lengths;   // [batch]
    std::vector<std::int64_t> targets;  // [batch], -1 when unknown

    static SequenceBatch from_examples(std::span<const data::SequenceExample> examples, std::size_t m_max);
};

/// The three item tables used for one forward pass.
struct ItemTables {
    Tensor E;  // [M, d_v] ID embeddings
    Tensor T;  // [M, d_v] mixed-layer semantic embeddings
    Tensor F;  // [M, d_v] clustered embeddings; undefined before any download
    Tensor fusion_weights;  // [M, a]
};

/// One domain's complete parameter set.
class ClientModel {
public:
    ClientModel(ModelConfig config, data::EncodingBank bank, std::uint64_t init_seed);

    const ModelConfig& config() const { return config_; }
    const data::EncodingBank& bank() const { return bank_; }

    ItemTables item_tables(const ForwardContext& ctx) const;

    /// Input sequence V = f̃ + e' + t for every position, [B, m_max, d_v].
    Tensor combined_input(const ItemTables& tables, const SequenceBatch& batch, const ForwardContext& ctx) const;
    /// Final-position hidden state [B, d_v].
    Tensor encode(const ItemTables& tables, const SequenceBatch& batch, const ForwardContext& ctx) const;
    /// Encoder on an already combined input V: [B, m, d_v], m <= m_max.
    Tensor encode_combined(const Tensor& v, std::span<const std::size_t> lengths, const ForwardContext& ctx) const;
    /// h (T + E)^T -> [B, M].
    Tensor logits(const Tensor& h, const ItemTables& tables) const;

    /// Scores for every item, evaluation mode, appended row by row.
    void score(std::span<const data::SequenceExample> cases, std::vector<float>& out) const;

    /// X_F from evaluation-mode fusion weights.
    data::EncodingMatrix mixed_encodings() const;

    void set_cluster_encodings(data::EncodingMatrix x_c);
    bool has_cluster_encodings() const { return x_c_.has_value(); }
    const std::optional<data::EncodingMatrix>& cluster_encodings() const { return x_c_; }

    /// Every learnable tensor with its checkpoint key, in a fixed order.
    std::vector<NamedTensor> parameters() const;
    /// The subset that belongs to the clustered-embedding adapter.
    std::vector<NamedTensor> cluster_adapter_parameters() const;

    const std::vector<semantic::MoEAdapter>& layer_adapters() const { return layer_adapters_; }
    const semantic::MoEAdapter& cluster_adapter() const { return cluster_adapter_; }
    const semantic::FusionBlock& fusion() const { return fusion_; }
    const GateLayer& gate() const { return gate_; }
    const FilterLayer& cluster_filter() const { return cluster_filter_; }
    const std::vector<FilterLayer>& encoder_filters() const { return encoder_filters_; }
    const TransformerStack& stack() const { return stack_; }
    const Tensor& id_embeddings() const { return item_emb_; }

private:
    ModelConfig config_;
    data::EncodingBank bank_;
    std::vector<Tensor> raw_layers_;  // a x [M, enc_dim], constants
    std::vector<semantic::MoEAdapter> layer_adapters_;
    semantic::MoEAdapter cluster_adapter_;
    semantic::FusionBlock fusion_;
    Tensor item_emb_;
    FilterLayer cluster_filter_;
    std::vector<FilterLayer> encoder_filters_;
    GateLayer gate_;
    Tensor pos_emb_;
    TransformerStack stack_;
    std::optional<data::EncodingMatrix> x_c_;
    Tensor x_c_tensor_;
};

}  // namespace ffmsr::FFMSR_PRECISION::model
