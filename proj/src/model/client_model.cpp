#include "ffmsr/model/client_model.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "ffmsr/numkit/ops.hpp"

namespace ffmsr::FFMSR_PRECISION::model {

using namespace numkit;

namespace {

std::string bool_text(bool b) { return b ? "true" : "false"; }

template <class T>
std::string num_text(T v) {
    if constexpr (std::is_floating_point_v<T>) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
        return buf;
    } else {
        return std::to_string(v);
    }
}

}  // namespace

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
    };
    positive(n_items, "n_items");
    positive(enc_dim, "enc_dim");
    positive(n_layers, "n_layers");
    positive(d_v, "d_v");
    positive(n_experts, "n_experts");
    positive(m_max, "m_max");
    positive(heads, "heads");
    if (d_v % heads != 0) throw std::invalid_argument("model config: d_v must be divisible by heads");
    for (Real r : {hidden_dropout, attn_dropout, adapter_dropout}) {
        if (r < 0 || r >= 1) throw std::invalid_argument("model config: dropout rates must be in [0, 1)");
    }
    if (noise_scale < 0) throw std::invalid_argument("model config: noise_scale must be non-negative");
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
    return {{"n_items", num_text(n_items)},
            {"enc_dim", num_text(enc_dim)},
            {"n_layers", num_text(n_layers)},
            {"d_v", num_text(d_v)},
            {"n_experts", num_text(n_experts)},
            {"m_max", num_text(m_max)},
            {"n_filters", num_text(n_filters)},
            {"n_blocks", num_text(n_blocks)},
            {"heads", num_text(heads)},
            {"hidden_dropout", num_text(hidden_dropout)},
            {"attn_dropout", num_text(attn_dropout)},
            {"adapter_dropout", num_text(adapter_dropout)},
            {"noise_scale", num_text(noise_scale)},
            {"causal", bool_text(causal)},
            {"use_cluster_branch", bool_text(use_cluster_branch)},
            {"cluster_filter", bool_text(cluster_filter)},
            {"cluster_filter_residual", bool_text(cluster_filter_residual)},
            {"use_gate", bool_text(use_gate)}};
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    auto get = [&](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error(std::string("model config: missing key ") + key);
        return it->second;
    };
    auto size = [&](const char* key) { return static_cast<std::size_t>(std::stoull(get(key))); };
    auto real = [&](const char* key) { return static_cast<Real>(std::stod(get(key))); };
    auto flag = [&](const char* key) { return get(key) == "true"; };
    c.n_items = size("n_items");
    c.enc_dim = size("enc_dim");
    c.n_layers = size("n_layers");
    c.d_v = size("d_v");
    c.n_experts = size("n_experts");
    c.m_max = size("m_max");
    c.n_filters = size("n_filters");
    c.n_blocks = size("n_blocks");
    c.heads = size("heads");
    c.hidden_dropout = real("hidden_dropout");
    c.attn_dropout = real("attn_dropout");
    c.adapter_dropout = real("adapter_dropout");
    c.noise_scale = real("noise_scale");
    c.causal = flag("causal");
    c.use_cluster_branch = flag("use_cluster_branch");
    c.cluster_filter = flag("cluster_filter");
    c.cluster_filter_residual = flag("cluster_filter_residual");
    c.use_gate = flag("use_gate");
    return c;
}

SequenceBatch SequenceBatch::from_examples(std::span<const data::SequenceExample> examples, std::size_t m_max) {
    SequenceBatch b;
    b.batch = examples.size();
    b.m = m_max;
    b.ids.assign(b.batch * m_max, -1);
    b.lengths.resize(b.batch);
    b.targets.resize(b.batch);
    for (std::size_t i = 0; i < b.batch; ++i) {
        const auto& ctx = examples[i].context;
        if (ctx.empty()) throw std::invalid_argument("sequence batch: empty context");
        const std::size_t len = std::min(ctx.size(), m_max);
        const std::size_t skip = ctx.size() - len;
        for (std::size_t t = 0; t < len; ++t) b.ids[i * m_max + t] = ctx[skip + t];
        b.lengths[i] = len;
        b.targets[i] = examples[i].target;
    }
    return b;
}

ClientModel::ClientModel(ModelConfig config, data::EncodingBank bank, std::uint64_t init_seed)
    : config_(config), bank_(std::move(bank)) {
    config_.validate();
    bank_.validate();
    if (bank_.n_items != config_.n_items || bank_.n_layers != config_.n_layers || bank_.dim != config_.enc_dim) {
        throw std::invalid_argument("client model: encoding bank does not match the model config");
    }
    Rng rng(init_seed);
    const auto& c = config_;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const auto layer = bank_.layer(l);
        raw_layers_.push_back(Tensor::from_data({c.n_items, c.enc_dim}, {layer.values.begin(), layer.values.end()}));
        layer_adapters_.emplace_back(c.enc_dim, c.d_v, c.n_experts, c.noise_scale, c.adapter_dropout, rng);
    }
    cluster_adapter_ = semantic::MoEAdapter(c.enc_dim, c.d_v, c.n_experts, c.noise_scale, c.adapter_dropout, rng);
    fusion_ = semantic::FusionBlock(c.d_v, rng);
    item_emb_ = normal_tensor({c.n_items, c.d_v}, Real(0.02), rng);
    cluster_filter_ = FilterLayer(c.m_max, c.d_v, c.hidden_dropout, c.cluster_filter_residual);
    for (std::size_t f = 0; f < c.n_filters; ++f) encoder_filters_.emplace_back(c.m_max, c.d_v, c.hidden_dropout, true);
    gate_ = GateLayer(c.d_v, rng);
    pos_emb_ = normal_tensor({c.m_max, c.d_v}, Real(0.02), rng);
    stack_ = TransformerStack(c.n_blocks, c.d_v, c.heads, c.hidden_dropout, c.attn_dropout, c.causal, rng);
}

ItemTables ClientModel::item_tables(const ForwardContext& ctx) const {
    ItemTables t;
    t.E = item_emb_;
    std::vector<Tensor> layer_embs;
    layer_embs.reserve(layer_adapters_.size());
    for (std::size_t l = 0; l < layer_adapters_.size(); ++l) layer_embs.push_back(layer_adapters_[l].forward(raw_layers_[l], ctx));
    if (layer_embs.size() == 1) {
        t.fusion_weights = Tensor::full({config_.n_items, 1}, Real(1));
        t.T = layer_embs.front();
    } else {
        t.fusion_weights = fusion_.weights(item_emb_, layer_embs);
        t.T = semantic::fuse_embeddings(t.fusion_weights, layer_embs);
    }
    if (config_.use_cluster_branch && x_c_) t.F = cluster_adapter_.forward(x_c_tensor_, ctx);
    return t;
}

Tensor ClientModel::combined_input(const ItemTables& tables, const SequenceBatch& batch,
                                   const ForwardContext& ctx) const {
    const Shape bs{batch.batch, batch.m};
    Tensor e = embedding(tables.E, batch.ids, bs);
    if (config_.use_gate) e = gate_.forward(e);
    Tensor v = add(e, embedding(tables.T, batch.ids, bs));
    if (tables.F.defined()) {
        Tensor f = embedding(tables.F, batch.ids, bs);
        if (config_.cluster_filter) f = mask_padding(cluster_filter_.forward(f, ctx), batch.lengths);
        v = add(v, f);
    }
    return v;
}

Tensor ClientModel::encode_combined(const Tensor& v, std::span<const std::size_t> lengths,
                                    const ForwardContext& ctx) const {
    if (v.rank() != 3 || v.dim(2) != config_.d_v) {
        throw std::invalid_argument("encode: expected [B, m, " + std::to_string(config_.d_v) + "], got " +
                                    shape_to_string(v.shape()));
    }
    const std::size_t m = v.dim(1);
    if (m == 0) throw std::invalid_argument("encode: empty sequence");
    if (m > config_.m_max) {
        throw std::invalid_argument("encode: sequence length " + std::to_string(m) + " exceeds m_max " +
                                    std::to_string(config_.m_max));
    }
    for (std::size_t len : lengths) {
        if (len == 0 || len > m) throw std::invalid_argument("encode: sequence lengths must be in [1, m]");
    }
    Tensor h = mask_padding(v, lengths);
    if (m != config_.m_max) h = resize_seq(h, config_.m_max);
    for (const auto& f : encoder_filters_) h = mask_padding(f.forward(h, ctx), lengths);

    const std::size_t B = h.dim(0);
    std::vector<std::int64_t> pos(B * config_.m_max, -1);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < lengths[b]; ++t) pos[b * config_.m_max + t] = static_cast<std::int64_t>(t);
    }
    h = add(h, embedding(pos_emb_, pos, {B, config_.m_max}));
    h = dropout(h, config_.hidden_dropout, ctx);
    h = stack_.forward(h, lengths, ctx);
    return gather_last(h, lengths);
}

Tensor ClientModel::encode(const ItemTables& tables, const SequenceBatch& batch, const ForwardContext& ctx) const {
    return encode_combined(combined_input(tables, batch, ctx), batch.lengths, ctx);
}

Tensor ClientModel::logits(const Tensor& h, const ItemTables& tables) const {
    return matmul(h, transpose(add(tables.T, tables.E)));
}

void ClientModel::score(std::span<const data::SequenceExample> cases, std::vector<float>& out) const {
    if (cases.empty()) return;
    const ForwardContext ctx{false, nullptr};
    const auto tables = item_tables(ctx);
    const auto batch = SequenceBatch::from_examples(cases, config_.m_max);
    const Tensor l = logits(encode(tables, batch, ctx), tables);
    const auto d = l.data();
    out.insert(out.end(), d.begin(), d.end());
}

data::EncodingMatrix ClientModel::mixed_encodings() const {
    const ForwardContext ctx{false, nullptr};
    const auto tables = item_tables(ctx);
    return semantic::fuse_encodings(tables.fusion_weights.data(), bank_);
}

void ClientModel::set_cluster_encodings(data::EncodingMatrix x_c) {
    if (x_c.rows != config_.n_items || x_c.cols != config_.enc_dim) {
        throw std::invalid_argument("client model: clustered encodings of shape " + std::to_string(x_c.rows) + "x" +
                                    std::to_string(x_c.cols) + " for " + std::to_string(config_.n_items) + " items of width " +
                                    std::to_string(config_.enc_dim));
    }
    if (!x_c.all_finite()) throw std::invalid_argument("client model: non-finite clustered encodings");
    x_c_tensor_ = Tensor::from_data({x_c.rows, x_c.cols}, {x_c.values.begin(), x_c.values.end()});
    x_c_ = std::move(x_c);
}

std::vector<NamedTensor> ClientModel::parameters() const {
    std::vector<NamedTensor> out;
    auto append = [&](std::vector<NamedTensor> p) { out.insert(out.end(), p.begin(), p.end()); };
    out.push_back({"item_emb", item_emb_});
    for (std::size_t l = 0; l < layer_adapters_.size(); ++l) append(layer_adapters_[l].parameters("adapter.layer" + std::to_string(l)));
    append(fusion_.parameters("fusion"));
    append(cluster_adapter_parameters());
    append(cluster_filter_.parameters("cluster_filter"));
    for (std::size_t f = 0; f < encoder_filters_.size(); ++f) append(encoder_filters_[f].parameters("encoder_filter" + std::to_string(f)));
    append(gate_.parameters("gate"));
    out.push_back({"pos_emb", pos_emb_});
    append(stack_.parameters("transformer"));
    return out;
}

std::vector<NamedTensor> ClientModel::cluster_adapter_parameters() const {
    return cluster_adapter_.parameters("adapter.cluster");
}

}  // namespace ffmsr::FFMSR_PRECISION::model
