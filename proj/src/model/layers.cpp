#include "ffmsr/model/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ffmsr/numkit/fft.hpp"
#include "ffmsr/numkit/ops.hpp"

namespace ffmsr::FFMSR_PRECISION::model {

using namespace numkit;

namespace {

constexpr Real kInitStd = Real(0.02);

}  // namespace

FilterLayer::FilterLayer(std::size_t m_max, std::size_t d, Real dropout_rate, bool residual)
    : m_max_(m_max), dropout_rate_(dropout_rate), residual_(residual) {
    if (m_max == 0 || d == 0) throw std::invalid_argument("filter layer: sizes must be positive");
    w_re_ = Tensor::full({rfft_bins(m_max), d}, Real(1), true);
    w_im_ = Tensor::zeros({rfft_bins(m_max), d}, true);
    if (residual) {
        ln_gamma_ = Tensor::full({d}, Real(1), true);
        ln_beta_ = Tensor::zeros({d}, true);
    }
}

Tensor FilterLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
    if (x.rank() < 2) throw std::invalid_argument("filter layer: expected [..., m, d], got " + shape_to_string(x.shape()));
    const std::size_t m = x.dim(-2);
    if (m == 0) throw std::invalid_argument("filter layer: empty sequence");
    if (m > m_max_) {
        throw std::invalid_argument("filter layer: sequence length " + std::to_string(m) + " exceeds " +
                                    std::to_string(m_max_));
    }
    const Tensor framed = m == m_max_ ? x : resize_seq(x, m_max_);
    Tensor filtered = spectral_filter(framed, w_re_, w_im_);
    if (m != m_max_) filtered = resize_seq(filtered, m);
    if (!residual_) return filtered;
    return layer_norm(add(x, dropout(filtered, dropout_rate_, ctx)), ln_gamma_, ln_beta_);
}

std::vector<NamedTensor> FilterLayer::parameters(const std::string& prefix) const {
    std::vector<NamedTensor> out{{prefix + ".w_re", w_re_}, {prefix + ".w_im", w_im_}};
    if (residual_) {
        out.push_back({prefix + ".ln.gamma", ln_gamma_});
        out.push_back({prefix + ".ln.beta", ln_beta_});
    }
    return out;
}

GateLayer::GateLayer(std::size_t d, Rng& init_rng) { w_ = normal_tensor({d, 1}, kInitStd, init_rng); }

Tensor GateLayer::gate(const Tensor& e) const { return sigmoid(matmul(e, w_)); }

Tensor GateLayer::forward(const Tensor& e) const { return scale_rows(e, gate(e)); }

std::vector<NamedTensor> GateLayer::parameters(const std::string& prefix) const { return {{prefix + ".weight", w_}}; }

TransformerBlock::TransformerBlock(std::size_t d, std::size_t heads, Real hidden_dropout, Real attn_dropout,
                                   Rng& init_rng)
    : heads_(heads), hidden_dropout_(hidden_dropout), attn_dropout_(attn_dropout) {
    if (heads == 0 || d % heads != 0) throw std::invalid_argument("transformer: width must divide into heads");
    auto weight = [&](std::size_t in, std::size_t out) { return normal_tensor({in, out}, kInitStd, init_rng); };
    auto bias = [](std::size_t n) { return Tensor::zeros({n}, true); };
    wq_ = weight(d, d), bq_ = bias(d);
    wk_ = weight(d, d), bk_ = bias(d);
    wv_ = weight(d, d), bv_ = bias(d);
    wo_ = weight(d, d), bo_ = bias(d);
    ln1_gamma_ = Tensor::full({d}, Real(1), true), ln1_beta_ = bias(d);
    ff1_w_ = weight(d, 4 * d), ff1_b_ = bias(4 * d);
    ff2_w_ = weight(4 * d, d), ff2_b_ = bias(d);
    ln2_gamma_ = Tensor::full({d}, Real(1), true), ln2_beta_ = bias(d);
}

Tensor TransformerBlock::forward(const Tensor& x, std::span<const std::size_t> lengths, bool causal,
                                 const ForwardContext& ctx, std::vector<Real>* attn_weights) const {
    const Tensor q = add_row(matmul(x, wq_), bq_);
    const Tensor k = add_row(matmul(x, wk_), bk_);
    const Tensor v = add_row(matmul(x, wv_), bv_);
    const Tensor a = attention(q, k, v, heads_, causal, lengths, attn_dropout_, ctx, attn_weights);
    const Tensor attended = dropout(add_row(matmul(a, wo_), bo_), hidden_dropout_, ctx);
    const Tensor h = layer_norm(add(x, attended), ln1_gamma_, ln1_beta_);
    const Tensor ff = add_row(matmul(gelu(add_row(matmul(h, ff1_w_), ff1_b_)), ff2_w_), ff2_b_);
    return layer_norm(add(h, dropout(ff, hidden_dropout_, ctx)), ln2_gamma_, ln2_beta_);
}

std::vector<NamedTensor> TransformerBlock::parameters(const std::string& prefix) const {
    return {{prefix + ".attn.wq", wq_},     {prefix + ".attn.bq", bq_},     {prefix + ".attn.wk", wk_},
            {prefix + ".attn.bk", bk_},     {prefix + ".attn.wv", wv_},     {prefix + ".attn.bv", bv_},
            {prefix + ".attn.wo", wo_},     {prefix + ".attn.bo", bo_},     {prefix + ".ln1.gamma", ln1_gamma_},
            {prefix + ".ln1.beta", ln1_beta_}, {prefix + ".ffn.w1", ff1_w_}, {prefix + ".ffn.b1", ff1_b_},
            {prefix + ".ffn.w2", ff2_w_},   {prefix + ".ffn.b2", ff2_b_},   {prefix + ".ln2.gamma", ln2_gamma_},
            {prefix + ".ln2.beta", ln2_beta_}};
}

TransformerStack::TransformerStack(std::size_t n_blocks, std::size_t d, std::size_t heads, Real hidden_dropout,
                                   Real attn_dropout, bool causal, Rng& init_rng)
    : causal_(causal) {
    for (std::size_t l = 0; l < n_blocks; ++l) blocks_.emplace_back(d, heads, hidden_dropout, attn_dropout, init_rng);
}

Tensor TransformerStack::forward(const Tensor& x, std::span<const std::size_t> lengths, const ForwardContext& ctx,
                                 std::vector<std::vector<Real>>* attn_weights) const {
    Tensor h = x;
    if (attn_weights) attn_weights->assign(blocks_.size(), {});
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        h = blocks_[l].forward(h, lengths, causal_, ctx, attn_weights ? &(*attn_weights)[l] : nullptr);
    }
    return h;
}

std::vector<NamedTensor> TransformerStack::parameters(const std::string& prefix) const {
    std::vector<NamedTensor> out;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        auto p = blocks_[l].parameters(prefix + ".block" + std::to_string(l));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

Tensor mask_padding(const Tensor& x, std::span<const std::size_t> lengths) {
    if (x.rank() != 3 || lengths.size() != x.dim(0)) throw std::invalid_argument("mask_padding: expected [B, m, d] and B lengths");
    const std::size_t B = x.dim(0);
    const std::size_t m = x.dim(1);
    std::vector<Real> keep(B * m, Real(0));
    bool any_padding = false;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < m; ++t) keep[b * m + t] = t < lengths[b] ? Real(1) : Real(0);
        any_padding = any_padding || lengths[b] < m;
    }
    if (!any_padding) return x;
    return scale_rows(x, Tensor::from_data({B, m, 1}, std::move(keep)));
}

Tensor gather_last(const Tensor& x, std::span<const std::size_t> lengths) {
    if (x.rank() != 3 || lengths.size() != x.dim(0)) throw std::invalid_argument("gather_last: expected [B, m, d] and B lengths");
    const std::size_t B = x.dim(0);
    const std::size_t m = x.dim(1);
    std::vector<std::int64_t> rows(B);
    for (std::size_t b = 0; b < B; ++b) {
        if (lengths[b] == 0 || lengths[b] > m) throw std::invalid_argument("gather_last: length out of range");
        rows[b] = static_cast<std::int64_t>(b * m + lengths[b] - 1);
    }
    return embedding(reshape(x, {B * m, x.dim(2)}), rows, {B});
}

Tensor combine(const Tensor& f, const Tensor& e, const Tensor& t) { return add(add(f, e), t); }

}  // namespace ffmsr::FFMSR_PRECISION::model
