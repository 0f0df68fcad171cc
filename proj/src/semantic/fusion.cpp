#include "ffmsr/semantic/fusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ffmsr/numkit/ops.hpp"

namespace ffmsr::FFMSR_PRECISION::semantic {

using namespace numkit;

FusionBlock::FusionBlock(std::size_t d_v, Rng& init_rng) : d_v_(d_v) {
    if (d_v == 0) throw std::invalid_argument("fusion block: width must be positive");
    w1_ = uniform_tensor({2 * d_v, d_v}, Real(1) / std::sqrt(static_cast<Real>(2 * d_v)), init_rng);
    b1_ = Tensor::zeros({d_v}, true);
    w2_ = uniform_tensor({d_v, 1}, Real(1) / std::sqrt(static_cast<Real>(d_v)), init_rng);
    b2_ = Tensor::zeros({1}, true);
}

Tensor FusionBlock::scores(const Tensor& id_emb, const std::vector<Tensor>& layer_embs) const {
    if (layer_embs.empty()) throw std::invalid_argument("fusion block: no layers to weigh");
    const Tensor frozen = id_emb.detach();
    std::vector<Tensor> per_layer;
    per_layer.reserve(layer_embs.size());
    for (const auto& t : layer_embs) {
        const Tensor hidden = leaky_relu(add_row(matmul(concat_last({frozen, t}), w1_), b1_));
        per_layer.push_back(add_row(matmul(hidden, w2_), b2_));
    }
    return per_layer.size() == 1 ? per_layer.front() : concat_last(per_layer);
}

Tensor FusionBlock::weights(const Tensor& id_emb, const std::vector<Tensor>& layer_embs) const {
    return softmax(scores(id_emb, layer_embs));
}

std::vector<NamedTensor> FusionBlock::parameters(const std::string& prefix) const {
    return {{prefix + ".w1", w1_}, {prefix + ".b1", b1_}, {prefix + ".w2", w2_}, {prefix + ".b2", b2_}};
}

Tensor fuse_embeddings(const Tensor& weights, const std::vector<Tensor>& layer_embs) {
    if (layer_embs.empty()) throw std::invalid_argument("fuse_embeddings: no layers");
    if (weights.rank() != 2 || weights.dim(1) != layer_embs.size()) {
        throw std::invalid_argument("fuse_embeddings: expected weights [N, " + std::to_string(layer_embs.size()) +
                                    "], got " + shape_to_string(weights.shape()));
    }
    return mix(weights, stack_experts(layer_embs));
}

data::EncodingMatrix fuse_encodings(std::span<const Real> weights, const data::EncodingBank& bank) {
    if (weights.size() != bank.n_items * bank.n_layers) {
        throw std::invalid_argument("fuse_encodings: " + std::to_string(weights.size()) + " weights for " +
                                    std::to_string(bank.n_items) + " items x " + std::to_string(bank.n_layers) +
                                    " layers");
    }
    auto out = data::EncodingMatrix::zeros(bank.n_items, bank.dim);
    std::vector<double> acc(bank.dim);
    for (std::size_t i = 0; i < bank.n_items; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t l = 0; l < bank.n_layers; ++l) {
            const double w = static_cast<double>(weights[i * bank.n_layers + l]);
            const auto row = bank.at(i, l);
            for (std::size_t t = 0; t < bank.dim; ++t) acc[t] += w * static_cast<double>(row[t]);
        }
        auto dst = out.row(i);
        for (std::size_t t = 0; t < bank.dim; ++t) dst[t] = static_cast<float>(acc[t]);
    }
    return out;
}

}  // namespace ffmsr::FFMSR_PRECISION::semantic
