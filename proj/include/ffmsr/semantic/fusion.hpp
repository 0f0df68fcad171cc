#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ffmsr/data/encoding_bank.hpp"
#include "ffmsr/numkit/tensor.hpp"

namespace ffmsr::FFMSR_PRECISION::semantic {

using numkit::NamedTensor;
using numkit::Rng;
using numkit::Tensor;

/// Scores every kept layer of an item from [id ⊕ layer] through a
/// two-layer LeakyReLU MLP and turns the scores into softmax weights.
/// The ID embedding is cut from the tape inside the block.
class FusionBlock {
public:
    FusionBlock() = default;
    FusionBlock(std::size_t d_v, Rng& init_rng);

    /// id_emb: [N, d_v]; layer_embs: a x [N, d_v] -> raw scores [N, a].
    Tensor scores(const Tensor& id_emb, const std::vector<Tensor>& layer_embs) const;
    /// softmax(scores) -> [N, a].
    Tensor weights(const Tensor& id_emb, const std::vector<Tensor>& layer_embs) const;

    std::size_t d_v() const { return d_v_; }
    std::vector<NamedTensor> parameters(const std::string& prefix) const;

    Tensor& w1() { return w1_; }
    Tensor& b1() { return b1_; }
    Tensor& w2() { return w2_; }
    Tensor& b2() { return b2_; }

private:
    std::size_t d_v_ = 0;
    Tensor w1_;  // [2 d_v, d_v]
    Tensor b1_;  // [d_v]
    Tensor w2_;  // [d_v, 1]
    Tensor b2_;  // [1]
};

/// t_i = sum_j w_ij t_i^j. weights: [N, a]; layer_embs: a x [N, d].
Tensor fuse_embeddings(const Tensor& weights, const std::vector<Tensor>& layer_embs);

/// x_i = sum_j w_ij x_i^j on the raw encodings. weights is [n_items, a]
/// row-major. Plain values out, nothing recorded on the tape.
data::EncodingMatrix fuse_encodings(std::span<const Real> weights, const data::EncodingBank& bank);

}  // namespace ffmsr::FFMSR_PRECISION::semantic
