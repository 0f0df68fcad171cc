#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ffmsr/numkit/ops.hpp"
#include "ffmsr/semantic/fusion.hpp"
#include "ffmsr/semantic/moe_adapter.hpp"

using namespace ffmsr;
using namespace ffmsr::numkit;
using namespace ffmsr::semantic;

namespace {

void fill(Tensor& t, std::initializer_list<Real> v) {
    auto d = t.mutable_data();
    REQUIRE(d.size() == v.size());
    std::copy(v.begin(), v.end(), d.begin());
}

Tensor randn(Shape s, std::uint64_t seed, bool grad = false) {
    Rng rng(seed);
    return normal_tensor(std::move(s), Real(1), rng, grad);
}

}  // namespace

TEST_CASE("moe with two hand-set experts") {
    Rng rng(0);
    MoEAdapter moe(2, 2, 2, 1, 0, rng);
    fill(moe.expert_weights()[0], {1, 0, 0, 1});
    fill(moe.expert_weights()[1], {0, 2, 1, 0});
    fill(moe.expert_biases()[0], {0.5, 0});
    fill(moe.expert_biases()[1], {0, -1});
    fill(moe.gate_weights(), {1, -1, 0, 2});
    const auto x = Tensor::from_data({1, 2}, {1, 2});

    // logits = (1*1 + 2*0, 1*-1 + 2*2) = (1, 3)
    const double g0 = std::exp(1.0) / (std::exp(1.0) + std::exp(3.0)), g1 = 1 - g0;
    // expert 0: (x - (0.5, 0)) I = (0.5, 2)
    // expert 1: (x - (0, -1)) [[0,2],[1,0]] = (1, 3) -> (3, 2)
    const double want0 = g0 * 0.5 + g1 * 3, want1 = g0 * 2 + g1 * 2;
    const auto y = moe.forward(x, ForwardContext{});
    CHECK(y.at(0) == doctest::Approx(want0).epsilon(1e-5));
    CHECK(y.at(1) == doctest::Approx(want1).epsilon(1e-5));
}

TEST_CASE("moe single expert ignores the gate") {
    Rng rng(1);
    MoEAdapter moe(3, 2, 1, 1, 0, rng);
    fill(moe.gate_weights(), {5, -3, 2});
    const auto x = randn({4, 3}, 2);
    const auto y = moe.forward(x, ForwardContext{});
    const auto direct = matmul(x, moe.expert_weights()[0]);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == doctest::Approx(direct.at(i)));
}

TEST_CASE("moe gate is uniform with zero weights") {
    Rng rng(1);
    MoEAdapter moe(3, 2, 4, 0, 0, rng);
    const auto g = moe.gate(randn({5, 3}, 3), ForwardContext{});
    for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g.at(i) == doctest::Approx(0.25));
}

TEST_CASE("moe training without noise or dropout equals evaluation") {
    Rng rng(1), run(9);
    MoEAdapter moe(4, 3, 3, 0, 0, rng);
    const auto x = randn({6, 4}, 4);
    const auto a = moe.forward(x, ForwardContext{});
    const auto b = moe.forward(x, ForwardContext{true, &run});
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("moe input and construction errors") {
    Rng rng(1);
    MoEAdapter moe(4, 3, 2, 1, 0, rng);
    CHECK_THROWS_AS(moe.forward(randn({2, 5}, 0), ForwardContext{}), std::invalid_argument);
    CHECK_THROWS_AS(MoEAdapter(4, 3, 0, 1, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(MoEAdapter(4, 3, 2, 1, 1, rng), std::invalid_argument);
    CHECK(moe.parameters("p").size() == 5);
}

TEST_CASE("fusion weights match a direct recomputation") {
    Rng rng(3);
    const std::size_t d = 4, N = 3, a = 3;
    FusionBlock block(d, rng);
    const auto id = randn({N, d}, 5);
    std::vector<Tensor> layers;
    for (std::size_t j = 0; j < a; ++j) layers.push_back(randn({N, d}, 10 + j));
    const auto w = block.weights(id, layers);
    const auto W1 = block.w1().data(), b1 = block.b1().data(), W2 = block.w2().data(), b2 = block.b2().data();
    for (std::size_t n = 0; n < N; ++n) {
        std::vector<double> s(a);
        for (std::size_t j = 0; j < a; ++j) {
            std::vector<double> cat(2 * d);
            for (std::size_t t = 0; t < d; ++t) {
                cat[t] = id.at(n * d + t);
                cat[d + t] = layers[j].at(n * d + t);
            }
            double score = b2[0];
            for (std::size_t h = 0; h < d; ++h) {
                double z = b1[h];
                for (std::size_t k = 0; k < 2 * d; ++k) z += cat[k] * W1[k * d + h];
                z = z > 0 ? z : 0.01 * z;
                score += z * W2[h];
            }
            s[j] = score;
        }
        double mx = *std::max_element(s.begin(), s.end()), tot = 0;
        for (auto& v : s) tot += (v = std::exp(v - mx));
        double row = 0;
        for (std::size_t j = 0; j < a; ++j) {
            CHECK(w.at(n * a + j) == doctest::Approx(s[j] / tot).epsilon(1e-6));
            CHECK(w.at(n * a + j) >= 0);
            row += w.at(n * a + j);
        }
        CHECK(row == doctest::Approx(1).epsilon(1e-5));
    }
}

TEST_CASE("fusion scores (0, ln 3) give weights (1/4, 3/4)") {
    Rng rng(3);
    FusionBlock block(1, rng);
    // One hidden unit, identity-like: score = layer value.
    fill(block.w1(), {0, 1});
    fill(block.b1(), {0});
    fill(block.w2(), {1});
    fill(block.b2(), {0});
    const auto id = Tensor::from_data({1, 1}, {7});
    const auto w = block.weights(id, {Tensor::from_data({1, 1}, {0}), Tensor::from_data({1, 1}, {Real(std::log(3.0))})});
    CHECK(w.at(0) == doctest::Approx(0.25));
    CHECK(w.at(1) == doctest::Approx(0.75));

    const auto same = block.weights(id, {Tensor::from_data({1, 1}, {2}), Tensor::from_data({1, 1}, {2}),
                                         Tensor::from_data({1, 1}, {2})});
    for (int j = 0; j < 3; ++j) CHECK(same.at(j) == doctest::Approx(1.0 / 3));
    CHECK_THROWS_AS(block.weights(id, {}), std::invalid_argument);
}

TEST_CASE("fusion does not send gradients into the id table") {
    Rng rng(2);
    FusionBlock block(3, rng);
    auto id = randn({2, 3}, 1, true);
    auto l0 = randn({2, 3}, 2, true), l1 = randn({2, 3}, 3, true);
    const auto w = block.weights(id, {l0, l1});
    sum(mul(w, Tensor::from_data({2, 2}, {1, 2, 3, 4}))).backward();
    CHECK_FALSE(id.has_grad());
    CHECK(l0.has_grad());
    CHECK(block.w1().has_grad());
}

TEST_CASE("fuse embeddings special cases") {
    const auto e1 = Tensor::from_data({1, 2}, {1, 3}), e2 = Tensor::from_data({1, 2}, {5, -1});
    auto y = fuse_embeddings(Tensor::from_data({1, 2}, {1, 0}), {e1, e2});
    CHECK(y.at(0) == 1);
    CHECK(y.at(1) == 3);
    y = fuse_embeddings(Tensor::from_data({1, 2}, {0.5, 0.5}), {e1, e2});
    CHECK(y.at(0) == doctest::Approx(3));
    CHECK(y.at(1) == doctest::Approx(1));
    y = fuse_embeddings(Tensor::from_data({1, 1}, {1}), {e1});
    CHECK(y.at(1) == 3);
    CHECK_THROWS_AS(fuse_embeddings(Tensor::from_data({1, 3}, {1, 0, 0}), {e1, e2}), std::invalid_argument);
}

TEST_CASE("fuse encodings matches a manual weighted sum") {
    std::mt19937_64 g(5);
    std::normal_distribution<double> nd(0, 1);
    auto bank = data::EncodingBank::zeros(3, 3, 4);
    for (auto& v : bank.values) v = static_cast<float>(nd(g));
    std::vector<Real> w{0.2f, 0.3f, 0.5f, 1, 0, 0, 0.1f, 0.1f, 0.8f};
    const auto x = fuse_encodings(w, bank);
    REQUIRE(x.rows == 3);
    REQUIRE(x.cols == 4);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t t = 0; t < 4; ++t) {
            double want = 0;
            for (std::size_t l = 0; l < 3; ++l) want += double(w[i * 3 + l]) * bank.at(i, l)[t];
            CHECK(x.row(i)[t] == doctest::Approx(want).epsilon(1e-6));
        }
    }
    for (std::size_t t = 0; t < 4; ++t) CHECK(x.row(1)[t] == bank.at(1, 0)[t]);
    CHECK_THROWS_AS(fuse_encodings(std::vector<Real>(8, 0.1f), bank), std::invalid_argument);
}
