#include <doctest.h>

#include <cmath>
#include <random>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include "ffmsr/data/synth.hpp"
#include "ffmsr/model/checkpoint.hpp"
#include "ffmsr/model/client_model.hpp"
#include "ffmsr/model/layers.hpp"
#include "ffmsr/numkit/ops.hpp"

using namespace ffmsr;
using namespace ffmsr::numkit;
using namespace ffmsr::model;

namespace {

Tensor randn(Shape s, std::uint64_t seed, bool grad = false) {
    Rng rng(seed);
    return normal_tensor(std::move(s), Real(1), rng, grad);
}

struct Toy {
    data::SynthDomain domain;
    ModelConfig config;
};

Toy toy(std::size_t m_max = 8) {
    data::SynthOptions o;
    o.domains = 1;
    o.items_per_domain = 20;
    o.users_per_domain = 10;
    o.dim = 6;
    o.seed = 1;
    Toy t{data::synth_generate(o).domains[0], {}};
    t.config.n_items = 20;
    t.config.enc_dim = 6;
    t.config.n_layers = 3;
    t.config.d_v = 8;
    t.config.n_experts = 2;
    t.config.m_max = m_max;
    return t;
}

data::EncodingMatrix random_xc(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd(0, 1);
    auto m = data::EncodingMatrix::zeros(rows, cols);
    for (auto& v : m.values) v = static_cast<float>(nd(g));
    return m;
}

}  // namespace

TEST_CASE("identity filter without residual") {
    FilterLayer f(8, 3, 0, false);
    for (std::size_t m : {1u, 5u, 8u}) {
        const auto x = randn({2, m, 3}, m);
        const auto y = f.forward(x, ForwardContext{});
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(y.at(i) - x.at(i)) < 1e-5);
    }
    CHECK_THROWS_AS(f.forward(randn({1, 9, 3}, 0), ForwardContext{}), std::invalid_argument);
}

TEST_CASE("zero filter gives zero output") {
    FilterLayer f(6, 2, 0, false);
    for (auto& v : f.w_re().mutable_data()) v = 0;
    const auto y = f.forward(randn({1, 6, 2}, 1), ForwardContext{});
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.at(i)) < 1e-6);
}

TEST_CASE("dc-only filter keeps a constant sequence") {
    FilterLayer f(8, 2, 0, false);
    auto re = f.w_re().mutable_data();
    for (std::size_t i = 2; i < re.size(); ++i) re[i] = 0;  // bins 1.. zeroed, bin 0 kept
    std::vector<Real> v;
    for (int t = 0; t < 8; ++t) v.insert(v.end(), {1.5f, -0.25f});
    const auto x = Tensor::from_data({1, 8, 2}, v);
    const auto y = f.forward(x, ForwardContext{});
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y.at(i) - x.at(i)) < 1e-5);
}

TEST_CASE("residual filter output is layer normalised") {
    FilterLayer f(4, 6, 0, true);
    const auto y = f.forward(randn({2, 4, 6}, 3), ForwardContext{});
    for (std::size_t r = 0; r < 8; ++r) {
        double mu = 0;
        for (std::size_t j = 0; j < 6; ++j) mu += y.at(r * 6 + j);
        CHECK(std::abs(mu / 6) < 1e-4);
    }
    CHECK(f.parameters("f").size() == 4);
}

TEST_CASE("gate layer") {
    Rng rng(0);
    GateLayer g(3, rng);
    const auto e = randn({4, 3}, 5);
    const auto y = g.forward(e);
    const auto w = g.weight().data();
    for (std::size_t r = 0; r < 4; ++r) {
        double z = 0;
        for (std::size_t j = 0; j < 3; ++j) z += e.at(r * 3 + j) * w[j];
        const double s = 1 / (1 + std::exp(-z));
        CHECK(s > 0);
        CHECK(s < 1);
        for (std::size_t j = 0; j < 3; ++j) CHECK(y.at(r * 3 + j) == doctest::Approx(s * e.at(r * 3 + j)).epsilon(1e-6));
    }
    for (auto& v : g.weight().mutable_data()) v = 0;
    const auto half = g.forward(e);
    for (std::size_t i = 0; i < e.numel(); ++i) CHECK(half.at(i) == doctest::Approx(0.5 * e.at(i)));
    const auto zero = g.forward(Tensor::zeros({1, 3}));
    for (std::size_t i = 0; i < 3; ++i) CHECK(zero.at(i) == 0);
}

TEST_CASE("combine adds the three tables") {
    const auto a = Tensor::from_data({3}, {1, 0, 0}), b = Tensor::from_data({3}, {0, 1, 0}),
               c = Tensor::from_data({3}, {0, 0, 1});
    const auto v = combine(a, b, c);
    for (std::size_t i = 0; i < 3; ++i) CHECK(v.at(i) == 1);
    const auto z = Tensor::zeros({3});
    const auto only = combine(z, z, c);
    CHECK(only.at(2) == 1);
    CHECK(only.at(0) == 0);
}

TEST_CASE("single-position attention") {
    Rng rng(2);
    TransformerStack stack(1, 4, 2, 0, 0, true, rng);
    const std::vector<std::size_t> len{1};
    std::vector<std::vector<Real>> w;
    stack.forward(randn({1, 1, 4}, 1), len, ForwardContext{}, &w);
    REQUIRE(w.size() == 1);
    for (Real p : w[0]) CHECK(p == doctest::Approx(1));
}

TEST_CASE("attention rows are distributions over valid keys") {
    Rng rng(2);
    TransformerStack stack(2, 4, 2, 0, 0, false, rng);
    const std::vector<std::size_t> len{3, 5};
    std::vector<std::vector<Real>> w;
    stack.forward(randn({2, 5, 4}, 1), len, ForwardContext{}, &w);
    for (const auto& layer : w) {
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t h = 0; h < 2; ++h) {
                for (std::size_t q = 0; q < len[b]; ++q) {
                    double s = 0;
                    for (std::size_t k = 0; k < 5; ++k) {
                        const Real p = layer[((b * 2 + h) * 5 + q) * 5 + k];
                        if (k >= len[b]) CHECK(p == 0);
                        s += p;
                    }
                    CHECK(s == doctest::Approx(1));
                }
            }
        }
    }
}

TEST_CASE("causal stack ignores future positions") {
    Rng rng(4);
    TransformerStack stack(2, 8, 2, 0, 0, true, rng);
    auto x = randn({1, 6, 8}, 3);
    const std::vector<std::size_t> len{6};
    const auto h1 = stack.forward(x, len, ForwardContext{});
    std::vector<Real> v(x.data().begin(), x.data().end());
    for (std::size_t j = 0; j < 8; ++j) v[4 * 8 + j] += 3;
    const auto h2 = stack.forward(Tensor::from_data({1, 6, 8}, v), len, ForwardContext{});
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t j = 0; j < 8; ++j) CHECK(h1.at(t * 8 + j) == doctest::Approx(h2.at(t * 8 + j)).epsilon(1e-6));
    }
    double moved = 0;
    for (std::size_t j = 0; j < 8; ++j) moved += std::abs(h1.at(4 * 8 + j) - h2.at(4 * 8 + j));
    CHECK(moved > 1e-3);
}

TEST_CASE("prediction head") {
    auto t = toy();
    ClientModel model(t.config, t.domain.bank, 3);
    const auto tables = model.item_tables(ForwardContext{});
    const auto zero = model.logits(Tensor::zeros({1, 8}), tables);
    for (std::size_t i = 0; i < zero.numel(); ++i) CHECK(zero.at(i) == 0);

    const auto h = randn({2, 8}, 9);
    const auto l = model.logits(h, tables);
    REQUIRE(l.shape() == Shape{2, 20});
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < 20; ++i) {
            double want = 0;
            for (std::size_t j = 0; j < 8; ++j) want += h.at(b * 8 + j) * (tables.T.at(i * 8 + j) + tables.E.at(i * 8 + j));
            CHECK(l.at(b * 20 + i) == doctest::Approx(want).epsilon(1e-5));
        }
    }
}

TEST_CASE("sequence batch truncates on the left and pads on the right") {
    const std::vector<data::SequenceExample> ex{{{1, 2, 3, 4, 5}, 6}, {{7}, 8}};
    const auto b = SequenceBatch::from_examples(ex, 3);
    CHECK(b.ids == std::vector<std::int64_t>{3, 4, 5, 7, -1, -1});
    CHECK(b.lengths == std::vector<std::size_t>{3, 1});
    CHECK(b.targets == std::vector<std::int64_t>{6, 8});
}

TEST_CASE("encoding ignores padding content and length") {
    auto t = toy(10);
    ClientModel model(t.config, t.domain.bank, 3);
    const std::vector<std::size_t> len{3, 5};
    auto v = randn({2, 7, 8}, 4);
    const auto h1 = model.encode_combined(v, len, ForwardContext{});
    std::vector<Real> noisy(v.data().begin(), v.data().end());
    for (std::size_t t2 = 3; t2 < 7; ++t2) {
        for (std::size_t j = 0; j < 8; ++j) noisy[t2 * 8 + j] = 100;
    }
    const auto h2 = model.encode_combined(Tensor::from_data({2, 7, 8}, noisy), len, ForwardContext{});
    const auto h3 = model.encode_combined(resize_seq(v, 5), len, ForwardContext{});
    for (std::size_t i = 0; i < h1.numel(); ++i) {
        CHECK(h1.at(i) == doctest::Approx(h2.at(i)).epsilon(1e-5));
        CHECK(h1.at(i) == doctest::Approx(h3.at(i)).epsilon(1e-5));
    }
    CHECK_THROWS_AS(model.encode_combined(randn({1, 11, 8}, 0), std::vector<std::size_t>{2}, ForwardContext{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(model.encode_combined(randn({1, 4, 8}, 0), std::vector<std::size_t>{0}, ForwardContext{}),
                    std::invalid_argument);
}

TEST_CASE("clustered table joins the input only after a download") {
    auto t = toy();
    ClientModel model(t.config, t.domain.bank, 3);
    const ForwardContext eval{};
    CHECK_FALSE(model.item_tables(eval).F.defined());
    CHECK_THROWS_AS(model.set_cluster_encodings(random_xc(19, 6, 1)), std::invalid_argument);
    auto bad = random_xc(20, 6, 1);
    bad.values[3] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(model.set_cluster_encodings(bad), std::invalid_argument);
    model.set_cluster_encodings(random_xc(20, 6, 1));
    const auto tables = model.item_tables(eval);
    REQUIRE(tables.F.defined());
    CHECK(tables.F.shape() == Shape{20, 8});

    auto off = t.config;
    off.use_cluster_branch = false;
    ClientModel plain(off, t.domain.bank, 3);
    plain.set_cluster_encodings(random_xc(20, 6, 1));
    CHECK_FALSE(plain.item_tables(eval).F.defined());
}

TEST_CASE("mixed encodings are fused raw encodings") {
    auto t = toy();
    ClientModel model(t.config, t.domain.bank, 3);
    const auto x = model.mixed_encodings();
    const auto w = model.item_tables(ForwardContext{}).fusion_weights;
    CHECK(x.rows == 20);
    CHECK(x.cols == 6);
    for (std::size_t i = 0; i < 20; ++i) {
        double s = 0;
        for (std::size_t l = 0; l < 3; ++l) s += w.at(i * 3 + l);
        CHECK(s == doctest::Approx(1).epsilon(1e-5));
        double want = 0;
        for (std::size_t l = 0; l < 3; ++l) want += w.at(i * 3 + l) * t.domain.bank.at(i, l)[0];
        CHECK(x.row(i)[0] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("gradients reach every learnable part but not the clustered encodings") {
    auto t = toy();
    t.config.hidden_dropout = t.config.attn_dropout = t.config.adapter_dropout = 0;
    ClientModel model(t.config, t.domain.bank, 3);
    model.set_cluster_encodings(random_xc(20, 6, 2));
    // Move the filters off their identity start so every filter weight matters.
    Rng rng(5);
    for (const auto& p : model.parameters()) {
        if (p.name.find("w_im") != std::string::npos || p.name.find("w_re") != std::string::npos) {
            auto d = Tensor(p.tensor).mutable_data();
            std::normal_distribution<double> nd(0, 0.1);
            for (auto& v : d) v += static_cast<Real>(nd(rng));
        }
    }
    const std::vector<data::SequenceExample> ex{{{1, 2, 3}, 4}, {{5, 6, 7, 8, 9}, 1}, {{3}, 2}};
    const auto batch = SequenceBatch::from_examples(ex, t.config.m_max);
    Rng run(1);
    const ForwardContext ctx{true, &run};
    const auto tables = model.item_tables(ctx);
    const auto loss = cross_entropy(model.logits(model.encode(tables, batch, ctx), tables), batch.targets);
    loss.backward();
    for (const auto& p : model.parameters()) {
        INFO(p.name);
        // A score offset shared by every layer cancels in the softmax.
        if (p.name == "fusion.b2") continue;
        CHECK(p.tensor.has_grad());
        double mag = 0;
        for (Real g : p.tensor.grad()) mag += std::abs(g);
        CHECK(mag > 0);
    }
}

TEST_CASE("parameter keys are unique and stable") {
    auto t = toy();
    ClientModel a(t.config, t.domain.bank, 3), b(t.config, t.domain.bank, 3);
    std::set<std::string> names;
    const auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(names.insert(pa[i].name).second);
        CHECK(pa[i].name == pb[i].name);
        CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
    }
    CHECK(names.count("item_emb"));
    CHECK(names.count("adapter.cluster.gate"));
    CHECK(names.count("transformer.block1.ffn.w2"));
    for (const auto& p : a.cluster_adapter_parameters()) CHECK(p.name.rfind("adapter.cluster.", 0) == 0);
}

TEST_CASE("checkpoint round-trip") {
    auto t = toy();
    ClientModel a(t.config, t.domain.bank, 3);
    a.set_cluster_encodings(random_xc(20, 6, 7));
    const auto ck = make_checkpoint(a, {{"phase", "pretrain"}});
    std::stringstream buf;
    write_checkpoint(buf, ck);
    const auto back = read_checkpoint(buf);
    CHECK(back.meta.at("phase") == "pretrain");
    const auto cfg = back.model_config();
    CHECK(cfg.d_v == t.config.d_v);
    CHECK(cfg.m_max == t.config.m_max);

    ClientModel b(cfg, t.domain.bank, 99);
    load_into(b, back);
    REQUIRE(b.has_cluster_encodings());
    CHECK(*b.cluster_encodings() == *a.cluster_encodings());
    const std::vector<data::SequenceExample> ex{{{1, 2, 3}, 4}, {{5}, 6}};
    std::vector<float> sa, sb;
    a.score(ex, sa);
    b.score(ex, sb);
    CHECK(sa == sb);

    std::string bytes = buf.str();
    bytes[0] = 'Z';
    std::stringstream bad(bytes);
    CHECK_THROWS(read_checkpoint(bad));

    auto other = t.config;
    other.d_v = 4;
    ClientModel c(other, t.domain.bank, 1);
    CHECK_THROWS(load_into(c, back));
}

TEST_CASE("snapshot and restore copy values") {
    auto t = toy();
    ClientModel a(t.config, t.domain.bank, 3);
    const auto snap = snapshot(a);
    auto emb = Tensor(a.id_embeddings());
    const Real before = emb.at(0);
    emb.mutable_data()[0] += 1;
    CHECK(snap[0][0] == before);
    restore(a, snap);
    CHECK(a.id_embeddings().at(0) == before);
}

TEST_CASE("model config validation and key-value form") {
    auto t = toy();
    auto c = t.config;
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    const auto kv = t.config.to_kv();
    const auto back = ModelConfig::from_kv(kv);
    CHECK(back.to_kv() == kv);
    auto wrong_bank = t.domain.bank;
    wrong_bank.n_items = 19;
    wrong_bank.values.resize(19 * 3 * 6);
    CHECK_THROWS_AS(ClientModel(t.config, wrong_bank, 1), std::invalid_argument);
}
