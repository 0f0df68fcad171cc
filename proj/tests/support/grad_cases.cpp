#include "grad_cases.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ffmsr/data/synth.hpp"
#include "ffmsr/fed/training.hpp"
#include "ffmsr/model/client_model.hpp"
#include "ffmsr/model/layers.hpp"
#include "ffmsr/numkit/ops.hpp"
#include "ffmsr/semantic/fusion.hpp"
#include "ffmsr/semantic/moe_adapter.hpp"

namespace ffmsr::testing {

using namespace numkit;

GradCheck check_gradients(const std::vector<NamedTensor>& inputs, const std::function<Tensor()>& loss, double h,
                          std::size_t max_entries, std::uint64_t sample_seed) {
    for (const auto& in : inputs) Tensor(in.tensor).zero_grad();
    loss().backward();
    std::vector<std::vector<double>> tape;
    for (const auto& in : inputs) {
        const auto g = in.tensor.grad();
        tape.emplace_back(in.tensor.numel(), 0.0);
        std::copy(g.begin(), g.end(), tape.back().begin());
    }

    GradCheck out;
    std::mt19937_64 pick(sample_seed);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor t = inputs[k].tensor;
        std::vector<std::size_t> idx(t.numel());
        std::iota(idx.begin(), idx.end(), 0);
        if (max_entries && idx.size() > max_entries) {
            std::shuffle(idx.begin(), idx.end(), pick);
            idx.resize(max_entries);
        }
        double diff = 0, na = 0, nf = 0;
        for (std::size_t i : idx) {
            auto data = t.mutable_data();
            const Real saved = data[i];
            data[i] = saved + static_cast<Real>(h);
            const double up = loss().item();
            data[i] = saved - static_cast<Real>(h);
            const double down = loss().item();
            data[i] = saved;
            const double fd = (up - down) / (2 * h);
            diff += (fd - tape[k][i]) * (fd - tape[k][i]);
            na += tape[k][i] * tape[k][i];
            nf += fd * fd;
        }
        out.entries += idx.size();
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-6});
        if (rel >= out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst = inputs[k].name;
        }
    }
    return out;
}

namespace {

Tensor randn(Shape s, Rng& rng, Real stddev = 1) { return normal_tensor(std::move(s), stddev, rng, true); }
Tensor constant(Shape s, Rng& rng) { return normal_tensor(std::move(s), Real(1), rng, false); }

// Reduce to a scalar through fixed random weights so every output entry matters.
Tensor project(const Tensor& y, Rng& rng) { return sum(mul(y, constant(y.shape(), rng))); }

GradCase unary(std::string name, Shape shape, std::function<Tensor(const Tensor&)> op) {
    return {name, [name, shape, op](std::uint64_t seed) {
                Rng rng(seed);
                auto x = randn(shape, rng);
                const auto w = constant(op(x).shape(), rng);
                return check_gradients({{"x", x}}, [&] { return sum(mul(op(x), w)); });
            }};
}

GradCase binary(std::string name, Shape sa, Shape sb, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    return {name, [name, sa, sb, op](std::uint64_t seed) {
                Rng rng(seed);
                auto a = randn(sa, rng), b = randn(sb, rng);
                const auto w = constant(op(a, b).shape(), rng);
                return check_gradients({{"a", a}, {"b", b}}, [&] { return sum(mul(op(a, b), w)); });
            }};
}

}  // namespace

const std::vector<GradCase>& primitive_grad_cases() {
    static const std::vector<GradCase> cases = [] {
        std::vector<GradCase> c;
        c.push_back(binary("add", {3, 4}, {3, 4}, [](const Tensor& a, const Tensor& b) { return add(a, b); }));
        c.push_back(binary("sub", {3, 4}, {3, 4}, [](const Tensor& a, const Tensor& b) { return sub(a, b); }));
        c.push_back(binary("mul", {3, 4}, {3, 4}, [](const Tensor& a, const Tensor& b) { return mul(a, b); }));
        c.push_back(unary("scale", {5}, [](const Tensor& x) { return scale(x, Real(-2.5)); }));
        c.push_back(binary("add_row", {2, 3, 4}, {4}, [](const Tensor& a, const Tensor& b) { return add_row(a, b); }));
        c.push_back(binary("scale_rows", {2, 3, 4}, {2, 3, 1}, [](const Tensor& a, const Tensor& b) { return scale_rows(a, b); }));
        c.push_back(binary("matmul", {2, 3, 4}, {4, 5}, [](const Tensor& a, const Tensor& b) { return matmul(a, b); }));
        c.push_back(unary("transpose", {3, 4}, [](const Tensor& x) { return transpose(x); }));
        c.push_back(unary("reshape", {3, 4}, [](const Tensor& x) { return reshape(x, {2, 6}); }));
        c.push_back(unary("softmax", {3, 5}, [](const Tensor& x) { return softmax(x); }));
        c.push_back({"layer_norm", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = randn({3, 6}, rng), g = randn({6}, rng), b = randn({6}, rng);
                         const auto w = constant({3, 6}, rng);
                         return check_gradients({{"x", x}, {"gamma", g}, {"beta", b}},
                                                [&] { return sum(mul(layer_norm(x, g, b), w)); });
                     }});
        c.push_back(unary("leaky_relu", {4, 5}, [](const Tensor& x) { return leaky_relu(x); }));
        c.push_back(unary("sigmoid", {4, 5}, [](const Tensor& x) { return sigmoid(x); }));
        c.push_back(unary("gelu", {4, 5}, [](const Tensor& x) { return gelu(x); }));
        c.push_back({"dropout", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = randn({4, 5}, rng);
                         const auto w = constant({4, 5}, rng);
                         return check_gradients({{"x", x}}, [&] {
                             Rng mask(seed + 99);
                             return sum(mul(dropout(x, Real(0.3), ForwardContext{true, &mask}), w));
                         });
                     }});
        c.push_back({"spectral_filter", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = randn({2, 7, 3}, rng), re = randn({4, 3}, rng), im = randn({4, 3}, rng);
                         const auto w = constant({2, 7, 3}, rng);
                         return check_gradients({{"x", x}, {"w_re", re}, {"w_im", im}},
                                                [&] { return sum(mul(spectral_filter(x, re, im), w)); });
                     }});
        c.push_back({"spectral_filter_even", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = randn({1, 8, 2}, rng), re = randn({5, 2}, rng), im = randn({5, 2}, rng);
                         const auto w = constant({1, 8, 2}, rng);
                         return check_gradients({{"x", x}, {"w_re", re}, {"w_im", im}},
                                                [&] { return sum(mul(spectral_filter(x, re, im), w)); });
                     }});
        c.push_back({"embedding", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto table = randn({5, 3}, rng);
                         const std::vector<std::int64_t> ids{4, -1, 0, 4, 2, 2};
                         const auto w = constant({2, 3, 3}, rng);
                         return check_gradients({{"table", table}},
                                                [&] { return sum(mul(embedding(table, ids, {2, 3}), w)); });
                     }});
        c.push_back(unary("resize_seq_pad", {2, 3, 2}, [](const Tensor& x) { return resize_seq(x, 5); }));
        c.push_back(unary("resize_seq_crop", {2, 4, 2}, [](const Tensor& x) { return resize_seq(x, 2); }));
        c.push_back(binary("concat_last", {3, 2}, {3, 4}, [](const Tensor& a, const Tensor& b) { return concat_last({a, b}); }));
        c.push_back({"stack_and_mix", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = randn({3, 4}, rng), b = randn({3, 4}, rng), g = randn({3, 2}, rng);
                         const auto w = constant({3, 4}, rng);
                         return check_gradients({{"a", a}, {"b", b}, {"weights", g}},
                                                [&] { return sum(mul(mix(g, stack_experts({a, b})), w)); });
                     }});
        c.push_back(unary("sum", {3, 4}, [](const Tensor& x) { return sum(mul(x, x)); }));
        c.push_back(unary("mean", {3, 4}, [](const Tensor& x) { return mean(mul(x, x)); }));
        c.push_back(unary("sum_last", {3, 4}, [](const Tensor& x) { return sum_last(x); }));
        c.push_back(unary("l2_norm_last", {3, 4}, [](const Tensor& x) { return l2_norm_last(x); }));
        c.push_back({"attention", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto q = randn({2, 4, 6}, rng), k = randn({2, 4, 6}, rng), v = randn({2, 4, 6}, rng);
                         const auto w = constant({2, 4, 6}, rng);
                         const std::vector<std::size_t> len{3, 4};
                         return check_gradients({{"q", q}, {"k", k}, {"v", v}}, [&] {
                             Rng mask(seed + 7);
                             return sum(mul(attention(q, k, v, 2, true, len, Real(0.2), ForwardContext{true, &mask}), w));
                         });
                     }});
        c.push_back({"cross_entropy", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto l = randn({3, 6}, rng);
                         const std::vector<std::int64_t> t{5, 0, 2};
                         return check_gradients({{"logits", l}}, [&] { return cross_entropy(l, t); });
                     }});
        return c;
    }();
    return cases;
}

namespace {

data::SynthDomain small_domain(std::uint64_t seed) {
    data::SynthOptions o;
    o.domains = 1;
    o.items_per_domain = 12;
    o.users_per_domain = 6;
    o.dim = 5;
    o.seed = seed;
    return data::synth_generate(o).domains[0];
}

model::ModelConfig small_config(std::size_t d_v = 4) {
    model::ModelConfig c;
    c.n_items = 12;
    c.enc_dim = 5;
    c.n_layers = 3;
    c.d_v = d_v;
    c.n_experts = 2;
    c.m_max = 6;
    c.n_filters = 1;
    c.n_blocks = 1;
    c.heads = 2;
    return c;
}

data::EncodingMatrix random_xc(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd(0, 1);
    auto m = data::EncodingMatrix::zeros(rows, cols);
    for (auto& v : m.values) v = static_cast<float>(nd(g));
    return m;
}

}  // namespace

const std::vector<GradCase>& module_grad_cases() {
    static const std::vector<GradCase> cases = [] {
        std::vector<GradCase> c;
        c.push_back({"moe_adapter", [](std::uint64_t seed) {
                         Rng rng(seed);
                         semantic::MoEAdapter moe(5, 3, 3, Real(1), Real(0.2), rng);
                         for (auto& v : moe.gate_weights().mutable_data()) v = static_cast<Real>(std::normal_distribution<double>(0, 1)(rng));
                         for (auto& b : moe.expert_biases()) {
                             for (auto& v : b.mutable_data()) v = static_cast<Real>(std::normal_distribution<double>(0, 1)(rng));
                         }
                         auto x = randn({4, 5}, rng);
                         const auto w = constant({4, 3}, rng);
                         auto inputs = moe.parameters("moe");
                         inputs.push_back({"x", x});
                         return check_gradients(inputs, [&] {
                             Rng noise(seed + 1);
                             return sum(mul(moe.forward(x, ForwardContext{true, &noise}), w));
                         });
                     }});
        c.push_back({"fusion_block", [](std::uint64_t seed) {
                         // Redraw until every hidden pre-activation is clear of the
                         // LeakyReLU kink by more than a probe step can move it.
                         for (std::uint64_t attempt = 0;; ++attempt) {
                             Rng rng(seed * 1000 + attempt);
                             semantic::FusionBlock block(4, rng);
                             auto id = randn({3, 4}, rng);
                             std::vector<Tensor> layers{randn({3, 4}, rng), randn({3, 4}, rng), randn({3, 4}, rng)};
                             double margin = 1e9;
                             for (const auto& t : layers) {
                                 const auto pre = add_row(matmul(concat_last({id, t}), block.w1()), block.b1());
                                 for (Real v : pre.data()) margin = std::min(margin, std::abs(static_cast<double>(v)));
                             }
                             if (margin < 0.01) continue;
                             const auto w = constant({3, 4}, rng);
                             auto inputs = block.parameters("fusion");
                             for (std::size_t j = 0; j < layers.size(); ++j) inputs.push_back({"layer" + std::to_string(j), layers[j]});
                             return check_gradients(inputs, [&] {
                                 return sum(mul(semantic::fuse_embeddings(block.weights(id, layers), layers), w));
                             });
                         }
                     }});
        c.push_back({"filter_layer", [](std::uint64_t seed) {
                         Rng rng(seed);
                         model::FilterLayer f(8, 3, Real(0.1), true);
                         for (const auto& p : f.parameters("f")) {
                             for (auto& v : Tensor(p.tensor).mutable_data()) v += static_cast<Real>(std::normal_distribution<double>(0, 0.5)(rng));
                         }
                         auto x = randn({2, 5, 3}, rng);
                         const auto w = constant({2, 5, 3}, rng);
                         auto inputs = f.parameters("filter");
                         inputs.push_back({"x", x});
                         return check_gradients(inputs, [&] {
                             Rng mask(seed + 3);
                             return sum(mul(f.forward(x, ForwardContext{true, &mask}), w));
                         });
                     }});
        c.push_back({"cluster_filter_layer", [](std::uint64_t seed) {
                         Rng rng(seed);
                         model::FilterLayer f(6, 3, 0, false);
                         for (const auto& p : f.parameters("f")) {
                             for (auto& v : Tensor(p.tensor).mutable_data()) v += static_cast<Real>(std::normal_distribution<double>(0, 0.5)(rng));
                         }
                         auto x = randn({2, 6, 3}, rng);
                         const auto w = constant({2, 6, 3}, rng);
                         auto inputs = f.parameters("filter");
                         inputs.push_back({"x", x});
                         return check_gradients(inputs, [&] { return sum(mul(f.forward(x, ForwardContext{}), w)); });
                     }});
        c.push_back({"gate_layer", [](std::uint64_t seed) {
                         Rng rng(seed);
                         model::GateLayer g(4, rng);
                         for (auto& v : g.weight().mutable_data()) v = static_cast<Real>(std::normal_distribution<double>(0, 1)(rng));
                         auto e = randn({2, 3, 4}, rng);
                         const auto w = constant({2, 3, 4}, rng);
                         auto inputs = g.parameters("gate");
                         inputs.push_back({"e", e});
                         return check_gradients(inputs, [&] { return sum(mul(g.forward(e), w)); });
                     }});
        c.push_back({"transformer_block", [](std::uint64_t seed) {
                         Rng rng(seed);
                         model::TransformerBlock block(4, 2, Real(0.1), Real(0.1), rng);
                         for (const auto& p : block.parameters("b")) {
                             for (auto& v : Tensor(p.tensor).mutable_data()) v += static_cast<Real>(std::normal_distribution<double>(0, 0.3)(rng));
                         }
                         auto x = randn({2, 4, 4}, rng);
                         const auto w = constant({2, 4, 4}, rng);
                         const std::vector<std::size_t> len{4, 2};
                         auto inputs = block.parameters("block");
                         inputs.push_back({"x", x});
                         return check_gradients(inputs, [&] {
                             Rng mask(seed + 5);
                             return sum(mul(block.forward(x, len, true, ForwardContext{true, &mask}), w));
                         });
                     }});
        c.push_back({"ce_loss", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto l = randn({4, 7}, rng);
                         const std::vector<std::int64_t> t{0, 6, 3, 3};
                         return check_gradients({{"logits", l}}, [&] { return fed::ce_loss(l, t); });
                     }});
        c.push_back({"orthogonal_loss", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = randn({5, 4}, rng), b = randn({5, 4}, rng);
                         return check_gradients({{"T", a}, {"E", b}}, [&] { return fed::orthogonal_loss(a, b); });
                     }});
        c.push_back({"finetune_orthogonal_loss", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = randn({5, 4}, rng), b = randn({5, 4}, rng);
                         return check_gradients({{"F", a}, {"E", b}}, [&] { return fed::finetune_orthogonal_loss(a, b); });
                     }});
        c.push_back({"prediction_head", [](std::uint64_t seed) {
                         const auto dom = small_domain(seed);
                         model::ClientModel m(small_config(), dom.bank, seed);
                         Rng rng(seed);
                         auto h = randn({3, 4}, rng);
                         model::ItemTables tables;
                         tables.T = randn({12, 4}, rng);
                         tables.E = randn({12, 4}, rng);
                         const std::vector<std::int64_t> t{1, 11, 4};
                         return check_gradients({{"h", h}, {"T", tables.T}, {"E", tables.E}},
                                                [&] { return cross_entropy(m.logits(h, tables), t); });
                     }});
        c.push_back({"client_model", [](std::uint64_t seed) {
                         const auto dom = small_domain(seed);
                         const std::vector<data::SequenceExample> ex{{{1, 2, 3}, 4}, {{5, 6, 7, 8, 9, 10, 11}, 0}, {{3}, 2}};
                         const auto batch = model::SequenceBatch::from_examples(ex, 6);
                         auto loss = [&](const model::ClientModel& m) {
                             Rng run(seed + 17);
                             const ForwardContext ctx{true, &run};
                             const auto tables = m.item_tables(ctx);
                             Tensor l = fed::ce_loss(m.logits(m.encode(tables, batch, ctx), tables), batch.targets);
                             l = add(l, fed::orthogonal_loss(tables.T, tables.E));
                             return add(l, fed::finetune_orthogonal_loss(tables.F, tables.E));
                         };
                         for (std::uint64_t attempt = 0;; ++attempt) {
                             model::ClientModel m(small_config(8), dom.bank, seed * 1000 + attempt);
                             m.set_cluster_encodings(random_xc(12, 5, seed));
                             Rng rng(seed * 1000 + attempt);
                             for (const auto& p : m.parameters()) {
                                 if (p.name.find("w_re") != std::string::npos || p.name.find("w_im") != std::string::npos ||
                                     p.name.find("gate") != std::string::npos || p.name.find("bias") != std::string::npos) {
                                     for (auto& v : Tensor(p.tensor).mutable_data()) v += static_cast<Real>(std::normal_distribution<double>(0, 0.2)(rng));
                                 }
                             }
                             for (auto& v : m.fusion().parameters("f")[1].tensor.mutable_data()) {
                                 const double u = std::uniform_real_distribution<double>(0.3, 0.6)(rng);
                                 v = static_cast<Real>(rng() % 2 ? u : -u);
                             }
                             // Keep the layer scorer's LeakyReLU inputs and the per-item dot
                             // products behind the absolute values away from zero.
                             Rng run(seed + 17);
                             const ForwardContext ctx{true, &run};
                             semantic::FusionBlock scorer = m.fusion();
                             double margin = 1e9;
                             std::vector<Tensor> layer_embs;
                             for (std::size_t l = 0; l < m.layer_adapters().size(); ++l) {
                                 const auto raw = dom.bank.layer(l);
                                 layer_embs.push_back(m.layer_adapters()[l].forward(
                                     Tensor::from_data({raw.rows, raw.cols}, {raw.values.begin(), raw.values.end()}), ctx));
                             }
                             for (const auto& t : layer_embs) {
                                 const auto in = concat_last({m.id_embeddings(), t});
                                 double reach = 1;
                                 for (Real v : in.data()) reach = std::max(reach, std::abs(static_cast<double>(v)));
                                 const auto pre = add_row(matmul(in, scorer.w1()), scorer.b1());
                                 for (Real v : pre.data()) margin = std::min(margin, std::abs(static_cast<double>(v)) / (5e-3 * reach));
                             }
                             Rng again(seed + 17);
                             const auto tables = m.item_tables(ForwardContext{true, &again});
                             for (const Tensor* other : {&tables.T, &tables.F}) {
                                 const Tensor dots = sum_last(mul(*other, tables.E));
                                 for (Real v : dots.data()) margin = std::min(margin, std::abs(static_cast<double>(v)) / 1e-4);
                             }
                             if (margin < 1) {
                                 if (attempt > 5000) throw std::runtime_error("client_model: no instance clear of kinks");
                                 continue;
                             }
                             // The layer scorer reads a gradient-stopped copy of the ID table, so
                             // probing that table would also move the scores.
                             std::vector<NamedTensor> inputs;
                             for (const auto& p : m.parameters()) {
                                 if (p.name != "item_emb") inputs.push_back(p);
                             }
                             return check_gradients(inputs, [&] { return loss(m); });
                         }
                     }});
        return c;
    }();
    return cases;
}

}  // namespace ffmsr::testing
