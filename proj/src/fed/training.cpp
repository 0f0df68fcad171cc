#include "ffmsr/fed/training.hpp"

#include <algorithm>
#include <stdexcept>

#include "ffmsr/model/checkpoint.hpp"
#include "ffmsr/numkit/ops.hpp"

namespace ffmsr::FFMSR_PRECISION::fed {

using namespace numkit;

Tensor ce_loss(const Tensor& logits, std::span<const std::int64_t> targets) { return cross_entropy(logits, targets); }

Tensor orthogonal_loss(const Tensor& a, const Tensor& b) { return sum(l2_norm_last(sum_last(mul(a, b)))); }

Tensor finetune_orthogonal_loss(const Tensor& f, const Tensor& e) { return orthogonal_loss(f, e); }

Client::Client(cluster::ClientId id, data::SplitDataset split, model::ClientModel model, const TrainConfig& config)
    : id_(id),
      split_(std::move(split)),
      model_(std::move(model)),
      batch_size_(config.batch_size),
      rng_(config.seed * 1000003ULL + id + 17) {
    if (split_.n_items != model_.config().n_items) throw std::invalid_argument("client: split and model disagree on item count");
    examples_ = data::training_examples(split_, model_.config().m_max);
    if (examples_.empty()) throw std::invalid_argument("client: no training examples");
    std::vector<Tensor> params;
    for (const auto& p : model_.parameters()) params.push_back(p.tensor);
    optimizer_ = std::make_unique<Adam>(std::move(params), AdamOptions{config.lr});
}

StepStats Client::train_step(std::span<const data::SequenceExample> batch, const LossFlags& flags) {
    const ForwardContext ctx{true, &rng_};
    const auto tables = model_.item_tables(ctx);
    const auto sb = model::SequenceBatch::from_examples(batch, model_.config().m_max);
    const Tensor h = model_.encode(tables, sb, ctx);
    const Tensor ce = ce_loss(model_.logits(h, tables), sb.targets);
    StepStats s;
    s.ce = ce.item();
    Tensor loss = ce;
    if (flags.orthogonal) {
        const Tensor o = orthogonal_loss(tables.T, tables.E);
        s.orthogonal = o.item();
        loss = add(loss, o);
    }
    if (flags.finetune_orthogonal && tables.F.defined()) {
        const Tensor o = finetune_orthogonal_loss(tables.F, tables.E);
        s.finetune_orthogonal = o.item();
        loss = add(loss, o);
    }
    s.loss = loss.item();
    optimizer_->zero_grad();
    loss.backward();
    optimizer_->step();
    ++steps_;
    return s;
}

EpochStats Client::train_epoch(const LossFlags& flags, std::size_t max_steps,
                               const std::function<void(const StepStats&)>& on_step) {
    std::vector<std::size_t> order(examples_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);
    EpochStats e;
    std::vector<data::SequenceExample> batch;
    for (std::size_t start = 0; start < order.size(); start += batch_size_) {
        if (max_steps && e.steps >= max_steps) break;
        batch.clear();
        for (std::size_t i = start; i < std::min(order.size(), start + batch_size_); ++i) batch.push_back(examples_[order[i]]);
        const auto s = train_step(batch, flags);
        if (on_step) on_step(s);
        e.mean_loss += s.loss;
        e.mean_ce += s.ce;
        ++e.steps;
    }
    if (e.steps) {
        e.mean_loss /= static_cast<double>(e.steps);
        e.mean_ce /= static_cast<double>(e.steps);
    }
    return e;
}

protocol::FederatedMessage Client::make_upload(std::uint32_t round) const {
    return {protocol::MessageKind::Upload, round, id_, model_.mixed_encodings()};
}

void Client::receive(const protocol::FederatedMessage& download) {
    if (download.kind != protocol::MessageKind::Download || download.client_id != id_) {
        throw std::invalid_argument("client " + std::to_string(id_) + ": message is not a download for this client");
    }
    model_.set_cluster_encodings(download.payload);
}

void Client::freeze_cluster_adapter() {
    for (const auto& p : model_.cluster_adapter_parameters()) {
        Tensor t = p.tensor;
        t.zero_grad();
        t.set_requires_grad(false);
    }
}

namespace {

data::MetricsReport run_eval(const model::ClientModel& m, const std::vector<data::SequenceExample>& cases,
                             const data::EvalOptions& options) {
    const data::BatchScorer scorer = [&](std::span<const data::SequenceExample> batch, std::vector<float>& out) {
        m.score(batch, out);
    };
    return data::evaluate(scorer, cases, m.config().n_items, options);
}

}  // namespace

data::MetricsReport Client::evaluate_valid(const data::EvalOptions& options) const {
    return run_eval(model_, data::validation_cases(split_, model_.config().m_max), options);
}

data::MetricsReport Client::evaluate_test(const data::EvalOptions& options) const {
    return run_eval(model_, data::test_cases(split_, model_.config().m_max), options);
}

data::MetricsReport Client::evaluate_train_targets(const data::EvalOptions& options) const {
    return run_eval(model_, data::train_target_cases(split_, model_.config().m_max), options);
}

bool EarlyStopper::update(double score) {
    if (!seen_ || score > best_) {
        seen_ = true;
        best_ = score;
        bad_ = 0;
        return true;
    }
    ++bad_;
    return false;
}

FinetuneResult finetune(Client& client, const TrainConfig& config, const Validator& validate,
                        const StepCallback& on_step) {
    if (config.federated && !client.model().has_cluster_encodings()) {
        throw std::logic_error("finetune: client " + std::to_string(client.id()) + " has no clustered encodings");
    }
    if (config.federated && config.freeze_cluster_adapter) client.freeze_cluster_adapter();
    const Validator score = validate ? validate : [](const Client& c) { return c.evaluate_valid().recall_at(10); };
    const LossFlags flags{config.orthogonal_loss, config.federated && config.finetune_orthogonal_loss};

    FinetuneResult r;
    EarlyStopper stopper(config.patience);
    auto best = model::snapshot(client.model());
    for (std::size_t epoch = 0; epoch < config.max_finetune_epochs; ++epoch) {
        const std::size_t budget = config.max_finetune_steps ? config.max_finetune_steps - r.steps : 0;
        const auto e = client.train_epoch(flags, budget, [&](const StepStats& s) {
            if (on_step) on_step(client, s);
        });
        r.steps += e.steps;
        ++r.epochs;
        r.loss_history.push_back(e.mean_loss);
        const double v = score(client);
        r.valid_history.push_back(v);
        if (stopper.update(v)) {
            r.best_epoch = epoch;
            best = model::snapshot(client.model());
        }
        if (stopper.should_stop()) {
            r.stopped_early = true;
            break;
        }
        if (config.max_finetune_steps && r.steps >= config.max_finetune_steps) break;
    }
    r.best_valid = stopper.best();
    model::restore(client.model(), best);
    return r;
}

}  // namespace ffmsr::FFMSR_PRECISION::fed
