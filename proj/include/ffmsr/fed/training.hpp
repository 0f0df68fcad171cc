#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ffmsr/cluster/protocol.hpp"
#include "ffmsr/data/metrics.hpp"
#include "ffmsr/data/split.hpp"
#include "ffmsr/fed/config.hpp"
#include "ffmsr/model/client_model.hpp"
#include "ffmsr/numkit/adam.hpp"

namespace ffmsr::FFMSR_PRECISION::fed {

using numkit::Tensor;

/// Mean next-item cross-entropy.
Tensor ce_loss(const Tensor& logits, std::span<const std::int64_t> targets);
/// sum_i |<a_i, b_i>| over aligned item tables.
Tensor orthogonal_loss(const Tensor& a, const Tensor& b);
/// Same form on the clustered table.
Tensor finetune_orthogonal_loss(const Tensor& f, const Tensor& e);

struct LossFlags {
    bool orthogonal = true;
    bool finetune_orthogonal = false;
};

struct StepStats {
    double loss = 0;
    double ce = 0;
    double orthogonal = 0;
    double finetune_orthogonal = 0;
};

struct EpochStats {
    std::size_t steps = 0;
    double mean_loss = 0;
    double mean_ce = 0;
};

/// One participant: private split, local model and optimiser state.
class Client {
public:
    Client(cluster::ClientId id, data::SplitDataset split, model::ClientModel model, const TrainConfig& config);

    cluster::ClientId id() const { return id_; }
    const data::SplitDataset& split() const { return split_; }
    model::ClientModel& model() { return model_; }
    const model::ClientModel& model() const { return model_; }
    const std::vector<data::SequenceExample>& examples() const { return examples_; }
    std::size_t steps_taken() const { return steps_; }

    /// Forward, backward and one Adam update on a batch.
    StepStats train_step(std::span<const data::SequenceExample> batch, const LossFlags& flags);
    /// Shuffled pass over all training examples. Stops early once the
    /// optional step budget is used up.
    EpochStats train_epoch(const LossFlags& flags, std::size_t max_steps = 0,
                           const std::function<void(const StepStats&)>& on_step = {});

    /// Upload carrying the current mixed-layer encodings.
    protocol::FederatedMessage make_upload(std::uint32_t round) const;
    void receive(const protocol::FederatedMessage& download);

    /// Clustered-adapter parameters stop taking gradients.
    void freeze_cluster_adapter();

    data::MetricsReport evaluate_valid(const data::EvalOptions& options = {}) const;
    data::MetricsReport evaluate_test(const data::EvalOptions& options = {}) const;
    data::MetricsReport evaluate_train_targets(const data::EvalOptions& options = {}) const;

private:
    cluster::ClientId id_;
    data::SplitDataset split_;
    model::ClientModel model_;
    std::size_t batch_size_;
    numkit::Rng rng_;
    std::vector<data::SequenceExample> examples_;
    std::unique_ptr<numkit::Adam> optimizer_;
    std::size_t steps_ = 0;
};

struct FinetuneResult {
    std::size_t epochs = 0;
    std::size_t steps = 0;
    std::size_t best_epoch = 0;
    double best_valid = -1;
    bool stopped_early = false;
    std::vector<double> valid_history;
    std::vector<double> loss_history;
};

/// Validation score to maximise; defaults to validation Recall@10.
using Validator = std::function<double(const Client&)>;
/// Called after every fine-tuning step.
using StepCallback = std::function<void(const Client&, const StepStats&)>;

/// Tracks the best score and counts evaluations without improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
    /// Returns true when this score is a new best.
    bool update(double score);
    bool should_stop() const { return bad_ >= patience_; }
    double best() const { return best_; }

private:
    std::size_t patience_;
    std::size_t bad_ = 0;
    double best_ = -1;
    bool seen_ = false;
};

/// Local fine-tuning after federation. Requires clustered encodings when the
/// config is federated; freezes the clustered adapter when configured, trains
/// with every enabled loss and leaves the best-validation weights in place.
FinetuneResult finetune(Client& client, const TrainConfig& config, const Validator& validate = {},
                        const StepCallback& on_step = {});

}  // namespace ffmsr::FFMSR_PRECISION::fed
