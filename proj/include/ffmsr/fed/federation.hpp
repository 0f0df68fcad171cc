#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ffmsr/cluster/server.hpp"
#include "ffmsr/fed/training.hpp"

namespace ffmsr::FFMSR_PRECISION::fed {

struct ClientRoundStats {
    cluster::ClientId client_id = 0;
    EpochStats epoch;
};

struct RoundMetrics {
    std::uint32_t round = 0;
    std::vector<ClientRoundStats> clients;
    std::size_t cluster_points = 0;
    std::size_t cluster_iterations = 0;
    bool cluster_converged = false;
};

/// Stage-1 driver. Each round every client trains locally in its own
/// worker, uploads its mixed-layer encodings, the server clusters the
/// union behind a barrier, and each client receives its clustered rows.
/// With federation disabled the rounds are purely local.
class Federation {
public:
    Federation(std::vector<std::unique_ptr<Client>> clients, const TrainConfig& config);

    RoundMetrics pretrain_round();
    /// All configured rounds; the callback sees each round as it completes.
    std::vector<RoundMetrics> pretrain(const std::function<void(const RoundMetrics&)>& on_round = {});

    std::vector<std::unique_ptr<Client>>& clients() { return clients_; }
    const cluster::ClusterServer& server() const { return *server_; }
    std::uint32_t rounds_done() const { return round_; }

private:
    TrainConfig config_;
    std::vector<std::unique_ptr<Client>> clients_;
    std::unique_ptr<cluster::ClusterServer> server_;
    std::uint32_t round_ = 0;
};

/// One domain's interactions and encodings as loaded from disk or synthesised.
struct DomainData {
    data::InteractionDataset data;
    data::EncodingBank bank;
};

/// Split the domain, build its model (seeded from config.seed and the id)
/// and wrap both in a client.
std::unique_ptr<Client> make_client(cluster::ClientId id, const DomainData& domain, const TrainConfig& config);

struct PipelineResult {
    std::vector<RoundMetrics> rounds;
    std::vector<FinetuneResult> finetune;
    std::vector<data::MetricsReport> test;
};

/// Pretraining rounds, then fine-tuning and test evaluation per client.
PipelineResult run_pipeline(const std::vector<DomainData>& domains, const TrainConfig& config);

}  // namespace ffmsr::FFMSR_PRECISION::fed
