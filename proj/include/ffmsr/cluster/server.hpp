#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "ffmsr/cluster/kmeans.hpp"
#include "ffmsr/cluster/protocol.hpp"

namespace ffmsr::cluster {

/// Collects uploads for the current round, clusters them once every
/// registered client has reported, and answers with one download per client.
class ClusterServer {
public:
    ClusterServer(ClusterOptions options, std::uint64_t seed);

    void register_client(ClientId id);
    const std::vector<ClientId>& clients() const { return clients_; }

    /// Thread-safe. Rejects anything that is not an upload for the current
    /// round from a registered client that has not uploaded yet.
    void submit(protocol::FederatedMessage upload);

    /// Barrier. Throws std::runtime_error naming the missing clients if any
    /// registered client has not uploaded. On success the round counter
    /// advances and the downloads come back sorted by client id.
    std::vector<protocol::FederatedMessage> close_round();

    std::uint32_t round() const { return round_; }
    const std::optional<ClusterModel>& last_model() const { return last_model_; }
    const protocol::Transcript& transcript() const { return transcript_; }
    const ClusterOptions& options() const { return options_; }

private:
    ClusterOptions options_;
    Rng rng_;
    std::uint32_t round_ = 0;
    std::vector<ClientId> clients_;
    std::mutex mutex_;
    std::map<ClientId, data::EncodingMatrix> pending_;
    std::optional<ClusterModel> last_model_;
    protocol::Transcript transcript_;
};

}  // namespace ffmsr::cluster
