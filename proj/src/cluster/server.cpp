#include "ffmsr/cluster/server.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ffmsr::cluster {

ClusterServer::ClusterServer(ClusterOptions options, std::uint64_t seed) : options_(options), rng_(seed) {}

void ClusterServer::register_client(ClientId id) {
    std::lock_guard lock(mutex_);
    if (std::find(clients_.begin(), clients_.end(), id) != clients_.end()) {
        throw std::invalid_argument("server: client " + std::to_string(id) + " registered twice");
    }
    clients_.push_back(id);
    std::sort(clients_.begin(), clients_.end());
}

void ClusterServer::submit(protocol::FederatedMessage upload) {
    if (upload.kind != protocol::MessageKind::Upload) throw std::invalid_argument("server: only uploads are accepted");
    std::lock_guard lock(mutex_);
    if (upload.round != round_) {
        throw std::invalid_argument("server: upload for round " + std::to_string(upload.round) + " during round " +
                                    std::to_string(round_));
    }
    if (std::find(clients_.begin(), clients_.end(), upload.client_id) == clients_.end()) {
        throw std::invalid_argument("server: unknown client " + std::to_string(upload.client_id));
    }
    if (!pending_.emplace(upload.client_id, std::move(upload.payload)).second) {
        throw std::invalid_argument("server: client " + std::to_string(upload.client_id) + " uploaded twice");
    }
}

std::vector<protocol::FederatedMessage> ClusterServer::close_round() {
    std::lock_guard lock(mutex_);
    std::string missing;
    for (ClientId id : clients_) {
        if (!pending_.contains(id)) missing += (missing.empty() ? "" : ", ") + std::to_string(id);
    }
    if (clients_.empty()) missing = "(no clients registered)";
    if (!missing.empty()) {
        pending_.clear();
        throw std::runtime_error("round " + std::to_string(round_) + " aborted, missing uploads from: " + missing);
    }

    std::vector<UploadBatch> batches;
    for (auto& [id, enc] : pending_) {
        batches.push_back({id, std::move(enc)});
        transcript_.record({protocol::MessageKind::Upload, round_, id, batches.back().encodings});
    }
    pending_.clear();

    auto model = cluster(batches, options_, rng_);
    std::vector<protocol::FederatedMessage> downloads;
    for (const auto& b : batches) {
        downloads.push_back({protocol::MessageKind::Download, round_, b.client_id, synchronize(model, b)});
        transcript_.record(downloads.back());
    }
    last_model_ = std::move(model);
    ++round_;
    return downloads;
}

}  // namespace ffmsr::cluster
