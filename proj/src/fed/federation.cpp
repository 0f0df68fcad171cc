#include "ffmsr/fed/federation.hpp"

#include <exception>
#include <future>
#include <stdexcept>
#include <string>

namespace ffmsr::FFMSR_PRECISION::fed {

Federation::Federation(std::vector<std::unique_ptr<Client>> clients, const TrainConfig& config)
    : config_(config), clients_(std::move(clients)) {
    if (clients_.empty()) throw std::invalid_argument("federation: no clients");
    server_ = std::make_unique<cluster::ClusterServer>(config_.cluster_options(), config_.seed ^ 0x5eedc1u);
    for (const auto& c : clients_) server_->register_client(c->id());
}

RoundMetrics Federation::pretrain_round() {
    RoundMetrics m;
    m.round = round_;
    const LossFlags flags{config_.orthogonal_loss, false};

    std::vector<std::future<EpochStats>> jobs;
    jobs.reserve(clients_.size());
    for (auto& c : clients_) {
        Client* client = c.get();
        const bool upload = config_.federated;
        const auto round = round_;
        jobs.push_back(std::async(std::launch::async, [this, client, flags, upload, round] {
            EpochStats total;
            for (std::size_t e = 0; e < config_.epochs_per_round; ++e) {
                const auto s = client->train_epoch(flags);
                total.steps += s.steps;
                total.mean_loss += s.mean_loss / static_cast<double>(config_.epochs_per_round);
                total.mean_ce += s.mean_ce / static_cast<double>(config_.epochs_per_round);
            }
            if (upload) server_->submit(client->make_upload(round));
            return total;
        }));
    }
    std::string failures;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        try {
            m.clients.push_back({clients_[i]->id(), jobs[i].get()});
        } catch (const std::exception& e) {
            failures += "; client " + std::to_string(clients_[i]->id()) + ": " + e.what();
        }
    }

    if (config_.federated) {
        std::vector<protocol::FederatedMessage> downloads;
        try {
            downloads = server_->close_round();
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string(e.what()) + failures);
        }
        for (const auto& d : downloads) {
            for (auto& c : clients_) {
                if (c->id() == d.client_id) c->receive(d);
            }
        }
        const auto& model = *server_->last_model();
        m.cluster_points = model.assignments.size();
        m.cluster_iterations = model.iterations;
        m.cluster_converged = model.converged;
    } else if (!failures.empty()) {
        throw std::runtime_error("round " + std::to_string(round_) + " failed" + failures);
    }
    ++round_;
    return m;
}

std::vector<RoundMetrics> Federation::pretrain(const std::function<void(const RoundMetrics&)>& on_round) {
    std::vector<RoundMetrics> out;
    for (std::size_t r = 0; r < config_.pretrain_rounds; ++r) {
        out.push_back(pretrain_round());
        if (on_round) on_round(out.back());
    }
    return out;
}

std::unique_ptr<Client> make_client(cluster::ClientId id, const DomainData& domain, const TrainConfig& config) {
    auto split = data::leave_one_out_split(domain.data);
    auto mc = config.model_config(domain.data.n_items, domain.bank.dim, domain.bank.n_layers);
    model::ClientModel model(mc, domain.bank, config.seed * 7919ULL + id * 104729ULL + 1);
    return std::make_unique<Client>(id, std::move(split), std::move(model), config);
}

PipelineResult run_pipeline(const std::vector<DomainData>& domains, const TrainConfig& config) {
    std::vector<std::unique_ptr<Client>> clients;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        clients.push_back(make_client(static_cast<cluster::ClientId>(i), domains[i], config));
    }
    Federation fed(std::move(clients), config);
    PipelineResult r;
    r.rounds = fed.pretrain();
    for (auto& c : fed.clients()) {
        r.finetune.push_back(finetune(*c, config));
        r.test.push_back(c->evaluate_test());
    }
    return r;
}

}  // namespace ffmsr::FFMSR_PRECISION::fed
