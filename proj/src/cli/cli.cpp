#include "ffmsr/cli/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "ffmsr/cluster/kmeans.hpp"
#include "ffmsr/data/dataset.hpp"
#include "ffmsr/data/encoding_bank.hpp"
#include "ffmsr/data/synth.hpp"
#include "ffmsr/fed/config.hpp"
#include "ffmsr/fed/federation.hpp"
#include "ffmsr/model/checkpoint.hpp"

namespace ffmsr::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Records {
public:
    explicit Records(std::ostream& out) : out_(out) {}

    void emit(const std::string& phase, std::optional<std::uint32_t> round, const std::string& domain,
              const std::string& metric, double value) {
        json j;
        j["phase"] = phase;
        j["round"] = round ? json(*round) : json(nullptr);
        j["domain"] = domain;
        j["metric"] = metric;
        j["value"] = value;
        out_ << j.dump() << '\n';
        out_.flush();
    }

private:
    std::ostream& out_;
};

struct Paths {
    static fs::path sequences(const fs::path& dir, const std::string& d) { return dir / (d + ".seq"); }
    static fs::path bank(const fs::path& dir, const std::string& d) { return dir / (d + ".mlse"); }
    static fs::path topics(const fs::path& dir, const std::string& d) { return dir / (d + ".topics"); }
    static fs::path items(const fs::path& dir, const std::string& d) { return dir / (d + ".items"); }
    static fs::path checkpoint(const fs::path& dir, const std::string& d) { return dir / (d + ".ckpt"); }
};

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
};

fed::TrainConfig load_train_config(const Options& o) {
    fed::TrainConfig c;
    if (!o.config_path.empty()) {
        if (!fs::exists(o.config_path)) throw UsageError("config file not found: " + o.config_path);
        c = fed::load_config(o.config_path);
    }
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        fed::set_config_value(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    c.validate();
    return c;
}

std::vector<fed::DomainData> load_domains(const fed::TrainConfig& c) {
    std::vector<fed::DomainData> out;
    for (const auto& d : c.domains) {
        const auto seq = Paths::sequences(c.data_dir, d), bank = Paths::bank(c.data_dir, d);
        for (const auto& p : {seq, bank}) {
            if (!fs::exists(p)) throw std::runtime_error("missing data file " + p.string() + "; run synth or ingest");
        }
        auto b = data::read_mlse(bank);
        auto ds = data::dataset_from_dense(data::read_sequences(seq), d, b.n_items);
        out.push_back({std::move(ds), std::move(b)});
    }
    return out;
}

std::vector<std::unique_ptr<fed::Client>> make_clients(const std::vector<fed::DomainData>& domains,
                                                       const fed::TrainConfig& c) {
    std::vector<std::unique_ptr<fed::Client>> clients;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        clients.push_back(fed::make_client(static_cast<cluster::ClientId>(i), domains[i], c));
    }
    return clients;
}

model::Checkpoint require_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw UsageError("no checkpoint at " + path.string());
    return model::read_checkpoint(path);
}

void emit_report(Records& rec, const std::string& phase, const std::string& domain, const data::MetricsReport& r) {
    for (std::size_t i = 0; i < r.cutoffs.size(); ++i) {
        const auto n = std::to_string(r.cutoffs[i]);
        rec.emit(phase, std::nullopt, domain, "recall@" + n, r.recall[i]);
        rec.emit(phase, std::nullopt, domain, "ndcg@" + n, r.ndcg[i]);
    }
    rec.emit(phase, std::nullopt, domain, "users", static_cast<double>(r.n_users));
}

// synth

struct SynthArgs {
    std::optional<std::string> out;
    data::SynthOptions o;
};

int cmd_synth(const Options& opts, const SynthArgs& a, Records& rec) {
    const auto c = load_train_config(opts);
    const fs::path dir = a.out.value_or(c.data_dir);
    const auto r = data::synth_generate(a.o);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < r.domains.size(); ++i) {
        const auto name = data::synth_domain_name(i);
        const auto& d = r.domains[i];
        data::write_sequences(Paths::sequences(dir, name), d.data);
        data::write_mlse(Paths::bank(dir, name), d.bank);
        std::ofstream topics(Paths::topics(dir, name));
        for (std::size_t j = 0; j < d.item_topic.size(); ++j) topics << j << '\t' << d.item_topic[j] << '\n';
        rec.emit("synth", std::nullopt, name, "items", static_cast<double>(d.data.n_items));
        rec.emit("synth", std::nullopt, name, "users", static_cast<double>(d.data.n_users()));
        rec.emit("synth", std::nullopt, name, "interactions", static_cast<double>(d.data.n_interactions()));
    }
    return kExitOk;
}

// ingest

struct IngestArgs {
    std::string domain, sequences, catalog, encodings;
    std::optional<std::string> out;
};

int cmd_ingest(const Options& opts, const IngestArgs& a, Records& rec) {
    const auto c = load_train_config(opts);
    const fs::path dir = a.out.value_or(c.data_dir);
    const auto raw = data::read_sequences(a.sequences);
    const auto catalog = data::read_catalog(a.catalog);
    const auto bank = data::read_mlse(a.encodings);
    if (bank.n_items != catalog.size()) {
        throw std::runtime_error("encodings hold " + std::to_string(bank.n_items) + " items, catalog lists " +
                                 std::to_string(catalog.size()));
    }
    std::unordered_map<std::string, std::int32_t> row_of;
    for (std::size_t i = 0; i < catalog.size(); ++i) row_of.emplace(catalog[i].first, static_cast<std::int32_t>(i));

    data::InteractionDataset ds;
    if (c.five_core) {
        ds = data::five_core_filter(raw, a.domain);
    } else {
        // Keep every item in catalog order.
        ds.domain = a.domain;
        ds.n_items = catalog.size();
        for (const auto& [id, text] : catalog) ds.item_ids.push_back(id);
        for (const auto& r : raw) {
            auto& s = ds.sequences.emplace_back();
            for (const auto& it : r.items) {
                const auto f = row_of.find(it);
                if (f == row_of.end()) throw std::runtime_error("item '" + it + "' is not in the catalog");
                s.push_back(f->second);
            }
            ds.user_ids.push_back(r.user);
        }
    }
    std::vector<std::int32_t> rows;
    rows.reserve(ds.item_ids.size());
    for (const auto& id : ds.item_ids) {
        const auto f = row_of.find(id);
        if (f == row_of.end()) throw std::runtime_error("item '" + id + "' is not in the catalog");
        rows.push_back(f->second);
    }
    const auto kept = c.five_core ? bank.select_items(rows) : bank;

    fs::create_directories(dir);
    data::write_sequences(Paths::sequences(dir, a.domain), ds);
    data::write_mlse(Paths::bank(dir, a.domain), kept);
    std::ofstream items(Paths::items(dir, a.domain));
    for (std::size_t i = 0; i < ds.item_ids.size(); ++i) items << i << '\t' << ds.item_ids[i] << '\n';
    rec.emit("ingest", std::nullopt, a.domain, "raw_users", static_cast<double>(raw.size()));
    rec.emit("ingest", std::nullopt, a.domain, "users", static_cast<double>(ds.n_users()));
    rec.emit("ingest", std::nullopt, a.domain, "items", static_cast<double>(ds.n_items));
    rec.emit("ingest", std::nullopt, a.domain, "interactions", static_cast<double>(ds.n_interactions()));
    return kExitOk;
}

// pretrain

int cmd_pretrain(const Options& opts, Records& rec) {
    const auto c = load_train_config(opts);
    const auto domains = load_domains(c);
    fed::Federation federation(make_clients(domains, c), c);
    federation.pretrain([&](const fed::RoundMetrics& m) {
        for (const auto& cs : m.clients) {
            const auto& name = c.domains[cs.client_id];
            rec.emit("pretrain", m.round, name, "loss", cs.epoch.mean_loss);
            rec.emit("pretrain", m.round, name, "ce", cs.epoch.mean_ce);
            rec.emit("pretrain", m.round, name, "steps", static_cast<double>(cs.epoch.steps));
        }
        if (c.federated) {
            rec.emit("pretrain", m.round, "server", "cluster_points", static_cast<double>(m.cluster_points));
            rec.emit("pretrain", m.round, "server", "cluster_iterations", static_cast<double>(m.cluster_iterations));
            rec.emit("pretrain", m.round, "server", "cluster_converged", m.cluster_converged ? 1.0 : 0.0);
        }
    });
    const fs::path dir = fs::path(c.out_dir) / "pretrain";
    fs::create_directories(dir);
    for (const auto& client : federation.clients()) {
        const auto& name = c.domains[client->id()];
        const auto ckpt = model::make_checkpoint(
            client->model(), {{"domain", name}, {"stage", "pretrain"}, {"rounds", std::to_string(federation.rounds_done())}});
        model::write_checkpoint(Paths::checkpoint(dir, name), ckpt);
        const auto v = client->evaluate_valid();
        rec.emit("pretrain", std::nullopt, name, "valid_recall@10", v.recall_at(10));
    }
    std::ofstream transcript(fs::path(c.out_dir) / "transcript.jsonl");
    federation.server().transcript().write_jsonl(transcript);
    return kExitOk;
}

// finetune

int cmd_finetune(const Options& opts, const std::optional<std::string>& from, Records& rec) {
    const auto c = load_train_config(opts);
    const auto domains = load_domains(c);
    const fs::path src = from.value_or((fs::path(c.out_dir) / "pretrain").string());
    std::vector<model::Checkpoint> ckpts;
    for (const auto& d : c.domains) ckpts.push_back(require_checkpoint(Paths::checkpoint(src, d)));
    auto clients = make_clients(domains, c);
    const fs::path dir = fs::path(c.out_dir) / "finetune";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < clients.size(); ++i) {
        auto& client = *clients[i];
        const auto& name = c.domains[i];
        model::load_into(client.model(), ckpts[i]);
        const auto r = fed::finetune(client, c);
        for (std::size_t e = 0; e < r.valid_history.size(); ++e) {
            rec.emit("finetune", static_cast<std::uint32_t>(e), name, "valid_recall@10", r.valid_history[e]);
            if (e < r.loss_history.size()) rec.emit("finetune", static_cast<std::uint32_t>(e), name, "loss", r.loss_history[e]);
        }
        rec.emit("finetune", std::nullopt, name, "best_epoch", static_cast<double>(r.best_epoch));
        rec.emit("finetune", std::nullopt, name, "best_valid_recall@10", r.best_valid);
        model::write_checkpoint(Paths::checkpoint(dir, name),
                                model::make_checkpoint(client.model(), {{"domain", name}, {"stage", "finetune"}}));
    }
    return kExitOk;
}

// evaluate

struct EvaluateArgs {
    std::optional<std::string> checkpoints;
    std::string split = "test";
    bool mask_history = false;
};

int cmd_evaluate(const Options& opts, const EvaluateArgs& a, Records& rec) {
    const auto c = load_train_config(opts);
    const fs::path src = a.checkpoints.value_or((fs::path(c.out_dir) / "finetune").string());
    std::vector<model::Checkpoint> ckpts;
    for (const auto& d : c.domains) ckpts.push_back(require_checkpoint(Paths::checkpoint(src, d)));
    const auto domains = load_domains(c);
    auto clients = make_clients(domains, c);
    data::EvalOptions eo;
    eo.mask_history = a.mask_history;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        model::load_into(clients[i]->model(), ckpts[i]);
        const auto r = a.split == "valid" ? clients[i]->evaluate_valid(eo) : clients[i]->evaluate_test(eo);
        emit_report(rec, "evaluate", c.domains[i], r);
    }
    return kExitOk;
}

// inspect-clusters

struct InspectArgs {
    std::optional<std::string> checkpoints;
    std::optional<std::string> assignments;
};

int cmd_inspect(const Options& opts, const InspectArgs& a, Records& rec) {
    const auto c = load_train_config(opts);
    const fs::path src = a.checkpoints.value_or((fs::path(c.out_dir) / "pretrain").string());
    std::vector<model::Checkpoint> ckpts;
    for (const auto& d : c.domains) ckpts.push_back(require_checkpoint(Paths::checkpoint(src, d)));
    const auto domains = load_domains(c);
    auto clients = make_clients(domains, c);
    std::vector<cluster::UploadBatch> batches;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        model::load_into(clients[i]->model(), ckpts[i]);
        batches.push_back({static_cast<cluster::ClientId>(i), clients[i]->model().mixed_encodings()});
    }
    cluster::Rng rng(c.seed);
    const auto m = cluster::cluster(batches, c.cluster_options(), rng);

    std::vector<std::set<std::size_t>> domains_in(m.centroids.k);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        std::set<std::int32_t> used;
        for (std::size_t r = 0; r < batches[i].encodings.rows; ++r) {
            const auto k = m.assignments[offset + r];
            used.insert(k);
            domains_in[static_cast<std::size_t>(k)].insert(i);
        }
        rec.emit("inspect", std::nullopt, c.domains[i], "items", static_cast<double>(batches[i].encodings.rows));
        rec.emit("inspect", std::nullopt, c.domains[i], "clusters_used", static_cast<double>(used.size()));
        offset += batches[i].encodings.rows;
    }
    std::size_t used = 0, shared = 0;
    for (const auto& s : domains_in) {
        used += !s.empty();
        shared += s.size() > 1;
    }
    rec.emit("inspect", std::nullopt, "all", "clusters_used", static_cast<double>(used));
    rec.emit("inspect", std::nullopt, "all", "shared_clusters", static_cast<double>(shared));
    rec.emit("inspect", std::nullopt, "all", "iterations", static_cast<double>(m.iterations));
    rec.emit("inspect", std::nullopt, "all", "converged", m.converged ? 1.0 : 0.0);

    std::vector<std::int32_t> truth;
    bool have_truth = true;
    for (const auto& d : c.domains) {
        std::ifstream in(Paths::topics(c.data_dir, d));
        if (!in) {
            have_truth = false;
            break;
        }
        std::size_t item;
        std::int32_t topic;
        while (in >> item >> topic) truth.push_back(topic);
    }
    if (have_truth && truth.size() == m.assignments.size()) {
        rec.emit("inspect", std::nullopt, "all", "topic_purity", cluster::purity(m.assignments, truth));
    }
    if (a.assignments) {
        std::ofstream out(*a.assignments);
        if (!out) throw std::runtime_error("cannot write " + *a.assignments);
        offset = 0;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            for (std::size_t r = 0; r < batches[i].encodings.rows; ++r) {
                out << c.domains[i] << '\t' << r << '\t' << m.assignments[offset + r] << '\n';
            }
            offset += batches[i].encodings.rows;
        }
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Federated cross-domain sequential recommendation", "ffmsr"};
    app.require_subcommand(1);
    Options opts;
    app.add_option("--config", opts.config_path, "key = value configuration file");
    app.add_option("--set", opts.overrides, "Override one configuration key (key=value), repeatable");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-domain dataset");
    SynthArgs sa;
    synth->add_option("--out", sa.out, "Output directory (default: data_dir)");
    synth->add_option("--seed", sa.o.seed, "Random seed")->capture_default_str();
    synth->add_option("--domains", sa.o.domains, "Number of domains")->capture_default_str();
    synth->add_option("--topics", sa.o.topics, "Shared topics")->capture_default_str();
    synth->add_option("--items", sa.o.items_per_domain, "Items per domain")->capture_default_str();
    synth->add_option("--users", sa.o.users_per_domain, "Users per domain")->capture_default_str();
    synth->add_option("--layers", sa.o.layers, "Encoder layers per item")->capture_default_str();
    synth->add_option("--dim", sa.o.dim, "Encoding width")->capture_default_str();
    synth->add_option("--separation", sa.o.separation, "Expected distance between topic centres")->capture_default_str();
    synth->add_option("--noise", sa.o.noise, "Per-item encoding noise")->capture_default_str();
    synth->add_option("--min-len", sa.o.min_len, "Shortest sequence")->capture_default_str();
    synth->add_option("--max-len", sa.o.max_len, "Longest sequence")->capture_default_str();
    synth->add_option("--interaction-noise", sa.o.interaction_noise, "Fraction of random interactions")
        ->capture_default_str();

    auto* ingest = app.add_subcommand("ingest", "Filter raw sequences and align them with an encoding file");
    IngestArgs ia;
    ingest->add_option("--domain", ia.domain, "Domain name")->required();
    ingest->add_option("--sequences", ia.sequences, "user<TAB>item,item,... file")->required();
    ingest->add_option("--catalog", ia.catalog, "item<TAB>text file, in encoding order")->required();
    ingest->add_option("--encodings", ia.encodings, "MLSE encoding file")->required();
    ingest->add_option("--out", ia.out, "Output directory (default: data_dir)");

    auto* pretrain = app.add_subcommand("pretrain", "Federated pretraining rounds");

    auto* finetune = app.add_subcommand("finetune", "Local fine-tuning from pretrained checkpoints");
    std::optional<std::string> finetune_from;
    finetune->add_option("--from", finetune_from, "Checkpoint directory (default: out_dir/pretrain)");

    auto* evaluate = app.add_subcommand("evaluate", "Full-ranking evaluation of saved checkpoints");
    EvaluateArgs ea;
    evaluate->add_option("--checkpoints", ea.checkpoints, "Checkpoint directory (default: out_dir/finetune)");
    evaluate->add_option("--split", ea.split, "test or valid")->check(CLI::IsMember({"test", "valid"}))->capture_default_str();
    evaluate->add_flag("--mask-history", ea.mask_history, "Leave items from the user's history out of the ranking");

    auto* inspect = app.add_subcommand("inspect-clusters", "Cluster the current mixed encodings and summarise");
    InspectArgs xa;
    inspect->add_option("--checkpoints", xa.checkpoints, "Checkpoint directory (default: out_dir/pretrain)");
    inspect->add_option("--assignments", xa.assignments, "Write domain<TAB>item<TAB>cluster rows here");

    std::vector<const char*> argv{"ffmsr"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "ffmsr: " << e.what() << '\n';
        return kExitUsage;
    }

    Records rec(out);
    try {
        if (synth->parsed()) return cmd_synth(opts, sa, rec);
        if (ingest->parsed()) return cmd_ingest(opts, ia, rec);
        if (pretrain->parsed()) return cmd_pretrain(opts, rec);
        if (finetune->parsed()) return cmd_finetune(opts, finetune_from, rec);
        if (evaluate->parsed()) return cmd_evaluate(opts, ea, rec);
        if (inspect->parsed()) return cmd_inspect(opts, xa, rec);
    } catch (const UsageError& e) {
        err << "ffmsr: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fed::ConfigError& e) {
        err << "ffmsr: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "ffmsr: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace ffmsr::cli
