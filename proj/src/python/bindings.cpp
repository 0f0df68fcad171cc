#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ffmsr/cli/cli.hpp"
#include "ffmsr/cluster/kmeans.hpp"
#include "ffmsr/data/dataset.hpp"
#include "ffmsr/data/metrics.hpp"
#include "ffmsr/data/synth.hpp"
#include "ffmsr/fed/config.hpp"
#include "ffmsr/fed/federation.hpp"
#include "ffmsr/numkit/fft.hpp"

namespace py = pybind11;
using namespace ffmsr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> vector_array(std::size_t n) {
    return py::array_t<T>(std::vector<py::ssize_t>{static_cast<py::ssize_t>(n)});
}

py::array_t<std::complex<double>> rfft(const Array& x) {
    if (x.ndim() != 1) throw std::invalid_argument("rfft: expected a 1-D array");
    const auto m = static_cast<std::size_t>(x.shape(0));
    auto out = vector_array<std::complex<double>>(m / 2 + 1);
    numkit::rfft_1d({x.data(), m}, {out.mutable_data(), m / 2 + 1});
    return out;
}

py::array_t<double> irfft(const py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>& spectrum, std::size_t m) {
    if (spectrum.ndim() != 1) throw std::invalid_argument("irfft: expected a 1-D array");
    auto out = vector_array<double>(m);
    numkit::irfft_1d({spectrum.data(), static_cast<std::size_t>(spectrum.shape(0))}, {out.mutable_data(), m});
    return out;
}

data::EncodingMatrix to_matrix(const FloatArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    data::EncodingMatrix m;
    m.rows = static_cast<std::size_t>(a.shape(0));
    m.cols = static_cast<std::size_t>(a.shape(1));
    m.values.assign(a.data(), a.data() + a.size());
    return m;
}

py::dict kmeans(const std::vector<FloatArray>& clients, std::size_t k, std::size_t max_iters, double shift_tol,
                std::uint64_t seed) {
    std::vector<cluster::UploadBatch> batches;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        batches.push_back({static_cast<cluster::ClientId>(i), to_matrix(clients[i])});
    }
    cluster::Rng rng(seed);
    const auto m = cluster::cluster(batches, cluster::ClusterOptions{k, max_iters, shift_tol, 1e-8}, rng);
    Array centroids({static_cast<py::ssize_t>(m.centroids.k), static_cast<py::ssize_t>(m.centroids.dim)});
    std::copy(m.centroids.values.begin(), m.centroids.values.end(), centroids.mutable_data());
    py::dict out;
    out["centroids"] = centroids;
    auto labels = vector_array<std::int32_t>(m.assignments.size());
    std::copy(m.assignments.begin(), m.assignments.end(), labels.mutable_data());
    out["assignments"] = labels;
    out["iterations"] = m.iterations;
    out["converged"] = m.converged;
    return out;
}

py::list synth(const data::SynthOptions& o) {
    const auto r = data::synth_generate(o);
    py::list out;
    for (std::size_t i = 0; i < r.domains.size(); ++i) {
        const auto& d = r.domains[i];
        py::dict dom;
        dom["name"] = data::synth_domain_name(i);
        dom["n_items"] = d.data.n_items;
        dom["sequences"] = d.data.sequences;
        FloatArray enc({static_cast<py::ssize_t>(d.bank.n_items), static_cast<py::ssize_t>(d.bank.n_layers),
                        static_cast<py::ssize_t>(d.bank.dim)});
        std::copy(d.bank.values.begin(), d.bank.values.end(), enc.mutable_data());
        dom["encodings"] = enc;
        dom["item_topic"] = d.item_topic;
        out.append(dom);
    }
    return out;
}

std::vector<std::vector<data::ItemId>> five_core(const std::vector<std::vector<std::string>>& sequences, std::size_t min_count) {
    std::vector<data::RawSequence> raw;
    for (std::size_t u = 0; u < sequences.size(); ++u) raw.push_back({std::to_string(u), sequences[u]});
    return data::five_core_filter(raw, "python", min_count).sequences;
}

py::dict metrics(const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& cutoffs) {
    const auto r = data::metrics_from_ranks(ranks, cutoffs);
    py::dict out;
    for (std::size_t i = 0; i < r.cutoffs.size(); ++i) {
        out[py::str("recall@" + std::to_string(r.cutoffs[i]))] = r.recall[i];
        out[py::str("ndcg@" + std::to_string(r.cutoffs[i]))] = r.ndcg[i];
    }
    return out;
}

py::list pipeline(const data::SynthOptions& so, const std::map<std::string, std::string>& settings) {
    fed::TrainConfig c;
    for (const auto& [k, v] : settings) fed::set_config_value(c, k, v);
    c.validate();
    std::vector<fed::DomainData> domains;
    for (auto& d : data::synth_generate(so).domains) domains.push_back({std::move(d.data), std::move(d.bank)});
    fed::PipelineResult r;
    {
        py::gil_scoped_release release;
        r = fed::run_pipeline(domains, c);
    }
    py::list out;
    for (std::size_t i = 0; i < r.test.size(); ++i) {
        py::dict d;
        d["domain"] = c.domains.size() > i ? c.domains[i] : data::synth_domain_name(i);
        d["recall@10"] = r.test[i].recall_at(10);
        d["recall@50"] = r.test[i].recall_at(50);
        d["ndcg@10"] = r.test[i].ndcg_at(10);
        d["ndcg@50"] = r.test[i].ndcg_at(50);
        d["finetune_epochs"] = r.finetune[i].epochs;
        out.append(d);
    }
    return out;
}

py::tuple run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = cli::run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Federated cross-domain sequential recommendation core";

    py::class_<data::SynthOptions>(m, "SynthOptions")
        .def(py::init<>())
        .def_readwrite("topics", &data::SynthOptions::topics)
        .def_readwrite("domains", &data::SynthOptions::domains)
        .def_readwrite("items_per_domain", &data::SynthOptions::items_per_domain)
        .def_readwrite("users_per_domain", &data::SynthOptions::users_per_domain)
        .def_readwrite("layers", &data::SynthOptions::layers)
        .def_readwrite("dim", &data::SynthOptions::dim)
        .def_readwrite("separation", &data::SynthOptions::separation)
        .def_readwrite("noise", &data::SynthOptions::noise)
        .def_readwrite("min_len", &data::SynthOptions::min_len)
        .def_readwrite("max_len", &data::SynthOptions::max_len)
        .def_readwrite("stay_prob", &data::SynthOptions::stay_prob)
        .def_readwrite("next_prob", &data::SynthOptions::next_prob)
        .def_readwrite("popularity_exponent", &data::SynthOptions::popularity_exponent)
        .def_readwrite("interaction_noise", &data::SynthOptions::interaction_noise)
        .def_readwrite("seed", &data::SynthOptions::seed);

    m.def("rfft", &rfft, py::arg("x"), "Real-input DFT, m // 2 + 1 bins");
    m.def("irfft", &irfft, py::arg("spectrum"), py::arg("m"), "Inverse of rfft for a length-m signal");
    m.def("kmeans", &kmeans, py::arg("clients"), py::arg("k"), py::arg("max_iters") = 50, py::arg("shift_tol") = 1e-4,
          py::arg("seed") = 0, "Distance-weighted k-means over the clients' encodings, concatenated in order");
    m.def("synth", &synth, py::arg("options") = data::SynthOptions{});
    m.def("five_core", &five_core, py::arg("sequences"), py::arg("min_count") = 5);
    m.def("metrics_from_ranks", &metrics, py::arg("ranks"), py::arg("cutoffs") = std::vector<std::size_t>{10, 50});
    m.def("run_synthetic_pipeline", &pipeline, py::arg("options"), py::arg("settings") = std::map<std::string, std::string>{},
          "Pretrain, fine-tune and test on synthetic domains; settings use the config file keys");
    m.def("config_keys", &fed::config_keys);
    m.def("run_cli", &run_cli, py::arg("args"), "Returns (exit code, stdout, stderr)");
}
