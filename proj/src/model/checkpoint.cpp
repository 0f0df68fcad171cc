#include "ffmsr/model/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "ffmsr/data/binary_io.hpp"

namespace ffmsr::FFMSR_PRECISION::model {

namespace {

constexpr char kMagic[4] = {'F', 'F', 'C', 'K'};
constexpr std::uint32_t kMaxString = 1u << 20;

void write_string(std::ostream& out, const std::string& s) {
    data::write_u32(out, data::checked_u32(s.size(), "string length"));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const auto n = data::read_u32(in);
    if (n > kMaxString) throw std::runtime_error("checkpoint: string field too long");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

}  // namespace

ModelConfig Checkpoint::model_config() const {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : meta) {
        if (k.rfind("model.", 0) == 0) kv[k.substr(6)] = v;
    }
    return ModelConfig::from_kv(kv);
}

Checkpoint make_checkpoint(const ClientModel& model, const std::map<std::string, std::string>& extra_meta) {
    Checkpoint c;
    c.meta = extra_meta;
    for (const auto& [k, v] : model.config().to_kv()) c.meta["model." + k] = v;
    for (const auto& p : model.parameters()) {
        const auto d = p.tensor.data();
        c.tensors.push_back({p.name, p.tensor.shape(), std::vector<float>(d.begin(), d.end())});
    }
    c.clustered = model.cluster_encodings();
    return c;
}

void load_into(ClientModel& model, const Checkpoint& ckpt) {
    const auto params = model.parameters();
    if (params.size() != ckpt.tensors.size()) {
        throw std::runtime_error("checkpoint: " + std::to_string(ckpt.tensors.size()) + " tensors for a model with " +
                                 std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& s = ckpt.tensors[i];
        if (s.name != params[i].name || s.shape != params[i].tensor.shape()) {
            throw std::runtime_error("checkpoint: expected " + params[i].name + " " +
                                     numkit::shape_to_string(params[i].tensor.shape()) + ", found " + s.name + " " +
                                     numkit::shape_to_string(s.shape));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = Tensor(params[i].tensor).mutable_data();
        std::transform(ckpt.tensors[i].values.begin(), ckpt.tensors[i].values.end(), dst.begin(),
                       [](float v) { return static_cast<Real>(v); });
    }
    if (ckpt.clustered) model.set_cluster_encodings(*ckpt.clustered);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    out.write(kMagic, 4);
    data::write_u32(out, kCheckpointVersion);
    data::write_u32(out, data::checked_u32(ckpt.meta.size(), "metadata count"));
    for (const auto& [k, v] : ckpt.meta) {
        write_string(out, k);
        write_string(out, v);
    }
    data::write_u32(out, data::checked_u32(ckpt.tensors.size(), "tensor count"));
    for (const auto& t : ckpt.tensors) {
        write_string(out, t.name);
        data::write_u32(out, data::checked_u32(t.shape.size(), "rank"));
        for (auto e : t.shape) data::write_u32(out, data::checked_u32(e, "extent"));
        data::write_f32_array(out, t.values);
    }
    data::write_u32(out, ckpt.clustered ? 1 : 0);
    if (ckpt.clustered) {
        data::write_u32(out, data::checked_u32(ckpt.clustered->rows, "rows"));
        data::write_u32(out, data::checked_u32(ckpt.clustered->cols, "cols"));
        data::write_f32_array(out, ckpt.clustered->values);
    }
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || !std::equal(magic, magic + 4, kMagic)) throw std::runtime_error("checkpoint: bad magic");
    const auto version = data::read_u32(in);
    if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    const auto n_meta = data::read_u32(in);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        auto k = read_string(in);
        c.meta[k] = read_string(in);
    }
    const auto n_tensors = data::read_u32(in);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        StoredTensor t;
        t.name = read_string(in);
        const auto rank = data::read_u32(in);
        if (rank > 8) throw std::runtime_error("checkpoint: implausible rank for " + t.name);
        for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(data::read_u32(in));
        t.values.resize(numkit::shape_numel(t.shape));
        data::read_f32_array(in, t.values);
        c.tensors.push_back(std::move(t));
    }
    if (data::read_u32(in) == 1) {
        const auto rows = data::read_u32(in);
        const auto cols = data::read_u32(in);
        auto m = data::EncodingMatrix::zeros(rows, cols);
        data::read_f32_array(in, m.values);
        c.clustered = std::move(m);
    }
    return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    write_checkpoint(out, ckpt);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    return read_checkpoint(in);
}

std::vector<std::vector<Real>> snapshot(const ClientModel& model) {
    std::vector<std::vector<Real>> out;
    for (const auto& p : model.parameters()) {
        const auto d = p.tensor.data();
        out.emplace_back(d.begin(), d.end());
    }
    return out;
}

void restore(const ClientModel& model, const std::vector<std::vector<Real>>& values) {
    const auto params = model.parameters();
    if (params.size() != values.size()) throw std::invalid_argument("restore: snapshot does not match model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto dst = Tensor(params[i].tensor).mutable_data();
        if (dst.size() != values[i].size()) throw std::invalid_argument("restore: size mismatch for " + params[i].name);
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

}  // namespace ffmsr::FFMSR_PRECISION::model
