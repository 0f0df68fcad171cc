#include "ffmsr/data/encoding_bank.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ffmsr/data/binary_io.hpp"

namespace ffmsr::data {

EncodingMatrix EncodingMatrix::zeros(std::size_t rows, std::size_t cols) {
    return EncodingMatrix{rows, cols, std::vector<float>(rows * cols, 0.0F)};
}

bool EncodingMatrix::all_finite() const {
    for (float v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

EncodingBank EncodingBank::zeros(std::size_t n_items, std::size_t n_layers, std::size_t dim) {
    return EncodingBank{n_items, n_layers, dim, std::vector<float>(n_items * n_layers * dim, 0.0F)};
}

EncodingMatrix EncodingBank::layer(std::size_t layer) const {
    if (layer >= n_layers) throw std::out_of_range("encoding bank: layer " + std::to_string(layer) + " out of range");
    auto out = EncodingMatrix::zeros(n_items, dim);
    for (std::size_t i = 0; i < n_items; ++i) {
        const auto src = at(i, layer);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

EncodingBank EncodingBank::select_items(std::span<const std::int32_t> items) const {
    auto out = zeros(items.size(), n_layers, dim);
    const std::size_t stride = n_layers * dim;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto src = static_cast<std::size_t>(items[i]);
        if (items[i] < 0 || src >= n_items) throw std::out_of_range("encoding bank: item index out of range");
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(src * stride), stride,
                    out.values.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

void EncodingBank::validate() const {
    if (n_layers == 0) throw std::invalid_argument("encoding bank: at least one layer is required");
    if (values.size() != n_items * n_layers * dim) {
        throw std::invalid_argument("encoding bank: header says " + std::to_string(n_items * n_layers * dim) +
                                    " values, found " + std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw std::invalid_argument("encoding bank: non-finite value for item " +
                                        std::to_string(i / (n_layers * dim)));
        }
    }
}

std::uint64_t checksum(std::span<const float> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (float v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int b = 0; b < 4; ++b) {
            h ^= (bits >> (8 * b)) & 0xFFU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void write_mlse(std::ostream& out, const EncodingBank& bank) {
    bank.validate();
    out.write("MLSE", 4);
    write_u32(out, kMlseVersion);
    write_u32(out, checked_u32(bank.n_items, "n_items"));
    write_u32(out, checked_u32(bank.n_layers, "n_layers"));
    write_u32(out, checked_u32(bank.dim, "dim"));
    write_f32_array(out, bank.values);
    if (!out) throw std::runtime_error("mlse: write failed");
}

EncodingBank read_mlse(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string(magic.data(), 4) != "MLSE") throw std::runtime_error("mlse: bad magic bytes");
    const auto version = read_u32(in);
    if (version != kMlseVersion) throw std::runtime_error("mlse: unsupported version " + std::to_string(version));
    EncodingBank bank;
    bank.n_items = read_u32(in);
    bank.n_layers = read_u32(in);
    bank.dim = read_u32(in);
    bank.values.resize(bank.n_items * bank.n_layers * bank.dim);
    read_f32_array(in, bank.values);
    bank.validate();
    return bank;
}

void write_mlse(const std::filesystem::path& path, const EncodingBank& bank) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("mlse: cannot open " + path.string() + " for writing");
    write_mlse(out, bank);
}

EncodingBank read_mlse(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("mlse: cannot open " + path.string());
    return read_mlse(in);
}

}  // namespace ffmsr::data
