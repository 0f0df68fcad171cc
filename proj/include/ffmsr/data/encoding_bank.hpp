#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace ffmsr::data {

/// Dense row-major float block, one row per item. Used for the mixed-layer
/// encodings a client uploads and the clustered encodings it gets back.
struct EncodingMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    static EncodingMatrix zeros(std::size_t rows, std::size_t cols);

    std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    bool all_finite() const;

    friend bool operator==(const EncodingMatrix&, const EncodingMatrix&) = default;
};

/// Per-item multi-layer raw text encodings, item-major then layer-major.
/// Layer 0 is the shallowest kept layer, the last one the final encoder layer.
struct EncodingBank {
    std::size_t n_items = 0;
    std::size_t n_layers = 0;
    std::size_t dim = 0;
    std::vector<float> values;

    static EncodingBank zeros(std::size_t n_items, std::size_t n_layers, std::size_t dim);

    std::span<float> at(std::size_t item, std::size_t layer) {
        return {values.data() + (item * n_layers + layer) * dim, dim};
    }
    std::span<const float> at(std::size_t item, std::size_t layer) const {
        return {values.data() + (item * n_layers + layer) * dim, dim};
    }

    /// All items for one layer as an [n_items x dim] matrix.
    EncodingMatrix layer(std::size_t layer) const;
    /// Keep only the listed items, in the given order.
    EncodingBank select_items(std::span<const std::int32_t> items) const;

    /// Throws std::invalid_argument on size mismatch, n_layers == 0 or
    /// non-finite values.
    void validate() const;

    friend bool operator==(const EncodingBank&, const EncodingBank&) = default;
};

/// 64-bit FNV-1a over the raw little-endian bytes of the values.
std::uint64_t checksum(std::span<const float> values);

// MLSE file layout: "MLSE", u32 version (1), u32 n_items, u32 n_layers,
// u32 dim, then n_items*n_layers*dim f32, all little-endian.
inline constexpr std::uint32_t kMlseVersion = 1;

void write_mlse(std::ostream& out, const EncodingBank& bank);
EncodingBank read_mlse(std::istream& in);
void write_mlse(const std::filesystem::path& path, const EncodingBank& bank);
EncodingBank read_mlse(const std::filesystem::path& path);

}  // namespace ffmsr::data
