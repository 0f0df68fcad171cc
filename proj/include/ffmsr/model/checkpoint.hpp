#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ffmsr/model/client_model.hpp"

// Checkpoint layout, little-endian throughout:
//   "FFCK", u32 version (1)
//   u32 n_meta, then per entry: u32 key length, key bytes, u32 value length, value bytes
//   u32 n_tensors, then per tensor: u32 name length, name, u32 rank, rank x u32 dims, f32 values
//   u32 has_clustered, then if 1: u32 rows, u32 cols, f32 values
// Model hyperparameters are stored in the metadata under "model.<key>".

namespace ffmsr::FFMSR_PRECISION::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
    std::string name;
    numkit::Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<StoredTensor> tensors;
    std::optional<data::EncodingMatrix> clustered;

    ModelConfig model_config() const;
};

Checkpoint make_checkpoint(const ClientModel& model, const std::map<std::string, std::string>& extra_meta = {});
/// Copies the stored values into the model. Names and shapes must match.
void load_into(ClientModel& model, const Checkpoint& ckpt);

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// In-memory copy of every parameter value.
std::vector<std::vector<Real>> snapshot(const ClientModel& model);
void restore(const ClientModel& model, const std::vector<std::vector<Real>>& values);

}  // namespace ffmsr::FFMSR_PRECISION::model
