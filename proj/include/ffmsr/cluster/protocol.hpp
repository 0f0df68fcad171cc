#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <string_view>
#include <vector>

#include "ffmsr/cluster/kmeans.hpp"
#include "ffmsr/data/encoding_bank.hpp"

namespace ffmsr::protocol {

using cluster::ClientId;

enum class MessageKind : std::uint8_t { Upload, Download };

std::string_view kind_name(MessageKind kind);

/// The only thing that crosses the client/server boundary. The payload is a
/// matrix of item encodings; nothing else rides along.
struct FederatedMessage {
    MessageKind kind = MessageKind::Upload;
    std::uint32_t round = 0;
    ClientId client_id = 0;
    data::EncodingMatrix payload;
};

struct TranscriptRecord {
    std::uint32_t round = 0;
    MessageKind kind = MessageKind::Upload;
    ClientId client_id = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::uint64_t checksum = 0;

    friend bool operator==(const TranscriptRecord&, const TranscriptRecord&) = default;
};

TranscriptRecord describe(const FederatedMessage& message);

/// Append-only, thread-safe log of every message exchanged.
class Transcript {
public:
    void record(const FederatedMessage& message);
    std::vector<TranscriptRecord> records() const;
    std::size_t size() const;
    void write_jsonl(std::ostream& out) const;

private:
    mutable std::mutex mutex_;
    std::vector<TranscriptRecord> records_;
};

}  // namespace ffmsr::protocol
