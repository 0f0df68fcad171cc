#include "ffmsr/cluster/protocol.hpp"

#include <ostream>

#include <json.hpp>

namespace ffmsr::protocol {

std::string_view kind_name(MessageKind kind) { return kind == MessageKind::Upload ? "upload" : "download"; }

TranscriptRecord describe(const FederatedMessage& message) {
    return {message.round, message.kind, message.client_id, message.payload.rows, message.payload.cols,
            data::checksum(message.payload.values)};
}

void Transcript::record(const FederatedMessage& message) {
    const auto rec = describe(message);
    std::lock_guard lock(mutex_);
    records_.push_back(rec);
}

std::vector<TranscriptRecord> Transcript::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t Transcript::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

void Transcript::write_jsonl(std::ostream& out) const {
    for (const auto& r : records()) {
        nlohmann::json j{{"round", r.round},
                         {"kind", kind_name(r.kind)},
                         {"client", r.client_id},
                         {"rows", r.rows},
                         {"cols", r.cols},
                         {"checksum", r.checksum}};
        out << j.dump() << '\n';
    }
}

}  // namespace ffmsr::protocol
