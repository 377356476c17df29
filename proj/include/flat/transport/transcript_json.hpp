#pragma once

#include <json.hpp>

#include "flat/transport/mem.hpp"

namespace flat::transport {

/// Wire-level transcript as a JSON array of {time, src, dst, hex frame}.
inline nlohmann::json transcript_to_json(const std::vector<TranscriptEntry>& transcript) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : transcript) {
        arr.push_back({{"time", e.time_ms},
                       {"src", e.src.value},
                       {"dst", e.dst.value},
                       {"frame", to_hex(e.frame)},
                       {"injected", e.injected}});
    }
    return arr;
}

}  // namespace flat::transport
