#pragma once

#include <cstdint>
#include <string>

#include "flat/crypto/ops.hpp"
#include "flat/protocol.hpp"

namespace flat::harness {

struct RoleMetrics {
    uint64_t tx_bytes = 0;
    uint64_t rx_bytes = 0;
    uint64_t tx_msgs = 0;
    uint64_t rx_msgs = 0;
    crypto::OpCounts ops;
    uint64_t cpu_ns = 0;  // CPU time inside protocol+crypto calls, not transport waits

    RoleMetrics& operator+=(const RoleMetrics& r) {
        tx_bytes += r.tx_bytes;
        rx_bytes += r.rx_bytes;
        tx_msgs += r.tx_msgs;
        rx_msgs += r.rx_msgs;
        ops += r.ops;
        cpu_ns += r.cpu_ns;
        return *this;
    }
};

enum class Outcome : uint8_t { Granted, Denied, Aborted };

inline const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Granted: return "granted";
        case Outcome::Denied: return "denied";
        case Outcome::Aborted: return "aborted";
    }
    return "?";
}

/// Everything one protocol run leaves behind.
struct RunMetrics {
    RoleMetrics client, sp, idp;
    Outcome outcome = Outcome::Aborted;
    protocol::AbortReason abort_reason = protocol::AbortReason::None;
    uint32_t restarts = 0;
    uint64_t wall_time_us = 0;

    // attack observations (meaningful only in attack scenarios)
    bool attack_denied = false;                       // replayed attempt answered with denial
    std::string attack_abort_role;                    // first role that aborted
    protocol::AbortReason attack_abort_reason = protocol::AbortReason::None;

    uint64_t total_bytes() const {
        return client.tx_bytes + client.rx_bytes + sp.tx_bytes + sp.rx_bytes + idp.tx_bytes +
               idp.rx_bytes;
    }
};

}  // namespace flat::harness
