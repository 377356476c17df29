#pragma once

#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "flat/bytes.hpp"
#include "flat/wire.hpp"

namespace flat::transport {

using wire::EntityId;

/// One frame as seen on the simulated wire.
struct TranscriptEntry {
    uint64_t time_ms = 0;
    EntityId src;
    EntityId dst;
    Bytes frame;
    bool injected = false;  // re-delivered or fabricated by the interceptor
};

/// What the interceptor decided for one observed frame.
/// Interceptors see frames only — no role state or key material is reachable
/// through this interface, which is the whole isolation argument.
struct InterceptorAction {
    enum class Kind : uint8_t { Deliver, Drop, Duplicate, Replay, Tamper, Inject };

    Kind kind = Kind::Deliver;
    uint32_t count = 1;        // Duplicate: extra copies
    size_t replay_index = 0;   // Replay: transcript index to re-deliver
    size_t offset = 0;         // Tamper: byte offset
    uint8_t xor_mask = 0;      // Tamper: flipped bits
    Bytes inject_frame;        // Inject: raw bytes
    EntityId inject_dst;       // Inject: destination

    static InterceptorAction deliver() { return {}; }
    static InterceptorAction drop() {
        InterceptorAction a;
        a.kind = Kind::Drop;
        return a;
    }
    static InterceptorAction duplicate(uint32_t extra) {
        InterceptorAction a;
        a.kind = Kind::Duplicate;
        a.count = extra;
        return a;
    }
    static InterceptorAction replay(size_t transcript_index) {
        InterceptorAction a;
        a.kind = Kind::Replay;
        a.replay_index = transcript_index;
        return a;
    }
    static InterceptorAction tamper(size_t offset, uint8_t xor_mask) {
        InterceptorAction a;
        a.kind = Kind::Tamper;
        a.offset = offset;
        a.xor_mask = xor_mask;
        return a;
    }
    static InterceptorAction inject(EntityId dst, Bytes frame) {
        InterceptorAction a;
        a.kind = Kind::Inject;
        a.inject_dst = dst;
        a.inject_frame = std::move(frame);
        return a;
    }
};

class Interceptor {
public:
    virtual ~Interceptor() = default;
    /// Called once per originated frame, after it is recorded. `index` is the
    /// frame's transcript position. Replay indices must reference previously
    /// recorded frames.
    virtual std::vector<InterceptorAction> on_frame(const TranscriptEntry& entry,
                                                    size_t index) = 0;
};

class PassThrough final : public Interceptor {
public:
    std::vector<InterceptorAction> on_frame(const TranscriptEntry&, size_t) override {
        return {InterceptorAction::deliver()};
    }
};

/// Deterministic in-memory datagram network with a simulated clock.
/// Single logical event loop: no wall-clock waits anywhere.
class MemNetwork {
public:
    struct Delivery {
        uint64_t deliver_at_ms = 0;
        uint64_t id = 0;  // tiebreaker: send order
        EntityId src, dst;
        Bytes frame;
    };

    static constexpr uint64_t kLatencyMs = 1;
    static constexpr uint64_t kStartMs = 1'750'000'000'000;  // fixed simulated epoch

    explicit MemNetwork(Interceptor* interceptor = nullptr) : interceptor_(interceptor) {
        now_ms_ = kStartMs;
    }

    void register_endpoint(EntityId id) {
        if (queues_.contains(id.value))
            throw std::invalid_argument("endpoint id registered twice");
        queues_[id.value];
    }

    void send(EntityId from, EntityId to, Bytes frame) {
        if (!queues_.contains(to.value) || !queues_.contains(from.value))
            throw std::invalid_argument("send between unregistered endpoints");
        TranscriptEntry entry{now_ms_, from, to, frame, false};
        transcript_.push_back(entry);
        size_t index = transcript_.size() - 1;
        std::vector<InterceptorAction> actions =
            interceptor_ ? interceptor_->on_frame(entry, index)
                         : std::vector<InterceptorAction>{InterceptorAction::deliver()};
        for (const auto& action : actions) apply(entry, action);
    }

    /// Next frame for `at`, or std::nullopt after advancing the simulated
    /// clock by `timeout_ms`. A queued frame is returned regardless of the
    /// timeout value.
    std::optional<Bytes> poll(EntityId at, uint64_t timeout_ms) {
        auto& q = queues_.at(at.value);
        if (q.empty()) {
            now_ms_ += timeout_ms;
            return std::nullopt;
        }
        Delivery d = q.front();
        q.pop_front();
        now_ms_ = std::max(now_ms_, d.deliver_at_ms);
        return std::move(d.frame);
    }

    /// Globally earliest pending delivery (run-loop form of poll).
    std::optional<Delivery> step() {
        const Delivery* best = nullptr;
        uint32_t best_key = 0;
        for (auto& [key, q] : queues_) {
            if (q.empty()) continue;
            if (!best || q.front().deliver_at_ms < best->deliver_at_ms ||
                (q.front().deliver_at_ms == best->deliver_at_ms && q.front().id < best->id)) {
                best = &q.front();
                best_key = key;
            }
        }
        if (!best) return std::nullopt;
        Delivery d = *best;
        queues_.at(best_key).pop_front();
        now_ms_ = std::max(now_ms_, d.deliver_at_ms);
        return d;
    }

    bool idle() const {
        for (const auto& [key, q] : queues_) {
            if (!q.empty()) return false;
        }
        return true;
    }

    uint64_t now_ms() const { return now_ms_; }
    void advance(uint64_t ms) { now_ms_ += ms; }
    const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

private:
    void apply(const TranscriptEntry& origin, const InterceptorAction& action) {
        using Kind = InterceptorAction::Kind;
        switch (action.kind) {
            case Kind::Deliver:
                enqueue(origin.src, origin.dst, origin.frame, false);
                break;
            case Kind::Drop:
                break;
            case Kind::Duplicate:
                enqueue(origin.src, origin.dst, origin.frame, false);
                for (uint32_t i = 0; i < action.count; ++i)
                    enqueue(origin.src, origin.dst, origin.frame, true);
                break;
            case Kind::Replay: {
                // injects only the recorded copy; combine with Deliver to keep
                // the triggering frame flowing
                if (action.replay_index >= transcript_.size())
                    throw std::out_of_range("replay index beyond transcript");
                const TranscriptEntry& old = transcript_[action.replay_index];
                enqueue(old.src, old.dst, old.frame, true);
                break;
            }
            case Kind::Tamper: {
                Bytes mutated = origin.frame;
                if (action.offset < mutated.size()) mutated[action.offset] ^= action.xor_mask;
                enqueue(origin.src, origin.dst, std::move(mutated), true);
                break;
            }
            case Kind::Inject:
                enqueue(origin.src, action.inject_dst, action.inject_frame, true);
                break;
        }
    }

    void enqueue(EntityId src, EntityId dst, Bytes frame, bool injected) {
        Delivery d;
        d.deliver_at_ms = now_ms_ + kLatencyMs;
        d.id = next_id_++;
        d.src = src;
        d.dst = dst;
        d.frame = std::move(frame);
        if (injected) {
            TranscriptEntry e{now_ms_, src, dst, d.frame, true};
            transcript_.push_back(e);
        }
        queues_.at(dst.value).push_back(std::move(d));
    }

    std::map<uint32_t, std::deque<Delivery>> queues_;
    std::vector<TranscriptEntry> transcript_;
    Interceptor* interceptor_;
    uint64_t now_ms_ = 0;
    uint64_t next_id_ = 0;
};

}  // namespace flat::transport
