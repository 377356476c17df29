#pragma once

#include <time.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <thread>

#include "flat/baseline.hpp"
#include "flat/harness/material.hpp"
#include "flat/harness/metrics.hpp"
#include "flat/protocol.hpp"
#include "flat/transport/mem.hpp"
#include "flat/transport/udp.hpp"

namespace flat::harness {

enum class ProtocolKind : uint8_t { Flat, Baseline };
enum class TransportKind : uint8_t { Mem, Udp };
enum class AttackKind : uint8_t { None, Replay, Tamper, FakeSp, Drop };

inline const char* protocol_name(ProtocolKind p) {
    return p == ProtocolKind::Flat ? "flat" : "baseline";
}
inline const char* transport_name(TransportKind t) { return t == TransportKind::Mem ? "mem" : "udp"; }
inline const char* attack_name(AttackKind a) {
    switch (a) {
        case AttackKind::None: return "none";
        case AttackKind::Replay: return "replay";
        case AttackKind::Tamper: return "tamper";
        case AttackKind::FakeSp: return "fake-sp";
        case AttackKind::Drop: return "drop";
    }
    return "?";
}

struct ScenarioConfig {
    ProtocolKind protocol = ProtocolKind::Flat;
    TransportKind transport = TransportKind::Mem;
    AttackKind attack = AttackKind::None;
    uint64_t seed = 42;
    uint32_t runs = 100;

    // attack parameters (tamper and drop address the Nth originated frame)
    uint32_t target_frame = 0;
    size_t tamper_offset = wire::kHeaderSize;  // first payload byte
    uint8_t tamper_mask = 0x01;

    // transport knobs; defaults mirror the documented timeout policy
    uint64_t await_timeout_ms = 500;
    uint32_t max_restarts = 3;
};

struct ScenarioResult {
    std::vector<RunMetrics> runs;
    std::vector<transport::TranscriptEntry> last_transcript;
};

// ---------------------------------------------------------------------------
// Scripted interceptors
// ---------------------------------------------------------------------------

namespace detail {

inline uint8_t frame_type(const Bytes& frame) { return frame.empty() ? 0 : frame[0]; }

/// Re-delivers the recorded service request right after the service response
/// passes by; the service side must refuse the second attempt.
class ReplayInterceptor final : public transport::Interceptor {
public:
    ReplayInterceptor(uint8_t request_type, uint8_t response_type)
        : request_type_(request_type), response_type_(response_type) {}

    std::vector<transport::InterceptorAction> on_frame(const transport::TranscriptEntry& e,
                                                       size_t index) override {
        using A = transport::InterceptorAction;
        if (e.injected) return {A::deliver()};
        uint8_t t = frame_type(e.frame);
        if (t == request_type_ && !request_index_) request_index_ = index;
        if (t == response_type_ && request_index_ && !done_) {
            done_ = true;
            return {A::deliver(), A::replay(*request_index_)};
        }
        return {A::deliver()};
    }

private:
    uint8_t request_type_, response_type_;
    std::optional<size_t> request_index_;
    bool done_ = false;
};

/// Flips bits in the Nth originated frame.
class TamperInterceptor final : public transport::Interceptor {
public:
    TamperInterceptor(uint32_t target, size_t offset, uint8_t mask)
        : target_(target), offset_(offset), mask_(mask) {}

    std::vector<transport::InterceptorAction> on_frame(const transport::TranscriptEntry& e,
                                                       size_t) override {
        using A = transport::InterceptorAction;
        if (e.injected) return {A::deliver()};
        if (seen_++ == target_) return {A::tamper(offset_, mask_)};
        return {A::deliver()};
    }

private:
    uint32_t target_;
    size_t offset_;
    uint8_t mask_;
    uint32_t seen_ = 0;
};

/// Swallows the Nth originated frame once; the sender side must recover or
/// abort through its timeout path.
class DropInterceptor final : public transport::Interceptor {
public:
    explicit DropInterceptor(uint32_t target) : target_(target) {}

    std::vector<transport::InterceptorAction> on_frame(const transport::TranscriptEntry& e,
                                                       size_t) override {
        using A = transport::InterceptorAction;
        if (e.injected) return {A::deliver()};
        if (seen_++ == target_) return {A::drop()};
        return {A::deliver()};
    }

private:
    uint32_t target_;
    uint32_t seen_ = 0;
};

// Crypto/freshness verdicts worth surfacing as the attack observation;
// routing noise (drops of unexpected types, timeouts) is not.
inline bool security_verdict(protocol::AbortReason r) {
    using R = protocol::AbortReason;
    switch (r) {
        case R::MacFailure:
        case R::DecryptFailure:
        case R::BadSignature:
        case R::CertInvalid:
        case R::NonceMismatch:
        case R::Malformed:
        case R::Replay:
        case R::AssertionExpired:
        case R::AssertionConsumed:
        case R::AssertionMismatch:
        case R::BadCredential:
        case R::Denied:
            return true;
        default:
            return false;
    }
}

// Per-role compute cost is clocked around each protocol handler invocation;
// transport waits sit outside the timed region by construction. A monotonic
// clock is used because thread-cputime advances in scheduler-tick jumps on
// some kernels, far too coarse for the microsecond-scale symmetric path.
inline uint64_t thread_cpu_ns() {
    timespec ts{};
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return static_cast<uint64_t>(ts.tv_sec) * 1'000'000'000ull +
           static_cast<uint64_t>(ts.tv_nsec);
}

/// Uniform facade over the two protocol stacks so one loop drives both.
struct RoleSet {
    std::function<Result<wire::Message, protocol::AbortReason>(protocol::Env&, EntityId)>
        client_start;
    std::function<protocol::StepResult(protocol::Env&, const wire::Message&)> client_on;
    std::function<protocol::StepResult(protocol::Env&, const wire::Message&)> sp_on;
    std::function<protocol::StepResult(protocol::Env&, const wire::Message&)> idp_on;
    std::function<void()> client_timeout;
    std::function<bool()> client_done;
    std::function<bool()> client_granted;
    std::function<protocol::AbortReason()> client_abort_reason;
    std::function<uint64_t()> sp_replay_denials;
};

/// Answers the certificate challenge with a certificate the CA never issued,
/// signed with a key the adversary actually holds. Extraction at the IdP then
/// yields a key that cannot verify the signature.
inline protocol::StepResult fake_sp_respond(protocol::Env& env, const wire::Message& m,
                                            const Material& mat) {
    using namespace protocol;
    if (m.msg_type != wire::MessageType::CertificateChallenge) return StepResult::quiet();
    auto kp = crypto::gen_keypair(env.rng);
    pki::ImplicitCertificate fake;
    fake.identity = detail::identity(kSpId, pki::Role::ServiceProvider, 0xFFFF);
    fake.reconstruction_point = crypto::default_curve().compress(kp.q);
    crypto::Nonce n_sp = crypto::gen_nonce(env.rng);
    (void)mat;
    Bytes payload = fake.serialize();
    append(payload, n_sp.bytes);
    Bytes covered(m.payload.end() - crypto::kNonceSize, m.payload.end());
    append(covered, n_sp.bytes);
    append(covered, fake.serialize());
    append(payload, crypto::ecdsa_sign(kp.d, covered).serialize());
    return StepResult::send(protocol::detail::make_msg(wire::MessageType::CertificateResponse, 0,
                                                       EntityId(kSpId), m.src,
                                                       std::move(payload)));
}

/// Baseline fake SP: redirect carrying a fabricated explicit certificate.
inline protocol::StepResult baseline_fake_sp_respond(protocol::Env& env, const wire::Message& m) {
    using namespace protocol;
    if (m.msg_type != wire::MessageType::BaselineServiceInit) return StepResult::quiet();
    auto kp = crypto::gen_keypair_even_y(env.rng);
    pki::ExplicitCertificate fake;
    fake.identity = detail::identity(kSpId, pki::Role::ServiceProvider, 0xFFFE);
    fake.public_key_x = crypto::U256::to_be_bytes(kp.q.x);
    env.rng.fill(fake.ca_signature.data(), fake.ca_signature.size());
    fake.ca_signature[0] = 0x02;
    Bytes payload = fake.serialize();
    append(payload, m.payload);
    return StepResult::send(protocol::detail::make_msg(wire::MessageType::BaselineRedirect, 0,
                                                       EntityId(kSpId), m.src,
                                                       std::move(payload)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterministic in-memory runner
// ---------------------------------------------------------------------------

namespace detail {

struct FlatRoles {
    protocol::Client client;
    protocol::ServiceProvider sp;
    protocol::IdentityProvider idp;

    explicit FlatRoles(const Material& m)
        : client(flat_client_config(m)), sp(flat_sp_config(m)), idp(flat_idp_config(m)) {}
};

struct BaselineRoles {
    baseline::Client client;
    baseline::ServiceProvider sp;
    baseline::IdentityProvider idp;

    explicit BaselineRoles(const Material& m)
        : client(baseline_client_config(m)),
          sp(baseline_sp_config(m)),
          idp(baseline_idp_config(m)) {}
};

template <typename Roles>
RoleSet bind_roles(Roles& r, const ScenarioConfig& cfg, const Material& mat) {
    RoleSet rs;
    rs.client_start = [&r](protocol::Env& env, EntityId sp) { return r.client.start(env, sp); };
    rs.client_on = [&r](protocol::Env& env, const wire::Message& m) {
        return r.client.on_message(env, m);
    };
    if (cfg.attack == AttackKind::FakeSp) {
        if constexpr (std::is_same_v<Roles, FlatRoles>) {
            rs.sp_on = [&mat](protocol::Env& env, const wire::Message& m) {
                return fake_sp_respond(env, m, mat);
            };
        } else {
            rs.sp_on = [](protocol::Env& env, const wire::Message& m) {
                return baseline_fake_sp_respond(env, m);
            };
        }
    } else {
        rs.sp_on = [&r](protocol::Env& env, const wire::Message& m) {
            return r.sp.on_message(env, m);
        };
    }
    rs.idp_on = [&r](protocol::Env& env, const wire::Message& m) {
        return r.idp.on_message(env, m);
    };
    rs.client_timeout = [&r] { r.client.on_timeout(); };
    if constexpr (std::is_same_v<Roles, FlatRoles>) {
        rs.client_done = [&r] {
            return r.client.phase() == protocol::ClientPhase::Done ||
                   r.client.phase() == protocol::ClientPhase::Aborted;
        };
    } else {
        rs.client_done = [&r] {
            return r.client.phase() == baseline::ClientPhase::Done ||
                   r.client.phase() == baseline::ClientPhase::Aborted;
        };
    }
    rs.client_granted = [&r] { return r.client.granted(); };
    rs.client_abort_reason = [&r] { return r.client.abort_reason(); };
    rs.sp_replay_denials = [&r]() -> uint64_t {
        if constexpr (std::is_same_v<Roles, FlatRoles>) return r.sp.replay_denials();
        else return 0;
    };
    return rs;
}

inline std::unique_ptr<transport::Interceptor> make_interceptor(const ScenarioConfig& cfg) {
    switch (cfg.attack) {
        case AttackKind::Replay: {
            uint8_t req = cfg.protocol == ProtocolKind::Flat
                              ? static_cast<uint8_t>(wire::MessageType::ServiceRequest)
                              : static_cast<uint8_t>(wire::MessageType::BaselineServiceRequest);
            uint8_t resp = cfg.protocol == ProtocolKind::Flat
                               ? static_cast<uint8_t>(wire::MessageType::Service)
                               : static_cast<uint8_t>(wire::MessageType::BaselineServiceGrant);
            return std::make_unique<ReplayInterceptor>(req, resp);
        }
        case AttackKind::Tamper:
            return std::make_unique<TamperInterceptor>(cfg.target_frame, cfg.tamper_offset,
                                                       cfg.tamper_mask);
        case AttackKind::Drop:
            return std::make_unique<DropInterceptor>(cfg.target_frame);
        default:
            return nullptr;
    }
}

template <typename Roles>
RunMetrics run_one_mem(const ScenarioConfig& cfg, const Material& mat, uint64_t run_seed,
                       std::vector<transport::TranscriptEntry>* transcript_out) {
    crypto::DeterministicRng rng(run_seed);
    auto interceptor = make_interceptor(cfg);
    transport::MemNetwork net(interceptor.get());
    net.register_endpoint(EntityId(kClientId));
    net.register_endpoint(EntityId(kSpId));
    net.register_endpoint(EntityId(kIdpId));

    Roles roles(mat);
    RoleSet rs = bind_roles(roles, cfg, mat);
    RunMetrics rm;
    protocol::Env env{rng, net.now_ms() / 1000};

    auto role_metrics = [&rm](uint32_t id) -> RoleMetrics& {
        if (id == kClientId) return rm.client;
        if (id == kSpId) return rm.sp;
        return rm.idp;
    };
    auto role_label = [](uint32_t id) -> const char* {
        if (id == kClientId) return "client";
        if (id == kSpId) return "sp";
        return "idp";
    };

    auto note_issue = [&](uint32_t role_id, const std::optional<protocol::ProtocolIssue>& issue) {
        if (!issue || !security_verdict(issue->reason)) return;
        if (rm.attack_abort_role.empty()) {
            rm.attack_abort_role = role_label(role_id);
            rm.attack_abort_reason = issue->reason;
        }
    };

    auto send_all = [&](uint32_t from, const std::vector<wire::Message>& msgs) {
        for (const auto& m : msgs) {
            auto encoded = wire::encode_message(m);
            role_metrics(from).tx_bytes += encoded->size();
            role_metrics(from).tx_msgs++;
            net.send(EntityId(from), m.dst, *encoded);
        }
    };

    auto start_client = [&]() -> bool {
        uint64_t cpu0 = thread_cpu_ns();
        crypto::OpCounts ops0 = crypto::op_counts();
        auto first = rs.client_start(env, EntityId(kSpId));
        rm.client.cpu_ns += thread_cpu_ns() - cpu0;
        rm.client.ops += crypto::op_counts() - ops0;
        if (!first) return false;
        send_all(kClientId, {*first});
        return true;
    };

    const bool allow_restarts = cfg.attack == AttackKind::None || cfg.attack == AttackKind::Drop;
    auto wall0 = std::chrono::steady_clock::now();
    if (!start_client()) return rm;

    for (;;) {
        env.now_s = net.now_ms() / 1000;
        auto delivery = net.step();
        if (!delivery) {
            if (rs.client_done()) break;
            net.advance(cfg.await_timeout_ms);
            if (!allow_restarts || rm.restarts >= cfg.max_restarts) {
                rs.client_timeout();
                break;
            }
            rm.restarts++;
            rs.client_timeout();
            env.now_s = net.now_ms() / 1000;
            if (!start_client()) break;
            continue;
        }

        uint32_t dst = delivery->dst.value;
        role_metrics(dst).rx_bytes += delivery->frame.size();
        role_metrics(dst).rx_msgs++;
        auto decoded = wire::decode_message(delivery->frame);
        if (!decoded) continue;  // malformed frames are counted, then dropped

        uint64_t cpu0 = thread_cpu_ns();
        crypto::OpCounts ops0 = crypto::op_counts();
        protocol::StepResult r;
        if (dst == kClientId) r = rs.client_on(env, decoded->message);
        else if (dst == kSpId) r = rs.sp_on(env, decoded->message);
        else r = rs.idp_on(env, decoded->message);
        role_metrics(dst).cpu_ns += thread_cpu_ns() - cpu0;
        role_metrics(dst).ops += crypto::op_counts() - ops0;
        note_issue(dst, r.issue);
        send_all(dst, r.out);
    }

    rm.wall_time_us = static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                                std::chrono::steady_clock::now() - wall0)
                                                .count());
    if (rs.client_done() && rs.client_granted()) {
        rm.outcome = Outcome::Granted;
    } else if (rs.client_done() && rs.client_abort_reason() == protocol::AbortReason::None) {
        rm.outcome = Outcome::Denied;
        rm.abort_reason = protocol::AbortReason::Denied;
    } else {
        rm.outcome = Outcome::Aborted;
        rm.abort_reason = rs.client_abort_reason();
    }
    if (rs.sp_replay_denials() > 0) rm.attack_denied = true;
    if (transcript_out) *transcript_out = net.transcript();
    return rm;
}

// ---------------------------------------------------------------------------
// Loopback UDP runner: one thread per role, one datagram per message.
// ---------------------------------------------------------------------------

template <typename Roles>
RunMetrics run_one_udp(const ScenarioConfig& cfg, const Material& mat, uint64_t run_seed) {
    Roles roles(mat);
    RoleSet rs = bind_roles(roles, cfg, mat);
    RunMetrics rm;

    transport::UdpEndpoint ep_client(EntityId(kClientId), "127.0.0.1");
    transport::UdpEndpoint ep_sp(EntityId(kSpId), "127.0.0.1");
    transport::UdpEndpoint ep_idp(EntityId(kIdpId), "127.0.0.1");
    std::map<uint32_t, uint16_t> port_of{{kClientId, ep_client.port()},
                                         {kSpId, ep_sp.port()},
                                         {kIdpId, ep_idp.port()}};

    std::atomic<bool> stop{false};
    auto now_s = [] {
        return static_cast<uint64_t>(
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count());
    };

    auto server_loop = [&](transport::UdpEndpoint& ep, RoleMetrics& metrics, auto&& handler,
                           uint64_t rng_salt) {
        crypto::DeterministicRng rng(run_seed ^ rng_salt);
        protocol::Env env{rng, now_s()};
        while (!stop.load(std::memory_order_relaxed)) {
            auto frame = ep.recv(20);
            if (!frame) continue;
            metrics.rx_bytes += frame->size();
            metrics.rx_msgs++;
            auto decoded = wire::decode_message(*frame);
            if (!decoded) continue;
            env.now_s = now_s();
            uint64_t cpu0 = thread_cpu_ns();
            crypto::OpCounts ops0 = crypto::op_counts();
            protocol::StepResult r = handler(env, decoded->message);
            metrics.cpu_ns += thread_cpu_ns() - cpu0;
            metrics.ops += crypto::op_counts() - ops0;
            for (const auto& m : r.out) {
                auto encoded = wire::encode_message(m);
                metrics.tx_bytes += encoded->size();
                metrics.tx_msgs++;
                ep.send_to("127.0.0.1", port_of.at(m.dst.value), *encoded);
            }
        }
    };

    std::thread sp_thread(
        [&] { server_loop(ep_sp, rm.sp, [&](auto& env, auto& m) { return rs.sp_on(env, m); },
                          0x5500); });
    std::thread idp_thread(
        [&] { server_loop(ep_idp, rm.idp, [&](auto& env, auto& m) { return rs.idp_on(env, m); },
                          0x1D00); });

    auto wall0 = std::chrono::steady_clock::now();
    {
        crypto::DeterministicRng rng(run_seed ^ 0xC100);
        protocol::Env env{rng, now_s()};
        auto send_from_client = [&](const wire::Message& m) {
            auto encoded = wire::encode_message(m);
            rm.client.tx_bytes += encoded->size();
            rm.client.tx_msgs++;
            ep_client.send_to("127.0.0.1", port_of.at(m.dst.value), *encoded);
        };
        auto start_client = [&]() -> bool {
            env.now_s = now_s();
            uint64_t cpu0 = thread_cpu_ns();
            crypto::OpCounts ops0 = crypto::op_counts();
            auto first = rs.client_start(env, EntityId(kSpId));
            rm.client.cpu_ns += thread_cpu_ns() - cpu0;
            rm.client.ops += crypto::op_counts() - ops0;
            if (!first) return false;
            send_from_client(*first);
            return true;
        };
        if (start_client()) {
            while (!rs.client_done()) {
                auto frame = ep_client.recv(static_cast<int>(cfg.await_timeout_ms));
                if (!frame) {
                    rs.client_timeout();
                    if (rm.restarts >= cfg.max_restarts) break;
                    rm.restarts++;
                    if (!start_client()) break;
                    continue;
                }
                rm.client.rx_bytes += frame->size();
                rm.client.rx_msgs++;
                auto decoded = wire::decode_message(*frame);
                if (!decoded) continue;
                env.now_s = now_s();
                uint64_t cpu0 = thread_cpu_ns();
                crypto::OpCounts ops0 = crypto::op_counts();
                protocol::StepResult r = rs.client_on(env, decoded->message);
                rm.client.cpu_ns += thread_cpu_ns() - cpu0;
                rm.client.ops += crypto::op_counts() - ops0;
                for (const auto& m : r.out) send_from_client(m);
            }
        }
    }
    rm.wall_time_us = static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                                std::chrono::steady_clock::now() - wall0)
                                                .count());
    stop.store(true, std::memory_order_relaxed);
    sp_thread.join();
    idp_thread.join();

    if (rs.client_done() && rs.client_granted()) {
        rm.outcome = Outcome::Granted;
    } else if (rs.client_done() && rs.client_abort_reason() == protocol::AbortReason::None) {
        rm.outcome = Outcome::Denied;
        rm.abort_reason = protocol::AbortReason::Denied;
    } else {
        rm.outcome = Outcome::Aborted;
        rm.abort_reason = rs.client_abort_reason();
    }
    return rm;
}

}  // namespace detail

/// Runs cfg.runs independent sessions; deterministic for the mem transport
/// under a fixed seed. Attack scenarios require the mem transport.
inline Result<ScenarioResult, std::string> run_scenario(const ScenarioConfig& cfg,
                                                        const Material& mat) {
    if (cfg.runs == 0) return std::string("runs must be positive");
    if (cfg.attack != AttackKind::None && cfg.transport != TransportKind::Mem)
        return std::string("attack scenarios are only deterministic on the mem transport");

    ScenarioResult out;
    out.runs.reserve(cfg.runs);
    for (uint32_t i = 0; i < cfg.runs; ++i) {
        // distinct, seed-derived stream per run
        uint64_t run_seed = cfg.seed * 0x9E3779B97F4A7C15ull + i;
        bool last = i + 1 == cfg.runs;
        RunMetrics rm;
        if (cfg.transport == TransportKind::Mem) {
            if (cfg.protocol == ProtocolKind::Flat) {
                rm = detail::run_one_mem<detail::FlatRoles>(cfg, mat, run_seed,
                                                            last ? &out.last_transcript : nullptr);
            } else {
                rm = detail::run_one_mem<detail::BaselineRoles>(
                    cfg, mat, run_seed, last ? &out.last_transcript : nullptr);
            }
        } else {
            if (cfg.protocol == ProtocolKind::Flat) {
                rm = detail::run_one_udp<detail::FlatRoles>(cfg, mat, run_seed);
            } else {
                rm = detail::run_one_udp<detail::BaselineRoles>(cfg, mat, run_seed);
            }
        }
        out.runs.push_back(rm);
    }
    return out;
}

}  // namespace flat::harness
