#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "flat/bytes.hpp"
#include "flat/crypto/channel.hpp"
#include "flat/crypto/ecdsa.hpp"
#include "flat/crypto/ecies.hpp"
#include "flat/crypto/rng.hpp"
#include "flat/pki.hpp"
#include "flat/result.hpp"
#include "flat/wire.hpp"

namespace flat::protocol {

using crypto::AffinePoint;
using crypto::Nonce;
using crypto::SymmetricKey;
using crypto::U256;
using wire::EntityId;
using wire::Message;
using wire::MessageType;

inline constexpr uint8_t kStatusGranted = 0x01;
inline constexpr uint8_t kStatusDenied = 0x00;
inline constexpr size_t kAssertionSize = 95;
inline constexpr size_t kKeyMaterialSize = 32;

// ---------------------------------------------------------------------------
// Wire layout. Every field traces to one protocol symbol; the sums below are
// load-bearing: reports print them and the byte-accounting checks pin them.
// ---------------------------------------------------------------------------
namespace layout {

inline constexpr size_t channel(size_t pt) { return pt + crypto::kChannelOverhead; }
inline constexpr size_t wire_size(size_t payload) { return wire::kHeaderSize + payload; }

inline constexpr size_t kKeyRequest = wire_size(channel(3 + 16));            // 61
inline constexpr size_t kCertificateChallenge = wire_size(70 + 16);          // 96
inline constexpr size_t kCertificateResponse = wire_size(70 + 16 + 65);      // 161
inline constexpr size_t kSpKey = wire_size((65 + 32 + 3) + 65);              // 175
inline constexpr size_t kKeyAcknowledgment = wire_size(16 + 65);             // 91
inline constexpr size_t kClientKey = wire_size(channel(32 + 16));            // 90
inline constexpr size_t kAssertionRequest = wire_size(channel(16 + 3));      // 61
inline constexpr size_t kAssertionMsg = wire_size(channel(kAssertionSize + 16));   // 153
inline constexpr size_t kServiceRequest = wire_size(channel(kAssertionSize + 16)); // 153
inline constexpr size_t kService = wire_size(channel(1 + 16));               // 59

inline constexpr size_t kClientSent = kKeyRequest + kAssertionRequest + kServiceRequest;
inline constexpr size_t kClientReceived = kClientKey + kAssertionMsg + kService;
inline constexpr size_t kClientTotal = kClientSent + kClientReceived;  // 577

inline constexpr size_t kSpSent = kCertificateResponse + kKeyAcknowledgment + kService;
inline constexpr size_t kSpReceived = kCertificateChallenge + kSpKey + kServiceRequest;
inline constexpr size_t kSpTotal = kSpSent + kSpReceived;

inline constexpr size_t kIdpSent =
    kCertificateChallenge + kSpKey + kClientKey + kAssertionMsg;
inline constexpr size_t kIdpReceived =
    kKeyRequest + kCertificateResponse + kKeyAcknowledgment + kAssertionRequest;
inline constexpr size_t kIdpTotal = kIdpSent + kIdpReceived;

inline constexpr size_t kRunTotal = kClientSent + kSpSent + kIdpSent;
inline constexpr size_t kMessageCount = 10;

static_assert(kKeyRequest == 61 && kCertificateChallenge == 96 && kCertificateResponse == 161);
static_assert(kSpKey == 175 && kKeyAcknowledgment == 91 && kClientKey == 90);
static_assert(kAssertionRequest == 61 && kAssertionMsg == 153);
static_assert(kServiceRequest == 153 && kService == 59);
static_assert(kClientTotal == 577);

}  // namespace layout

// ---------------------------------------------------------------------------
// Shared vocabulary
// ---------------------------------------------------------------------------

enum class AbortReason : uint8_t {
    None,
    MacFailure,         // symmetric channel authentication failed
    DecryptFailure,     // ECIES authentication failed
    BadSignature,
    CertInvalid,        // parse, curve or validity-window rejection
    NonceMismatch,      // echoed nonce differs from the pending one
    Malformed,          // structure wrong after authentication
    UnexpectedType,
    ProtocolOrder,      // right type, wrong moment (includes future seq)
    Replay,             // authentic but stale delivery
    AssertionExpired,
    AssertionConsumed,
    AssertionMismatch,  // assertion bound to a different session
    Denied,             // peer answered with a denial status
    Timeout,
    UnknownPeer,
    BadCredential,      // comparison protocol only
};

inline const char* abort_reason_name(AbortReason r) {
    switch (r) {
        case AbortReason::None: return "none";
        case AbortReason::MacFailure: return "mac-failure";
        case AbortReason::DecryptFailure: return "decrypt-failure";
        case AbortReason::BadSignature: return "bad-signature";
        case AbortReason::CertInvalid: return "cert-invalid";
        case AbortReason::NonceMismatch: return "nonce-mismatch";
        case AbortReason::Malformed: return "malformed";
        case AbortReason::UnexpectedType: return "unexpected-type";
        case AbortReason::ProtocolOrder: return "protocol-order";
        case AbortReason::Replay: return "replay";
        case AbortReason::AssertionExpired: return "assertion-expired";
        case AbortReason::AssertionConsumed: return "assertion-consumed";
        case AbortReason::AssertionMismatch: return "assertion-mismatch";
        case AbortReason::Denied: return "denied";
        case AbortReason::Timeout: return "timeout";
        case AbortReason::UnknownPeer: return "unknown-peer";
        case AbortReason::BadCredential: return "bad-credential";
    }
    return "?";
}

/// Outcome of feeding one event into a role machine. `issue` reports both
/// fatal aborts and non-fatal drops; emitted messages are already encodable.
struct ProtocolIssue {
    AbortReason reason = AbortReason::None;
    bool fatal = false;
};

struct StepResult {
    std::vector<Message> out;
    std::optional<ProtocolIssue> issue;

    static StepResult send(Message m) {
        StepResult r;
        r.out.push_back(std::move(m));
        return r;
    }
    static StepResult quiet() { return {}; }
    static StepResult drop(AbortReason reason) {
        StepResult r;
        r.issue = ProtocolIssue{reason, false};
        return r;
    }
};

/// Per-event environment: the randomness source and the clock in force.
/// Simulated transports supply a simulated clock; the UDP binding wall time.
struct Env {
    crypto::Rng& rng;
    uint64_t now_s = 0;
};

namespace detail {

inline Bytes dir_label(EntityId from, EntityId to) {
    Bytes d;
    d.reserve(6);
    append_u24be(d, from.value);
    append_u24be(d, to.value);
    return d;
}

inline Message make_msg(MessageType type, uint8_t seq, EntityId src, EntityId dst,
                        Bytes payload) {
    Message m;
    m.msg_type = type;
    m.seq = seq;
    m.src = src;
    m.dst = dst;
    m.payload = std::move(payload);
    return m;
}

// Tracks one direction of a session: wire seq starts at 0 and increments by
// one per message. Sessions are far shorter than the 8-bit wraparound.
struct SeqPair {
    uint8_t next_tx = 0;
    uint8_t next_rx = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Assertion: the IdP-signed statement the client ferries to the SP.
// 95 bytes: client(3) | sp(3) | n_sp(16) | expiry(8) | signature(65).
// ---------------------------------------------------------------------------
struct Assertion {
    EntityId client_id;
    EntityId sp_id;
    Nonce n_sp;             // session nonce the SP emitted in the cert exchange
    uint64_t expires_at = 0;  // unix seconds
    std::array<uint8_t, crypto::kSignatureSize> idp_signature{};

    Bytes signed_portion() const {
        Bytes out;
        out.reserve(30);
        append_u24be(out, client_id.value);
        append_u24be(out, sp_id.value);
        append(out, n_sp.bytes);
        append_u64be(out, expires_at);
        return out;
    }

    Bytes serialize() const {
        Bytes out = signed_portion();
        append(out, idp_signature);
        return out;
    }

    static std::optional<Assertion> parse(ByteView b) {
        if (b.size() != kAssertionSize) return std::nullopt;
        Assertion a;
        a.client_id = EntityId(read_u24be(b.subspan(0, 3)));
        a.sp_id = EntityId(read_u24be(b.subspan(3, 3)));
        std::memcpy(a.n_sp.bytes.data(), b.data() + 6, crypto::kNonceSize);
        a.expires_at = read_u64be(b.subspan(22, 8));
        std::memcpy(a.idp_signature.data(), b.data() + 30, crypto::kSignatureSize);
        return a;
    }
};

// ---------------------------------------------------------------------------
// Client role. Symmetric primitives only: the pre-shared key protects the
// IdP leg, the distributed session key the SP leg. The assertion is opaque
// bytes here; the client cannot and does not check the IdP signature.
// ---------------------------------------------------------------------------

enum class ClientPhase : uint8_t { Idle, AwaitKey, AwaitAssertion, AwaitService, Done, Aborted };

struct ClientConfig {
    EntityId id;
    EntityId idp_id;
    SymmetricKey k_ci;  // pre-shared with the IdP at setup
};

class Client {
public:
    explicit Client(ClientConfig cfg) : cfg_(std::move(cfg)) {}

    /// Begins (or restarts) a session toward `sp`. Restarting from Aborted or
    /// Done resets all per-session state and issues a fresh key request.
    Result<Message, AbortReason> start(Env& env, EntityId sp) {
        if (phase_ == ClientPhase::AwaitKey || phase_ == ClientPhase::AwaitAssertion ||
            phase_ == ClientPhase::AwaitService) {
            return AbortReason::ProtocolOrder;
        }
        reset_session();
        sp_id_ = sp;
        n_c_ = crypto::gen_nonce(env.rng);
        Bytes pt;
        append_u24be(pt, sp.value);
        append(pt, n_c_.bytes);
        auto payload = crypto::sym_protect(env.rng, cfg_.k_ci, pt, seq_idp_.next_tx,
                                           detail::dir_label(cfg_.id, cfg_.idp_id));
        Message m = detail::make_msg(MessageType::KeyRequest, seq_idp_.next_tx++, cfg_.id,
                                     cfg_.idp_id, payload->serialize());
        phase_ = ClientPhase::AwaitKey;
        return m;
    }

    StepResult on_message(Env& env, const Message& m) {
        if (m.dst != cfg_.id) return StepResult::drop(AbortReason::UnknownPeer);
        switch (phase_) {
            case ClientPhase::Idle:
                return StepResult::drop(AbortReason::ProtocolOrder);
            case ClientPhase::AwaitKey:
                return on_await_key(env, m);
            case ClientPhase::AwaitAssertion:
                return on_await_assertion(env, m);
            case ClientPhase::AwaitService:
                return on_await_service(env, m);
            case ClientPhase::Done:
                return on_done(m);
            case ClientPhase::Aborted:
                return StepResult::drop(AbortReason::ProtocolOrder);
        }
        return StepResult::quiet();
    }

    /// Await-state timeout: transition used by the transport loop.
    void on_timeout() {
        if (phase_ != ClientPhase::Done && phase_ != ClientPhase::Idle) abort(AbortReason::Timeout);
    }

    ClientPhase phase() const { return phase_; }
    AbortReason abort_reason() const { return abort_reason_; }
    bool granted() const { return phase_ == ClientPhase::Done && granted_; }
    const std::optional<SymmetricKey>& session_key() const { return k_cs_; }
    EntityId id() const { return cfg_.id; }

private:
    void reset_session() {
        phase_ = ClientPhase::Idle;
        abort_reason_ = AbortReason::None;
        granted_ = false;
        k_cs_.reset();
        seq_idp_ = {};
        seq_sp_ = {};
        assertion_blob_.clear();
    }

    StepResult abort(AbortReason reason) {
        phase_ = ClientPhase::Aborted;
        abort_reason_ = reason;
        StepResult r;
        r.issue = ProtocolIssue{reason, true};
        return r;
    }

    // Authenticate-then-classify: the MAC binds the header seq, so a stale
    // authentic frame is a replay, a mangled one a MAC failure.
    Result<Bytes, AbortReason> open_protected(const Message& m, const SymmetricKey& key,
                                              EntityId peer, detail::SeqPair& seq) {
        auto pt = crypto::sym_unprotect_bytes(key, m.payload, m.seq,
                                              detail::dir_label(peer, cfg_.id));
        if (!pt) return AbortReason::MacFailure;
        if (m.seq != seq.next_rx) {
            return m.seq < seq.next_rx ? AbortReason::Replay : AbortReason::ProtocolOrder;
        }
        seq.next_rx++;
        return std::move(pt.value());
    }

    StepResult on_await_key(Env& env, const Message& m) {
        if (m.msg_type != MessageType::ClientKey || m.src != cfg_.idp_id)
            return abort(AbortReason::UnexpectedType);
        auto pt = open_protected(m, cfg_.k_ci, cfg_.idp_id, seq_idp_);
        if (!pt) return abort(pt.error());
        if (pt->size() != kKeyMaterialSize + crypto::kNonceSize)
            return abort(AbortReason::Malformed);
        if (!ct_equal(ByteView(*pt).subspan(kKeyMaterialSize), n_c_.bytes))
            return abort(AbortReason::NonceMismatch);
        k_cs_ = SymmetricKey::from_material(ByteView(*pt).subspan(0, kKeyMaterialSize));

        n_c2_ = crypto::gen_nonce(env.rng);
        Bytes req;
        append(req, n_c2_.bytes);
        append_u24be(req, sp_id_.value);
        auto payload = crypto::sym_protect(env.rng, cfg_.k_ci, req, seq_idp_.next_tx,
                                           detail::dir_label(cfg_.id, cfg_.idp_id));
        Message out = detail::make_msg(MessageType::AssertionRequest, seq_idp_.next_tx++,
                                       cfg_.id, cfg_.idp_id, payload->serialize());
        phase_ = ClientPhase::AwaitAssertion;
        return StepResult::send(std::move(out));
    }

    StepResult on_await_assertion(Env& env, const Message& m) {
        if (m.msg_type != MessageType::Assertion || m.src != cfg_.idp_id)
            return abort(AbortReason::UnexpectedType);
        auto pt = open_protected(m, cfg_.k_ci, cfg_.idp_id, seq_idp_);
        if (!pt) return abort(pt.error());
        if (pt->size() != kAssertionSize + crypto::kNonceSize)
            return abort(AbortReason::Malformed);
        if (!ct_equal(ByteView(*pt).subspan(kAssertionSize), n_c2_.bytes))
            return abort(AbortReason::NonceMismatch);
        // Held as opaque bytes: authenticity of this hop came from the MAC.
        assertion_blob_.assign(pt->begin(), pt->begin() + kAssertionSize);

        n_c3_ = crypto::gen_nonce(env.rng);
        Bytes req = assertion_blob_;
        append(req, n_c3_.bytes);
        auto payload = crypto::sym_protect(env.rng, *k_cs_, req, seq_sp_.next_tx,
                                           detail::dir_label(cfg_.id, sp_id_));
        Message out = detail::make_msg(MessageType::ServiceRequest, seq_sp_.next_tx++, cfg_.id,
                                       sp_id_, payload->serialize());
        phase_ = ClientPhase::AwaitService;
        return StepResult::send(std::move(out));
    }

    StepResult on_await_service(Env&, const Message& m) {
        if (m.msg_type != MessageType::Service || m.src != sp_id_)
            return abort(AbortReason::UnexpectedType);
        auto pt = open_protected(m, *k_cs_, sp_id_, seq_sp_);
        if (!pt) return abort(pt.error());
        if (pt->size() != 1 + crypto::kNonceSize) return abort(AbortReason::Malformed);
        if (!ct_equal(ByteView(*pt).subspan(1), n_c3_.bytes))
            return abort(AbortReason::NonceMismatch);
        uint8_t status = (*pt)[0];
        if (status != kStatusGranted && status != kStatusDenied)
            return abort(AbortReason::Malformed);
        granted_ = status == kStatusGranted;
        phase_ = ClientPhase::Done;
        if (!granted_) {
            StepResult r;
            r.issue = ProtocolIssue{AbortReason::Denied, false};
            return r;
        }
        return StepResult::quiet();
    }

    // After completion the client still recognises authentic stale traffic:
    // a replayed protected message aborts with a replay verdict.
    StepResult on_done(const Message& m) {
        const SymmetricKey* key = nullptr;
        EntityId peer;
        detail::SeqPair* seq = nullptr;
        if ((m.msg_type == MessageType::ClientKey || m.msg_type == MessageType::Assertion) &&
            m.src == cfg_.idp_id) {
            key = &cfg_.k_ci;
            peer = cfg_.idp_id;
            seq = &seq_idp_;
        } else if (m.msg_type == MessageType::Service && m.src == sp_id_ && k_cs_) {
            key = &*k_cs_;
            peer = sp_id_;
            seq = &seq_sp_;
        } else {
            return StepResult::drop(AbortReason::UnexpectedType);
        }
        auto pt = crypto::sym_unprotect_bytes(*key, m.payload, m.seq,
                                              detail::dir_label(peer, cfg_.id));
        if (pt && m.seq < seq->next_rx) return abort(AbortReason::Replay);
        return StepResult::drop(pt ? AbortReason::ProtocolOrder : AbortReason::MacFailure);
    }

    ClientConfig cfg_;
    ClientPhase phase_ = ClientPhase::Idle;
    AbortReason abort_reason_ = AbortReason::None;
    bool granted_ = false;
    EntityId sp_id_;
    Nonce n_c_, n_c2_, n_c3_;
    std::optional<SymmetricKey> k_cs_;
    detail::SeqPair seq_idp_, seq_sp_;
    Bytes assertion_blob_;
};

// ---------------------------------------------------------------------------
// Service provider role.
// ---------------------------------------------------------------------------

enum class SpPhase : uint8_t { Idle, AwaitKey, KeyHeld, Done, Aborted };

struct SpConfig {
    EntityId id;
    U256 d_sp;                       // ECQV-certified private key
    pki::ImplicitCertificate cert;
    AffinePoint q_ca;
};

class ServiceProvider {
public:
    explicit ServiceProvider(SpConfig cfg) : cfg_(std::move(cfg)) {}

    StepResult on_message(Env& env, const Message& m) {
        if (m.dst != cfg_.id) return StepResult::drop(AbortReason::UnknownPeer);
        // A certificate-challenge starts a fresh session from any phase;
        // that is the restart path after a lost exchange.
        if (m.msg_type == MessageType::CertificateChallenge) return on_challenge(env, m);
        switch (phase_) {
            case SpPhase::AwaitKey:
                return on_sp_key(env, m);
            case SpPhase::KeyHeld:
                return on_service_request(env, m);
            case SpPhase::Done:
                if (m.msg_type == MessageType::ServiceRequest) return on_service_request(env, m);
                return StepResult::drop(AbortReason::UnexpectedType);
            case SpPhase::Idle:
            case SpPhase::Aborted:
                return StepResult::drop(AbortReason::ProtocolOrder);
        }
        return StepResult::quiet();
    }

    SpPhase phase() const { return phase_; }
    AbortReason abort_reason() const { return abort_reason_; }
    const std::optional<SymmetricKey>& session_key() const { return k_cs_; }
    uint64_t replay_denials() const { return replay_denials_; }
    EntityId id() const { return cfg_.id; }

private:
    StepResult abort(AbortReason reason) {
        phase_ = SpPhase::Aborted;
        abort_reason_ = reason;
        StepResult r;
        r.issue = ProtocolIssue{reason, true};
        return r;
    }

    StepResult abort_with_denial(Env& env, AbortReason reason, const Nonce& echo) {
        StepResult r = make_denial(env, echo);
        phase_ = SpPhase::Aborted;
        abort_reason_ = reason;
        r.issue = ProtocolIssue{reason, true};
        return r;
    }

    StepResult make_denial(Env& env, const Nonce& echo) {
        Bytes pt;
        append_u8(pt, kStatusDenied);
        append(pt, echo.bytes);
        auto payload = crypto::sym_protect(env.rng, *k_cs_, pt, seq_client_.next_tx,
                                           detail::dir_label(cfg_.id, client_id_));
        return StepResult::send(detail::make_msg(MessageType::Service, seq_client_.next_tx++,
                                                 cfg_.id, client_id_, payload->serialize()));
    }

    StepResult on_challenge(Env& env, const Message& m) {
        if (m.payload.size() != pki::kImplicitCertSize + crypto::kNonceSize)
            return abort(AbortReason::Malformed);
        if (m.seq != 0) return abort(AbortReason::ProtocolOrder);
        auto cert = pki::ImplicitCertificate::parse(
            ByteView(m.payload).subspan(0, pki::kImplicitCertSize));
        if (!cert) return abort(AbortReason::CertInvalid);
        if (cert->identity.role != pki::Role::IdentityProvider ||
            cert->identity.entity != m.src || !cert->identity.valid_at(env.now_s))
            return abort(AbortReason::CertInvalid);
        auto q_idp = pki::ecqv_extract(cfg_.q_ca, *cert);
        if (!q_idp) return abort(AbortReason::CertInvalid);

        // new session; all per-session state resets here
        phase_ = SpPhase::Idle;
        abort_reason_ = AbortReason::None;
        k_cs_.reset();
        consumed_assertions_.clear();
        seq_idp_ = {};
        seq_client_ = {};
        idp_id_ = m.src;
        q_idp_ = *q_idp;
        std::memcpy(n_idp_.bytes.data(), m.payload.data() + pki::kImplicitCertSize,
                    crypto::kNonceSize);
        seq_idp_.next_rx = 1;

        n_sp_ = crypto::gen_nonce(env.rng);
        Bytes payload = cfg_.cert.serialize();
        append(payload, n_sp_.bytes);
        Bytes signed_blob;
        append(signed_blob, n_idp_.bytes);
        append(signed_blob, n_sp_.bytes);
        append(signed_blob, cfg_.cert.serialize());
        append(payload, crypto::ecdsa_sign(cfg_.d_sp, signed_blob).serialize());
        Message out = detail::make_msg(MessageType::CertificateResponse, seq_idp_.next_tx++,
                                       cfg_.id, idp_id_, std::move(payload));
        phase_ = SpPhase::AwaitKey;
        return StepResult::send(std::move(out));
    }

    StepResult on_sp_key(Env& env, const Message& m) {
        if (m.msg_type != MessageType::SpKey || m.src != idp_id_)
            return abort(AbortReason::UnexpectedType);
        if (m.seq != seq_idp_.next_rx)
            return abort(m.seq < seq_idp_.next_rx ? AbortReason::Replay
                                                  : AbortReason::ProtocolOrder);
        if (m.payload.size() <= crypto::kSignatureSize + crypto::kEciesOverhead)
            return abort(AbortReason::Malformed);
        ByteView ct(m.payload.data(), m.payload.size() - crypto::kSignatureSize);
        ByteView sig(m.payload.data() + ct.size(), crypto::kSignatureSize);
        Bytes signed_blob = to_bytes(ct);
        append(signed_blob, n_sp_.bytes);
        if (!crypto::ecdsa_verify_bytes(q_idp_, signed_blob, sig))
            return abort(AbortReason::BadSignature);
        auto pt = crypto::ecies_decrypt_bytes(cfg_.d_sp, ct);
        if (!pt) return abort(AbortReason::DecryptFailure);
        if (pt->size() != kKeyMaterialSize + 3) return abort(AbortReason::Malformed);
        k_cs_ = SymmetricKey::from_material(ByteView(*pt).subspan(0, kKeyMaterialSize));
        client_id_ = EntityId(read_u24be(ByteView(*pt).subspan(kKeyMaterialSize, 3)));
        seq_idp_.next_rx++;

        ack_nonce_ = crypto::gen_nonce(env.rng);
        Bytes payload;
        append(payload, ack_nonce_.bytes);
        Bytes signed_ack;
        append(signed_ack, ack_nonce_.bytes);
        append(signed_ack, n_idp_.bytes);
        append(payload, crypto::ecdsa_sign(cfg_.d_sp, signed_ack).serialize());
        Message out = detail::make_msg(MessageType::KeyAcknowledgment, seq_idp_.next_tx++,
                                       cfg_.id, idp_id_, std::move(payload));
        phase_ = SpPhase::KeyHeld;
        return StepResult::send(std::move(out));
    }

    StepResult on_service_request(Env& env, const Message& m) {
        if (m.msg_type != MessageType::ServiceRequest || m.src != client_id_)
            return abort(AbortReason::UnexpectedType);
        auto pt = crypto::sym_unprotect_bytes(*k_cs_, m.payload, m.seq,
                                              detail::dir_label(client_id_, cfg_.id));
        // MAC failures die silently: no denial is owed to an unauthenticated peer.
        if (!pt) return abort(AbortReason::MacFailure);
        if (pt->size() != kAssertionSize + crypto::kNonceSize)
            return abort(AbortReason::Malformed);
        Nonce n_c3;
        std::memcpy(n_c3.bytes.data(), pt->data() + kAssertionSize, crypto::kNonceSize);
        Bytes assertion_bytes(pt->begin(), pt->begin() + kAssertionSize);

        if (m.seq != seq_client_.next_rx) {
            if (m.seq < seq_client_.next_rx && phase_ == SpPhase::Done) {
                // authentic re-delivery of a consumed request: deny, stay Done
                replay_denials_++;
                StepResult r = make_denial(env, n_c3);
                r.issue = ProtocolIssue{AbortReason::Replay, false};
                return r;
            }
            return abort(m.seq < seq_client_.next_rx ? AbortReason::Replay
                                                     : AbortReason::ProtocolOrder);
        }
        seq_client_.next_rx++;

        auto assertion = Assertion::parse(assertion_bytes);
        if (!assertion) return abort_with_denial(env, AbortReason::Malformed, n_c3);
        if (!crypto::ecdsa_verify_bytes(q_idp_, assertion->signed_portion(),
                                        assertion->idp_signature))
            return abort_with_denial(env, AbortReason::BadSignature, n_c3);
        if (assertion->client_id != client_id_ || assertion->sp_id != cfg_.id ||
            assertion->n_sp != n_sp_)
            return abort_with_denial(env, AbortReason::AssertionMismatch, n_c3);
        if (env.now_s >= assertion->expires_at)
            return abort_with_denial(env, AbortReason::AssertionExpired, n_c3);
        if (consumed_assertions_.contains(assertion_bytes))
            return abort_with_denial(env, AbortReason::AssertionConsumed, n_c3);
        consumed_assertions_.insert(assertion_bytes);

        Bytes ok;
        append_u8(ok, kStatusGranted);
        append(ok, n_c3.bytes);
        auto payload = crypto::sym_protect(env.rng, *k_cs_, ok, seq_client_.next_tx,
                                           detail::dir_label(cfg_.id, client_id_));
        Message out = detail::make_msg(MessageType::Service, seq_client_.next_tx++, cfg_.id,
                                       client_id_, payload->serialize());
        phase_ = SpPhase::Done;
        return StepResult::send(std::move(out));
    }

    SpConfig cfg_;
    SpPhase phase_ = SpPhase::Idle;
    AbortReason abort_reason_ = AbortReason::None;
    EntityId idp_id_, client_id_;
    AffinePoint q_idp_;
    Nonce n_idp_, n_sp_, ack_nonce_;
    std::optional<SymmetricKey> k_cs_;
    std::set<Bytes> consumed_assertions_;
    detail::SeqPair seq_idp_, seq_client_;
    uint64_t replay_denials_ = 0;
};

// ---------------------------------------------------------------------------
// Identity provider role: registry of client pre-shared keys, ECQV-certified
// signing key, and the key-distribution-center session table.
//
// Locking contract: on_message mutates the session table and must be
// externally serialized (one invocation at a time per IdentityProvider
// instance). The transports here satisfy that by construction.
// ---------------------------------------------------------------------------

struct IdpConfig {
    EntityId id;
    U256 d_idp;
    pki::ImplicitCertificate cert;
    AffinePoint q_ca;
    std::map<uint32_t, SymmetricKey> client_keys;  // entity id -> K_CI
    uint64_t assertion_lifetime_s = 300;
    uint64_t session_ttl_s = 5;  // stale sessions vanish after this
};

enum class IdpSessionPhase : uint8_t {
    AwaitCertResponse,
    AwaitAck,
    AwaitAssertionRequest,
    Complete,
    Aborted,
};

struct AuditRecord {
    AbortReason reason;
    EntityId src;
};

class IdentityProvider {
public:
    explicit IdentityProvider(IdpConfig cfg) : cfg_(std::move(cfg)) {}

    StepResult on_message(Env& env, const Message& m) {
        if (m.dst != cfg_.id) return StepResult::drop(AbortReason::UnknownPeer);
        gc_sessions(env.now_s);
        switch (m.msg_type) {
            case MessageType::KeyRequest:
                return on_key_request(env, m);
            case MessageType::CertificateResponse:
                return on_cert_response(env, m);
            case MessageType::KeyAcknowledgment:
                return on_key_ack(env, m);
            case MessageType::AssertionRequest:
                return on_assertion_request(env, m);
            default:
                return drop_audit(AbortReason::UnexpectedType, m.src);
        }
    }

    struct SessionView {
        IdpSessionPhase phase;
        AbortReason abort_reason;
    };
    std::optional<SessionView> session(EntityId client, EntityId sp) const {
        auto it = sessions_.find({client.value, sp.value});
        if (it == sessions_.end()) return std::nullopt;
        return SessionView{it->second.phase, it->second.abort_reason};
    }
    const std::vector<AuditRecord>& audit() const { return audit_; }
    EntityId id() const { return cfg_.id; }

private:
    struct Session {
        EntityId client, sp;
        IdpSessionPhase phase = IdpSessionPhase::AwaitCertResponse;
        AbortReason abort_reason = AbortReason::None;
        Nonce n_c, n_idp, n_sp;
        std::array<uint8_t, kKeyMaterialSize> k_cs_material{};
        AffinePoint q_sp;
        detail::SeqPair seq_client, seq_sp;
        uint64_t last_activity_s = 0;
    };

    StepResult drop_audit(AbortReason reason, EntityId src) {
        audit_.push_back({reason, src});
        return StepResult::drop(reason);
    }

    StepResult abort_session(Session& s, AbortReason reason) {
        s.phase = IdpSessionPhase::Aborted;
        s.abort_reason = reason;
        audit_.push_back({reason, s.sp});
        StepResult r;
        r.issue = ProtocolIssue{reason, true};
        return r;
    }

    void gc_sessions(uint64_t now_s) {
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (now_s > it->second.last_activity_s &&
                now_s - it->second.last_activity_s > cfg_.session_ttl_s) {
                it = sessions_.erase(it);
            } else {
                ++it;
            }
        }
    }

    StepResult on_key_request(Env& env, const Message& m) {
        auto key_it = cfg_.client_keys.find(m.src.value);
        if (key_it == cfg_.client_keys.end()) return drop_audit(AbortReason::UnknownPeer, m.src);
        auto pt = crypto::sym_unprotect_bytes(key_it->second, m.payload, m.seq,
                                              detail::dir_label(m.src, cfg_.id));
        if (!pt) return drop_audit(AbortReason::MacFailure, m.src);
        if (m.seq != 0) return drop_audit(AbortReason::Replay, m.src);
        if (pt->size() != 3 + crypto::kNonceSize) return drop_audit(AbortReason::Malformed, m.src);

        // a valid key request always (re)starts the session for this pair
        Session s;
        s.client = m.src;
        s.sp = EntityId(read_u24be(ByteView(*pt).subspan(0, 3)));
        std::memcpy(s.n_c.bytes.data(), pt->data() + 3, crypto::kNonceSize);
        s.n_idp = crypto::gen_nonce(env.rng);
        s.seq_client.next_rx = 1;
        s.last_activity_s = env.now_s;

        Bytes payload = cfg_.cert.serialize();
        append(payload, s.n_idp.bytes);
        Message out = detail::make_msg(MessageType::CertificateChallenge, s.seq_sp.next_tx++,
                                       cfg_.id, s.sp, std::move(payload));
        sessions_.insert_or_assign({s.client.value, s.sp.value}, std::move(s));
        return StepResult::send(std::move(out));
    }

    Session* find_sp_session(EntityId sp, IdpSessionPhase phase) {
        Session* found = nullptr;
        for (auto& [key, s] : sessions_) {
            if (s.sp == sp && s.phase == phase) {
                if (!found || s.last_activity_s > found->last_activity_s) found = &s;
            }
        }
        return found;
    }

    StepResult on_cert_response(Env& env, const Message& m) {
        Session* s = find_sp_session(m.src, IdpSessionPhase::AwaitCertResponse);
        if (!s) return drop_audit(AbortReason::UnexpectedType, m.src);
        if (m.seq != s->seq_sp.next_rx)
            return abort_session(*s, m.seq < s->seq_sp.next_rx ? AbortReason::Replay
                                                               : AbortReason::ProtocolOrder);
        constexpr size_t kExpected =
            pki::kImplicitCertSize + crypto::kNonceSize + crypto::kSignatureSize;
        if (m.payload.size() != kExpected) return abort_session(*s, AbortReason::Malformed);

        auto cert = pki::ImplicitCertificate::parse(
            ByteView(m.payload).subspan(0, pki::kImplicitCertSize));
        if (!cert) return abort_session(*s, AbortReason::CertInvalid);
        if (cert->identity.role != pki::Role::ServiceProvider ||
            cert->identity.entity != m.src || !cert->identity.valid_at(env.now_s))
            return abort_session(*s, AbortReason::CertInvalid);
        auto q_sp = pki::ecqv_extract(cfg_.q_ca, *cert);
        if (!q_sp) return abort_session(*s, AbortReason::CertInvalid);

        Nonce n_sp;
        std::memcpy(n_sp.bytes.data(), m.payload.data() + pki::kImplicitCertSize,
                    crypto::kNonceSize);
        ByteView sig(m.payload.data() + pki::kImplicitCertSize + crypto::kNonceSize,
                     crypto::kSignatureSize);
        Bytes signed_blob;
        append(signed_blob, s->n_idp.bytes);
        append(signed_blob, n_sp.bytes);
        append(signed_blob, ByteView(m.payload).subspan(0, pki::kImplicitCertSize));
        // An extracted key that cannot verify the response is the fake-SP
        // signal: abort before any key material leaves this host.
        if (!crypto::ecdsa_verify_bytes(*q_sp, signed_blob, sig))
            return abort_session(*s, AbortReason::BadSignature);

        s->n_sp = n_sp;
        s->q_sp = *q_sp;
        s->seq_sp.next_rx++;
        env.rng.fill(s->k_cs_material.data(), s->k_cs_material.size());
        s->last_activity_s = env.now_s;

        Bytes secret;
        append(secret, s->k_cs_material);
        append_u24be(secret, s->client.value);
        auto ct = crypto::ecies_encrypt(env.rng, s->q_sp, secret);
        Bytes payload = ct->serialize();
        Bytes covered = payload;
        append(covered, s->n_sp.bytes);
        append(payload, crypto::ecdsa_sign(cfg_.d_idp, covered).serialize());
        Message out = detail::make_msg(MessageType::SpKey, s->seq_sp.next_tx++, cfg_.id, s->sp,
                                       std::move(payload));
        s->phase = IdpSessionPhase::AwaitAck;
        return StepResult::send(std::move(out));
    }

    StepResult on_key_ack(Env& env, const Message& m) {
        Session* s = find_sp_session(m.src, IdpSessionPhase::AwaitAck);
        if (!s) return drop_audit(AbortReason::UnexpectedType, m.src);
        if (m.seq != s->seq_sp.next_rx)
            return abort_session(*s, m.seq < s->seq_sp.next_rx ? AbortReason::Replay
                                                               : AbortReason::ProtocolOrder);
        if (m.payload.size() != crypto::kNonceSize + crypto::kSignatureSize)
            return abort_session(*s, AbortReason::Malformed);
        ByteView ack(m.payload.data(), crypto::kNonceSize);
        ByteView sig(m.payload.data() + crypto::kNonceSize, crypto::kSignatureSize);
        Bytes signed_blob = to_bytes(ack);
        append(signed_blob, s->n_idp.bytes);
        if (!crypto::ecdsa_verify_bytes(s->q_sp, signed_blob, sig))
            return abort_session(*s, AbortReason::BadSignature);
        s->seq_sp.next_rx++;
        s->last_activity_s = env.now_s;

        Bytes pt;
        append(pt, s->k_cs_material);
        append(pt, s->n_c.bytes);
        auto key_it = cfg_.client_keys.find(s->client.value);
        auto payload = crypto::sym_protect(env.rng, key_it->second, pt, s->seq_client.next_tx,
                                           detail::dir_label(cfg_.id, s->client));
        Message out = detail::make_msg(MessageType::ClientKey, s->seq_client.next_tx++, cfg_.id,
                                       s->client, payload->serialize());
        s->phase = IdpSessionPhase::AwaitAssertionRequest;
        return StepResult::send(std::move(out));
    }

    StepResult on_assertion_request(Env& env, const Message& m) {
        auto key_it = cfg_.client_keys.find(m.src.value);
        if (key_it == cfg_.client_keys.end()) return drop_audit(AbortReason::UnknownPeer, m.src);
        Session* s = nullptr;
        for (auto& [key, sess] : sessions_) {
            if (sess.client == m.src && sess.phase == IdpSessionPhase::AwaitAssertionRequest) {
                if (!s || sess.last_activity_s > s->last_activity_s) s = &sess;
            }
        }
        if (!s) return drop_audit(AbortReason::UnexpectedType, m.src);
        auto pt = crypto::sym_unprotect_bytes(key_it->second, m.payload, m.seq,
                                              detail::dir_label(m.src, cfg_.id));
        if (!pt) return abort_session(*s, AbortReason::MacFailure);
        if (m.seq != s->seq_client.next_rx)
            return abort_session(*s, m.seq < s->seq_client.next_rx ? AbortReason::Replay
                                                                   : AbortReason::ProtocolOrder);
        if (pt->size() != crypto::kNonceSize + 3) return abort_session(*s, AbortReason::Malformed);
        EntityId requested_sp(read_u24be(ByteView(*pt).subspan(crypto::kNonceSize, 3)));
        if (requested_sp != s->sp) return abort_session(*s, AbortReason::ProtocolOrder);
        s->seq_client.next_rx++;
        s->last_activity_s = env.now_s;

        Assertion a;
        a.client_id = s->client;
        a.sp_id = s->sp;
        a.n_sp = s->n_sp;  // binds the assertion to the SP's session
        a.expires_at = env.now_s + cfg_.assertion_lifetime_s;
        a.idp_signature = crypto::ecdsa_sign(cfg_.d_idp, a.signed_portion()).serialize();

        Bytes reply = a.serialize();
        append(reply, ByteView(pt->data(), crypto::kNonceSize));  // echo n_c2
        auto payload = crypto::sym_protect(env.rng, key_it->second, reply, s->seq_client.next_tx,
                                           detail::dir_label(cfg_.id, s->client));
        Message out = detail::make_msg(MessageType::Assertion, s->seq_client.next_tx++, cfg_.id,
                                       s->client, payload->serialize());
        s->phase = IdpSessionPhase::Complete;
        return StepResult::send(std::move(out));
    }

    IdpConfig cfg_;
    std::map<std::pair<uint32_t, uint32_t>, Session> sessions_;
    std::vector<AuditRecord> audit_;
};

}  // namespace flat::protocol
