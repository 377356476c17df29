#include <doctest.h>

#include "flat/crypto/ops.hpp"
#include "flat/crypto/rng.hpp"
#include "flat/protocol.hpp"

using namespace flat;
using namespace flat::protocol;
using crypto::DeterministicRng;
using crypto::op_counts;
using wire::Message;

namespace {

struct TestWorld {
    DeterministicRng rng;
    pki::CertificateAuthority ca;
    Client client;
    ServiceProvider sp;
    IdentityProvider idp;
    Env env;

    static constexpr uint32_t kClientId = 0x000010;
    static constexpr uint32_t kSpId = 0x000020;
    static constexpr uint32_t kIdpId = 0x000030;

    explicit TestWorld(uint64_t seed = 1000)
        : rng(seed),
          ca(pki::CertificateAuthority::generate(rng)),
          client(make_client(rng)),
          sp(make_sp(rng, ca)),
          idp(make_idp(rng, ca)),
          env{rng, 1'750'000'000} {}

    static pki::IdentityInfo identity(uint32_t entity, pki::Role role, uint32_t serial) {
        pki::IdentityInfo id;
        id.entity = wire::EntityId(entity);
        id.domain = 1;
        id.role = role;
        id.serial = serial;
        id.not_before = 1704067200;
        id.not_after = 4102444800;
        return id;
    }

    static crypto::SymmetricKey shared_psk(uint64_t seed) {
        DeterministicRng psk_rng(seed ^ 0x9999);
        return crypto::SymmetricKey::from_material(psk_rng.bytes(32));
    }

    Client make_client(DeterministicRng& r) {
        (void)r;
        ClientConfig cfg;
        cfg.id = wire::EntityId(kClientId);
        cfg.idp_id = wire::EntityId(kIdpId);
        cfg.k_ci = shared_psk(1);
        return Client(cfg);
    }

    ServiceProvider make_sp(DeterministicRng& r, pki::CertificateAuthority& authority) {
        auto req = pki::ecqv_request(r, identity(kSpId, pki::Role::ServiceProvider, 20));
        auto issued = pki::ecqv_generate(r, authority, req.request);
        auto keys = pki::ecqv_receive(issued->cert, issued->private_contribution, req.k_u,
                                      authority.q_ca);
        SpConfig cfg;
        cfg.id = wire::EntityId(kSpId);
        cfg.d_sp = keys->d_u;
        cfg.cert = issued->cert;
        cfg.q_ca = authority.q_ca;
        return ServiceProvider(cfg);
    }

    IdentityProvider make_idp(DeterministicRng& r, pki::CertificateAuthority& authority) {
        auto req = pki::ecqv_request(r, identity(kIdpId, pki::Role::IdentityProvider, 30));
        auto issued = pki::ecqv_generate(r, authority, req.request);
        auto keys = pki::ecqv_receive(issued->cert, issued->private_contribution, req.k_u,
                                      authority.q_ca);
        IdpConfig cfg;
        cfg.id = wire::EntityId(kIdpId);
        cfg.d_idp = keys->d_u;
        cfg.cert = issued->cert;
        cfg.q_ca = authority.q_ca;
        cfg.client_keys[kClientId] = shared_psk(1);
        return IdentityProvider(cfg);
    }

    // Pumps messages role-to-role until quiescent; returns the full trace.
    std::vector<Message> run_honest() {
        std::vector<Message> trace;
        auto first = client.start(env, wire::EntityId(kSpId));
        REQUIRE(first.has_value());
        std::vector<Message> pending{*first};
        while (!pending.empty()) {
            Message m = pending.front();
            pending.erase(pending.begin());
            trace.push_back(m);
            StepResult r = dispatch(m);
            for (auto& out : r.out) pending.push_back(out);
        }
        return trace;
    }

    StepResult dispatch(const Message& m) {
        if (m.dst.value == kClientId) return client.on_message(env, m);
        if (m.dst.value == kSpId) return sp.on_message(env, m);
        if (m.dst.value == kIdpId) return idp.on_message(env, m);
        return StepResult::quiet();
    }
};

}  // namespace

TEST_CASE("honest run: ten messages, each type once, stated sizes, all Done") {
    TestWorld w;
    auto trace = w.run_honest();

    CHECK(w.client.phase() == ClientPhase::Done);
    CHECK(w.client.granted());
    CHECK(w.sp.phase() == SpPhase::Done);
    REQUIRE(trace.size() == layout::kMessageCount);

    using wire::MessageType;
    const std::pair<MessageType, size_t> expected[] = {
        {MessageType::KeyRequest, layout::kKeyRequest},
        {MessageType::CertificateChallenge, layout::kCertificateChallenge},
        {MessageType::CertificateResponse, layout::kCertificateResponse},
        {MessageType::SpKey, layout::kSpKey},
        {MessageType::KeyAcknowledgment, layout::kKeyAcknowledgment},
        {MessageType::ClientKey, layout::kClientKey},
        {MessageType::AssertionRequest, layout::kAssertionRequest},
        {MessageType::Assertion, layout::kAssertionMsg},
        {MessageType::ServiceRequest, layout::kServiceRequest},
        {MessageType::Service, layout::kService},
    };
    for (size_t i = 0; i < trace.size(); ++i) {
        CHECK(trace[i].msg_type == expected[i].first);
        auto encoded = wire::encode_message(trace[i]);
        REQUIRE(encoded.has_value());
        CHECK(encoded->size() == expected[i].second);
    }

    // per-role complements: client 3/3, SP 3/3, IdP 4/4
    std::map<uint32_t, int> sent, received;
    for (const auto& m : trace) {
        sent[m.src.value]++;
        received[m.dst.value]++;
    }
    CHECK(sent[TestWorld::kClientId] == 3);
    CHECK(received[TestWorld::kClientId] == 3);
    CHECK(sent[TestWorld::kSpId] == 3);
    CHECK(received[TestWorld::kSpId] == 3);
    CHECK(sent[TestWorld::kIdpId] == 4);
    CHECK(received[TestWorld::kIdpId] == 4);
}

TEST_CASE("key agreement: client and SP derive the same session key") {
    TestWorld w;
    auto trace = w.run_honest();
    REQUIRE(w.client.session_key().has_value());
    REQUIRE(w.sp.session_key().has_value());
    CHECK(*w.client.session_key() == *w.sp.session_key());

    // the key never crosses the wire in clear: no frame contains either half
    auto material = w.client.session_key()->material();
    ByteView enc_half(material.data(), 16), mac_half(material.data() + 16, 16);
    for (const auto& m : trace) {
        auto encoded = wire::encode_message(m);
        std::string hex = to_hex(*encoded);
        CHECK(hex.find(to_hex(enc_half)) == std::string::npos);
        CHECK(hex.find(to_hex(mac_half)) == std::string::npos);
    }
}

TEST_CASE("client performs zero asymmetric operations") {
    TestWorld w;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(first.has_value());
    std::vector<Message> pending{*first};
    crypto::OpCounts client_ops{};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        crypto::OpCounts before = op_counts();
        StepResult r = w.dispatch(m);
        if (m.dst.value == TestWorld::kClientId) client_ops += op_counts() - before;
        for (auto& out : r.out) pending.push_back(out);
    }
    CHECK(w.client.granted());
    CHECK(client_ops.asymmetric_total() == 0);
    CHECK(client_ops.sym_unprotect == 3);
}

TEST_CASE("assertion serialization: 95 bytes, roundtrip, wrong length rejected") {
    DeterministicRng rng(77);
    for (int i = 0; i < 50; ++i) {
        Assertion a;
        a.client_id = wire::EntityId(static_cast<uint32_t>(rng.bytes(3)[0]) + i);
        a.sp_id = wire::EntityId(0x20);
        a.n_sp = crypto::gen_nonce(rng);
        a.expires_at = 1'750'000'000 + i;
        rng.fill(a.idp_signature.data(), a.idp_signature.size());
        Bytes b = a.serialize();
        REQUIRE(b.size() == kAssertionSize);
        auto back = Assertion::parse(b);
        REQUIRE(back.has_value());
        CHECK(back->serialize() == b);
    }
    CHECK(!Assertion::parse(Bytes(94, 0)).has_value());
    CHECK(!Assertion::parse(Bytes(96, 0)).has_value());
}

TEST_CASE("idle client refuses inbound traffic; mid-run start refused") {
    TestWorld w;
    Message stray;
    stray.msg_type = wire::MessageType::Service;
    stray.dst = wire::EntityId(TestWorld::kClientId);
    stray.src = wire::EntityId(TestWorld::kSpId);
    auto r = w.client.on_message(w.env, stray);
    REQUIRE(r.issue.has_value());
    CHECK(r.issue->reason == AbortReason::ProtocolOrder);
    CHECK(!r.issue->fatal);
    CHECK(w.client.phase() == ClientPhase::Idle);

    auto m1 = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(m1.has_value());
    auto again = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(!again.has_value());
    CHECK(again.error() == AbortReason::ProtocolOrder);
}

TEST_CASE("strict FSM: unexpected type aborts, state does not mis-transition") {
    TestWorld w;
    auto m1 = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(m1.has_value());
    // client awaits ClientKey; feed it an Assertion-typed message instead
    Message wrong;
    wrong.msg_type = wire::MessageType::Assertion;
    wrong.src = wire::EntityId(TestWorld::kIdpId);
    wrong.dst = wire::EntityId(TestWorld::kClientId);
    wrong.payload = Bytes(143, 0);
    auto r = w.client.on_message(w.env, wrong);
    REQUIRE(r.issue.has_value());
    CHECK(r.issue->fatal);
    CHECK(w.client.phase() == ClientPhase::Aborted);
    CHECK(w.client.abort_reason() == AbortReason::UnexpectedType);
}

TEST_CASE("restart after abort issues a fresh key request with a new nonce") {
    TestWorld w;
    auto m1 = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(m1.has_value());
    w.client.on_timeout();
    CHECK(w.client.phase() == ClientPhase::Aborted);
    CHECK(w.client.abort_reason() == AbortReason::Timeout);
    auto m1b = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(m1b.has_value());
    CHECK(m1b->msg_type == wire::MessageType::KeyRequest);
    CHECK(m1b->seq == 0);
    CHECK(m1b->payload != m1->payload);  // fresh nonce and iv under the hood
}

TEST_CASE("tampered client key aborts the client with a MAC failure") {
    TestWorld w;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    std::vector<Message> pending{*first};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::ClientKey) {
            m.payload[20] ^= 0x01;
            auto r = w.client.on_message(w.env, m);
            REQUIRE(r.issue.has_value());
            CHECK(r.issue->reason == AbortReason::MacFailure);
            CHECK(w.client.phase() == ClientPhase::Aborted);
            return;
        }
        auto r = w.dispatch(m);
        for (auto& out : r.out) pending.push_back(out);
    }
    FAIL("ClientKey never observed");
}

TEST_CASE("fake SP with a self-made certificate is stopped at the IdP") {
    TestWorld w;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    std::vector<Message> pending{*first};
    std::vector<wire::MessageType> idp_outputs;
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::CertificateChallenge) {
            // adversary answers instead of the real SP: self-made cert, own key
            auto fake_kp = crypto::gen_keypair(w.rng);
            pki::ImplicitCertificate fake_cert;
            fake_cert.identity =
                TestWorld::identity(TestWorld::kSpId, pki::Role::ServiceProvider, 999);
            fake_cert.reconstruction_point = crypto::default_curve().compress(fake_kp.q);
            Nonce n_sp = crypto::gen_nonce(w.rng);
            Bytes payload = fake_cert.serialize();
            append(payload, n_sp.bytes);
            Bytes covered(m.payload.end() - 16, m.payload.end());  // n_idp
            append(covered, n_sp.bytes);
            append(covered, fake_cert.serialize());
            append(payload, crypto::ecdsa_sign(fake_kp.d, covered).serialize());
            Message forged = protocol::detail::make_msg(wire::MessageType::CertificateResponse,
                                                        0, wire::EntityId(TestWorld::kSpId),
                                                        wire::EntityId(TestWorld::kIdpId),
                                                        std::move(payload));
            auto r = w.idp.on_message(w.env, forged);
            REQUIRE(r.issue.has_value());
            CHECK(r.issue->reason == AbortReason::BadSignature);
            CHECK(r.out.empty());  // no SP key ever leaves
            auto session = w.idp.session(wire::EntityId(TestWorld::kClientId),
                                         wire::EntityId(TestWorld::kSpId));
            REQUIRE(session.has_value());
            CHECK(session->phase == IdpSessionPhase::Aborted);
            return;
        }
        auto r = w.dispatch(m);
        for (auto& out : r.out) {
            if (m.dst.value == TestWorld::kIdpId) idp_outputs.push_back(out.msg_type);
            pending.push_back(out);
        }
    }
    FAIL("challenge never observed");
}

TEST_CASE("replayed service request is denied, original outcome stands") {
    TestWorld w;
    std::optional<Message> recorded_m9;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    std::vector<Message> pending{*first};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::ServiceRequest) recorded_m9 = m;
        auto r = w.dispatch(m);
        for (auto& out : r.out) pending.push_back(out);
    }
    REQUIRE(w.client.granted());
    REQUIRE(recorded_m9.has_value());

    // second delivery of the recorded request
    auto r = w.sp.on_message(w.env, *recorded_m9);
    REQUIRE(r.issue.has_value());
    CHECK(r.issue->reason == AbortReason::Replay);
    CHECK(!r.issue->fatal);
    REQUIRE(r.out.size() == 1);  // denial goes out
    CHECK(w.sp.phase() == SpPhase::Done);
    CHECK(w.sp.replay_denials() == 1);

    // the denial is a Service message carrying the denied status
    const Message& denial = r.out[0];
    CHECK(denial.msg_type == wire::MessageType::Service);
}

TEST_CASE("replayed service message aborts the client with replay verdict") {
    TestWorld w;
    std::optional<Message> recorded_m10;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    std::vector<Message> pending{*first};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::Service) recorded_m10 = m;
        auto r = w.dispatch(m);
        for (auto& out : r.out) pending.push_back(out);
    }
    REQUIRE(w.client.granted());
    REQUIRE(recorded_m10.has_value());
    auto r = w.client.on_message(w.env, *recorded_m10);
    REQUIRE(r.issue.has_value());
    CHECK(r.issue->reason == AbortReason::Replay);
    CHECK(w.client.phase() == ClientPhase::Aborted);
}

TEST_CASE("assertion bound to a different session is refused by the SP") {
    // run one full session, capture the assertion, then splice it into a
    // second session with the same parties
    TestWorld w;
    std::optional<Message> first_m9;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    std::vector<Message> pending{*first};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::ServiceRequest && !first_m9) first_m9 = m;
        auto r = w.dispatch(m);
        for (auto& out : r.out) pending.push_back(out);
    }
    REQUIRE(w.client.granted());

    // second run: fresh session key and fresh n_sp at the SP
    auto restart = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(restart.has_value());
    pending = {*restart};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::ServiceRequest) {
            // splice: deliver the FIRST session's request into this session
            auto r = w.sp.on_message(w.env, *first_m9);
            REQUIRE(r.issue.has_value());
            // old session key no longer matches: authentication fails closed
            CHECK(r.issue->reason == AbortReason::MacFailure);
            CHECK(w.sp.phase() == SpPhase::Aborted);
            return;
        }
        auto r = w.dispatch(m);
        for (auto& out : r.out) pending.push_back(out);
    }
    FAIL("second service request never observed");
}

TEST_CASE("expired assertion is denied") {
    TestWorld w;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    std::vector<Message> pending{*first};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::ServiceRequest) {
            w.env.now_s += 301;  // past the assertion lifetime
            auto r = w.sp.on_message(w.env, m);
            REQUIRE(r.issue.has_value());
            CHECK(r.issue->reason == AbortReason::AssertionExpired);
            REQUIRE(r.out.size() == 1);
            CHECK(r.out[0].msg_type == wire::MessageType::Service);
            CHECK(w.sp.phase() == SpPhase::Aborted);
            return;
        }
        auto r = w.dispatch(m);
        for (auto& out : r.out) pending.push_back(out);
    }
    FAIL("service request never observed");
}

TEST_CASE("unknown client is dropped and audited at the IdP") {
    TestWorld w;
    Message m;
    m.msg_type = wire::MessageType::KeyRequest;
    m.src = wire::EntityId(0xBEEF);
    m.dst = wire::EntityId(TestWorld::kIdpId);
    m.payload = Bytes(51, 0x11);
    auto r = w.idp.on_message(w.env, m);
    REQUIRE(r.issue.has_value());
    CHECK(!r.issue->fatal);
    CHECK(r.issue->reason == AbortReason::UnknownPeer);
    CHECK(r.out.empty());
    REQUIRE(w.idp.audit().size() == 1);
    CHECK(w.idp.audit()[0].reason == AbortReason::UnknownPeer);
}

TEST_CASE("stale IdP sessions are garbage-collected") {
    TestWorld w;
    auto m1 = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    REQUIRE(m1.has_value());
    auto r1 = w.idp.on_message(w.env, *m1);
    REQUIRE(r1.out.size() == 1);  // challenge out, session open
    REQUIRE(w.idp.session(wire::EntityId(TestWorld::kClientId), wire::EntityId(TestWorld::kSpId))
                .has_value());

    // well past the session ttl, the next inbound event sweeps the table
    w.env.now_s += 60;
    Message probe;
    probe.msg_type = wire::MessageType::CertificateResponse;
    probe.src = wire::EntityId(TestWorld::kSpId);
    probe.dst = wire::EntityId(TestWorld::kIdpId);
    probe.payload = Bytes(151, 0);
    auto r2 = w.idp.on_message(w.env, probe);
    REQUIRE(r2.issue.has_value());
    CHECK(r2.issue->reason == AbortReason::UnexpectedType);  // no session left to match
    CHECK(!w.idp.session(wire::EntityId(TestWorld::kClientId), wire::EntityId(TestWorld::kSpId))
               .has_value());
}

TEST_CASE("assertion embeds the exact n_sp from the certificate exchange") {
    TestWorld w;
    std::optional<Bytes> m3_payload;
    std::optional<Message> m9;
    auto first = w.client.start(w.env, wire::EntityId(TestWorld::kSpId));
    std::vector<Message> pending{*first};
    while (!pending.empty()) {
        Message m = pending.front();
        pending.erase(pending.begin());
        if (m.msg_type == wire::MessageType::CertificateResponse) m3_payload = m.payload;
        if (m.msg_type == wire::MessageType::ServiceRequest) m9 = m;
        auto r = w.dispatch(m);
        for (auto& out : r.out) pending.push_back(out);
    }
    REQUIRE(w.client.granted());
    REQUIRE(m3_payload.has_value());
    REQUIRE(m9.has_value());
    // n_sp sits between cert and signature in the certificate-response
    ByteView n_sp(m3_payload->data() + pki::kImplicitCertSize, 16);
    // decrypt the service request with the session key to reach the assertion
    auto pt = crypto::sym_unprotect_bytes(
        *w.sp.session_key(), m9->payload, m9->seq,
        protocol::detail::dir_label(wire::EntityId(TestWorld::kClientId),
                                    wire::EntityId(TestWorld::kSpId)));
    REQUIRE(pt.has_value());
    auto assertion = Assertion::parse(ByteView(*pt).subspan(0, kAssertionSize));
    REQUIRE(assertion.has_value());
    CHECK(ct_equal(assertion->n_sp.bytes, n_sp));
}
