#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "flat/harness/material.hpp"
#include "flat/protocol.hpp"

// The hex files under tests/golden/ pin every externally visible byte
// layout. A mismatch here means the wire format changed; that is a breaking
// change, not a test to update casually.

using namespace flat;

namespace {

std::string load_golden(const char* name) {
    std::filesystem::path p = std::filesystem::path(FLAT_GOLDEN_DIR) / name;
    std::ifstream f(p);
    REQUIRE_MESSAGE(f.good(), "missing golden fixture (run golden_gen): ", p.string());
    std::string line;
    std::getline(f, line);
    return line;
}

}  // namespace

TEST_CASE("golden: wire message bytes") {
    wire::Message m;
    m.msg_type = wire::MessageType::CertificateChallenge;
    m.seq = 2;
    m.src = wire::EntityId(0x000030);
    m.dst = wire::EntityId(0x000020);
    m.payload = {0xDE, 0xAD, 0xBE, 0xEF, 0x00, 0x11};
    CHECK(to_hex(*wire::encode_message(m)) == load_golden("wire_message.hex"));
}

TEST_CASE("golden: identity and certificates from the seed-42 material") {
    harness::Material mat = harness::generate_material(42);
    CHECK(to_hex(mat.sp_icert.identity.serialize()) == load_golden("identity_info.hex"));
    CHECK(to_hex(mat.sp_icert.serialize()) == load_golden("implicit_cert.hex"));
    CHECK(to_hex(mat.client_cert.serialize()) == load_golden("explicit_cert.hex"));
    CHECK(to_hex(crypto::default_curve().compress(mat.q_ca)) == load_golden("ca_pub.hex"));
}

TEST_CASE("golden: deterministic signature bytes") {
    crypto::U256 sk = crypto::U256::from_hex(
        "c9afa9d845ba75166b5c215767b1d6934e50c3db36e89b127b8a622b120f6721");
    Bytes msg = {'g', 'o', 'l', 'd', 'e', 'n'};
    CHECK(to_hex(crypto::ecdsa_sign(sk, msg).serialize()) == load_golden("ecdsa_signature.hex"));
}

TEST_CASE("golden: ecies ciphertext under the pinned rng stream") {
    crypto::DeterministicRng rng(7);
    auto kp = crypto::gen_keypair(rng);
    Bytes pt = {0x01, 0x02, 0x03, 0x04, 0x05};
    auto ct = crypto::ecies_encrypt(rng, kp.q, pt);
    CHECK(to_hex(ct->serialize()) == load_golden("ecies_ciphertext.hex"));
}

TEST_CASE("golden: protected payload under the pinned rng stream") {
    crypto::DeterministicRng rng(7);
    auto key = crypto::SymmetricKey::from_material(rng.bytes(32));
    Bytes pt = {0xCA, 0xFE};
    Bytes dir_label = {0x00, 0x00, 0x10, 0x00, 0x00, 0x30};
    auto p = crypto::sym_protect(rng, key, pt, 1, dir_label);
    CHECK(to_hex(p->serialize()) == load_golden("protected_payload.hex"));
}

TEST_CASE("golden: assertion bytes") {
    harness::Material mat = harness::generate_material(42);
    protocol::Assertion a;
    a.client_id = wire::EntityId(harness::kClientId);
    a.sp_id = wire::EntityId(harness::kSpId);
    for (size_t i = 0; i < a.n_sp.bytes.size(); ++i) a.n_sp.bytes[i] = static_cast<uint8_t>(i);
    a.expires_at = 1'750'000'300;
    a.idp_signature = crypto::ecdsa_sign(mat.idp_d, a.signed_portion()).serialize();
    Bytes bytes = a.serialize();
    CHECK(bytes.size() == protocol::kAssertionSize);
    CHECK(to_hex(bytes) == load_golden("assertion.hex"));
}
