#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "flat/baseline.hpp"
#include "flat/crypto/rng.hpp"
#include "flat/pki.hpp"
#include "flat/protocol.hpp"

namespace flat::harness {

using wire::EntityId;

/// Fixed entity numbering for a single-client, single-SP, single-IdP domain.
inline constexpr uint32_t kCaId = 0x000001;
inline constexpr uint32_t kClientId = 0x000010;
inline constexpr uint32_t kSpId = 0x000020;
inline constexpr uint32_t kIdpId = 0x000030;

// Certificate validity window wide enough for both the simulated clock and
// real wall clocks: 2024-01-01 .. 2100-01-01.
inline constexpr uint64_t kNotBefore = 1704067200;
inline constexpr uint64_t kNotAfter = 4102444800;

/// Every key and certificate a scenario needs, for both protocols.
struct Material {
    uint64_t seed = 0;

    crypto::U256 ca_d;
    crypto::AffinePoint q_ca;

    // lightweight protocol: pre-shared client key, ECQV-certified SP and IdP
    crypto::SymmetricKey k_ci;
    crypto::U256 sp_d, idp_d;
    pki::ImplicitCertificate sp_icert, idp_icert;

    // comparison protocol: explicit certificates all around plus a credential
    crypto::U256 client_xd, sp_xd, idp_xd;
    pki::ExplicitCertificate client_cert, sp_cert, idp_cert;
    std::array<uint8_t, baseline::kCredentialSize> credential{};
};

namespace detail {

inline pki::IdentityInfo identity(uint32_t entity, pki::Role role, uint32_t serial) {
    pki::IdentityInfo id;
    id.entity = EntityId(entity);
    id.domain = 1;
    id.role = role;
    id.serial = serial;
    id.not_before = kNotBefore;
    id.not_after = kNotAfter;
    return id;
}

}  // namespace detail

/// Deterministic from the seed: rerunning setup reproduces identical bytes.
inline Material generate_material(uint64_t seed) {
    crypto::DeterministicRng rng(seed);
    Material m;
    m.seed = seed;

    pki::CertificateAuthority ca = pki::CertificateAuthority::generate(rng);
    m.ca_d = ca.d_ca;
    m.q_ca = ca.q_ca;

    m.k_ci = crypto::SymmetricKey::from_material(rng.bytes(32));

    auto issue_implicit = [&](uint32_t entity, pki::Role role, uint32_t serial) {
        auto req = pki::ecqv_request(rng, detail::identity(entity, role, serial));
        auto issued = pki::ecqv_generate(rng, ca, req.request);
        auto keys =
            pki::ecqv_receive(issued->cert, issued->private_contribution, req.k_u, ca.q_ca);
        return std::pair{keys->d_u, issued->cert};
    };
    std::tie(m.sp_d, m.sp_icert) = issue_implicit(kSpId, pki::Role::ServiceProvider, 1);
    std::tie(m.idp_d, m.idp_icert) = issue_implicit(kIdpId, pki::Role::IdentityProvider, 2);

    auto issue_explicit = [&](uint32_t entity, pki::Role role, uint32_t serial) {
        auto kp = crypto::gen_keypair_even_y(rng);
        auto cert = pki::explicit_issue(ca, detail::identity(entity, role, serial), kp.q);
        return std::pair{kp.d, *cert};
    };
    std::tie(m.client_xd, m.client_cert) = issue_explicit(kClientId, pki::Role::Client, 3);
    std::tie(m.sp_xd, m.sp_cert) = issue_explicit(kSpId, pki::Role::ServiceProvider, 4);
    std::tie(m.idp_xd, m.idp_cert) = issue_explicit(kIdpId, pki::Role::IdentityProvider, 5);

    rng.fill(m.credential.data(), m.credential.size());
    return m;
}

// ---------------------------------------------------------------------------
// Hex-file persistence with a manifest. One secret or certificate per file.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_hex_file(const std::filesystem::path& p, ByteView bytes) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << to_hex(bytes) << "\n";
}

inline Bytes read_hex_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    std::string line;
    std::getline(f, line);
    auto bytes = from_hex(line);
    if (!bytes) throw std::runtime_error("not hex: " + p.string());
    return *bytes;
}

inline Bytes scalar_bytes(const crypto::U256& d) {
    auto b = crypto::U256::to_be_bytes(d);
    return Bytes(b.begin(), b.end());
}

}  // namespace detail

inline void write_material(const Material& m, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto& curve = crypto::default_curve();

    detail::write_hex_file(dir / "ca.key", detail::scalar_bytes(m.ca_d));
    detail::write_hex_file(dir / "ca.pub", curve.compress(m.q_ca));

    detail::write_hex_file(dir / "client.psk", m.k_ci.material());
    detail::write_hex_file(dir / "client.key", detail::scalar_bytes(m.client_xd));
    detail::write_hex_file(dir / "client.cert", m.client_cert.serialize());
    detail::write_hex_file(dir / "client.cred", m.credential);

    detail::write_hex_file(dir / "sp.key", detail::scalar_bytes(m.sp_d));
    detail::write_hex_file(dir / "sp.icert", m.sp_icert.serialize());
    detail::write_hex_file(dir / "sp_explicit.key", detail::scalar_bytes(m.sp_xd));
    detail::write_hex_file(dir / "sp.cert", m.sp_cert.serialize());

    detail::write_hex_file(dir / "idp.key", detail::scalar_bytes(m.idp_d));
    detail::write_hex_file(dir / "idp.icert", m.idp_icert.serialize());
    detail::write_hex_file(dir / "idp_explicit.key", detail::scalar_bytes(m.idp_xd));
    detail::write_hex_file(dir / "idp.cert", m.idp_cert.serialize());

    nlohmann::json manifest;
    manifest["seed"] = m.seed;
    manifest["entities"] = nlohmann::json::array();
    manifest["entities"].push_back(
        {{"id", kCaId}, {"role", "ca"}, {"files", {"ca.key", "ca.pub"}}});
    manifest["entities"].push_back(
        {{"id", kClientId},
         {"role", "client"},
         {"files", {"client.psk", "client.key", "client.cert", "client.cred"}}});
    manifest["entities"].push_back(
        {{"id", kSpId},
         {"role", "sp"},
         {"files", {"sp.key", "sp.icert", "sp_explicit.key", "sp.cert"}}});
    manifest["entities"].push_back(
        {{"id", kIdpId},
         {"role", "idp"},
         {"files", {"idp.key", "idp.icert", "idp_explicit.key", "idp.cert"}}});
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

inline Material load_material(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const auto& curve = crypto::default_curve();
    Material m;

    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("no manifest.json in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    m.seed = manifest.at("seed").get<uint64_t>();

    m.ca_d = crypto::U256::from_be_bytes(detail::read_hex_file(dir / "ca.key"));
    auto q_ca = curve.decompress(detail::read_hex_file(dir / "ca.pub"));
    if (!q_ca) throw std::runtime_error("ca.pub is not a curve point");
    m.q_ca = *q_ca;

    m.k_ci = crypto::SymmetricKey::from_material(detail::read_hex_file(dir / "client.psk"));
    m.client_xd = crypto::U256::from_be_bytes(detail::read_hex_file(dir / "client.key"));
    auto ccert = pki::ExplicitCertificate::parse(detail::read_hex_file(dir / "client.cert"));
    if (!ccert) throw std::runtime_error("client.cert malformed");
    m.client_cert = *ccert;
    Bytes cred = detail::read_hex_file(dir / "client.cred");
    if (cred.size() != m.credential.size()) throw std::runtime_error("client.cred malformed");
    std::memcpy(m.credential.data(), cred.data(), cred.size());

    m.sp_d = crypto::U256::from_be_bytes(detail::read_hex_file(dir / "sp.key"));
    auto sp_icert = pki::ImplicitCertificate::parse(detail::read_hex_file(dir / "sp.icert"));
    if (!sp_icert) throw std::runtime_error("sp.icert malformed");
    m.sp_icert = *sp_icert;
    m.sp_xd = crypto::U256::from_be_bytes(detail::read_hex_file(dir / "sp_explicit.key"));
    auto sp_cert = pki::ExplicitCertificate::parse(detail::read_hex_file(dir / "sp.cert"));
    if (!sp_cert) throw std::runtime_error("sp.cert malformed");
    m.sp_cert = *sp_cert;

    m.idp_d = crypto::U256::from_be_bytes(detail::read_hex_file(dir / "idp.key"));
    auto idp_icert = pki::ImplicitCertificate::parse(detail::read_hex_file(dir / "idp.icert"));
    if (!idp_icert) throw std::runtime_error("idp.icert malformed");
    m.idp_icert = *idp_icert;
    m.idp_xd = crypto::U256::from_be_bytes(detail::read_hex_file(dir / "idp_explicit.key"));
    auto idp_cert = pki::ExplicitCertificate::parse(detail::read_hex_file(dir / "idp.cert"));
    if (!idp_cert) throw std::runtime_error("idp.cert malformed");
    m.idp_cert = *idp_cert;
    return m;
}

// Role configuration builders shared by every scenario runner.

inline protocol::ClientConfig flat_client_config(const Material& m) {
    protocol::ClientConfig cfg;
    cfg.id = EntityId(kClientId);
    cfg.idp_id = EntityId(kIdpId);
    cfg.k_ci = m.k_ci;
    return cfg;
}

inline protocol::SpConfig flat_sp_config(const Material& m) {
    protocol::SpConfig cfg;
    cfg.id = EntityId(kSpId);
    cfg.d_sp = m.sp_d;
    cfg.cert = m.sp_icert;
    cfg.q_ca = m.q_ca;
    return cfg;
}

inline protocol::IdpConfig flat_idp_config(const Material& m) {
    protocol::IdpConfig cfg;
    cfg.id = EntityId(kIdpId);
    cfg.d_idp = m.idp_d;
    cfg.cert = m.idp_icert;
    cfg.q_ca = m.q_ca;
    cfg.client_keys[kClientId] = m.k_ci;
    return cfg;
}

inline baseline::ClientConfig baseline_client_config(const Material& m) {
    baseline::ClientConfig cfg;
    cfg.id = EntityId(kClientId);
    cfg.idp_id = EntityId(kIdpId);
    cfg.d_c = m.client_xd;
    cfg.cert = m.client_cert;
    cfg.credential = m.credential;
    cfg.q_ca = m.q_ca;
    return cfg;
}

inline baseline::SpConfig baseline_sp_config(const Material& m) {
    baseline::SpConfig cfg;
    cfg.id = EntityId(kSpId);
    cfg.idp_id = EntityId(kIdpId);
    cfg.d_sp = m.sp_xd;
    cfg.cert = m.sp_cert;
    cfg.idp_cert = m.idp_cert;
    cfg.q_ca = m.q_ca;
    return cfg;
}

inline baseline::IdpConfig baseline_idp_config(const Material& m) {
    baseline::IdpConfig cfg;
    cfg.id = EntityId(kIdpId);
    cfg.d_idp = m.idp_xd;
    cfg.cert = m.idp_cert;
    cfg.q_ca = m.q_ca;
    cfg.credentials[kClientId] = m.credential;
    return cfg;
}

}  // namespace flat::harness
