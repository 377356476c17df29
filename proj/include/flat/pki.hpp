#pragma once

#include <set>

#include "flat/bytes.hpp"
#include "flat/crypto/ec.hpp"
#include "flat/crypto/ecdsa.hpp"
#include "flat/crypto/ops.hpp"
#include "flat/crypto/sha256.hpp"
#include "flat/result.hpp"
#include "flat/wire.hpp"

namespace flat::pki {

using crypto::AffinePoint;
using crypto::Curve;
using crypto::Rng;
using crypto::U256;
using wire::EntityId;

inline constexpr size_t kIdentitySize = 37;
inline constexpr size_t kImplicitCertSize = 70;   // identity + reconstruction point
inline constexpr size_t kExplicitCertSize = 134;  // identity + raw key + CA signature

enum class Role : uint8_t {
    Client = 0x01,
    ServiceProvider = 0x02,
    IdentityProvider = 0x03,
    CertificateAuthority = 0x04,
};

enum class PkiError : uint8_t {
    BadLength,
    BadIdentity,     // reserved bytes nonzero or inverted validity window
    BadPoint,        // reconstruction or key data not on the curve
    SerialReused,
    ValidationFailed,  // reconstructed key pair is inconsistent
    OddPublicKey,      // explicit certificates require even-y keys
};

/// Fixed 37-byte subject block:
/// entity(3) | domain(3) | role(1) | serial(4) | not_before(8) | not_after(8) | reserved(10)
struct IdentityInfo {
    EntityId entity;
    uint32_t domain = 0;  // 24-bit
    Role role = Role::Client;
    uint32_t serial = 0;
    uint64_t not_before = 0;  // unix seconds
    uint64_t not_after = 0;

    Bytes serialize() const {
        Bytes out;
        out.reserve(kIdentitySize);
        append_u24be(out, entity.value);
        append_u24be(out, domain);
        append_u8(out, static_cast<uint8_t>(role));
        append_u32be(out, serial);
        append_u64be(out, not_before);
        append_u64be(out, not_after);
        out.resize(kIdentitySize, 0x00);  // reserved, all zero
        return out;
    }

    static Result<IdentityInfo, PkiError> parse(ByteView b) {
        if (b.size() != kIdentitySize) return PkiError::BadLength;
        IdentityInfo id;
        id.entity = EntityId(read_u24be(b.subspan(0, 3)));
        id.domain = read_u24be(b.subspan(3, 3));
        id.role = static_cast<Role>(b[6]);
        id.serial = read_u32be(b.subspan(7, 4));
        id.not_before = read_u64be(b.subspan(11, 8));
        id.not_after = read_u64be(b.subspan(19, 8));
        for (size_t i = 27; i < kIdentitySize; ++i) {
            if (b[i] != 0) return PkiError::BadIdentity;
        }
        if (id.not_before >= id.not_after) return PkiError::BadIdentity;
        return id;
    }

    bool valid_at(uint64_t now_s) const { return now_s >= not_before && now_s < not_after; }

    friend bool operator==(const IdentityInfo& a, const IdentityInfo& b) {
        return a.serialize() == b.serialize();
    }
};

/// ECQV credential: identity plus the public key reconstruction point.
/// The subject's key never appears explicitly; relying parties compute it.
struct ImplicitCertificate {
    IdentityInfo identity;
    std::array<uint8_t, crypto::kPointSize> reconstruction_point{};

    Bytes serialize() const {
        Bytes out = identity.serialize();
        append(out, reconstruction_point);
        return out;
    }

    static Result<ImplicitCertificate, PkiError> parse(ByteView b) {
        if (b.size() != kImplicitCertSize) return PkiError::BadLength;
        auto id = IdentityInfo::parse(b.subspan(0, kIdentitySize));
        if (!id) return id.error();
        ImplicitCertificate cert;
        cert.identity = *id;
        std::memcpy(cert.reconstruction_point.data(), b.data() + kIdentitySize,
                    crypto::kPointSize);
        return cert;
    }
};

/// Conventional credential: identity, raw x-only public key (even y), CA signature.
struct ExplicitCertificate {
    IdentityInfo identity;
    std::array<uint8_t, 32> public_key_x{};
    std::array<uint8_t, crypto::kSignatureSize> ca_signature{};

    Bytes signed_portion() const {
        Bytes out = identity.serialize();
        append(out, public_key_x);
        return out;
    }

    Bytes serialize() const {
        Bytes out = signed_portion();
        append(out, ca_signature);
        return out;
    }

    static Result<ExplicitCertificate, PkiError> parse(ByteView b) {
        if (b.size() != kExplicitCertSize) return PkiError::BadLength;
        auto id = IdentityInfo::parse(b.subspan(0, kIdentitySize));
        if (!id) return id.error();
        ExplicitCertificate cert;
        cert.identity = *id;
        std::memcpy(cert.public_key_x.data(), b.data() + kIdentitySize, 32);
        std::memcpy(cert.ca_signature.data(), b.data() + kIdentitySize + 32,
                    crypto::kSignatureSize);
        return cert;
    }

    /// Reconstructs the even-y point the certificate vouches for.
    std::optional<AffinePoint> public_key(const Curve& curve = crypto::default_curve()) const {
        std::array<uint8_t, crypto::kPointSize> compressed{};
        compressed[0] = 0x02;
        std::memcpy(compressed.data() + 1, public_key_x.data(), 32);
        return curve.decompress(compressed);
    }
};

/// Issues both certificate kinds. Issuance mutates the serial set and must be
/// serialized by the caller; everything else here is pure.
struct CertificateAuthority {
    U256 d_ca{};
    AffinePoint q_ca{};
    std::set<uint32_t> issued_serials;

    static CertificateAuthority generate(Rng& rng, const Curve& curve = crypto::default_curve()) {
        CertificateAuthority ca;
        auto kp = crypto::gen_keypair(rng, curve);
        ca.d_ca = kp.d;
        ca.q_ca = kp.q;
        return ca;
    }
};

struct EcqvRequest {
    IdentityInfo identity;
    std::array<uint8_t, crypto::kPointSize> r_u{};  // subject's commitment k_U * G
};

struct EcqvRequestOutcome {
    EcqvRequest request;
    U256 k_u;  // stays with the subject
};

struct EcqvIssued {
    ImplicitCertificate cert;
    U256 private_contribution;  // r; travels with the cert, never inside it
};

struct EcqvKeys {
    U256 d_u;
    AffinePoint q_u;
};

// e = H(cert) reduced mod n. The hash covers the full 70 serialized bytes.
inline U256 ecqv_hash(const ImplicitCertificate& cert, const Curve& curve) {
    crypto::Digest h = crypto::sha256(cert.serialize());
    U256 e = U256::from_be_bytes(h);
    return curve.fn().reduce_once(e);
}

inline EcqvRequestOutcome ecqv_request(Rng& rng, const IdentityInfo& identity,
                                       const Curve& curve = crypto::default_curve()) {
    EcqvRequestOutcome out;
    auto kp = crypto::gen_keypair(rng, curve);
    out.k_u = kp.d;
    out.request.identity = identity;
    out.request.r_u = curve.compress(kp.q);
    return out;
}

/// CA side: P_U = R_U + kG, r = e k + d_CA (mod n). `ca_k` is drawn fresh;
/// the test hook variant below lets tests pin it.
inline Result<EcqvIssued, PkiError> ecqv_generate_with_k(CertificateAuthority& ca,
                                                         const EcqvRequest& request,
                                                         const U256& ca_k,
                                                         const Curve& curve =
                                                             crypto::default_curve()) {
    if (ca.issued_serials.contains(request.identity.serial)) return PkiError::SerialReused;
    auto r_u = curve.decompress(request.r_u);
    if (!r_u) return PkiError::BadPoint;
    AffinePoint kg = ca_k.is_zero() ? AffinePoint::at_infinity() : curve.mul_base(ca_k);
    AffinePoint p_u = ca_k.is_zero()
                          ? *r_u
                          : curve.to_affine(curve.add(curve.to_jacobian(*r_u),
                                                      curve.to_jacobian(kg)));
    EcqvIssued issued;
    issued.cert.identity = request.identity;
    issued.cert.reconstruction_point = curve.compress(p_u);
    U256 e = ecqv_hash(issued.cert, curve);
    const crypto::MontCtx& fn = curve.fn();
    U256 ek = fn.from_mont(fn.mul(fn.to_mont(e), fn.to_mont(ca_k)));
    issued.private_contribution = fn.add(ek, ca.d_ca);
    ca.issued_serials.insert(request.identity.serial);
    return issued;
}

inline Result<EcqvIssued, PkiError> ecqv_generate(Rng& rng, CertificateAuthority& ca,
                                                  const EcqvRequest& request,
                                                  const Curve& curve = crypto::default_curve()) {
    return ecqv_generate_with_k(ca, request, curve.random_scalar(rng), curve);
}

/// Relying party side: Q_U = e P_U + Q_CA.
inline Result<AffinePoint, PkiError> ecqv_extract(const AffinePoint& q_ca,
                                                  const ImplicitCertificate& cert,
                                                  const Curve& curve = crypto::default_curve()) {
    crypto::op_counts().ecqv_extract++;
    auto p_u = curve.decompress(cert.reconstruction_point);
    if (!p_u) return PkiError::BadPoint;
    U256 e = ecqv_hash(cert, curve);
    AffinePoint q_u = curve.to_affine(
        curve.add(curve.mul_jac(e, *p_u), curve.to_jacobian(q_ca)));
    if (q_u.infinity) return PkiError::BadPoint;
    return q_u;
}

/// Subject side: d_U = r + e k_U (mod n), accepted only if d_U G matches the
/// extracted public key.
inline Result<EcqvKeys, PkiError> ecqv_receive(const ImplicitCertificate& cert, const U256& r,
                                               const U256& k_u, const AffinePoint& q_ca,
                                               const Curve& curve = crypto::default_curve()) {
    U256 e = ecqv_hash(cert, curve);
    const crypto::MontCtx& fn = curve.fn();
    U256 ek = fn.from_mont(fn.mul(fn.to_mont(e), fn.to_mont(k_u)));
    EcqvKeys keys;
    keys.d_u = fn.add(r, ek);
    if (keys.d_u.is_zero()) return PkiError::ValidationFailed;
    auto extracted = ecqv_extract(q_ca, cert, curve);
    if (!extracted) return extracted.error();
    keys.q_u = curve.mul_base(keys.d_u);
    if (!(keys.q_u == *extracted)) return PkiError::ValidationFailed;
    return keys;
}

inline Result<ExplicitCertificate, PkiError> explicit_issue(CertificateAuthority& ca,
                                                            const IdentityInfo& identity,
                                                            const AffinePoint& pk,
                                                            const Curve& curve =
                                                                crypto::default_curve()) {
    if (ca.issued_serials.contains(identity.serial)) return PkiError::SerialReused;
    if (pk.infinity || !curve.on_curve(pk)) return PkiError::BadPoint;
    if (pk.y.is_odd()) return PkiError::OddPublicKey;
    ExplicitCertificate cert;
    cert.identity = identity;
    cert.public_key_x = U256::to_be_bytes(pk.x);
    cert.ca_signature = crypto::ecdsa_sign(ca.d_ca, cert.signed_portion(), curve).serialize();
    ca.issued_serials.insert(identity.serial);
    return cert;
}

inline bool explicit_verify(const AffinePoint& q_ca, const ExplicitCertificate& cert,
                            uint64_t now_s, const Curve& curve = crypto::default_curve()) {
    if (!cert.identity.valid_at(now_s)) return false;
    return crypto::ecdsa_verify_bytes(q_ca, cert.signed_portion(), cert.ca_signature, curve);
}

}  // namespace flat::pki
