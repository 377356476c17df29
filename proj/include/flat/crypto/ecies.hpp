#pragma once

#include "flat/bytes.hpp"
#include "flat/crypto/aes.hpp"
#include "flat/crypto/ec.hpp"
#include "flat/crypto/kdf.hpp"
#include "flat/crypto/ops.hpp"
#include "flat/result.hpp"

namespace flat::crypto {

inline constexpr size_t kEciesTagSize = 32;
inline constexpr size_t kEciesOverhead = kPointSize + kEciesTagSize;  // 65

/// ECIES ciphertext triple: ephemeral point R, stream ciphertext EM and
/// MAC tag D, serialized R || EM || D (65 bytes of overhead).
struct EciesCiphertext {
    std::array<uint8_t, kPointSize> ephemeral{};
    Bytes em;
    std::array<uint8_t, kEciesTagSize> tag{};

    Bytes serialize() const {
        Bytes out(kEciesOverhead + em.size());
        std::memcpy(out.data(), ephemeral.data(), kPointSize);
        if (!em.empty()) std::memcpy(out.data() + kPointSize, em.data(), em.size());
        std::memcpy(out.data() + kPointSize + em.size(), tag.data(), kEciesTagSize);
        return out;
    }

    static std::optional<EciesCiphertext> parse(ByteView b) {
        if (b.size() < kEciesOverhead) return std::nullopt;
        EciesCiphertext c;
        std::memcpy(c.ephemeral.data(), b.data(), kPointSize);
        c.em.assign(b.begin() + kPointSize, b.end() - kEciesTagSize);
        std::memcpy(c.tag.data(), b.data() + b.size() - kEciesTagSize, kEciesTagSize);
        return c;
    }
};

enum class EciesError : uint8_t {
    BadPoint,     // recipient key or ephemeral point not a usable curve point
    AuthFailure,  // tag mismatch; no plaintext is released
    Malformed,    // shorter than the fixed overhead
};

namespace detail {
inline SymmetricKey ecies_derive(const Curve& curve, const AffinePoint& shared) {
    auto z = U256::to_be_bytes(shared.x);
    (void)curve;
    return kdf(z);
}
}  // namespace detail

inline Result<EciesCiphertext, EciesError> ecies_encrypt(Rng& rng, const AffinePoint& recipient,
                                                         ByteView pt,
                                                         const Curve& curve = default_curve()) {
    if (recipient.infinity || !curve.on_curve(recipient)) return EciesError::BadPoint;
    op_counts().ecies_enc++;
    U256 k = curve.random_scalar(rng);
    AffinePoint ephemeral = curve.mul_base(k);
    AffinePoint shared = curve.mul(k, recipient);
    SymmetricKey key = detail::ecies_derive(curve, shared);
    EciesCiphertext c;
    c.ephemeral = curve.compress(ephemeral);
    static constexpr std::array<uint8_t, 16> kZeroIv{};
    op_counts().aes_ctr++;
    c.em = aes128_ctr(key.enc_key, kZeroIv, pt);
    Digest d = hmac_sha256(key.mac_key, c.em);
    c.tag = d;
    return c;
}

/// Tag check happens before any decryption (encrypt-then-MAC discipline).
inline Result<Bytes, EciesError> ecies_decrypt(const U256& priv, const EciesCiphertext& c,
                                               const Curve& curve = default_curve()) {
    op_counts().ecies_dec++;
    auto ephemeral = curve.decompress(c.ephemeral);
    if (!ephemeral) return EciesError::BadPoint;
    AffinePoint shared = curve.mul(priv, *ephemeral);
    if (shared.infinity) return EciesError::BadPoint;
    SymmetricKey key = detail::ecies_derive(curve, shared);
    Digest d = hmac_sha256(key.mac_key, c.em);
    if (!ct_equal(d, c.tag)) return EciesError::AuthFailure;
    op_counts().aes_ctr++;
    static constexpr std::array<uint8_t, 16> kZeroIv{};
    return aes128_ctr(key.enc_key, kZeroIv, c.em);
}

inline Result<Bytes, EciesError> ecies_decrypt_bytes(const U256& priv, ByteView serialized,
                                                     const Curve& curve = default_curve()) {
    auto c = EciesCiphertext::parse(serialized);
    if (!c) {
        op_counts().ecies_dec++;
        return EciesError::Malformed;
    }
    return ecies_decrypt(priv, *c, curve);
}

}  // namespace flat::crypto
