#pragma once

#include <array>

#include "flat/bytes.hpp"
#include "flat/crypto/ec.hpp"
#include "flat/crypto/ops.hpp"
#include "flat/crypto/sha256.hpp"

namespace flat::crypto {

inline constexpr size_t kSignatureSize = 65;

/// ECDSA signature over SHA-256. Serialized form is 65 bytes:
/// format byte (0x02 | parity of R.y) then r and s, each 32 bytes big-endian.
struct Signature {
    uint8_t format = 0x02;
    U256 r{};
    U256 s{};

    std::array<uint8_t, kSignatureSize> serialize() const {
        std::array<uint8_t, kSignatureSize> out{};
        out[0] = format;
        auto rb = U256::to_be_bytes(r);
        auto sb = U256::to_be_bytes(s);
        std::memcpy(out.data() + 1, rb.data(), 32);
        std::memcpy(out.data() + 33, sb.data(), 32);
        return out;
    }

    static std::optional<Signature> parse(ByteView b) {
        if (b.size() != kSignatureSize) return std::nullopt;
        Signature sig;
        sig.format = b[0];
        sig.r = U256::from_be_bytes(b.subspan(1, 32));
        sig.s = U256::from_be_bytes(b.subspan(33, 32));
        return sig;
    }
};

namespace detail {

// Deterministic nonce generation (HMAC-DRBG construction from RFC 6979).
class NonceDrbg {
public:
    NonceDrbg(const U256& priv, const Digest& h1, const Curve& curve) : curve_(curve) {
        v_.fill(0x01);
        k_.fill(0x00);
        auto x_b = U256::to_be_bytes(priv);
        auto h_b = U256::to_be_bytes(bits2octets(h1, curve));
        step(x_b, h_b, 0x00);
        step(x_b, h_b, 0x01);
    }

    U256 next() {
        for (;;) {
            Digest t = hmac_sha256(k_, v_);
            v_ = t;
            U256 k = U256::from_be_bytes(t);
            if (!k.is_zero() && U256::cmp(k, curve_.n()) < 0) return k;
            retune();
        }
    }

    void retune() {
        Bytes msg(v_.begin(), v_.end());
        msg.push_back(0x00);
        k_ = hmac_sha256(k_, msg);
        v_ = hmac_sha256(k_, v_);
    }

    static U256 bits2octets(const Digest& h1, const Curve& curve) {
        U256 e = U256::from_be_bytes(h1);
        return curve.fn().reduce_once(e);
    }

private:
    void step(const std::array<uint8_t, 32>& x_b, const std::array<uint8_t, 32>& h_b,
              uint8_t tag) {
        Bytes msg(v_.begin(), v_.end());
        msg.push_back(tag);
        append(msg, x_b);
        append(msg, h_b);
        k_ = hmac_sha256(k_, msg);
        v_ = hmac_sha256(k_, v_);
    }

    const Curve& curve_;
    Digest v_{};
    Digest k_{};
};

inline U256 hash_to_scalar(ByteView msg, const Curve& curve) {
    Digest h = sha256(msg);
    U256 e = U256::from_be_bytes(h);
    return curve.fn().reduce_once(e);
}

}  // namespace detail

inline Signature ecdsa_sign(const U256& priv, ByteView msg, const Curve& curve = default_curve()) {
    op_counts().ecdsa_sign++;
    const MontCtx& fn = curve.fn();
    Digest h1 = sha256(msg);
    U256 e = fn.reduce_once(U256::from_be_bytes(h1));
    detail::NonceDrbg drbg(priv, h1, curve);
    for (;;) {
        U256 k = drbg.next();
        AffinePoint R = curve.mul_base(k);
        U256 r = fn.reduce_once(R.x);  // x < p < 2n for our curves
        if (r.is_zero()) {
            drbg.retune();
            continue;
        }
        // s = k^{-1} (e + r d) mod n
        U256 rd = fn.from_mont(fn.mul(fn.to_mont(r), fn.to_mont(priv)));
        U256 sum = fn.add(e, rd);
        U256 kinv = fn.inverse(k);
        U256 s = fn.from_mont(fn.mul(fn.to_mont(kinv), fn.to_mont(sum)));
        if (s.is_zero()) {
            drbg.retune();
            continue;
        }
        Signature sig;
        sig.format = static_cast<uint8_t>(0x02 | (R.y.is_odd() ? 1 : 0));
        sig.r = r;
        sig.s = s;
        return sig;
    }
}

/// False on any malformed input; never throws.
inline bool ecdsa_verify(const AffinePoint& pub, ByteView msg, const Signature& sig,
                         const Curve& curve = default_curve()) {
    op_counts().ecdsa_verify++;
    if (pub.infinity || !curve.on_curve(pub)) return false;
    if (sig.format != 0x02 && sig.format != 0x03) return false;
    const MontCtx& fn = curve.fn();
    if (sig.r.is_zero() || U256::cmp(sig.r, curve.n()) >= 0) return false;
    if (sig.s.is_zero() || U256::cmp(sig.s, curve.n()) >= 0) return false;
    U256 e = detail::hash_to_scalar(msg, curve);
    U256 w = fn.inverse(sig.s);
    U256 w_m = fn.to_mont(w);
    U256 u1 = fn.from_mont(fn.mul(fn.to_mont(e), w_m));
    U256 u2 = fn.from_mont(fn.mul(fn.to_mont(sig.r), w_m));
    AffinePoint R = curve.mul_add(u1, pub, u2);
    if (R.infinity) return false;
    if (fn.reduce_once(R.x) != sig.r) return false;
    // The format byte commits to R's y parity; a flipped byte must not verify.
    return (R.y.is_odd() ? 0x03 : 0x02) == sig.format;
}

inline bool ecdsa_verify_bytes(const AffinePoint& pub, ByteView msg, ByteView sig65,
                               const Curve& curve = default_curve()) {
    auto sig = Signature::parse(sig65);
    if (!sig) {
        op_counts().ecdsa_verify++;  // a failed parse still counts as an attempt
        return false;
    }
    return ecdsa_verify(pub, msg, *sig, curve);
}

}  // namespace flat::crypto
