#pragma once

#include "flat/bytes.hpp"
#include "flat/crypto/aes.hpp"
#include "flat/crypto/kdf.hpp"
#include "flat/crypto/ops.hpp"
#include "flat/crypto/rng.hpp"
#include "flat/result.hpp"

namespace flat::crypto {

inline constexpr size_t kNonceSize = 16;
inline constexpr size_t kIvSize = 16;
inline constexpr size_t kTagSize = 16;  // HMAC-SHA256 truncated to 128 bits
inline constexpr size_t kChannelOverhead = kIvSize + kTagSize;
inline constexpr size_t kMaxChannelPlaintext = 280 - kChannelOverhead;

struct Nonce {
    std::array<uint8_t, kNonceSize> bytes{};

    friend bool operator==(const Nonce& a, const Nonce& b) { return a.bytes == b.bytes; }
    friend bool operator!=(const Nonce& a, const Nonce& b) { return !(a == b); }
};

inline Nonce gen_nonce(Rng& rng) {
    Nonce n;
    rng.fill(n.bytes.data(), n.bytes.size());
    return n;
}

/// Symmetric channel unit: iv || ct || tag, encrypt-then-MAC.
/// The tag covers direction || seq || iv || ct, so a payload replayed into
/// the wrong direction or sequence slot fails authentication outright.
struct ProtectedPayload {
    std::array<uint8_t, kIvSize> iv{};
    Bytes ct;
    std::array<uint8_t, kTagSize> tag{};

    Bytes serialize() const {
        Bytes out;
        out.reserve(kChannelOverhead + ct.size());
        append(out, iv);
        append(out, ct);
        append(out, tag);
        return out;
    }

    static std::optional<ProtectedPayload> parse(ByteView b) {
        if (b.size() < kChannelOverhead) return std::nullopt;
        ProtectedPayload p;
        std::memcpy(p.iv.data(), b.data(), kIvSize);
        p.ct.assign(b.begin() + kIvSize, b.end() - kTagSize);
        std::memcpy(p.tag.data(), b.data() + b.size() - kTagSize, kTagSize);
        return p;
    }
};

enum class ChannelError : uint8_t {
    Oversize,     // plaintext would not fit a wire payload
    AuthFailure,  // tag mismatch (tamper, wrong key, wrong seq or direction)
    Malformed,    // too short to contain iv and tag
};

namespace detail {
inline Digest channel_tag_input(const SymmetricKey& k, ByteView direction, uint8_t seq,
                                ByteView iv, ByteView ct) {
    Bytes mac_input;
    mac_input.reserve(direction.size() + 1 + iv.size() + ct.size());
    append(mac_input, direction);
    append_u8(mac_input, seq);
    append(mac_input, iv);
    append(mac_input, ct);
    return hmac_sha256(k.mac_key, mac_input);
}
}  // namespace detail

inline Result<ProtectedPayload, ChannelError> sym_protect(Rng& rng, const SymmetricKey& k,
                                                          ByteView pt, uint8_t seq,
                                                          ByteView direction) {
    if (pt.size() > kMaxChannelPlaintext) return ChannelError::Oversize;
    op_counts().sym_protect++;
    ProtectedPayload p;
    rng.fill(p.iv.data(), p.iv.size());
    op_counts().aes_ctr++;
    p.ct = aes128_ctr(k.enc_key, p.iv, pt);
    Digest mac = detail::channel_tag_input(k, direction, seq, p.iv, p.ct);
    std::memcpy(p.tag.data(), mac.data(), kTagSize);
    return p;
}

/// Tag verification is constant-time and strictly precedes decryption.
inline Result<Bytes, ChannelError> sym_unprotect(const SymmetricKey& k, const ProtectedPayload& p,
                                                 uint8_t seq, ByteView direction) {
    op_counts().sym_unprotect++;
    Digest mac = detail::channel_tag_input(k, direction, seq, p.iv, p.ct);
    if (!ct_equal(ByteView(mac.data(), kTagSize), p.tag)) return ChannelError::AuthFailure;
    op_counts().aes_ctr++;
    return aes128_ctr(k.enc_key, p.iv, p.ct);
}

inline Result<Bytes, ChannelError> sym_unprotect_bytes(const SymmetricKey& k, ByteView serialized,
                                                       uint8_t seq, ByteView direction) {
    auto p = ProtectedPayload::parse(serialized);
    if (!p) {
        op_counts().sym_unprotect++;
        return ChannelError::Malformed;
    }
    return sym_unprotect(k, *p, seq, direction);
}

}  // namespace flat::crypto
