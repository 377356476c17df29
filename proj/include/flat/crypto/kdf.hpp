#pragma once

#include "flat/bytes.hpp"
#include "flat/crypto/sha256.hpp"

namespace flat::crypto {

/// Split key material for the symmetric channel: AES-128 half + HMAC half.
struct SymmetricKey {
    std::array<uint8_t, 16> enc_key{};
    std::array<uint8_t, 16> mac_key{};

    /// First 16 bytes encrypt, last 16 authenticate.
    static SymmetricKey from_material(ByteView material32) {
        SymmetricKey k;
        std::memcpy(k.enc_key.data(), material32.data(), 16);
        std::memcpy(k.mac_key.data(), material32.data() + 16, 16);
        return k;
    }

    std::array<uint8_t, 32> material() const {
        std::array<uint8_t, 32> out;
        std::memcpy(out.data(), enc_key.data(), 16);
        std::memcpy(out.data() + 16, mac_key.data(), 16);
        return out;
    }

    friend bool operator==(const SymmetricKey& a, const SymmetricKey& b) {
        return a.enc_key == b.enc_key && a.mac_key == b.mac_key;
    }
};

inline constexpr std::string_view kKdfLabel = "flat/kdf/v1";

/// Deterministic 32-byte key derivation from a shared secret.
inline SymmetricKey kdf(ByteView z32) {
    ByteView label(reinterpret_cast<const uint8_t*>(kKdfLabel.data()), kKdfLabel.size());
    Bytes okm = hkdf(label, z32, {}, 32);
    return SymmetricKey::from_material(okm);
}

}  // namespace flat::crypto
