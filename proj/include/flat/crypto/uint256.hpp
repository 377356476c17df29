#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string_view>

#include "flat/bytes.hpp"

namespace flat::crypto {

/// Unsigned 256-bit integer, four little-endian 64-bit limbs.
struct U256 {
    std::array<uint64_t, 4> w{};

    static U256 zero() { return U256{}; }
    static U256 one() {
        U256 v;
        v.w[0] = 1;
        return v;
    }

    bool is_zero() const { return (w[0] | w[1] | w[2] | w[3]) == 0; }
    bool is_odd() const { return w[0] & 1; }
    bool bit(int i) const { return (w[i >> 6] >> (i & 63)) & 1; }

    int bit_length() const {
        for (int i = 3; i >= 0; --i) {
            if (w[i] != 0) return 64 * i + 64 - __builtin_clzll(w[i]);
        }
        return 0;
    }

    friend bool operator==(const U256& a, const U256& b) { return a.w == b.w; }
    friend bool operator!=(const U256& a, const U256& b) { return a.w != b.w; }

    // -1, 0, 1
    static int cmp(const U256& a, const U256& b) {
        for (int i = 3; i >= 0; --i) {
            if (a.w[i] != b.w[i]) return a.w[i] < b.w[i] ? -1 : 1;
        }
        return 0;
    }

    static std::array<uint8_t, 32> to_be_bytes(const U256& a) {
        std::array<uint8_t, 32> out;
        for (int i = 0; i < 4; ++i) {
            uint64_t limb = a.w[3 - i];
            for (int j = 0; j < 8; ++j) out[8 * i + j] = static_cast<uint8_t>(limb >> (56 - 8 * j));
        }
        return out;
    }

    static U256 from_be_bytes(ByteView b32) {
        U256 a;
        for (int i = 0; i < 4; ++i) {
            uint64_t limb = 0;
            for (int j = 0; j < 8; ++j) limb = (limb << 8) | b32[8 * i + j];
            a.w[3 - i] = limb;
        }
        return a;
    }

    static U256 from_hex(std::string_view hex64) {
        auto bytes = flat::from_hex(hex64);
        return from_be_bytes(*bytes);
    }
};

// a + b -> (sum, carry)
inline uint64_t u256_add(const U256& a, const U256& b, U256& out) {
    unsigned __int128 c = 0;
    for (int i = 0; i < 4; ++i) {
        c += static_cast<unsigned __int128>(a.w[i]) + b.w[i];
        out.w[i] = static_cast<uint64_t>(c);
        c >>= 64;
    }
    return static_cast<uint64_t>(c);
}

// a - b -> (diff, borrow)
inline uint64_t u256_sub(const U256& a, const U256& b, U256& out) {
    unsigned __int128 borrow = 0;
    for (int i = 0; i < 4; ++i) {
        unsigned __int128 d = static_cast<unsigned __int128>(a.w[i]) - b.w[i] - borrow;
        out.w[i] = static_cast<uint64_t>(d);
        borrow = (d >> 64) & 1;
    }
    return static_cast<uint64_t>(borrow);
}

/// Montgomery arithmetic context for one odd modulus > 2^255.
/// Values inside the domain are kept in [0, m).
struct MontCtx {
    U256 m;    // modulus
    U256 r1;   // R mod m, R = 2^256 (Montgomery form of 1)
    U256 r2;   // R^2 mod m
    uint64_t n0 = 0;  // -m^{-1} mod 2^64

    explicit MontCtx(const U256& modulus) : m(modulus) {
        // Newton's iteration for the inverse of m mod 2^64.
        uint64_t inv = m.w[0];
        for (int i = 0; i < 5; ++i) inv *= 2 - m.w[0] * inv;
        n0 = ~inv + 1;
        // R mod m = 2^256 - m, valid because m > 2^255.
        U256 zero{};
        u256_sub(zero, m, r1);
        // R^2 = (R mod m) doubled 256 times.
        r2 = r1;
        for (int i = 0; i < 256; ++i) r2 = add(r2, r2);
    }

    U256 add(const U256& a, const U256& b) const {
        U256 s;
        uint64_t carry = u256_add(a, b, s);
        if (carry || U256::cmp(s, m) >= 0) {
            U256 t;
            u256_sub(s, m, t);
            return t;
        }
        return s;
    }

    U256 sub(const U256& a, const U256& b) const {
        U256 d;
        if (u256_sub(a, b, d)) {
            U256 t;
            u256_add(d, m, t);
            return t;
        }
        return d;
    }

    U256 neg(const U256& a) const { return a.is_zero() ? a : sub(U256::zero(), a); }

    // CIOS Montgomery multiplication: a * b * R^{-1} mod m.
    U256 mul(const U256& a, const U256& b) const {
        uint64_t t[6] = {0, 0, 0, 0, 0, 0};
        for (int i = 0; i < 4; ++i) {
            unsigned __int128 c = 0;
            for (int j = 0; j < 4; ++j) {
                c += static_cast<unsigned __int128>(a.w[i]) * b.w[j] + t[j];
                t[j] = static_cast<uint64_t>(c);
                c >>= 64;
            }
            c += t[4];
            t[4] = static_cast<uint64_t>(c);
            t[5] = static_cast<uint64_t>(c >> 64);

            uint64_t mu = t[0] * n0;
            c = static_cast<unsigned __int128>(mu) * m.w[0] + t[0];
            c >>= 64;
            for (int j = 1; j < 4; ++j) {
                c += static_cast<unsigned __int128>(mu) * m.w[j] + t[j];
                t[j - 1] = static_cast<uint64_t>(c);
                c >>= 64;
            }
            c += t[4];
            t[3] = static_cast<uint64_t>(c);
            t[4] = t[5] + static_cast<uint64_t>(c >> 64);
            t[5] = 0;
        }
        U256 r{{t[0], t[1], t[2], t[3]}};
        if (t[4] || U256::cmp(r, m) >= 0) {
            U256 d;
            u256_sub(r, m, d);
            return d;
        }
        return r;
    }

    U256 square(const U256& a) const { return mul(a, a); }

    U256 to_mont(const U256& a) const { return mul(a, r2); }
    U256 from_mont(const U256& a) const { return mul(a, U256::one()); }

    // base (Montgomery form) raised to a plain exponent; result in Montgomery form.
    U256 pow(const U256& base_m, const U256& exp) const {
        U256 result = r1;
        int top = exp.bit_length();
        for (int i = top - 1; i >= 0; --i) {
            result = square(result);
            if (exp.bit(i)) result = mul(result, base_m);
        }
        return result;
    }

    // a^{-1} mod m for prime m (Fermat), plain-form input and output.
    U256 inverse(const U256& a) const {
        U256 e;
        U256 two{{2, 0, 0, 0}};
        u256_sub(m, two, e);
        return from_mont(pow(to_mont(a), e));
    }

    // Plain-form modular reduction of a value already < 2m (convenience for hashes).
    U256 reduce_once(const U256& a) const {
        if (U256::cmp(a, m) >= 0) {
            U256 d;
            u256_sub(a, m, d);
            return d;
        }
        return a;
    }
};

}  // namespace flat::crypto
