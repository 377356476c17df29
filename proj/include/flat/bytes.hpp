#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flat {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

inline Bytes to_bytes(ByteView v) { return Bytes(v.begin(), v.end()); }

inline Bytes operator+(Bytes lhs, ByteView rhs) {
    lhs.insert(lhs.end(), rhs.begin(), rhs.end());
    return lhs;
}

inline void append(Bytes& out, ByteView v) { out.insert(out.end(), v.begin(), v.end()); }

inline void append_u8(Bytes& out, uint8_t v) { out.push_back(v); }

// Big-endian field writers; all multi-byte wire integers are network order.
inline void append_u16be(Bytes& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline void append_u24be(Bytes& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline void append_u32be(Bytes& out, uint32_t v) {
    append_u16be(out, static_cast<uint16_t>(v >> 16));
    append_u16be(out, static_cast<uint16_t>(v));
}

inline void append_u64be(Bytes& out, uint64_t v) {
    append_u32be(out, static_cast<uint32_t>(v >> 32));
    append_u32be(out, static_cast<uint32_t>(v));
}

inline uint16_t read_u16be(ByteView b) {
    return static_cast<uint16_t>((b[0] << 8) | b[1]);
}

inline uint32_t read_u24be(ByteView b) {
    return (static_cast<uint32_t>(b[0]) << 16) | (static_cast<uint32_t>(b[1]) << 8) | b[2];
}

inline uint32_t read_u32be(ByteView b) {
    return (static_cast<uint32_t>(read_u16be(b)) << 16) | read_u16be(b.subspan(2));
}

inline uint64_t read_u64be(ByteView b) {
    return (static_cast<uint64_t>(read_u32be(b)) << 32) | read_u32be(b.subspan(4));
}

// Comparison that does not shortcut on the first mismatching byte.
inline bool ct_equal(ByteView a, ByteView b) {
    if (a.size() != b.size()) return false;
    uint8_t acc = 0;
    for (size_t i = 0; i < a.size(); ++i) acc |= static_cast<uint8_t>(a[i] ^ b[i]);
    return acc == 0;
}

inline std::string to_hex(ByteView v) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(v.size() * 2);
    for (uint8_t b : v) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0x0f]);
    }
    return s;
}

inline std::optional<Bytes> from_hex(std::string_view s) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (s.size() % 2 != 0) return std::nullopt;
    Bytes out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int hi = nibble(s[i]), lo = nibble(s[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<uint8_t>((hi << 4) | lo));
    }
    return out;
}

}  // namespace flat
