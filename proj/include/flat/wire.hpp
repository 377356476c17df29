#pragma once

#include <cstdint>

#include "flat/bytes.hpp"
#include "flat/result.hpp"

namespace flat::wire {

// Message header, 10 bytes, fixed:
//   type(1) | seq(1) | src(3, BE) | dst(3, BE) | payload_len(2, BE)
// followed by a payload of at most 280 bytes.
inline constexpr size_t kHeaderSize = 10;
inline constexpr size_t kMaxPayload = 280;
inline constexpr size_t kMaxFrame = kHeaderSize + kMaxPayload;

/// The ten protocol message types, codes 0x01-0x0A in protocol step order.
/// Codes 0x81-0x88 are a reserved namespace for the comparison protocol;
/// the two sets never appear in the same session. 0x00 is reserved.
enum class MessageType : uint8_t {
    KeyRequest = 0x01,
    ClientKey = 0x02,
    CertificateChallenge = 0x03,
    CertificateResponse = 0x04,
    SpKey = 0x05,
    KeyAcknowledgment = 0x06,
    AssertionRequest = 0x07,
    Assertion = 0x08,
    ServiceRequest = 0x09,
    Service = 0x0A,

    BaselineServiceInit = 0x81,
    BaselineRedirect = 0x82,
    BaselineAssertionRequest = 0x83,
    BaselineChallenge = 0x84,
    BaselineCredentials = 0x85,
    BaselineAssertion = 0x86,
    BaselineServiceRequest = 0x87,
    BaselineServiceGrant = 0x88,
};

inline bool is_known_type(uint8_t code) {
    return (code >= 0x01 && code <= 0x0A) || (code >= 0x81 && code <= 0x88);
}

inline const char* type_name(MessageType t) {
    switch (t) {
        case MessageType::KeyRequest: return "key request";
        case MessageType::ClientKey: return "Client key";
        case MessageType::CertificateChallenge: return "certificate-challenge";
        case MessageType::CertificateResponse: return "certificate-response";
        case MessageType::SpKey: return "SP key";
        case MessageType::KeyAcknowledgment: return "key acknowledgment";
        case MessageType::AssertionRequest: return "assertion request";
        case MessageType::Assertion: return "assertion";
        case MessageType::ServiceRequest: return "service request";
        case MessageType::Service: return "service";
        case MessageType::BaselineServiceInit: return "baseline service init";
        case MessageType::BaselineRedirect: return "baseline redirect";
        case MessageType::BaselineAssertionRequest: return "baseline assertion request";
        case MessageType::BaselineChallenge: return "baseline challenge";
        case MessageType::BaselineCredentials: return "baseline credentials";
        case MessageType::BaselineAssertion: return "baseline assertion";
        case MessageType::BaselineServiceRequest: return "baseline service request";
        case MessageType::BaselineServiceGrant: return "baseline service grant";
    }
    return "?";
}

/// Application-layer entity identifier, 3 bytes on the wire.
struct EntityId {
    uint32_t value = 0;  // must fit 24 bits

    static constexpr uint32_t kMax = 0x00FF'FFFF;

    constexpr EntityId() = default;
    constexpr explicit EntityId(uint32_t v) : value(v & kMax) {}

    friend bool operator==(EntityId a, EntityId b) { return a.value == b.value; }
    friend bool operator!=(EntityId a, EntityId b) { return a.value != b.value; }
    friend bool operator<(EntityId a, EntityId b) { return a.value < b.value; }
};

struct Message {
    MessageType msg_type = MessageType::KeyRequest;
    uint8_t seq = 0;
    EntityId src;
    EntityId dst;
    Bytes payload;

    friend bool operator==(const Message& a, const Message& b) {
        return a.msg_type == b.msg_type && a.seq == b.seq && a.src == b.src &&
               a.dst == b.dst && a.payload == b.payload;
    }
};

enum class DecodeError : uint8_t {
    TruncatedHeader,   // fewer than 10 bytes
    TruncatedPayload,  // payload_len exceeds remaining bytes
    Oversize,          // payload_len > 280
    UnknownType,       // type code outside the documented namespaces
};

enum class EncodeError : uint8_t {
    Oversize,  // payload longer than 280 bytes
};

inline const char* decode_error_name(DecodeError e) {
    switch (e) {
        case DecodeError::TruncatedHeader: return "truncated-header";
        case DecodeError::TruncatedPayload: return "truncated-payload";
        case DecodeError::Oversize: return "oversize";
        case DecodeError::UnknownType: return "unknown-type";
    }
    return "?";
}

inline Result<Bytes, EncodeError> encode_message(const Message& m) {
    if (m.payload.size() > kMaxPayload) return EncodeError::Oversize;
    Bytes out;
    out.reserve(kHeaderSize + m.payload.size());
    append_u8(out, static_cast<uint8_t>(m.msg_type));
    append_u8(out, m.seq);
    append_u24be(out, m.src.value);
    append_u24be(out, m.dst.value);
    append_u16be(out, static_cast<uint16_t>(m.payload.size()));
    append(out, m.payload);
    return out;
}

struct Decoded {
    Message message;
    size_t consumed = 0;  // always 10 + payload_len
};

/// Total over arbitrary input: returns a message or a typed error, never throws.
inline Result<Decoded, DecodeError> decode_message(ByteView b) {
    if (b.size() < kHeaderSize) return DecodeError::TruncatedHeader;
    const uint8_t type_code = b[0];
    if (!is_known_type(type_code)) return DecodeError::UnknownType;
    const size_t payload_len = read_u16be(b.subspan(8, 2));
    if (payload_len > kMaxPayload) return DecodeError::Oversize;
    if (b.size() - kHeaderSize < payload_len) return DecodeError::TruncatedPayload;
    Decoded d;
    d.message.msg_type = static_cast<MessageType>(type_code);
    d.message.seq = b[1];
    d.message.src = EntityId(read_u24be(b.subspan(2, 3)));
    d.message.dst = EntityId(read_u24be(b.subspan(5, 3)));
    d.message.payload.assign(b.begin() + kHeaderSize, b.begin() + kHeaderSize + payload_len);
    d.consumed = kHeaderSize + payload_len;
    return d;
}

}  // namespace flat::wire
