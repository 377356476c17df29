#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>

#include "flat/bytes.hpp"
#include "flat/wire.hpp"

namespace flat::transport {

/// One wire message per datagram; a 290-byte ceiling keeps every frame well
/// under any sane MTU. No retransmission: loss surfaces as a recv timeout.
class UdpEndpoint {
public:
    UdpEndpoint(wire::EntityId id, const std::string& bind_host, uint16_t port = 0)
        : id_(id) {
        fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
        if (fd_ < 0) throw std::runtime_error("socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, bind_host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd_);
            throw std::runtime_error("bad bind address: " + bind_host);
        }
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            ::close(fd_);
            throw std::runtime_error("bind() failed");
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        host_ = bind_host;
    }

    UdpEndpoint(const UdpEndpoint&) = delete;
    UdpEndpoint& operator=(const UdpEndpoint&) = delete;
    UdpEndpoint(UdpEndpoint&& other) noexcept { *this = std::move(other); }
    UdpEndpoint& operator=(UdpEndpoint&& other) noexcept {
        if (this != &other) {
            close_fd();
            fd_ = other.fd_;
            other.fd_ = -1;
            id_ = other.id_;
            port_ = other.port_;
            host_ = std::move(other.host_);
        }
        return *this;
    }

    ~UdpEndpoint() { close_fd(); }

    wire::EntityId id() const { return id_; }
    uint16_t port() const { return port_; }
    const std::string& host() const { return host_; }

    bool send_to(const std::string& host, uint16_t port, ByteView frame) {
        sockaddr_in to{};
        to.sin_family = AF_INET;
        to.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &to.sin_addr) != 1) return false;
        ssize_t n = ::sendto(fd_, frame.data(), frame.size(), 0,
                             reinterpret_cast<sockaddr*>(&to), sizeof to);
        return n == static_cast<ssize_t>(frame.size());
    }

    /// Blocks up to timeout_ms; std::nullopt on timeout.
    std::optional<Bytes> recv(int timeout_ms) {
        pollfd pfd{fd_, POLLIN, 0};
        int r = ::poll(&pfd, 1, timeout_ms);
        if (r <= 0) return std::nullopt;
        Bytes buf(wire::kMaxFrame + 1);
        ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0, nullptr, nullptr);
        if (n < 0) return std::nullopt;
        buf.resize(static_cast<size_t>(n));
        return buf;
    }

private:
    void close_fd() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

    int fd_ = -1;
    wire::EntityId id_;
    uint16_t port_ = 0;
    std::string host_;
};

}  // namespace flat::transport
