#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <stdexcept>

#include "flat/bytes.hpp"
#include "flat/crypto/sha256.hpp"

#if defined(__unix__) || defined(__APPLE__)
#include <fcntl.h>
#include <unistd.h>
#endif

namespace flat::crypto {

/// Randomness source. Injected everywhere randomness is consumed so that
/// simulated runs are reproducible from a seed.
class Rng {
public:
    virtual ~Rng() = default;
    virtual void fill(uint8_t* out, size_t len) = 0;

    Bytes bytes(size_t len) {
        Bytes b(len);
        fill(b.data(), len);
        return b;
    }

    template <size_t N>
    std::array<uint8_t, N> array() {
        std::array<uint8_t, N> a;
        fill(a.data(), N);
        return a;
    }
};

/// Operating-system entropy; safe for concurrent use.
class SystemRng final : public Rng {
public:
    void fill(uint8_t* out, size_t len) override {
        std::lock_guard<std::mutex> lock(mu_);
        size_t got = 0;
        int fd = ::open("/dev/urandom", O_RDONLY);
        if (fd < 0) throw std::runtime_error("cannot open /dev/urandom");
        while (got < len) {
            ssize_t n = ::read(fd, out + got, len - got);
            if (n <= 0) {
                ::close(fd);
                throw std::runtime_error("short read from /dev/urandom");
            }
            got += static_cast<size_t>(n);
        }
        ::close(fd);
    }

private:
    std::mutex mu_;
};

inline Rng& system_rng() {
    static SystemRng rng;
    return rng;
}

/// Deterministic byte stream: block_i = SHA-256(seed_digest || counter_i).
/// Not an OS entropy substitute; exists so that (seed, scenario) pins every
/// generated key, nonce and iv in simulated runs.
class DeterministicRng final : public Rng {
public:
    explicit DeterministicRng(uint64_t seed) {
        Bytes s;
        append(s, ByteView(reinterpret_cast<const uint8_t*>("flat-drbg-v1"), 12));
        append_u64be(s, seed);
        seed_ = sha256(s);
    }

    void fill(uint8_t* out, size_t len) override {
        size_t done = 0;
        while (done < len) {
            if (block_used_ == 32) refill();
            size_t take = std::min(len - done, size_t(32) - block_used_);
            std::memcpy(out + done, block_.data() + block_used_, take);
            block_used_ += take;
            done += take;
        }
    }

private:
    void refill() {
        Bytes b(seed_.begin(), seed_.end());
        append_u64be(b, counter_++);
        block_ = sha256(b);
        block_used_ = 0;
    }

    Digest seed_{};
    Digest block_{};
    size_t block_used_ = 32;
    uint64_t counter_ = 0;
};

}  // namespace flat::crypto
