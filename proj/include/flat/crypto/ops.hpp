#pragma once

#include <cstdint>

namespace flat::crypto {

/// Per-thread operation counters, ticked inside the crypto functions
/// themselves rather than by callers. A role that never invokes an
/// asymmetric primitive therefore provably shows a zero counter.
struct OpCounts {
    uint64_t sym_protect = 0;
    uint64_t sym_unprotect = 0;
    uint64_t aes_ctr = 0;  // keystream applications (decrypt-path witness)
    uint64_t ecdsa_sign = 0;
    uint64_t ecdsa_verify = 0;
    uint64_t ecies_enc = 0;
    uint64_t ecies_dec = 0;
    uint64_t ecqv_extract = 0;

    uint64_t asymmetric_total() const {
        return ecdsa_sign + ecdsa_verify + ecies_enc + ecies_dec + ecqv_extract;
    }

    OpCounts operator-(const OpCounts& rhs) const {
        OpCounts d;
        d.sym_protect = sym_protect - rhs.sym_protect;
        d.sym_unprotect = sym_unprotect - rhs.sym_unprotect;
        d.aes_ctr = aes_ctr - rhs.aes_ctr;
        d.ecdsa_sign = ecdsa_sign - rhs.ecdsa_sign;
        d.ecdsa_verify = ecdsa_verify - rhs.ecdsa_verify;
        d.ecies_enc = ecies_enc - rhs.ecies_enc;
        d.ecies_dec = ecies_dec - rhs.ecies_dec;
        d.ecqv_extract = ecqv_extract - rhs.ecqv_extract;
        return d;
    }

    OpCounts& operator+=(const OpCounts& rhs) {
        sym_protect += rhs.sym_protect;
        sym_unprotect += rhs.sym_unprotect;
        aes_ctr += rhs.aes_ctr;
        ecdsa_sign += rhs.ecdsa_sign;
        ecdsa_verify += rhs.ecdsa_verify;
        ecies_enc += rhs.ecies_enc;
        ecies_dec += rhs.ecies_dec;
        ecqv_extract += rhs.ecqv_extract;
        return *this;
    }
};

inline OpCounts& op_counts() {
    thread_local OpCounts counts;
    return counts;
}

}  // namespace flat::crypto
