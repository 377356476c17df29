#pragma once

#include <optional>

#include "flat/bytes.hpp"
#include "flat/crypto/rng.hpp"
#include "flat/crypto/uint256.hpp"

namespace flat::crypto {

inline constexpr size_t kPointSize = 33;   // compressed: parity byte + x
inline constexpr size_t kScalarSize = 32;

struct AffinePoint {
    U256 x{};
    U256 y{};
    bool infinity = true;

    static AffinePoint at_infinity() { return AffinePoint{}; }

    friend bool operator==(const AffinePoint& a, const AffinePoint& b) {
        if (a.infinity || b.infinity) return a.infinity == b.infinity;
        return a.x == b.x && a.y == b.y;
    }
};

/// Short-Weierstrass curve y^2 = x^3 + ax + b over a 256-bit prime field,
/// prime group order, p = 3 (mod 4). The curve is a parameter of every
/// operation; default_curve() returns P-256.
class Curve {
public:
    Curve(std::string_view p_hex, std::string_view a_hex, std::string_view b_hex,
          std::string_view n_hex, std::string_view gx_hex, std::string_view gy_hex)
        : fp_(U256::from_hex(p_hex)),
          fn_(U256::from_hex(n_hex)),
          a_plain_(U256::from_hex(a_hex)),
          b_plain_(U256::from_hex(b_hex)) {
        a_m_ = fp_.to_mont(a_plain_);
        b_m_ = fp_.to_mont(b_plain_);
        g_.x = U256::from_hex(gx_hex);
        g_.y = U256::from_hex(gy_hex);
        g_.infinity = false;
        // exponent (p+1)/4 for square roots mod p when p = 3 (mod 4)
        U256 one = U256::one();
        U256 p1;
        u256_add(fp_.m, one, p1);  // p + 1 never carries for our moduli shape? p < 2^256-1
        sqrt_exp_ = shr2(p1);
    }

    const MontCtx& fp() const { return fp_; }
    const MontCtx& fn() const { return fn_; }
    const U256& p() const { return fp_.m; }
    const U256& n() const { return fn_.m; }
    const AffinePoint& g() const { return g_; }

    bool on_curve(const AffinePoint& pt) const {
        if (pt.infinity) return false;
        if (U256::cmp(pt.x, p()) >= 0 || U256::cmp(pt.y, p()) >= 0) return false;
        U256 xm = fp_.to_mont(pt.x), ym = fp_.to_mont(pt.y);
        U256 lhs = fp_.square(ym);
        U256 rhs = fp_.add(fp_.mul(fp_.square(xm), xm), fp_.add(fp_.mul(a_m_, xm), b_m_));
        return lhs == rhs;
    }

    struct Jacobian {
        U256 X{}, Y{}, Z{};  // Montgomery form; Z == 0 encodes infinity
        bool is_infinity() const { return Z.is_zero(); }
    };

    Jacobian to_jacobian(const AffinePoint& pt) const {
        Jacobian j;
        if (pt.infinity) return j;
        j.X = fp_.to_mont(pt.x);
        j.Y = fp_.to_mont(pt.y);
        j.Z = fp_.r1;
        return j;
    }

    AffinePoint to_affine(const Jacobian& j) const {
        if (j.is_infinity()) return AffinePoint::at_infinity();
        U256 z_plain = fp_.from_mont(j.Z);
        U256 zinv = fp_.to_mont(fp_.inverse(z_plain));
        U256 zinv2 = fp_.square(zinv);
        U256 zinv3 = fp_.mul(zinv2, zinv);
        AffinePoint out;
        out.x = fp_.from_mont(fp_.mul(j.X, zinv2));
        out.y = fp_.from_mont(fp_.mul(j.Y, zinv3));
        out.infinity = false;
        return out;
    }

    Jacobian dbl(const Jacobian& pt) const {
        if (pt.is_infinity() || pt.Y.is_zero()) return Jacobian{};
        const MontCtx& f = fp_;
        U256 y2 = f.square(pt.Y);
        U256 s = f.mul(pt.X, y2);
        s = f.add(s, s);
        s = f.add(s, s);                       // S = 4XY^2
        U256 x2 = f.square(pt.X);
        U256 z2 = f.square(pt.Z);
        U256 m = f.add(f.add(x2, x2), x2);     // 3X^2
        m = f.add(m, f.mul(a_m_, f.square(z2)));  // + aZ^4
        U256 x3 = f.sub(f.square(m), f.add(s, s));
        U256 y4 = f.square(y2);
        U256 y4_8 = f.add(y4, y4);
        y4_8 = f.add(y4_8, y4_8);
        y4_8 = f.add(y4_8, y4_8);              // 8Y^4
        U256 y3 = f.sub(f.mul(m, f.sub(s, x3)), y4_8);
        U256 z3 = f.mul(pt.Y, pt.Z);
        z3 = f.add(z3, z3);
        Jacobian out;
        out.X = x3;
        out.Y = y3;
        out.Z = z3;
        return out;
    }

    Jacobian add(const Jacobian& p1, const Jacobian& p2) const {
        if (p1.is_infinity()) return p2;
        if (p2.is_infinity()) return p1;
        const MontCtx& f = fp_;
        U256 z1sq = f.square(p1.Z), z2sq = f.square(p2.Z);
        U256 u1 = f.mul(p1.X, z2sq);
        U256 u2 = f.mul(p2.X, z1sq);
        U256 s1 = f.mul(p1.Y, f.mul(z2sq, p2.Z));
        U256 s2 = f.mul(p2.Y, f.mul(z1sq, p1.Z));
        if (u1 == u2) {
            if (s1 == s2) return dbl(p1);
            return Jacobian{};  // P + (-P)
        }
        U256 h = f.sub(u2, u1);
        U256 r = f.sub(s2, s1);
        U256 h2 = f.square(h);
        U256 h3 = f.mul(h2, h);
        U256 u1h2 = f.mul(u1, h2);
        U256 x3 = f.sub(f.sub(f.square(r), h3), f.add(u1h2, u1h2));
        U256 y3 = f.sub(f.mul(r, f.sub(u1h2, x3)), f.mul(s1, h3));
        U256 z3 = f.mul(f.mul(p1.Z, p2.Z), h);
        Jacobian out;
        out.X = x3;
        out.Y = y3;
        out.Z = z3;
        return out;
    }

    AffinePoint mul(const U256& k, const AffinePoint& pt) const {
        return to_affine(mul_jac(k, pt));
    }

    Jacobian mul_jac(const U256& k, const AffinePoint& pt) const {
        Jacobian acc{};
        if (pt.infinity || k.is_zero()) return acc;
        Jacobian base = to_jacobian(pt);
        for (int i = k.bit_length() - 1; i >= 0; --i) {
            acc = dbl(acc);
            if (k.bit(i)) acc = add(acc, base);
        }
        return acc;
    }

    AffinePoint mul_base(const U256& k) const { return mul(k, g_); }

    // u1*G + u2*Q in one pass (verification workhorse).
    AffinePoint mul_add(const U256& u1, const AffinePoint& q, const U256& u2) const {
        return to_affine(add(mul_jac(u1, g_), mul_jac(u2, q)));
    }

    AffinePoint negate(const AffinePoint& pt) const {
        if (pt.infinity) return pt;
        AffinePoint out = pt;
        U256 d;
        u256_sub(p(), pt.y, d);
        out.y = pt.y.is_zero() ? pt.y : d;
        return out;
    }

    /// 33-byte compressed encoding: 0x02 | (y & 1), then x big-endian.
    std::array<uint8_t, kPointSize> compress(const AffinePoint& pt) const {
        std::array<uint8_t, kPointSize> out{};
        out[0] = static_cast<uint8_t>(0x02 | (pt.y.is_odd() ? 1 : 0));
        auto xb = U256::to_be_bytes(pt.x);
        std::memcpy(out.data() + 1, xb.data(), 32);
        return out;
    }

    std::optional<AffinePoint> decompress(ByteView b33) const {
        if (b33.size() != kPointSize) return std::nullopt;
        if (b33[0] != 0x02 && b33[0] != 0x03) return std::nullopt;
        U256 x = U256::from_be_bytes(b33.subspan(1));
        if (U256::cmp(x, p()) >= 0) return std::nullopt;
        const MontCtx& f = fp_;
        U256 xm = f.to_mont(x);
        U256 rhs = f.add(f.mul(f.square(xm), xm), f.add(f.mul(a_m_, xm), b_m_));
        U256 y_m = f.pow(rhs, sqrt_exp_);
        if (f.square(y_m) != rhs) return std::nullopt;  // x not on the curve
        U256 y = f.from_mont(y_m);
        bool want_odd = (b33[0] & 1) != 0;
        if (y.is_odd() != want_odd) {
            U256 d;
            u256_sub(p(), y, d);
            y = d;
        }
        AffinePoint pt;
        pt.x = x;
        pt.y = y;
        pt.infinity = false;
        return pt;
    }

    /// Uniform scalar in [1, n-1] by rejection sampling.
    U256 random_scalar(Rng& rng) const {
        for (;;) {
            auto b = rng.array<32>();
            U256 k = U256::from_be_bytes(b);
            if (!k.is_zero() && U256::cmp(k, n()) < 0) return k;
        }
    }

private:
    static U256 shr2(const U256& v) {
        U256 out;
        for (int i = 0; i < 4; ++i) {
            out.w[i] = v.w[i] >> 2;
            if (i < 3) out.w[i] |= v.w[i + 1] << 62;
        }
        return out;
    }

    MontCtx fp_;
    MontCtx fn_;
    U256 a_plain_, b_plain_;
    U256 a_m_, b_m_;
    AffinePoint g_;
    U256 sqrt_exp_;
};

/// NIST P-256 (secp256r1).
inline const Curve& default_curve() {
    static const Curve curve(
        "ffffffff00000001000000000000000000000000ffffffffffffffffffffffff",
        "ffffffff00000001000000000000000000000000fffffffffffffffffffffffc",
        "5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b",
        "ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551",
        "6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296",
        "4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5");
    return curve;
}

struct KeyPair {
    U256 d;          // private scalar in [1, n-1]
    AffinePoint q;   // d * G
};

inline KeyPair gen_keypair(Rng& rng, const Curve& curve = default_curve()) {
    KeyPair kp;
    kp.d = curve.random_scalar(rng);
    kp.q = curve.mul_base(kp.d);
    return kp;
}

/// Keypair with an even-y public point (x-only serializations are unambiguous).
inline KeyPair gen_keypair_even_y(Rng& rng, const Curve& curve = default_curve()) {
    KeyPair kp = gen_keypair(rng, curve);
    if (kp.q.y.is_odd()) {
        kp.d = curve.fn().neg(kp.d);
        kp.q = curve.negate(kp.q);
    }
    return kp;
}

}  // namespace flat::crypto
