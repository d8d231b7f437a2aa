#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace flsim {

// Deterministic 64-bit counter-based generator used everywhere randomness is
// needed. Platform library generators are never used on any reproducible
// path; the full construction is written out below so an independent
// implementation can reproduce every stream bit-for-bit.
//
//   mix64(s, i) :
//     z  = s + (i + 1) * 0x9E3779B97F4A7C15
//     z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//     z ^= z >> 27;  z *= 0x94D049BB133111EB
//     return z ^ (z >> 31)
//
//   CounterRng(key, stream):  base = mix64(key, stream)
//   next_u64():               mix64(base, counter), counter += 1 (from 0)
//
// Derived quantities:
//   next_double()        (next_u64() >> 11) * 2^-53, in [0, 1)
//   next_double_open0()  ((next_u64() >> 11) + 1) * 2^-53, in (0, 1]
//   next_below(n)        high 64 bits of next_u64() * n (128-bit product)
//   shuffle(v)           Fisher-Yates, i = n-1 .. 1, j = next_below(i + 1)
//   normal()             Box-Muller cosine branch:
//                          u1 = next_double_open0(), u2 = next_double()
//                          sqrt(-2 ln u1) * cos(2*pi*u2)
//   gamma(a), a >= 1     Marsaglia-Tsang: d = a - 1/3, c = 1/sqrt(9 d);
//                        repeat { x = normal(); v = (1 + c x)^3; if v <= 0
//                        retry; u = next_double(); accept if
//                        u < 1 - 0.0331 x^4 or ln u < x^2/2 + d (1 - v + ln v);
//                        result d * v }
//   gamma(a), a < 1      gamma(a + 1) * next_double_open0()^(1/a)
//
// Stream ids are derived from strings with FNV-1a 64 (offset
// 0xcbf29ce484222325, prime 0x100000001b3).
class CounterRng {
public:
    CounterRng(std::uint64_t key, std::uint64_t stream);

    std::uint64_t next_u64();
    double next_double();
    double next_double_open0();
    std::uint64_t next_below(std::uint64_t n);
    double normal();
    double gamma(double alpha);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i >= 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    static std::uint64_t mix64(std::uint64_t seed, std::uint64_t counter);

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

std::uint64_t fnv1a64(std::string_view s);

// Convenience for multi-part stream derivation: successive values are folded
// into the stream id with mix64 so e.g. (node, round, epoch) streams stay
// distinct.
std::uint64_t combine_stream(std::uint64_t a, std::uint64_t b);

} // namespace flsim
