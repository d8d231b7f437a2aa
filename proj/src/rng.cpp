#include "flsim/rng.hpp"

#include "flsim/errors.hpp"

#include <cmath>

namespace flsim {

std::uint64_t CounterRng::mix64(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t key, std::uint64_t stream)
    : base_(mix64(key, stream)) {}

std::uint64_t CounterRng::next_u64() {
    return mix64(base_, counter_++);
}

double CounterRng::next_double() {
    return double(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::next_double_open0() {
    return double((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
    return std::uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double CounterRng::normal() {
    double u1 = next_double_open0();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double CounterRng::gamma(double alpha) {
    if (!(alpha > 0.0)) {
        throw invalid_value("alpha", "must be > 0");
    }
    if (alpha < 1.0) {
        double g = gamma(alpha + 1.0);
        double u = next_double_open0();
        return g * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        double v = t * t * t;
        if (v <= 0.0) continue;
        double u = next_double();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t combine_stream(std::uint64_t a, std::uint64_t b) {
    return CounterRng::mix64(a, b);
}

} // namespace flsim
