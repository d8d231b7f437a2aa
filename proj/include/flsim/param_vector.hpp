#pragma once

#include "flsim/digest.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flsim {

// One named tensor inside a flattened parameter vector.
struct TensorShape {
    std::string name;
    std::vector<std::uint32_t> dims;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    bool operator==(const TensorShape&) const = default;
};

using Layout = std::vector<TensorShape>;

std::size_t layout_count(const Layout& layout);

// Flat vector of 64-bit model parameters; the unit of exchange, aggregation,
// hashing and provenance. Two vectors combine only when layouts are equal.
//
// Serialized form (the bit-exact wire and digest contract; all integers
// little-endian):
//   magic "FLPV" | u32 version = 1 | u32 n_tensors
//   per tensor: u32 name_len | name bytes | u32 ndim | u32 dims[ndim]
//   u64 n_values | f64 values[n_values] (IEEE-754 bit pattern, little-endian)
struct ParamVector {
    Layout layout;
    std::vector<double> values;

    bool same_layout(const ParamVector& other) const { return layout == other.layout; }
    std::size_t size() const { return values.size(); }
};

ParamVector zeros_like(const ParamVector& x);

// y + a*x elementwise, left-to-right; throws LayoutMismatch.
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);
// a*x elementwise.
ParamVector scale(double a, const ParamVector& x);
// x - y elementwise.
ParamVector subtract(const ParamVector& x, const ParamVector& y);

void serialize_param_vector(const ParamVector& pv, std::vector<std::uint8_t>& out);
std::vector<std::uint8_t> serialize_param_vector(const ParamVector& pv);
// Reads one ParamVector starting at `offset`; advances offset past it.
ParamVector deserialize_param_vector(const std::vector<std::uint8_t>& bytes, std::size_t& offset);

// Digest over the canonical serialization above.
Digest256 param_hash(const ParamVector& pv);

bool bit_equal(const ParamVector& a, const ParamVector& b);

// A parameter vector plus named auxiliary vectors (e.g. control variates)
// that travel with it. What workers publish and clients download.
struct ParamBundle {
    ParamVector params;
    std::map<std::string, ParamVector> extras;
};

// Bundle serialization: params | u32 n_extras | per extra (sorted by name):
// u32 name_len | name | param vector bytes.
void serialize_bundle(const ParamBundle& b, std::vector<std::uint8_t>& out);
ParamBundle deserialize_bundle(const std::vector<std::uint8_t>& bytes, std::size_t& offset);

// Little-endian scalar helpers shared by the framework's binary formats.
namespace wire {
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
void put_string(std::vector<std::uint8_t>& out, const std::string& s);
std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& off);
std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& off);
double get_f64(const std::vector<std::uint8_t>& in, std::size_t& off);
std::string get_string(const std::vector<std::uint8_t>& in, std::size_t& off);
} // namespace wire

} // namespace flsim
