#include "flsim/param_vector.hpp"

#include "flsim/errors.hpp"

#include <bit>
#include <cstring>

namespace flsim {

namespace wire {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, std::uint32_t(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

namespace {
void need(const std::vector<std::uint8_t>& in, std::size_t off, std::size_t n) {
    if (off + n > in.size()) {
        throw Error(ErrorCode::InvalidValue, "truncated binary payload");
    }
}
} // namespace

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& off) {
    need(in, off, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[off + i]) << (8 * i);
    off += 4;
    return v;
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& off) {
    need(in, off, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(in[off + i]) << (8 * i);
    off += 8;
    return v;
}

double get_f64(const std::vector<std::uint8_t>& in, std::size_t& off) {
    return std::bit_cast<double>(get_u64(in, off));
}

std::string get_string(const std::vector<std::uint8_t>& in, std::size_t& off) {
    std::uint32_t len = get_u32(in, off);
    need(in, off, len);
    std::string s(reinterpret_cast<const char*>(in.data() + off), len);
    off += len;
    return s;
}

} // namespace wire

std::size_t layout_count(const Layout& layout) {
    std::size_t n = 0;
    for (const auto& t : layout) n += t.count();
    return n;
}

ParamVector zeros_like(const ParamVector& x) {
    return ParamVector{x.layout, std::vector<double>(x.values.size(), 0.0)};
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
    if (!x.same_layout(y)) throw layout_mismatch("axpy");
    ParamVector out{x.layout, std::vector<double>(x.values.size())};
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        out.values[i] = y.values[i] + a * x.values[i];
    }
    return out;
}

ParamVector scale(double a, const ParamVector& x) {
    ParamVector out{x.layout, std::vector<double>(x.values.size())};
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        out.values[i] = a * x.values[i];
    }
    return out;
}

ParamVector subtract(const ParamVector& x, const ParamVector& y) {
    if (!x.same_layout(y)) throw layout_mismatch("subtract");
    ParamVector out{x.layout, std::vector<double>(x.values.size())};
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        out.values[i] = x.values[i] - y.values[i];
    }
    return out;
}

void serialize_param_vector(const ParamVector& pv, std::vector<std::uint8_t>& out) {
    out.push_back('F');
    out.push_back('L');
    out.push_back('P');
    out.push_back('V');
    wire::put_u32(out, 1);
    wire::put_u32(out, std::uint32_t(pv.layout.size()));
    for (const auto& t : pv.layout) {
        wire::put_string(out, t.name);
        wire::put_u32(out, std::uint32_t(t.dims.size()));
        for (auto d : t.dims) wire::put_u32(out, d);
    }
    wire::put_u64(out, pv.values.size());
    for (double v : pv.values) wire::put_f64(out, v);
}

std::vector<std::uint8_t> serialize_param_vector(const ParamVector& pv) {
    std::vector<std::uint8_t> out;
    out.reserve(32 + pv.values.size() * 8);
    serialize_param_vector(pv, out);
    return out;
}

ParamVector deserialize_param_vector(const std::vector<std::uint8_t>& bytes, std::size_t& off) {
    if (off + 4 > bytes.size() || bytes[off] != 'F' || bytes[off + 1] != 'L' ||
        bytes[off + 2] != 'P' || bytes[off + 3] != 'V') {
        throw Error(ErrorCode::InvalidValue, "bad param vector magic");
    }
    off += 4;
    std::uint32_t version = wire::get_u32(bytes, off);
    if (version != 1) throw Error(ErrorCode::InvalidValue, "unsupported param vector version");
    std::uint32_t n_tensors = wire::get_u32(bytes, off);
    ParamVector pv;
    pv.layout.reserve(n_tensors);
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        TensorShape ts;
        ts.name = wire::get_string(bytes, off);
        std::uint32_t ndim = wire::get_u32(bytes, off);
        ts.dims.reserve(ndim);
        for (std::uint32_t j = 0; j < ndim; ++j) ts.dims.push_back(wire::get_u32(bytes, off));
        pv.layout.push_back(std::move(ts));
    }
    std::uint64_t n_values = wire::get_u64(bytes, off);
    if (n_values != layout_count(pv.layout)) {
        throw Error(ErrorCode::InvalidValue, "param vector length does not match layout");
    }
    pv.values.reserve(n_values);
    for (std::uint64_t i = 0; i < n_values; ++i) pv.values.push_back(wire::get_f64(bytes, off));
    return pv;
}

Digest256 param_hash(const ParamVector& pv) {
    auto bytes = serialize_param_vector(pv);
    return sha256(std::span<const std::uint8_t>(bytes));
}

bool bit_equal(const ParamVector& a, const ParamVector& b) {
    if (!a.same_layout(b) || a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a.values[i]) != std::bit_cast<std::uint64_t>(b.values[i]))
            return false;
    }
    return true;
}

void serialize_bundle(const ParamBundle& b, std::vector<std::uint8_t>& out) {
    serialize_param_vector(b.params, out);
    wire::put_u32(out, std::uint32_t(b.extras.size()));
    for (const auto& [name, vec] : b.extras) {
        wire::put_string(out, name);
        serialize_param_vector(vec, out);
    }
}

ParamBundle deserialize_bundle(const std::vector<std::uint8_t>& bytes, std::size_t& off) {
    ParamBundle b;
    b.params = deserialize_param_vector(bytes, off);
    std::uint32_t n = wire::get_u32(bytes, off);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = wire::get_string(bytes, off);
        b.extras.emplace(std::move(name), deserialize_param_vector(bytes, off));
    }
    return b;
}

} // namespace flsim
