#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace flsim {

// 256-bit content digest. Ordering (for consensus tie-breaks) is big-endian
// lexicographic over the raw bytes, which matches the hex string ordering.
using Digest256 = std::array<std::uint8_t, 32>;

std::string to_hex(const Digest256& d);
bool parse_hex_digest(const std::string& hex, Digest256& out);

// Incremental SHA-256 (FIPS 180-4).
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    void update(std::span<const std::uint8_t> data) { update(data.data(), data.size()); }
    void update(const std::string& s) { update(s.data(), s.size()); }
    Digest256 finish();

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[8];
    std::uint64_t total_len_ = 0;
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
};

Digest256 sha256(std::span<const std::uint8_t> data);
Digest256 sha256(const std::string& s);
std::string sha256_hex(const std::string& s);

} // namespace flsim
