#pragma once

#include "flsim/digest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flsim {

enum class EntryKind { ClientParam, WorkerAggregate, ConsensusDecision, GlobalParam };

std::string entry_kind_name(EntryKind kind);

// One link of the provenance chain. entry_hash covers the canonical text
// encoding "index,prev_hash,kind,round,node,payload_digest" (hex digests,
// decimal integers), which is also the exported line minus its last field.
struct LedgerEntry {
    std::uint64_t index = 0;
    Digest256 prev_hash{};
    EntryKind kind = EntryKind::ClientParam;
    std::uint64_t round = 0;
    std::string node;
    Digest256 payload_digest{};
    Digest256 entry_hash{};

    std::string canonical_prefix() const;
    std::string to_line() const;
};

struct VerifyResult {
    bool ok = true;
    std::uint64_t first_bad_index = 0;
    std::string reason;
};

// Append-only in-memory hash chain; genesis prev_hash is all zero bytes.
class HashChainLedger {
public:
    LedgerEntry append(EntryKind kind, std::uint64_t round, const std::string& node,
                       const Digest256& payload_digest);

    // Recomputes every entry hash and link.
    VerifyResult verify_chain() const;

    // Entries of one round in append order.
    std::vector<LedgerEntry> provenance(std::uint64_t round) const;

    const std::vector<LedgerEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    // One entry per line, canonical field order, hex digests.
    void export_file(const std::filesystem::path& path) const;
    static std::vector<LedgerEntry> load_file(const std::filesystem::path& path);
    static VerifyResult verify_entries(const std::vector<LedgerEntry>& entries);

private:
    std::vector<LedgerEntry> entries_;
};

} // namespace flsim
