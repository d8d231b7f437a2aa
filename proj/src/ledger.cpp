#include "flsim/ledger.hpp"

#include "flsim/errors.hpp"

#include <fstream>
#include <sstream>

namespace flsim {

std::string entry_kind_name(EntryKind kind) {
    switch (kind) {
    case EntryKind::ClientParam: return "client-param";
    case EntryKind::WorkerAggregate: return "worker-aggregate";
    case EntryKind::ConsensusDecision: return "consensus-decision";
    case EntryKind::GlobalParam: return "global-param";
    }
    return "?";
}

namespace {

bool parse_kind(const std::string& s, EntryKind& out) {
    if (s == "client-param") out = EntryKind::ClientParam;
    else if (s == "worker-aggregate") out = EntryKind::WorkerAggregate;
    else if (s == "consensus-decision") out = EntryKind::ConsensusDecision;
    else if (s == "global-param") out = EntryKind::GlobalParam;
    else return false;
    return true;
}

} // namespace

std::string LedgerEntry::canonical_prefix() const {
    std::ostringstream os;
    os << index << ',' << to_hex(prev_hash) << ',' << entry_kind_name(kind) << ',' << round << ','
       << node << ',' << to_hex(payload_digest);
    return os.str();
}

std::string LedgerEntry::to_line() const {
    return canonical_prefix() + "," + to_hex(entry_hash);
}

LedgerEntry HashChainLedger::append(EntryKind kind, std::uint64_t round, const std::string& node,
                                    const Digest256& payload_digest) {
    LedgerEntry e;
    e.index = entries_.size();
    e.prev_hash = entries_.empty() ? Digest256{} : entries_.back().entry_hash;
    e.kind = kind;
    e.round = round;
    e.node = node;
    e.payload_digest = payload_digest;
    e.entry_hash = sha256(e.canonical_prefix());
    entries_.push_back(std::move(e));
    return entries_.back();
}

VerifyResult HashChainLedger::verify_chain() const {
    return verify_entries(entries_);
}

VerifyResult HashChainLedger::verify_entries(const std::vector<LedgerEntry>& entries) {
    Digest256 prev{};
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.index != i) return {false, i, "index not contiguous"};
        if (e.prev_hash != prev) return {false, i, "broken chain link"};
        if (sha256(e.canonical_prefix()) != e.entry_hash) return {false, i, "entry hash mismatch"};
        prev = e.entry_hash;
    }
    return {};
}

std::vector<LedgerEntry> HashChainLedger::provenance(std::uint64_t round) const {
    std::vector<LedgerEntry> out;
    for (const auto& e : entries_) {
        if (e.round == round) out.push_back(e);
    }
    return out;
}

void HashChainLedger::export_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& e : entries_) out << e.to_line() << '\n';
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<LedgerEntry> HashChainLedger::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::vector<LedgerEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7) {
            throw invalid_value("ledger line " + std::to_string(lineno), "expected 7 fields");
        }
        LedgerEntry e;
        e.index = std::stoull(fields[0]);
        if (!parse_hex_digest(fields[1], e.prev_hash) || !parse_kind(fields[2], e.kind) ||
            !parse_hex_digest(fields[5], e.payload_digest) ||
            !parse_hex_digest(fields[6], e.entry_hash)) {
            throw invalid_value("ledger line " + std::to_string(lineno), "malformed field");
        }
        e.round = std::stoull(fields[3]);
        e.node = fields[4];
        entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace flsim
