#include "flsim/ledger.hpp"

#include "flsim/digest.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace flsim;

namespace {

Digest256 payload(int i) { return sha256("payload-" + std::to_string(i)); }

HashChainLedger scripted_round(std::uint64_t round, int clients, int workers) {
    HashChainLedger ledger;
    for (int c = 0; c < clients; ++c) {
        ledger.append(EntryKind::ClientParam, round, "client-" + std::to_string(c), payload(c));
    }
    for (int w = 0; w < workers; ++w) {
        ledger.append(EntryKind::WorkerAggregate, round, "worker-" + std::to_string(w),
                      payload(100 + w));
    }
    ledger.append(EntryKind::ConsensusDecision, round, "worker-0", payload(100));
    ledger.append(EntryKind::GlobalParam, round, "controller", payload(100));
    return ledger;
}

} // namespace

TEST_CASE("genesis and chain linkage") {
    HashChainLedger ledger;
    LedgerEntry first = ledger.append(EntryKind::ClientParam, 1, "a", payload(1));
    CHECK(first.index == 0);
    CHECK(first.prev_hash == Digest256{});
    LedgerEntry second = ledger.append(EntryKind::GlobalParam, 1, "b", payload(2));
    CHECK(second.prev_hash == first.entry_hash);
    CHECK(ledger.verify_chain().ok);
}

TEST_CASE("a full round writes the expected entry counts") {
    HashChainLedger ledger = scripted_round(1, 10, 1);
    CHECK(ledger.size() == 13); // 10 client + 1 aggregate + decision + global
    auto entries = ledger.provenance(1);
    REQUIRE(entries.size() == 13);
    int counts[4] = {0, 0, 0, 0};
    for (const auto& e : entries) counts[int(e.kind)]++;
    CHECK(counts[int(EntryKind::ClientParam)] == 10);
    CHECK(counts[int(EntryKind::WorkerAggregate)] == 1);
    CHECK(counts[int(EntryKind::ConsensusDecision)] == 1);
    CHECK(counts[int(EntryKind::GlobalParam)] == 1);
    // append order preserved
    CHECK(entries.front().kind == EntryKind::ClientParam);
    CHECK(entries.back().kind == EntryKind::GlobalParam);
}

TEST_CASE("any single-field mutation is detected with its index") {
    HashChainLedger ledger = scripted_round(2, 4, 2);
    auto entries = ledger.entries();

    auto mutated = entries;
    mutated[3].payload_digest[5] ^= 0x01;
    auto r1 = HashChainLedger::verify_entries(mutated);
    CHECK_FALSE(r1.ok);
    CHECK(r1.first_bad_index == 3);

    mutated = entries;
    mutated[5].round = 9;
    CHECK_FALSE(HashChainLedger::verify_entries(mutated).ok);

    mutated = entries;
    mutated[2].node = "evil";
    auto r3 = HashChainLedger::verify_entries(mutated);
    CHECK_FALSE(r3.ok);
    CHECK(r3.first_bad_index == 2);

    mutated = entries;
    mutated[4].entry_hash[0] ^= 0x80;
    auto r4 = HashChainLedger::verify_entries(mutated);
    CHECK_FALSE(r4.ok);
    CHECK(r4.first_bad_index == 4);
}

TEST_CASE("export and reload round trip, corruption names the line") {
    HashChainLedger ledger = scripted_round(3, 3, 2);
    auto path = std::filesystem::temp_directory_path() / "flsim_test_ledger.txt";
    ledger.export_file(path);

    auto loaded = HashChainLedger::load_file(path);
    REQUIRE(loaded.size() == ledger.size());
    CHECK(HashChainLedger::verify_entries(loaded).ok);
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].to_line() == ledger.entries()[i].to_line());
    }

    // flip one hex digit of entry 4's payload digest in the file
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::string needle = to_hex(ledger.entries()[4].payload_digest);
    auto at = text.find(needle);
    REQUIRE(at != std::string::npos);
    text[at] = text[at] == 'a' ? 'b' : 'a';
    std::ofstream out(path, std::ios::trunc);
    out << text;
    out.close();

    auto corrupted = HashChainLedger::load_file(path);
    auto verdict = HashChainLedger::verify_entries(corrupted);
    CHECK_FALSE(verdict.ok);
    CHECK(verdict.first_bad_index == 4);
    std::filesystem::remove(path);
}

TEST_CASE("provenance filters by round in append order") {
    HashChainLedger ledger;
    ledger.append(EntryKind::ClientParam, 1, "a", payload(1));
    ledger.append(EntryKind::GlobalParam, 1, "ctl", payload(2));
    ledger.append(EntryKind::ClientParam, 2, "a", payload(3));
    ledger.append(EntryKind::ConsensusDecision, 2, "w", payload(4));
    auto round2 = ledger.provenance(2);
    REQUIRE(round2.size() == 2);
    CHECK(round2[0].kind == EntryKind::ClientParam);
    CHECK(round2[1].kind == EntryKind::ConsensusDecision);
    CHECK(round2[1].node == "w");
}
