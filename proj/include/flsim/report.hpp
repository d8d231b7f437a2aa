#pragma once

#include "flsim/digest.hpp"
#include "flsim/model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flsim {

enum class WaitOutcome { AllReached, TimedOutWithQuorum, TimedOutEmpty };

std::string wait_outcome_name(WaitOutcome o);

// Per-round metrics row.
struct RoundRecord {
    std::uint64_t round = 0;
    double accuracy = 0.0; // global model on the pooled test split
    double loss = 0.0;
    std::map<std::string, Metrics> per_client; // local model on local test split
    std::int64_t elapsed_ms = 0;               // virtual in deterministic mode, wall otherwise
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::uint64_t client_to_worker_bytes = 0;
    Digest256 global_digest{};                 // winning aggregate payload digest
    std::string winning_worker;
    std::map<std::string, Digest256> client_global_digests; // what each client downloaded next
    WaitOutcome client_stage3_wait = WaitOutcome::AllReached;
    WaitOutcome client_stage4_wait = WaitOutcome::AllReached;
    WaitOutcome worker_stage3_wait = WaitOutcome::AllReached;
    WaitOutcome worker_stage4_wait = WaitOutcome::AllReached;
};

struct ExperimentReport {
    Digest256 job_digest{};
    std::uint64_t total_rounds = 0;
    std::vector<RoundRecord> rounds;           // completed rounds only
    std::vector<std::uint64_t> aborted_rounds;
    Digest256 final_global_digest{};
    std::uint64_t ledger_entries = 0;
    bool ledger_ok = false;
    std::uint64_t total_bytes_sent = 0;
    std::uint64_t total_bytes_received = 0;
    std::map<std::string, std::uint64_t> node_polls;
    std::size_t max_outstanding_polls = 0; // node wakes pending at once
    std::size_t max_scheduler_queue = 0;
    std::vector<std::string> event_trace;      // filled when trace capture is on
};

} // namespace flsim
