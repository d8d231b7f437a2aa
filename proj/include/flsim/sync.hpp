#pragma once

#include "flsim/jobconfig.hpp"
#include "flsim/ledger.hpp"
#include "flsim/report.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>

namespace flsim {

// Experiment-wide phase: 0 system initializing, 1 in local learning,
// 2 in model aggregation.
enum class ProcessPhase : std::uint8_t { Initializing = 0, LocalLearning = 1, Aggregation = 2 };

// Node lifecycle stages: 0 not ready, 1 ready for job, 2 ready with dataset,
// 3 busy (training / aggregating), 4 waiting for next round / aggregation
// complete. Transitions within a round only move forward; the round rollover
// resets stages above 2 back to 2.
constexpr std::uint8_t kStageNotReady = 0;
constexpr std::uint8_t kStageReadyForJob = 1;
constexpr std::uint8_t kStageReadyWithDataset = 2;
constexpr std::uint8_t kStageBusy = 3;
constexpr std::uint8_t kStageDone = 4;

// Forward-only stage update; throws IllegalTransition on regression.
void apply_stage_update(std::map<std::string, std::uint8_t>& stages, const std::string& node,
                        std::uint8_t stage);

// The Logic Controller's global view.
struct SyncState {
    ProcessPhase process_phase = ProcessPhase::Initializing;
    std::map<std::string, std::uint8_t> client_stage; // client-role instances
    std::map<std::string, std::uint8_t> worker_stage; // worker-role instances
    std::uint64_t global_round = 1;
    std::uint64_t total_rounds = 1;
    bool download_job_config = false;
    bool download_dataset = false;
    Digest256 global_param_ref{};
};

enum class WaitSubset { Clients, Workers, All };

struct WaitSpec {
    std::uint8_t target_stage = 0;
    WaitSubset subset = WaitSubset::All;
    std::int64_t timeout_ms = 30000;
    std::function<bool()> min_results; // unset = quorum always satisfied
};

// Deterministic discrete-event scheduler with a virtual millisecond clock.
// Events run in (time, insertion) order; in realtime mode execution sleeps
// so the virtual clock tracks the wall clock instead of jumping ahead.
class VirtualScheduler {
public:
    using Task = std::function<void()>;

    explicit VirtualScheduler(bool realtime = false) : realtime_(realtime) {}

    // Returns a token usable with cancel().
    std::uint64_t schedule_at(std::int64_t when_ms, Task fn);
    std::uint64_t schedule_after(std::int64_t delay_ms, Task fn) {
        return schedule_at(now_ + delay_ms, std::move(fn));
    }
    std::uint64_t schedule_now(Task fn) { return schedule_at(now_, std::move(fn)); }
    void cancel(std::uint64_t token);

    std::int64_t now() const { return now_; }
    std::size_t pending() const { return queue_.size(); }
    std::size_t max_queue() const { return max_queue_; }

    // Runs until the queue drains.
    void run();

private:
    struct Item {
        std::int64_t when;
        std::uint64_t seq;
        Task fn;
        bool operator>(const Item& other) const {
            return when != other.when ? when > other.when : seq > other.seq;
        }
    };

    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
    std::set<std::uint64_t> cancelled_;
    std::int64_t now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::size_t max_queue_ = 0;
    bool realtime_ = false;
};

struct RunOptions {
    bool deterministic = true;
    std::optional<std::uint64_t> seed;     // overrides dataset.seed
    std::filesystem::path chunk_dir;       // empty: temp dir, removed afterwards
    bool capture_trace = false;
};

struct ExperimentResult {
    ExperimentReport report;
    HashChainLedger ledger;
};

// Wires dataset distribution, nodes, bus, consensus and provenance together
// and drives the synchronization loop for cfg.strategy.total_rounds rounds.
ExperimentResult run_experiment(const JobConfig& cfg, const RunOptions& opts);

} // namespace flsim
