#include "flsim/sync.hpp"

#include "flsim/bus.hpp"
#include "flsim/consensus.hpp"
#include "flsim/errors.hpp"
#include "flsim/messages.hpp"
#include "flsim/partition.hpp"
#include "flsim/rng.hpp"
#include "flsim/strategy.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace flsim {

std::string wait_outcome_name(WaitOutcome o) {
    switch (o) {
    case WaitOutcome::AllReached: return "all-reached";
    case WaitOutcome::TimedOutWithQuorum: return "timed-out-with-quorum";
    case WaitOutcome::TimedOutEmpty: return "timed-out-empty";
    }
    return "?";
}

void apply_stage_update(std::map<std::string, std::uint8_t>& stages, const std::string& node,
                        std::uint8_t stage) {
    if (stage > kStageDone) {
        throw invalid_value("stage", "must be in 0..4");
    }
    auto it = stages.find(node);
    if (it == stages.end()) {
        stages[node] = stage;
        return;
    }
    if (stage < it->second) {
        throw Error(ErrorCode::IllegalTransition,
                    "illegal stage transition " + std::to_string(it->second) + " -> " +
                        std::to_string(stage) + " for node " + node);
    }
    it->second = stage;
}

std::uint64_t VirtualScheduler::schedule_at(std::int64_t when_ms, Task fn) {
    if (when_ms < now_) when_ms = now_;
    std::uint64_t token = next_seq_++;
    queue_.push(Item{when_ms, token, std::move(fn)});
    max_queue_ = std::max(max_queue_, queue_.size());
    return token;
}

void VirtualScheduler::cancel(std::uint64_t token) {
    cancelled_.insert(token);
}

void VirtualScheduler::run() {
    const auto wall_start = std::chrono::steady_clock::now();
    while (!queue_.empty()) {
        Item item = queue_.top();
        queue_.pop();
        if (auto it = cancelled_.find(item.seq); it != cancelled_.end()) {
            cancelled_.erase(it);
            continue;
        }
        if (realtime_ && item.when > now_) {
            std::this_thread::sleep_until(wall_start + std::chrono::milliseconds(item.when));
        }
        now_ = std::max(now_, item.when);
        item.fn();
    }
}

namespace {

// --- topology wiring -------------------------------------------------------

struct Wiring {
    std::vector<std::string> client_ids; // ascending
    std::vector<std::string> worker_ids; // ascending
    std::map<std::string, std::vector<std::string>> worker_clients;
    bool two_level = false;
    std::map<std::string, std::string> worker_cluster; // hierarchical
    std::vector<std::string> cluster_names;            // ascending
};

Wiring build_wiring(const JobConfig& cfg, const std::map<std::string, ResolvedNode>& resolved) {
    Wiring w;
    for (const auto& [id, node] : resolved) {
        if (node.role == NodeRole::Client || node.role == NodeRole::ClientWorker) {
            w.client_ids.push_back(id);
        }
        if (node.role == NodeRole::Worker || node.role == NodeRole::ClientWorker) {
            w.worker_ids.push_back(id);
        }
    }

    switch (cfg.topology.kind) {
    case TopologyKind::ClientServer:
        for (const auto& wid : w.worker_ids) w.worker_clients[wid] = w.client_ids;
        break;
    case TopologyKind::Decentralized:
        for (const auto& wid : w.worker_ids) {
            auto it = cfg.topology.peers.find(wid);
            if (it != cfg.topology.peers.end()) {
                auto peers = it->second;
                std::sort(peers.begin(), peers.end());
                w.worker_clients[wid] = std::move(peers);
            } else {
                w.worker_clients[wid] = w.client_ids;
            }
        }
        break;
    case TopologyKind::Hierarchical: {
        w.two_level = true;
        std::set<std::string> cluster_names;
        for (const auto& cluster : cfg.topology.clusters) cluster_names.insert(cluster.name);
        w.cluster_names.assign(cluster_names.begin(), cluster_names.end());
        std::set<std::string> clients(w.client_ids.begin(), w.client_ids.end());
        std::set<std::string> workers(w.worker_ids.begin(), w.worker_ids.end());
        for (const auto& cluster : cfg.topology.clusters) {
            std::vector<std::string> cluster_clients;
            for (const auto& id : cluster.nodes) {
                if (clients.contains(id)) cluster_clients.push_back(id);
            }
            std::sort(cluster_clients.begin(), cluster_clients.end());
            for (const auto& id : cluster.nodes) {
                if (workers.contains(id)) {
                    w.worker_cluster[id] = cluster.name;
                    w.worker_clients[id] = cluster_clients;
                }
            }
        }
        break;
    }
    }
    return w;
}

class Engine;

// --- simulated node --------------------------------------------------------

class SimNode {
public:
    SimNode(Engine& eng, std::string id, const ResolvedNode& resolved);

    void start();
    void on_wake();

    const std::string& id() const { return id_; }
    bool is_client() const {
        return role_ == NodeRole::Client || role_ == NodeRole::ClientWorker;
    }
    bool is_worker() const {
        return role_ == NodeRole::Worker || role_ == NodeRole::ClientWorker;
    }
    bool crashed() const { return fault_ == FaultKind::Crash; }

private:
    void reschedule();
    void publish_stage(std::uint8_t role_mask, std::uint8_t stage, std::uint32_t round);
    void download_dataset_chunk();
    void client_round(const PhaseMsg& phase);
    void worker_round(const PhaseMsg& phase);
    void download_global_if_new();

    Engine& eng_;
    std::string id_;
    NodeRole role_;
    FaultKind fault_;
    NodeConfig cfg_;
    std::uint64_t node_key_;
    StrategyPtr strategy_;

    std::uint8_t lifecycle_ = kStageNotReady;
    std::uint64_t trained_round_ = 0;
    std::uint64_t aggregated_round_ = 0;
    std::uint64_t worker_busy_round_ = 0;
    std::uint64_t cluster_published_round_ = 0;
    std::uint64_t downloaded_global_round_ = std::uint64_t(-1);

    DataSet train_, test_;
    std::map<std::string, ParamVector> persist_; // strategy client state
    ParamVector momentum_, server_c_;            // worker replica state
    bool server_vectors_ready_ = false;
};

// --- logic controller ------------------------------------------------------

class Controller {
public:
    explicit Controller(Engine& eng);

    void start();
    void on_stage_message(const Message& msg);

    const SyncState& sync() const { return sync_; }

private:
    enum class St {
        WaitAllStage1,
        WaitAllStage2,
        WaitClients3,
        WaitClients4,
        WaitWorkers3,
        WaitWorkers4,
        FinalDistribution,
        Done,
    };

    void publish_phase();
    void begin_wait(St state, WaitSpec spec);
    bool wait_predicate() const;
    void maybe_complete();
    void on_timeout(std::uint64_t wait_id);
    void complete_wait(WaitOutcome outcome);
    void advance(WaitOutcome outcome);
    void begin_round();
    void finish_round();
    void abort_round(const std::string& reason);
    void next_round_or_finish();
    void mark_misses();
    std::int64_t subset_timeout(WaitSubset subset) const;

    Engine& eng_;
    SyncState sync_;
    St state_ = St::WaitAllStage1;
    WaitSpec spec_;
    std::uint64_t wait_id_ = 0;
    std::uint64_t timeout_token_ = 0;
    bool completion_scheduled_ = false;

    std::map<std::string, int> client_misses_, worker_misses_;
    std::set<std::string> stale_clients_, stale_workers_;

    std::vector<std::string> participants_; // pinned client ids, ascending
    std::int64_t round_start_ms_ = 0;
    RoundRecord record_;
};

// --- engine ----------------------------------------------------------------

class Engine {
public:
    Engine(const JobConfig& cfg, const RunOptions& opts);
    ~Engine();

    ExperimentResult run();

    void trace(const std::string& line);
    void note_client_global(const std::string& id, std::uint64_t payload_round,
                            const Digest256& digest);
    void note_poll(const std::string& id) {
        report_.node_polls[id] += 1;
        outstanding_polls_ -= 1;
    }
    void note_poll_scheduled() {
        outstanding_polls_ += 1;
        report_.max_outstanding_polls = std::max(report_.max_outstanding_polls, outstanding_polls_);
    }
    void note_poll_dropped() { outstanding_polls_ -= 1; }

    JobConfig cfg;
    RunOptions opts;
    std::map<std::string, ResolvedNode> resolved;
    Wiring wiring;
    VirtualScheduler sched;
    Bus bus;
    HashChainLedger ledger;

    ModelSpec model_spec;
    DataSet root;
    ChunkManifest manifest;
    std::map<std::string, ChunkSplit> splits;
    DataSet global_test;
    std::uint64_t master_seed = 0;
    ParamBundle init_bundle;
    Payload init_payload;
    std::filesystem::path chunk_dir;
    bool temp_chunks = false;

    std::map<std::string, std::unique_ptr<SimNode>> nodes;
    std::unique_ptr<Controller> controller;
    bool done = false;
    ExperimentReport report_;
    std::size_t outstanding_polls_ = 0;

    std::int64_t max_poll_interval = 0;
    std::uint64_t scheduling_salt = 0; // nonzero only in non-deterministic mode
};

// --- SimNode implementation -------------------------------------------------

SimNode::SimNode(Engine& eng, std::string id, const ResolvedNode& resolved)
    : eng_(eng), id_(std::move(id)), role_(resolved.role), fault_(resolved.fault),
      cfg_(resolved.config) {
    node_key_ = combine_stream(eng_.master_seed, fnv1a64(id_));
    StrategyPtr base = lookup_strategy(eng_.cfg.strategy.name);
    switch (fault_) {
    case FaultKind::MaliciousNegate:
        strategy_ = make_malicious_strategy(base, PoisonMode::Negate, node_key_);
        break;
    case FaultKind::MaliciousNoise:
        strategy_ = make_malicious_strategy(base, PoisonMode::RandomNoise, node_key_);
        break;
    default:
        strategy_ = base;
        break;
    }
}

void SimNode::start() {
    if (crashed()) return; // a crashed node never polls
    std::int64_t offset = 0;
    if (eng_.scheduling_salt != 0) {
        CounterRng jitter(eng_.scheduling_salt, fnv1a64(id_));
        offset = std::int64_t(jitter.next_below(cfg_.poll_interval_ms));
    }
    eng_.note_poll_scheduled();
    eng_.sched.schedule_at(offset, [this] { on_wake(); });
}

void SimNode::reschedule() {
    if (eng_.done) return;
    eng_.note_poll_scheduled();
    eng_.sched.schedule_after(cfg_.poll_interval_ms, [this] { on_wake(); });
}

void SimNode::publish_stage(std::uint8_t role_mask, std::uint8_t stage, std::uint32_t round) {
    eng_.bus.publish(topics::control_stage(id_), id_,
                     encode_stage({role_mask, stage, round}), id_);
}

void SimNode::on_wake() {
    if (eng_.done) {
        eng_.note_poll_dropped();
        return;
    }
    eng_.note_poll(id_);

    auto raw = eng_.bus.get(topics::kControlPhase, "phase");
    if (!raw) {
        reschedule();
        return;
    }
    if (cfg_.link_delay_ms > 0) {
        auto stamp = eng_.bus.publish_time(topics::kControlPhase, "phase");
        if (stamp && eng_.sched.now() < *stamp + std::int64_t(cfg_.link_delay_ms)) {
            reschedule(); // the latest control signal has not reached this node yet
            return;
        }
    }
    PhaseMsg phase = decode_phase(*raw);

    std::uint8_t mask = (is_client() ? 1 : 0) | (is_worker() ? 2 : 0);
    if (lifecycle_ < kStageReadyForJob && phase.download_job_config) {
        lifecycle_ = kStageReadyForJob;
        publish_stage(mask, kStageReadyForJob, phase.round);
    }
    if (lifecycle_ == kStageReadyForJob && phase.download_dataset) {
        download_dataset_chunk();
        lifecycle_ = kStageReadyWithDataset;
        publish_stage(mask, kStageReadyWithDataset, phase.round);
    }
    if (lifecycle_ == kStageReadyWithDataset) {
        if (is_client() && phase.phase == std::uint8_t(ProcessPhase::LocalLearning) &&
            phase.round > trained_round_) {
            download_global_if_new();
            if (phase.download_job_config) {
                // final distribution marker: download only, no further round
                trained_round_ = phase.round;
            } else {
                client_round(phase);
            }
        }
        if (is_worker() && phase.phase == std::uint8_t(ProcessPhase::Aggregation) &&
            phase.round > aggregated_round_) {
            worker_round(phase);
        }
    }
    reschedule();
}

void SimNode::download_dataset_chunk() {
    if (!is_client()) return;
    auto it = eng_.manifest.chunks.find(id_);
    if (it == eng_.manifest.chunks.end()) return;

    auto path = eng_.chunk_dir / (id_ + ".chunk");
    DataSet chunk = read_tensor_file(path);
    Digest256 digest = file_digest(path);
    if (digest != eng_.manifest.file_digests.at(id_)) {
        throw Error(ErrorCode::InvalidValue, "chunk digest mismatch for node " + id_);
    }

    // map root indices back to rows within the chunk file
    std::map<std::uint64_t, std::uint64_t> pos;
    for (std::size_t i = 0; i < it->second.size(); ++i) pos[it->second[i]] = i;
    const ChunkSplit& split = eng_.splits.at(id_);
    std::vector<std::uint64_t> train_rows, test_rows;
    for (auto idx : split.train) train_rows.push_back(pos.at(idx));
    for (auto idx : split.test) test_rows.push_back(pos.at(idx));
    train_ = take_rows(chunk, train_rows);
    test_ = take_rows(chunk, test_rows);
    eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=" + id_ + " ev=dataset n_train=" +
               std::to_string(train_.n) + " n_test=" + std::to_string(test_.n));
}

void SimNode::download_global_if_new() {
    auto raw = eng_.bus.get(topics::kGlobalParams, "global");
    if (!raw) return;
    AggregateMsg msg = decode_aggregate(*raw);
    if (downloaded_global_round_ == msg.round) return;
    downloaded_global_round_ = msg.round;
    eng_.note_client_global(id_, msg.round, sha256(std::span<const std::uint8_t>(*raw)));
}

void SimNode::client_round(const PhaseMsg& phase) {
    const std::uint64_t round = phase.round;
    auto raw = eng_.bus.get(topics::kGlobalParams, "global");
    if (!raw) return;
    AggregateMsg global = decode_aggregate(*raw);
    // the latest global may be older than round-1 when rounds aborted; only a
    // tag from the future would be wrong
    if (global.round >= round) {
        eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=" + id_ +
                   " ev=bad-global-tag have=" + std::to_string(global.round));
        return;
    }

    publish_stage(1, kStageBusy, std::uint32_t(round));
    eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=" + id_ +
               " ev=train phase=" + std::to_string(phase.phase) + " round=" +
               std::to_string(round));

    ClientParamsMsg out;
    out.round = std::uint32_t(round);
    if (train_.n > 0) {
        TrainConfig tc = eng_.cfg.strategy.train;
        tc.shuffle_seed = combine_stream(node_key_, round);
        ClientUpdate update = strategy_->client_round(id_, global.bundle, train_, eng_.model_spec,
                                                      tc, eng_.cfg.strategy.aggregation, persist_);
        out.n_samples = update.n_samples;
        out.bundle.params = std::move(update.params);
        out.bundle.extras = std::move(update.extra_state);
    } else {
        // empty chunk: skip training, report previous local params
        out.n_samples = 0;
        out.bundle.params = global.bundle.params;
    }
    if (test_.n > 0) {
        Metrics m = evaluate(eng_.model_spec, out.bundle.params, test_);
        out.has_metrics = true;
        out.local_accuracy = m.accuracy;
        out.local_loss = m.loss;
    }
    eng_.bus.publish(topics::client_params(id_), id_, encode_client_params(out), id_);
    trained_round_ = round;
    publish_stage(1, kStageDone, std::uint32_t(round));
}

void SimNode::worker_round(const PhaseMsg& phase) {
    const std::uint64_t round = phase.round;

    if (worker_busy_round_ < round) {
        worker_busy_round_ = round;
        publish_stage(2, kStageBusy, std::uint32_t(round));
    }

    // collect pinned participants that this worker aggregates
    const auto& my_clients = eng_.wiring.worker_clients.at(id_);
    std::vector<ClientUpdate> updates;
    for (const auto& pid : phase.participants) {
        if (!std::binary_search(my_clients.begin(), my_clients.end(), pid)) continue;
        auto raw = eng_.bus.get(topics::client_params(pid), pid);
        if (!raw) continue;
        ClientParamsMsg msg = decode_client_params(*raw);
        if (msg.round != round) continue;
        ClientUpdate u;
        u.node_id = pid;
        u.params = std::move(msg.bundle.params);
        u.n_samples = msg.n_samples;
        u.extra_state = std::move(msg.bundle.extras);
        updates.push_back(std::move(u));
    }

    auto raw_global = eng_.bus.get(topics::kGlobalParams, "global");
    if (!raw_global) return;
    AggregateMsg global = decode_aggregate(*raw_global);

    std::uint64_t total_samples = 0;
    for (const auto& u : updates) total_samples += u.n_samples;

    ParamBundle result;
    if (eng_.wiring.two_level) {
        // hierarchical: first publish this cluster's aggregate, then combine
        // all cluster aggregates once they are visible
        const std::string& cluster = eng_.wiring.worker_cluster.at(id_);
        if (cluster_published_round_ < round) {
            ParamVector cluster_mean;
            try {
                cluster_mean = fedavg_aggregate(updates, eng_.cfg.strategy.aggregation.uniform_weighting);
            } catch (const Error& e) {
                eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=" + id_ +
                           " ev=cluster-skip reason=" + e.what());
                return;
            }
            AggregateMsg cm;
            cm.round = std::uint32_t(round);
            cm.total_samples = total_samples;
            cm.bundle.params = std::move(cluster_mean);
            eng_.bus.publish(topics::cluster_aggregate(cluster), cluster, encode_aggregate(cm),
                             id_);
            cluster_published_round_ = round;
            return; // top-level combine happens on a later wake
        }
        std::vector<ClientUpdate> cluster_updates;
        total_samples = 0;
        for (const auto& name : eng_.wiring.cluster_names) {
            auto raw = eng_.bus.get(topics::cluster_aggregate(name), name);
            if (!raw) return; // not all clusters ready yet
            AggregateMsg msg = decode_aggregate(*raw);
            if (msg.round != round) return;
            ClientUpdate u;
            u.node_id = name;
            u.params = std::move(msg.bundle.params);
            u.n_samples = msg.total_samples;
            total_samples += msg.total_samples;
            cluster_updates.push_back(std::move(u));
        }
        result = [&] {
            ServerState state = make_server_state(global.bundle.params);
            if (server_vectors_ready_) {
                state.momentum = momentum_;
                state.server_c = server_c_;
            }
            state.round = round - 1;
            ParamBundle b = strategy_->server_round(state, cluster_updates,
                                                    eng_.cfg.strategy.aggregation,
                                                    eng_.wiring.client_ids.size());
            momentum_ = state.momentum;
            server_c_ = state.server_c;
            server_vectors_ready_ = true;
            return b;
        }();
    } else {
        try {
            ServerState state = make_server_state(global.bundle.params);
            if (server_vectors_ready_) {
                state.momentum = momentum_;
                state.server_c = server_c_;
            }
            state.round = round - 1;
            result = strategy_->server_round(state, updates, eng_.cfg.strategy.aggregation,
                                             eng_.wiring.client_ids.size());
            momentum_ = state.momentum;
            server_c_ = state.server_c;
            server_vectors_ready_ = true;
        } catch (const Error& e) {
            // nothing aggregatable this round; stage stays busy
            eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=" + id_ +
                       " ev=aggregate-skip reason=" + e.what());
            return;
        }
    }

    AggregateMsg am;
    am.round = std::uint32_t(round);
    am.total_samples = total_samples;
    am.bundle = std::move(result);
    Payload payload = encode_aggregate(am);
    Digest256 digest = sha256(std::span<const std::uint8_t>(payload));
    eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=" + id_ +
               " ev=aggregate phase=" + std::to_string(phase.phase) + " round=" +
               std::to_string(round) + " digest=" + to_hex(digest).substr(0, 12));
    eng_.bus.publish(topics::worker_aggregate(id_), id_, std::move(payload), id_);
    eng_.bus.publish(topics::kConsensusBallots, id_,
                     encode_ballot({std::uint32_t(round), digest}), id_);
    publish_stage(2, kStageDone, std::uint32_t(round));
    aggregated_round_ = round;
}

// --- Controller implementation ----------------------------------------------

Controller::Controller(Engine& eng) : eng_(eng) {
    sync_.total_rounds = eng_.cfg.strategy.total_rounds;
    for (const auto& id : eng_.wiring.client_ids) sync_.client_stage[id] = kStageNotReady;
    for (const auto& id : eng_.wiring.worker_ids) sync_.worker_stage[id] = kStageNotReady;
}

void Controller::publish_phase() {
    PhaseMsg msg;
    msg.phase = std::uint8_t(sync_.process_phase);
    msg.round = std::uint32_t(sync_.global_round);
    msg.download_job_config = sync_.download_job_config;
    msg.download_dataset = sync_.download_dataset;
    if (sync_.process_phase == ProcessPhase::Aggregation) msg.participants = participants_;
    eng_.bus.publish(topics::kControlPhase, "phase", encode_phase(msg), "controller");
}

std::int64_t Controller::subset_timeout(WaitSubset subset) const {
    std::int64_t timeout = 0;
    for (const auto& [id, node] : eng_.resolved) {
        bool relevant = subset == WaitSubset::All ||
                        (subset == WaitSubset::Clients && (node.role == NodeRole::Client ||
                                                           node.role == NodeRole::ClientWorker)) ||
                        (subset == WaitSubset::Workers && (node.role == NodeRole::Worker ||
                                                           node.role == NodeRole::ClientWorker));
        if (relevant) timeout = std::max(timeout, std::int64_t(node.config.timeout_ms));
    }
    return timeout > 0 ? timeout : 30000;
}

void Controller::start() {
    sync_.process_phase = ProcessPhase::Initializing;
    sync_.download_job_config = true;
    publish_phase();
    begin_wait(St::WaitAllStage1,
               WaitSpec{kStageReadyForJob, WaitSubset::All, subset_timeout(WaitSubset::All), {}});
}

void Controller::on_stage_message(const Message& msg) {
    StageMsg stage = decode_stage(msg.payload);
    const std::string& node = msg.key;
    if (stage.role_mask & 1) {
        if (sync_.client_stage.contains(node)) {
            apply_stage_update(sync_.client_stage, node, stage.stage);
        }
    }
    if (stage.role_mask & 2) {
        if (sync_.worker_stage.contains(node)) {
            apply_stage_update(sync_.worker_stage, node, stage.stage);
        }
    }
    maybe_complete();
}

void Controller::begin_wait(St state, WaitSpec spec) {
    state_ = state;
    spec_ = std::move(spec);
    wait_id_ += 1;
    completion_scheduled_ = false;
    const std::uint64_t id = wait_id_;
    timeout_token_ = eng_.sched.schedule_after(spec_.timeout_ms, [this, id] { on_timeout(id); });
    maybe_complete();
}

bool Controller::wait_predicate() const {
    auto ok = [&](const std::map<std::string, std::uint8_t>& stages,
                  const std::set<std::string>& stale) {
        for (const auto& [id, stage] : stages) {
            if (stale.contains(id)) continue;
            if (stage < spec_.target_stage) return false;
        }
        return true;
    };
    switch (spec_.subset) {
    case WaitSubset::Clients: return ok(sync_.client_stage, stale_clients_);
    case WaitSubset::Workers: return ok(sync_.worker_stage, stale_workers_);
    case WaitSubset::All:
        return ok(sync_.client_stage, stale_clients_) && ok(sync_.worker_stage, stale_workers_);
    }
    return true;
}

void Controller::maybe_complete() {
    if (state_ == St::Done || completion_scheduled_) return;
    if (!wait_predicate()) return;
    completion_scheduled_ = true;
    const std::uint64_t id = wait_id_;
    eng_.sched.schedule_now([this, id] {
        if (id == wait_id_) complete_wait(WaitOutcome::AllReached);
    });
}

void Controller::on_timeout(std::uint64_t wait_id) {
    if (wait_id != wait_id_ || state_ == St::Done || completion_scheduled_) return;
    WaitOutcome outcome = WaitOutcome::TimedOutWithQuorum;
    if (spec_.min_results && !spec_.min_results()) outcome = WaitOutcome::TimedOutEmpty;
    mark_misses();
    completion_scheduled_ = true;
    complete_wait(outcome);
}

void Controller::mark_misses() {
    auto mark = [&](const std::map<std::string, std::uint8_t>& stages,
                    std::map<std::string, int>& misses, std::set<std::string>& stale) {
        for (const auto& [id, stage] : stages) {
            if (stage < spec_.target_stage && !stale.contains(id)) {
                if (++misses[id] >= 2) stale.insert(id);
            }
        }
    };
    if (spec_.subset == WaitSubset::Clients || spec_.subset == WaitSubset::All) {
        mark(sync_.client_stage, client_misses_, stale_clients_);
    }
    if (spec_.subset == WaitSubset::Workers || spec_.subset == WaitSubset::All) {
        mark(sync_.worker_stage, worker_misses_, stale_workers_);
    }
}

void Controller::complete_wait(WaitOutcome outcome) {
    wait_id_ += 1; // invalidate the pending timeout
    eng_.sched.cancel(timeout_token_);
    eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=controller ev=wait-done state=" +
               std::to_string(int(state_)) + " outcome=" + wait_outcome_name(outcome));
    advance(outcome);
}

void Controller::advance(WaitOutcome outcome) {
    switch (state_) {
    case St::WaitAllStage1:
        sync_.download_dataset = true;
        publish_phase();
        begin_wait(St::WaitAllStage2, WaitSpec{kStageReadyWithDataset, WaitSubset::All,
                                               subset_timeout(WaitSubset::All), {}});
        break;

    case St::WaitAllStage2:
        // publish the initial global model and enter round 1
        sync_.global_round = 1;
        eng_.bus.publish(topics::kGlobalParams, "global", eng_.init_payload, "controller");
        sync_.global_param_ref = sha256(std::span<const std::uint8_t>(eng_.init_payload));
        begin_round();
        break;

    case St::WaitClients3:
        record_.client_stage3_wait = outcome;
        eng_.trace("t=" + std::to_string(eng_.sched.now()) +
                   " node=controller ev=clients-busy round=" +
                   std::to_string(sync_.global_round));
        begin_wait(St::WaitClients4,
                   WaitSpec{kStageDone, WaitSubset::Clients, subset_timeout(WaitSubset::Clients),
                            [this] {
                                for (const auto& id : eng_.wiring.client_ids) {
                                    auto raw = eng_.bus.get(topics::client_params(id), id);
                                    if (!raw) continue;
                                    if (decode_client_params(*raw).round == sync_.global_round) {
                                        return true;
                                    }
                                }
                                return false;
                            }});
        break;

    case St::WaitClients4: {
        record_.client_stage4_wait = outcome;
        if (outcome == WaitOutcome::TimedOutEmpty) {
            abort_round("no client updates");
            return;
        }
        participants_.clear();
        for (const auto& id : eng_.wiring.client_ids) {
            auto raw = eng_.bus.get(topics::client_params(id), id);
            if (!raw) continue;
            if (decode_client_params(*raw).round == sync_.global_round) {
                participants_.push_back(id);
            }
        }
        if (participants_.empty()) {
            abort_round("no client updates");
            return;
        }
        sync_.process_phase = ProcessPhase::Aggregation;
        publish_phase();
        begin_wait(St::WaitWorkers3, WaitSpec{kStageBusy, WaitSubset::Workers,
                                              subset_timeout(WaitSubset::Workers), {}});
        break;
    }

    case St::WaitWorkers3: {
        record_.worker_stage3_wait = outcome;
        eng_.trace("t=" + std::to_string(eng_.sched.now()) +
                   " node=controller ev=workers-busy round=" +
                   std::to_string(sync_.global_round));
        std::int64_t timeout = eng_.cfg.consensus.timeout_s
                                   ? std::int64_t(*eng_.cfg.consensus.timeout_s) * 1000
                                   : subset_timeout(WaitSubset::Workers);
        begin_wait(St::WaitWorkers4,
                   WaitSpec{kStageDone, WaitSubset::Workers, timeout, [this] {
                                for (const auto& id : eng_.wiring.worker_ids) {
                                    auto raw = eng_.bus.get(topics::kConsensusBallots, id);
                                    if (!raw) continue;
                                    if (decode_ballot(*raw).round == sync_.global_round) {
                                        return true;
                                    }
                                }
                                return false;
                            }});
        break;
    }

    case St::WaitWorkers4:
        record_.worker_stage4_wait = outcome;
        if (outcome == WaitOutcome::TimedOutEmpty) {
            abort_round("no aggregated params");
            return;
        }
        finish_round();
        break;

    case St::FinalDistribution:
    case St::Done:
        break;
    }
}

void Controller::begin_round() {
    const std::uint64_t round = sync_.global_round;
    eng_.bus.begin_round(round);
    round_start_ms_ = eng_.sched.now();
    record_ = RoundRecord{};
    record_.round = round;
    participants_.clear();
    client_misses_.clear();
    worker_misses_.clear();
    stale_clients_.clear();
    stale_workers_.clear();
    for (auto& [id, stage] : sync_.client_stage) {
        if (stage > kStageReadyWithDataset) stage = kStageReadyWithDataset;
    }
    for (auto& [id, stage] : sync_.worker_stage) {
        if (stage > kStageReadyWithDataset) stage = kStageReadyWithDataset;
    }
    sync_.process_phase = ProcessPhase::LocalLearning;
    sync_.download_job_config = false;
    sync_.download_dataset = false;
    publish_phase();
    eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=controller ev=round-start round=" +
               std::to_string(round));
    begin_wait(St::WaitClients3,
               WaitSpec{kStageBusy, WaitSubset::Clients, subset_timeout(WaitSubset::Clients), {}});
}

void Controller::finish_round() {
    const std::uint64_t round = sync_.global_round;

    // gather ballots and aggregates for this round
    ConsensusInput input;
    input.hyperparams = eng_.cfg.consensus.hyperparams;
    for (const auto& id : eng_.wiring.worker_ids) {
        auto raw_ballot = eng_.bus.get(topics::kConsensusBallots, id);
        if (!raw_ballot) continue;
        if (decode_ballot(*raw_ballot).round != round) continue;
        auto raw_agg = eng_.bus.get(topics::worker_aggregate(id), id);
        if (!raw_agg) continue;
        AggregateMsg agg = decode_aggregate(*raw_agg);
        if (agg.round != round) continue;
        AggregateSubmission sub;
        sub.bundle = std::move(agg.bundle);
        // digests recomputed from the published bytes; a claimed ballot
        // digest cannot vouch for a different payload
        sub.digest = sha256(std::span<const std::uint8_t>(*raw_agg));
        input.aggregates.emplace(id, std::move(sub));
    }
    if (input.aggregates.empty()) {
        abort_round("no aggregated params");
        return;
    }

    std::string winner;
    run_consensus(eng_.cfg.consensus.name, input, &winner);
    Payload winner_payload = *eng_.bus.get(topics::worker_aggregate(winner), winner);
    Digest256 winner_digest = sha256(std::span<const std::uint8_t>(winner_payload));

    // phase 4: distribute the selected global model
    eng_.bus.publish(topics::kGlobalParams, "global", winner_payload, "controller");
    sync_.global_param_ref = winner_digest;

    // provenance entries: client params, worker aggregates, decision, global
    for (const auto& pid : participants_) {
        auto raw = eng_.bus.get(topics::client_params(pid), pid);
        eng_.ledger.append(EntryKind::ClientParam, round, pid,
                           sha256(std::span<const std::uint8_t>(*raw)));
    }
    for (const auto& [wid, sub] : input.aggregates) {
        eng_.ledger.append(EntryKind::WorkerAggregate, round, wid, sub.digest);
    }
    eng_.ledger.append(EntryKind::ConsensusDecision, round, winner, winner_digest);
    eng_.ledger.append(EntryKind::GlobalParam, round, "controller", winner_digest);

    // metrics on the pooled test split
    AggregateMsg winner_msg = decode_aggregate(winner_payload);
    if (eng_.global_test.n > 0) {
        Metrics m = evaluate(eng_.model_spec, winner_msg.bundle.params, eng_.global_test);
        record_.accuracy = m.accuracy;
        record_.loss = m.loss;
    }
    for (const auto& pid : participants_) {
        auto raw = eng_.bus.get(topics::client_params(pid), pid);
        ClientParamsMsg msg = decode_client_params(*raw);
        if (msg.has_metrics) record_.per_client[pid] = {msg.local_accuracy, msg.local_loss};
    }
    record_.elapsed_ms = eng_.sched.now() - round_start_ms_;
    auto traffic = eng_.bus.round_traffic(round);
    record_.bytes_sent = traffic.sent;
    record_.bytes_received = traffic.received;
    record_.client_to_worker_bytes = eng_.bus.round_topic_received(round, "client/");
    record_.global_digest = winner_digest;
    record_.winning_worker = winner;
    eng_.report_.rounds.push_back(record_);
    eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=controller ev=consensus round=" +
               std::to_string(round) + " winner=" + winner + " digest=" +
               to_hex(winner_digest).substr(0, 12));

    next_round_or_finish();
}

void Controller::abort_round(const std::string& reason) {
    eng_.report_.aborted_rounds.push_back(sync_.global_round);
    eng_.trace("t=" + std::to_string(eng_.sched.now()) + " node=controller ev=round-aborted round=" +
               std::to_string(sync_.global_round) + " reason=" + reason);
    next_round_or_finish();
}

void Controller::next_round_or_finish() {
    if (sync_.global_round >= sync_.total_rounds) {
        // one terminal phase-1 message lets clients fetch the final global
        sync_.global_round += 1;
        sync_.process_phase = ProcessPhase::LocalLearning;
        sync_.download_job_config = true; // marks final distribution, no training
        state_ = St::FinalDistribution;
        publish_phase();
        eng_.sched.schedule_after(2 * eng_.max_poll_interval + 1, [this] {
            state_ = St::Done;
            eng_.done = true;
        });
        return;
    }
    sync_.global_round += 1;
    begin_round();
}

// --- Engine implementation ---------------------------------------------------

Engine::Engine(const JobConfig& config, const RunOptions& options)
    : cfg(config), opts(options), sched(!options.deterministic) {
    resolved = resolve_roles(cfg);
    wiring = build_wiring(cfg, resolved);

    master_seed = opts.seed.value_or(cfg.dataset.seed);
    if (!opts.deterministic) {
        std::random_device rd;
        scheduling_salt = (std::uint64_t(rd()) << 32) | rd();
    }

    root = prepare_root_dataset(cfg.dataset.spec, master_seed);
    model_spec.kind = cfg.strategy.model_kind;
    model_spec.input_dim = std::uint32_t(root.d);
    model_spec.n_classes = root.n_classes;
    model_spec.hidden_dims = cfg.strategy.hidden_dims;
    model_spec.init_seed = combine_stream(master_seed, fnv1a64("model-init"));

    if (cfg.dataset.partitioner == "iid") {
        manifest = iid_partition(root.n, wiring.client_ids, master_seed);
    } else {
        manifest = dirichlet_partition(root.labels, wiring.client_ids, cfg.dataset.alpha,
                                       master_seed);
    }
    validate_manifest(manifest, root.n);

    if (opts.chunk_dir.empty()) {
        chunk_dir = std::filesystem::temp_directory_path() /
                    ("flsim-chunks-" + to_hex(job_digest(cfg, master_seed)).substr(0, 16));
        temp_chunks = true;
    } else {
        chunk_dir = opts.chunk_dir;
    }
    archive_chunks(root, manifest, chunk_dir);

    std::vector<std::uint64_t> pooled_test;
    for (const auto& id : wiring.client_ids) {
        ChunkSplit split = preprocess_chunk(manifest.chunks.at(id), cfg.dataset.train_fraction);
        pooled_test.insert(pooled_test.end(), split.test.begin(), split.test.end());
        splits[id] = std::move(split);
    }
    global_test = take_rows(root, pooled_test);

    ParamVector init = init_params(model_spec);
    init_bundle.params = init;
    init_bundle.extras = lookup_strategy(cfg.strategy.name)->initial_extras(init);
    AggregateMsg init_msg;
    init_msg.round = 0;
    init_msg.total_samples = 0;
    init_msg.bundle = init_bundle;
    init_payload = encode_aggregate(init_msg);

    report_.job_digest = job_digest(cfg, master_seed);
    report_.total_rounds = cfg.strategy.total_rounds;
}

Engine::~Engine() {
    if (temp_chunks) {
        std::error_code ec;
        std::filesystem::remove_all(chunk_dir, ec);
    }
}

void Engine::trace(const std::string& line) {
    if (opts.capture_trace) report_.event_trace.push_back(line);
}

void Engine::note_client_global(const std::string& id, std::uint64_t payload_round,
                                const Digest256& digest) {
    for (auto it = report_.rounds.rbegin(); it != report_.rounds.rend(); ++it) {
        if (it->round == payload_round) {
            it->client_global_digests[id] = digest;
            return;
        }
    }
}

ExperimentResult Engine::run() {
    bus.set_clock([this] { return sched.now(); });
    // topics (fixed naming contract)
    bus.register_topic(topics::kControlPhase);
    bus.register_topic(topics::kGlobalParams);
    bus.register_topic(topics::kConsensusBallots);
    for (const auto& [id, node] : resolved) {
        bus.register_topic(topics::control_stage(id));
    }
    for (const auto& id : wiring.client_ids) bus.register_topic(topics::client_params(id));
    for (const auto& id : wiring.worker_ids) bus.register_topic(topics::worker_aggregate(id));
    for (const auto& name : wiring.cluster_names) {
        bus.register_topic(topics::cluster_aggregate(name));
    }

    controller = std::make_unique<Controller>(*this);
    for (const auto& [id, rn] : resolved) {
        nodes.emplace(id, std::make_unique<SimNode>(*this, id, rn));
        max_poll_interval = std::max(max_poll_interval, std::int64_t(rn.config.poll_interval_ms));
    }

    // subscriptions define the accounting graph: every node listens to the
    // control phase, clients to the distributed global, aggregating workers
    // to their clients' parameter topics, the controller to stage signals,
    // ballots and worker aggregates
    for (const auto& [id, node] : nodes) {
        bus.subscribe(topics::kControlPhase, id);
        if (node->is_client()) bus.subscribe(topics::kGlobalParams, id);
        if (node->is_worker()) {
            for (const auto& cid : wiring.worker_clients.at(id)) {
                bus.subscribe(topics::client_params(cid), id);
            }
            for (const auto& name : wiring.cluster_names) {
                bus.subscribe(topics::cluster_aggregate(name), id);
            }
        }
    }
    for (const auto& [id, node] : resolved) {
        bus.subscribe(topics::control_stage(id), "controller",
                      [this](const Message& msg) { controller->on_stage_message(msg); });
    }
    bus.subscribe(topics::kConsensusBallots, "controller");
    for (const auto& id : wiring.worker_ids) {
        bus.subscribe(topics::worker_aggregate(id), "controller");
    }

    controller->start();
    for (const auto& [id, node] : nodes) node->start();
    sched.run();

    report_.total_bytes_sent = bus.traffic().total.sent;
    report_.total_bytes_received = bus.traffic().total.received;
    report_.max_scheduler_queue = sched.max_queue();
    report_.final_global_digest = report_.rounds.empty()
                                      ? sha256(std::span<const std::uint8_t>(init_payload))
                                      : report_.rounds.back().global_digest;
    report_.ledger_entries = ledger.size();
    report_.ledger_ok = ledger.verify_chain().ok;
    return {std::move(report_), std::move(ledger)};
}

} // namespace

ExperimentResult run_experiment(const JobConfig& cfg, const RunOptions& opts) {
    Engine engine(cfg, opts);
    return engine.run();
}

} // namespace flsim
