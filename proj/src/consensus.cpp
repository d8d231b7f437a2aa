#include "flsim/consensus.hpp"

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

#include <mutex>

namespace flsim {

namespace {

struct Registry {
    std::mutex mu;
    std::map<std::string, ConsensusFn> entries;

    Registry() { entries["majority-hash"] = majority_hash_consensus; }
};

Registry& registry() {
    static Registry r;
    return r;
}

} // namespace

void register_consensus(const std::string& name, ConsensusFn fn) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    if (r.entries.contains(name)) {
        throw Error(ErrorCode::DuplicateConsensus, "consensus already registered: " + name);
    }
    r.entries[name] = std::move(fn);
}

ConsensusFn lookup_consensus(const std::string& name) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    auto it = r.entries.find(name);
    if (it == r.entries.end()) {
        throw Error(ErrorCode::UnknownConsensus, "unknown consensus: " + name);
    }
    return it->second;
}

bool consensus_registered(const std::string& name) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    return r.entries.contains(name);
}

const AggregateSubmission& run_consensus(const std::string& name, const ConsensusInput& input,
                                         std::string* winner_id) {
    if (input.aggregates.empty()) {
        throw Error(ErrorCode::EmptyInput, "consensus over empty aggregate set");
    }
    ConsensusFn fn = lookup_consensus(name);
    std::string winner = fn(input);
    auto it = input.aggregates.find(winner);
    if (it == input.aggregates.end()) {
        throw Error(ErrorCode::InvalidValue,
                    "consensus function returned unknown worker: " + winner);
    }
    if (winner_id) *winner_id = winner;
    return it->second;
}

std::string majority_hash_consensus(const ConsensusInput& input) {
    if (input.aggregates.empty()) {
        throw Error(ErrorCode::EmptyInput, "consensus over empty aggregate set");
    }
    // digest -> (count, smallest worker id); map order gives the digest tie-break
    std::map<Digest256, std::pair<std::size_t, std::string>> groups;
    for (const auto& [worker, sub] : input.aggregates) {
        auto& [count, rep] = groups[sub.digest];
        if (count == 0 || worker < rep) rep = worker;
        ++count;
    }
    const std::pair<const Digest256, std::pair<std::size_t, std::string>>* best = nullptr;
    for (const auto& g : groups) {
        if (!best || g.second.first > best->second.first) best = &g;
    }
    return best->second.second;
}

namespace {

class MaliciousStrategy : public Strategy {
public:
    MaliciousStrategy(StrategyPtr inner, PoisonMode mode, std::uint64_t noise_key)
        : inner_(std::move(inner)), mode_(mode), noise_key_(noise_key) {}

    std::string name() const override { return inner_->name(); }

    ClientUpdate client_round(const std::string& node_id, const ParamBundle& global,
                              const DataSet& train, const ModelSpec& model,
                              const TrainConfig& train_cfg, const StrategyConfig& cfg,
                              std::map<std::string, ParamVector>& persist) const override {
        return inner_->client_round(node_id, global, train, model, train_cfg, cfg, persist);
    }

    ParamBundle server_round(ServerState& state, const std::vector<ClientUpdate>& updates,
                             const StrategyConfig& cfg, std::uint64_t n_total) const override {
        ParamBundle bundle = inner_->server_round(state, updates, cfg, n_total);
        if (mode_ == PoisonMode::Negate) {
            for (auto& v : bundle.params.values) v = -v;
        } else {
            CounterRng rng(noise_key_, combine_stream(fnv1a64("poison"), state.round));
            for (auto& v : bundle.params.values) v += 5.0 * rng.normal();
        }
        return bundle;
    }

    std::map<std::string, ParamVector> initial_extras(const ParamVector& init) const override {
        return inner_->initial_extras(init);
    }

private:
    StrategyPtr inner_;
    PoisonMode mode_;
    std::uint64_t noise_key_;
};

} // namespace

StrategyPtr make_malicious_strategy(StrategyPtr inner, PoisonMode mode, std::uint64_t noise_key) {
    return std::make_shared<MaliciousStrategy>(std::move(inner), mode, noise_key);
}

} // namespace flsim
