#include "flsim/strategy.hpp"

#include "flsim/errors.hpp"

#include <algorithm>
#include <bit>
#include <mutex>

namespace flsim {

namespace {

// Participating updates (n_samples > 0) sorted by node id.
std::vector<const ClientUpdate*> participants(const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) throw Error(ErrorCode::EmptyUpdateSet, "no client updates");
    std::vector<const ClientUpdate*> out;
    for (const auto& u : updates) {
        if (u.n_samples > 0) out.push_back(&u);
    }
    if (out.empty()) throw Error(ErrorCode::ZeroTotalSamples, "all updates carry zero samples");
    std::sort(out.begin(), out.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) { return a->node_id < b->node_id; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (!out[i]->params.same_layout(out[0]->params)) throw layout_mismatch("client updates");
    }
    return out;
}

std::size_t derived_steps(const DataSet& train, const TrainConfig& cfg) {
    std::size_t batches = (train.n + cfg.batch_size - 1) / cfg.batch_size;
    return std::size_t(cfg.local_epochs) * batches;
}

bool all_zero_bits(const ParamVector& v) {
    for (double x : v.values) {
        if (std::bit_cast<std::uint64_t>(x) != 0) return false;
    }
    return true;
}

} // namespace

ServerState make_server_state(const ParamVector& initial_global) {
    ServerState s;
    s.global = initial_global;
    s.momentum = zeros_like(initial_global);
    s.server_c = zeros_like(initial_global);
    s.round = 0;
    return s;
}

ParamVector fedavg_aggregate(const std::vector<ClientUpdate>& updates, bool uniform) {
    auto parts = participants(updates);
    std::uint64_t total = 0;
    for (const auto* u : parts) total += u->n_samples;

    ParamVector acc = zeros_like(parts[0]->params);
    for (const auto* u : parts) {
        double w = uniform ? 1.0 / double(parts.size()) : double(u->n_samples) / double(total);
        acc = axpy(w, u->params, acc);
    }
    return acc;
}

ServerState fedavgm_aggregate(const ServerState& state, const std::vector<ClientUpdate>& updates,
                              const StrategyConfig& cfg) {
    ParamVector avg = fedavg_aggregate(updates, cfg.uniform_weighting);
    if (!avg.same_layout(state.global)) throw layout_mismatch("fedavgm");

    ServerState next = state;
    next.round = state.round + 1;
    const double beta = cfg.beta;
    const double slr = cfg.server_lr;
    for (std::size_t i = 0; i < avg.values.size(); ++i) {
        const double g = state.global.values[i];
        const double m = state.momentum.values[i];
        const double a = avg.values[i];
        next.momentum.values[i] = beta * m + (g - a);
        next.global.values[i] = (1.0 - slr) * g + slr * (a - beta * m);
    }
    return next;
}

ClientUpdate scaffold_client_step(const std::string& node_id, const ParamVector& global,
                                  const DataSet& train, const ModelSpec& model,
                                  const ParamVector& client_c, const ParamVector& server_c,
                                  const StrategyConfig& cfg, const TrainConfig& train_cfg) {
    if (!client_c.same_layout(global) || !server_c.same_layout(global)) {
        throw layout_mismatch("scaffold control variates");
    }
    ParamVector correction = subtract(server_c, client_c);
    const ParamVector* corr = all_zero_bits(correction) ? nullptr : &correction;

    std::size_t k = cfg.scaffold_k > 0 ? cfg.scaffold_k : derived_steps(train, train_cfg);
    TrainResult res = train_local(model, global, train, train_cfg, corr, k);

    ClientUpdate update;
    update.node_id = node_id;
    update.n_samples = train.n;

    const double inv_klr = 1.0 / (double(res.steps) * train_cfg.learning_rate);
    ParamVector new_client_c = zeros_like(global);
    ParamVector delta = zeros_like(global);
    for (std::size_t i = 0; i < global.values.size(); ++i) {
        double cprime = client_c.values[i] - server_c.values[i] +
                        (global.values[i] - res.params.values[i]) * inv_klr;
        new_client_c.values[i] = cprime;
        delta.values[i] = cprime - client_c.values[i];
    }
    update.params = std::move(res.params);
    update.extra_state["scaffold_delta"] = std::move(delta);
    update.extra_state["scaffold_client_c"] = std::move(new_client_c);
    return update;
}

ServerState scaffold_server_aggregate(const ServerState& state,
                                      const std::vector<ClientUpdate>& updates,
                                      const StrategyConfig& cfg, std::uint64_t n_total_clients) {
    auto parts = participants(updates);
    for (const auto* u : parts) {
        if (!u->extra_state.contains("scaffold_delta")) {
            throw Error(ErrorCode::MissingExtraState,
                        "scaffold_delta missing from update of node " + u->node_id);
        }
    }
    if (n_total_clients == 0) throw invalid_value("n_total_clients", "must be >= 1");

    // uniform mean of participating params, same accumulation as fedavg
    ParamVector mean = zeros_like(parts[0]->params);
    const double w = 1.0 / double(parts.size());
    for (const auto* u : parts) mean = axpy(w, u->params, mean);

    ParamVector delta_sum = zeros_like(state.server_c);
    for (const auto* u : parts) delta_sum = axpy(1.0, u->extra_state.at("scaffold_delta"), delta_sum);

    ServerState next = state;
    next.round = state.round + 1;
    const double slr = cfg.server_lr;
    const double inv_total = 1.0 / double(n_total_clients);
    for (std::size_t i = 0; i < mean.values.size(); ++i) {
        next.global.values[i] = (1.0 - slr) * state.global.values[i] + slr * mean.values[i];
        next.server_c.values[i] = state.server_c.values[i] + inv_total * delta_sum.values[i];
    }
    return next;
}

namespace {

class FedAvgStrategy : public Strategy {
public:
    std::string name() const override { return "fedavg"; }

    ClientUpdate client_round(const std::string& node_id, const ParamBundle& global,
                              const DataSet& train, const ModelSpec& model,
                              const TrainConfig& train_cfg, const StrategyConfig& /*cfg*/,
                              std::map<std::string, ParamVector>& /*persist*/) const override {
        TrainResult res = train_local(model, global.params, train, train_cfg);
        return ClientUpdate{node_id, std::move(res.params), train.n, {}};
    }

    ParamBundle server_round(ServerState& state, const std::vector<ClientUpdate>& updates,
                             const StrategyConfig& cfg, std::uint64_t) const override {
        state.global = fedavg_aggregate(updates, cfg.uniform_weighting);
        state.round += 1;
        return ParamBundle{state.global, {}};
    }
};

class FedAvgMStrategy : public Strategy {
public:
    std::string name() const override { return "fedavgm"; }

    ClientUpdate client_round(const std::string& node_id, const ParamBundle& global,
                              const DataSet& train, const ModelSpec& model,
                              const TrainConfig& train_cfg, const StrategyConfig& /*cfg*/,
                              std::map<std::string, ParamVector>& /*persist*/) const override {
        TrainResult res = train_local(model, global.params, train, train_cfg);
        return ClientUpdate{node_id, std::move(res.params), train.n, {}};
    }

    ParamBundle server_round(ServerState& state, const std::vector<ClientUpdate>& updates,
                             const StrategyConfig& cfg, std::uint64_t) const override {
        state = fedavgm_aggregate(state, updates, cfg);
        return ParamBundle{state.global, {}};
    }
};

class ScaffoldStrategy : public Strategy {
public:
    std::string name() const override { return "scaffold"; }

    ClientUpdate client_round(const std::string& node_id, const ParamBundle& global,
                              const DataSet& train, const ModelSpec& model,
                              const TrainConfig& train_cfg, const StrategyConfig& cfg,
                              std::map<std::string, ParamVector>& persist) const override {
        ParamVector client_c;
        if (auto it = persist.find("client_c"); it != persist.end()) {
            client_c = it->second;
        } else {
            client_c = zeros_like(global.params);
        }
        ParamVector server_c;
        if (auto it = global.extras.find("server_c"); it != global.extras.end()) {
            server_c = it->second;
        } else {
            server_c = zeros_like(global.params);
        }
        ClientUpdate update = scaffold_client_step(node_id, global.params, train, model, client_c,
                                                   server_c, cfg, train_cfg);
        persist["client_c"] = update.extra_state.at("scaffold_client_c");
        update.extra_state.erase("scaffold_client_c");
        return update;
    }

    ParamBundle server_round(ServerState& state, const std::vector<ClientUpdate>& updates,
                             const StrategyConfig& cfg, std::uint64_t n_total) const override {
        state = scaffold_server_aggregate(state, updates, cfg, n_total);
        return ParamBundle{state.global, {{"server_c", state.server_c}}};
    }

    std::map<std::string, ParamVector> initial_extras(const ParamVector& init) const override {
        return {{"server_c", zeros_like(init)}};
    }
};

struct Registry {
    std::mutex mu;
    std::map<std::string, StrategyPtr> entries;

    Registry() {
        entries["fedavg"] = std::make_shared<FedAvgStrategy>();
        entries["fedavgm"] = std::make_shared<FedAvgMStrategy>();
        entries["scaffold"] = std::make_shared<ScaffoldStrategy>();
    }
};

Registry& registry() {
    static Registry r;
    return r;
}

} // namespace

void register_strategy(const std::string& name, StrategyPtr impl) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    if (r.entries.contains(name)) {
        throw Error(ErrorCode::DuplicateStrategy, "strategy already registered: " + name);
    }
    r.entries[name] = std::move(impl);
}

StrategyPtr lookup_strategy(const std::string& name) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    auto it = r.entries.find(name);
    if (it == r.entries.end()) {
        throw Error(ErrorCode::UnknownStrategy, "unknown strategy: " + name);
    }
    return it->second;
}

bool strategy_registered(const std::string& name) {
    auto& r = registry();
    std::lock_guard lock(r.mu);
    return r.entries.contains(name);
}

} // namespace flsim
