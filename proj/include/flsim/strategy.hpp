#pragma once

#include "flsim/model.hpp"
#include "flsim/param_vector.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace flsim {

// One client's contribution to a round. extra_state carries strategy-owned
// vectors (SCAFFOLD publishes its control-variate delta as "scaffold_delta").
struct ClientUpdate {
    std::string node_id;
    ParamVector params;
    std::uint64_t n_samples = 0;
    std::map<std::string, ParamVector> extra_state;
};

struct ServerState {
    ParamVector global;
    ParamVector momentum; // FedAvgM buffer
    ParamVector server_c; // SCAFFOLD server control variate
    std::uint64_t round = 0;
};

struct StrategyConfig {
    double beta = 0.9;        // server momentum coefficient, in [0, 1)
    double server_lr = 1.0;   // > 0
    std::uint64_t scaffold_k = 0; // local steps; 0 derives local_epochs * batches
    bool uniform_weighting = false;
};

ServerState make_server_state(const ParamVector& initial_global);

// Weighted mean of client parameters, weights n_i / sum(n) (or 1/|S| when
// uniform is set). Updates with n_samples == 0 are excluded. Accumulation is
// a single left-to-right pass in ascending node-id order, so the result is
// invariant under permutation of the input list.
ParamVector fedavg_aggregate(const std::vector<ClientUpdate>& updates, bool uniform = false);

// Server-momentum update:
//   A         = fedavg(updates)
//   momentum' = beta * momentum + (global - A)
//   global'   = global - server_lr * momentum'
// global' is evaluated elementwise in the expanded form
// (1 - server_lr) * g + server_lr * (A - beta * momentum), which is the same
// recurrence and reduces bit-exactly to FedAvg at beta = 0, server_lr = 1.
ServerState fedavgm_aggregate(const ServerState& state, const std::vector<ClientUpdate>& updates,
                              const StrategyConfig& cfg);

// SCAFFOLD client step: K local SGD steps with gradient corrected by
// (server_c - client_c); then
//   client_c' = client_c - server_c + (x - y) / (K * lr)
// where x is the incoming global and y the trained result. The returned
// update carries (client_c' - client_c) as extra_state["scaffold_delta"].
// An all-zero correction is skipped entirely, so the zero-variate case is
// bit-identical to plain SGD.
ClientUpdate scaffold_client_step(const std::string& node_id, const ParamVector& global,
                                  const DataSet& train, const ModelSpec& model,
                                  const ParamVector& client_c, const ParamVector& server_c,
                                  const StrategyConfig& cfg, const TrainConfig& train_cfg);

// SCAFFOLD server step over participating clients S:
//   global'   = global + (server_lr / |S|) * sum(y_i - global)
//   server_c' = server_c + (1 / N_total) * sum(delta_i)
// global' is evaluated as (1 - server_lr) * g + server_lr * mean(y), the
// expanded form of the same recurrence.
ServerState scaffold_server_aggregate(const ServerState& state,
                                      const std::vector<ClientUpdate>& updates,
                                      const StrategyConfig& cfg, std::uint64_t n_total_clients);

// What the engine asks of a pluggable strategy: local client work for one
// round and server-side aggregation. Implementations are stateless; all
// evolving quantities live in ServerState / the client's persist map.
class Strategy {
public:
    virtual ~Strategy() = default;
    virtual std::string name() const = 0;

    virtual ClientUpdate client_round(const std::string& node_id, const ParamBundle& global,
                                      const DataSet& train, const ModelSpec& model,
                                      const TrainConfig& train_cfg, const StrategyConfig& cfg,
                                      std::map<std::string, ParamVector>& persist) const = 0;

    virtual ParamBundle server_round(ServerState& state, const std::vector<ClientUpdate>& updates,
                                     const StrategyConfig& cfg,
                                     std::uint64_t n_total_clients) const = 0;

    virtual std::map<std::string, ParamVector> initial_extras(const ParamVector& init) const {
        (void)init;
        return {};
    }
};

using StrategyPtr = std::shared_ptr<const Strategy>;

// Name registry ("fedavg", "fedavgm", "scaffold" are built in).
void register_strategy(const std::string& name, StrategyPtr impl);
StrategyPtr lookup_strategy(const std::string& name);
bool strategy_registered(const std::string& name);

} // namespace flsim
