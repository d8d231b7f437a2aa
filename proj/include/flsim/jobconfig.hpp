#pragma once

#include "flsim/dataset.hpp"
#include "flsim/digest.hpp"
#include "flsim/model.hpp"
#include "flsim/strategy.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flsim {

enum class NodeRole { Client, Worker, ClientWorker };
enum class TopologyKind { ClientServer, Hierarchical, Decentralized };
enum class FaultKind { None, Crash, MaliciousNegate, MaliciousNoise };

std::string node_role_name(NodeRole role);
std::string topology_kind_name(TopologyKind kind);
std::string fault_kind_name(FaultKind fault);

struct NodeConfig {
    std::uint32_t poll_interval_ms = 100;
    std::uint32_t timeout_ms = 30000;
    std::uint32_t link_delay_ms = 0; // control signals become visible this much later
};

struct NodeEntry {
    std::string id;
    NodeRole role = NodeRole::Client;
    std::optional<std::uint32_t> poll_interval_ms;
    std::optional<std::uint32_t> timeout_ms;
    std::optional<std::uint32_t> link_delay_ms;
    FaultKind fault = FaultKind::None;
};

struct DatasetSection {
    DatasetSpec spec;           // name + generator params
    std::string partitioner;    // "iid" | "dirichlet"
    double alpha = 0.5;         // dirichlet concentration
    std::uint64_t seed = 0;     // config-level seed
    double train_fraction = 0.8;
};

struct ConsensusSection {
    std::string name = "majority-hash";
    std::map<std::string, double> hyperparams;
    std::optional<std::uint32_t> timeout_s; // phase-2 wait override
};

struct Cluster {
    std::string name;
    std::vector<std::string> nodes;
};

struct TopologySection {
    TopologyKind kind = TopologyKind::ClientServer;
    std::vector<Cluster> clusters;                            // hierarchical
    std::map<std::string, std::vector<std::string>> peers;    // decentralized; empty = full mesh
};

struct StrategySection {
    std::string name = "fedavg";
    ModelKind model_kind = ModelKind::LogisticRegression;
    std::vector<std::uint32_t> hidden_dims;
    TrainConfig train; // shuffle_seed unused here; engine derives per node/round
    StrategyConfig aggregation;
    std::uint64_t total_rounds = 1;
};

// The parsed six-section experiment description. Immutable after parse.
struct JobConfig {
    DatasetSection dataset;
    ConsensusSection consensus;
    TopologySection topology;
    StrategySection strategy;
    NodeConfig node_defaults;
    std::vector<NodeEntry> nodes;
};

// Parses and validates the JSON job document. The document must contain
// exactly the sections dataset, consensus, topology, strategy, node_defaults
// and nodes; unknown keys anywhere are rejected. All referenced dataset /
// partitioner / strategy / consensus names must resolve.
JobConfig parse_job_config(const std::string& text);

// Canonical re-serialization; parse(serialize(parse(t))) == parse(t).
std::string serialize_job_config(const JobConfig& cfg);

struct ResolvedNode {
    NodeRole role = NodeRole::Client;
    NodeConfig config;
    FaultKind fault = FaultKind::None;
};

// Effective role and fully-resolved per-node config (defaults overridden by
// per-node settings). Keys are node ids.
std::map<std::string, ResolvedNode> resolve_roles(const JobConfig& cfg);

// Hash of the canonical serialization plus the effective seed.
Digest256 job_digest(const JobConfig& cfg, std::uint64_t effective_seed);

} // namespace flsim
