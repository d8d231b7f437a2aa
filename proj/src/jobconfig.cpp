#include "flsim/jobconfig.hpp"

#include "flsim/consensus.hpp"
#include "flsim/errors.hpp"
#include "flsim/param_vector.hpp"
#include "flsim/partition.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>

namespace flsim {

using nlohmann::json;

std::string node_role_name(NodeRole role) {
    switch (role) {
    case NodeRole::Client: return "client";
    case NodeRole::Worker: return "worker";
    case NodeRole::ClientWorker: return "client+worker";
    }
    return "?";
}

std::string topology_kind_name(TopologyKind kind) {
    switch (kind) {
    case TopologyKind::ClientServer: return "client-server";
    case TopologyKind::Hierarchical: return "hierarchical";
    case TopologyKind::Decentralized: return "decentralized";
    }
    return "?";
}

std::string fault_kind_name(FaultKind fault) {
    switch (fault) {
    case FaultKind::None: return "none";
    case FaultKind::Crash: return "crash";
    case FaultKind::MaliciousNegate: return "malicious-negate";
    case FaultKind::MaliciousNoise: return "malicious-noise";
    }
    return "?";
}

namespace {

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) {
            throw invalid_value(path + "." + key, "unknown key");
        }
    }
}

const json& require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) throw invalid_value(path + "." + key, "required");
    return obj[key];
}

std::string require_string(const json& obj, const std::string& path, const std::string& key) {
    const json& v = require(obj, path, key);
    if (!v.is_string()) throw invalid_value(path + "." + key, "must be a string");
    return v.get<std::string>();
}

std::uint64_t require_count(const json& obj, const std::string& path, const std::string& key,
                            std::uint64_t min) {
    const json& v = require(obj, path, key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < std::int64_t(min)) {
        throw invalid_value(path + "." + key, "must be >= " + std::to_string(min));
    }
    return v.get<std::uint64_t>();
}

double require_real(const json& obj, const std::string& path, const std::string& key) {
    const json& v = require(obj, path, key);
    if (!v.is_number()) throw invalid_value(path + "." + key, "must be a number");
    return v.get<double>();
}

DatasetSection parse_dataset(const json& j) {
    check_keys(j, "dataset", {"name", "params", "partitioner", "alpha", "seed", "train_fraction"});
    DatasetSection ds;
    ds.spec.name = require_string(j, "dataset", "name");
    if (!dataset_registered(ds.spec.name)) {
        throw Error(ErrorCode::UnknownDataset, "unknown dataset: " + ds.spec.name);
    }
    ds.spec.params = j.contains("params") ? j["params"] : json::object();
    if (!ds.spec.params.is_object()) throw invalid_value("dataset.params", "must be an object");
    ds.partitioner = require_string(j, "dataset", "partitioner");
    if (!partitioner_registered(ds.partitioner)) {
        throw Error(ErrorCode::UnknownPartitioner, "unknown partitioner: " + ds.partitioner);
    }
    if (j.contains("alpha")) {
        ds.alpha = require_real(j, "dataset", "alpha");
        if (!(ds.alpha > 0.0)) throw invalid_value("dataset.alpha", "must be > 0");
    }
    if (j.contains("seed")) ds.seed = require_count(j, "dataset", "seed", 0);
    if (j.contains("train_fraction")) {
        ds.train_fraction = require_real(j, "dataset", "train_fraction");
        if (!(ds.train_fraction > 0.0 && ds.train_fraction < 1.0)) {
            throw invalid_value("dataset.train_fraction", "must be in (0, 1)");
        }
    }
    return ds;
}

ConsensusSection parse_consensus(const json& j) {
    check_keys(j, "consensus", {"name", "hyperparams", "timeout_s"});
    ConsensusSection cs;
    cs.name = require_string(j, "consensus", "name");
    if (!consensus_registered(cs.name)) {
        throw Error(ErrorCode::UnknownConsensus, "unknown consensus: " + cs.name);
    }
    if (j.contains("hyperparams")) {
        const json& h = j["hyperparams"];
        if (!h.is_object()) throw invalid_value("consensus.hyperparams", "must be an object");
        for (const auto& [key, v] : h.items()) {
            if (!v.is_number()) {
                throw invalid_value("consensus.hyperparams." + key, "must be a number");
            }
            cs.hyperparams[key] = v.get<double>();
        }
    }
    if (j.contains("timeout_s")) {
        cs.timeout_s = std::uint32_t(require_count(j, "consensus", "timeout_s", 1));
    }
    return cs;
}

TopologySection parse_topology(const json& j) {
    check_keys(j, "topology", {"kind", "clusters", "peers"});
    TopologySection ts;
    std::string kind = require_string(j, "topology", "kind");
    if (kind == "client-server") ts.kind = TopologyKind::ClientServer;
    else if (kind == "hierarchical") ts.kind = TopologyKind::Hierarchical;
    else if (kind == "decentralized") ts.kind = TopologyKind::Decentralized;
    else throw invalid_value("topology.kind", "must be client-server, hierarchical or decentralized");

    if (j.contains("clusters")) {
        if (ts.kind != TopologyKind::Hierarchical) {
            throw invalid_value("topology.clusters", "only valid for hierarchical topology");
        }
        const json& cl = j["clusters"];
        if (!cl.is_array() || cl.empty()) {
            throw invalid_value("topology.clusters", "must be a nonempty array");
        }
        std::set<std::string> cluster_names;
        for (const auto& c : cl) {
            check_keys(c, "topology.clusters[]", {"name", "nodes"});
            Cluster cluster;
            cluster.name = require_string(c, "topology.clusters[]", "name");
            if (!cluster_names.insert(cluster.name).second) {
                throw invalid_value("topology.clusters[].name",
                                    "duplicate cluster name " + cluster.name);
            }
            const json& nodes = require(c, "topology.clusters[]", "nodes");
            if (!nodes.is_array() || nodes.empty()) {
                throw invalid_value("topology.clusters[].nodes", "must be a nonempty array");
            }
            for (const auto& n : nodes) {
                if (!n.is_string()) {
                    throw invalid_value("topology.clusters[].nodes", "entries must be strings");
                }
                cluster.nodes.push_back(n.get<std::string>());
            }
            ts.clusters.push_back(std::move(cluster));
        }
    } else if (ts.kind == TopologyKind::Hierarchical) {
        throw invalid_value("topology.clusters", "required for hierarchical topology");
    }

    if (j.contains("peers")) {
        if (ts.kind != TopologyKind::Decentralized) {
            throw invalid_value("topology.peers", "only valid for decentralized topology");
        }
        const json& peers = j["peers"];
        if (!peers.is_object()) throw invalid_value("topology.peers", "must be an object");
        for (const auto& [node, list] : peers.items()) {
            if (!list.is_array()) throw invalid_value("topology.peers." + node, "must be an array");
            for (const auto& p : list) {
                if (!p.is_string()) {
                    throw invalid_value("topology.peers." + node, "entries must be strings");
                }
                ts.peers[node].push_back(p.get<std::string>());
            }
        }
    }
    return ts;
}

StrategySection parse_strategy(const json& j) {
    check_keys(j, "strategy", {"name", "model", "train", "aggregation", "total_rounds"});
    StrategySection ss;
    ss.name = require_string(j, "strategy", "name");
    if (!strategy_registered(ss.name)) {
        throw Error(ErrorCode::UnknownStrategy, "unknown strategy: " + ss.name);
    }

    const json& model = require(j, "strategy", "model");
    check_keys(model, "strategy.model", {"kind", "hidden_dims"});
    std::string kind = require_string(model, "strategy.model", "kind");
    if (kind == "logistic-regression") ss.model_kind = ModelKind::LogisticRegression;
    else if (kind == "mlp") ss.model_kind = ModelKind::Mlp;
    else throw invalid_value("strategy.model.kind", "must be logistic-regression or mlp");
    if (model.contains("hidden_dims")) {
        const json& dims = model["hidden_dims"];
        if (!dims.is_array()) throw invalid_value("strategy.model.hidden_dims", "must be an array");
        for (const auto& d : dims) {
            if (!d.is_number_integer() || d.get<std::int64_t>() < 1) {
                throw invalid_value("strategy.model.hidden_dims", "dims must be >= 1");
            }
            ss.hidden_dims.push_back(d.get<std::uint32_t>());
        }
    }
    if (ss.model_kind == ModelKind::Mlp && ss.hidden_dims.empty()) {
        throw invalid_value("strategy.model.hidden_dims", "mlp requires at least one hidden layer");
    }

    const json& train = require(j, "strategy", "train");
    check_keys(train, "strategy.train", {"learning_rate", "batch_size", "local_epochs"});
    ss.train.learning_rate = require_real(train, "strategy.train", "learning_rate");
    if (!(ss.train.learning_rate > 0.0)) {
        throw invalid_value("strategy.train.learning_rate", "must be > 0");
    }
    ss.train.batch_size = std::uint32_t(require_count(train, "strategy.train", "batch_size", 1));
    ss.train.local_epochs =
        std::uint32_t(require_count(train, "strategy.train", "local_epochs", 1));

    if (j.contains("aggregation")) {
        const json& agg = j["aggregation"];
        check_keys(agg, "strategy.aggregation",
                   {"server_momentum", "server_lr", "scaffold_k", "uniform_weighting"});
        if (agg.contains("server_momentum")) {
            ss.aggregation.beta = require_real(agg, "strategy.aggregation", "server_momentum");
            if (!(ss.aggregation.beta >= 0.0 && ss.aggregation.beta < 1.0)) {
                throw invalid_value("strategy.aggregation.server_momentum", "must be in [0, 1)");
            }
        }
        if (agg.contains("server_lr")) {
            ss.aggregation.server_lr = require_real(agg, "strategy.aggregation", "server_lr");
            if (!(ss.aggregation.server_lr > 0.0)) {
                throw invalid_value("strategy.aggregation.server_lr", "must be > 0");
            }
        }
        if (agg.contains("scaffold_k")) {
            ss.aggregation.scaffold_k = require_count(agg, "strategy.aggregation", "scaffold_k", 1);
        }
        if (agg.contains("uniform_weighting")) {
            if (!agg["uniform_weighting"].is_boolean()) {
                throw invalid_value("strategy.aggregation.uniform_weighting", "must be a boolean");
            }
            ss.aggregation.uniform_weighting = agg["uniform_weighting"].get<bool>();
        }
    }

    ss.total_rounds = require_count(j, "strategy", "total_rounds", 1);
    return ss;
}

NodeConfig parse_node_config(const json& j, const std::string& path) {
    check_keys(j, path, {"poll_interval_ms", "timeout_ms", "link_delay_ms"});
    NodeConfig nc;
    if (j.contains("poll_interval_ms")) {
        nc.poll_interval_ms = std::uint32_t(require_count(j, path, "poll_interval_ms", 1));
    }
    if (j.contains("timeout_ms")) {
        nc.timeout_ms = std::uint32_t(require_count(j, path, "timeout_ms", 1));
    }
    if (j.contains("link_delay_ms")) {
        nc.link_delay_ms = std::uint32_t(require_count(j, path, "link_delay_ms", 0));
    }
    return nc;
}

std::vector<NodeEntry> parse_nodes(const json& j) {
    if (!j.is_array() || j.empty()) throw invalid_value("nodes", "must be a nonempty array");
    std::vector<NodeEntry> nodes;
    std::set<std::string> seen;
    for (const auto& n : j) {
        check_keys(n, "nodes[]",
                   {"id", "role", "poll_interval_ms", "timeout_ms", "link_delay_ms", "fault"});
        NodeEntry e;
        e.id = require_string(n, "nodes[]", "id");
        if (e.id.empty()) throw invalid_value("nodes[].id", "must be nonempty");
        // ids become topic names, chunk file names and ledger fields
        for (char ch : e.id) {
            bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                      (ch >= '0' && ch <= '9') || ch == '-' || ch == '_' || ch == '.';
            if (!ok) {
                throw invalid_value("nodes[].id",
                                    "id " + e.id + " may only use [A-Za-z0-9._-]");
            }
        }
        if (!seen.insert(e.id).second) {
            throw invalid_value("nodes[].id", "duplicate id " + e.id);
        }
        std::string role = require_string(n, "nodes[]", "role");
        if (role == "client") e.role = NodeRole::Client;
        else if (role == "worker") e.role = NodeRole::Worker;
        else if (role == "client+worker") e.role = NodeRole::ClientWorker;
        else throw invalid_value("nodes[].role", "must be client, worker or client+worker");
        if (n.contains("poll_interval_ms")) {
            e.poll_interval_ms = std::uint32_t(require_count(n, "nodes[]", "poll_interval_ms", 1));
        }
        if (n.contains("timeout_ms")) {
            e.timeout_ms = std::uint32_t(require_count(n, "nodes[]", "timeout_ms", 1));
        }
        if (n.contains("link_delay_ms")) {
            e.link_delay_ms = std::uint32_t(require_count(n, "nodes[]", "link_delay_ms", 0));
        }
        if (n.contains("fault")) {
            std::string f = require_string(n, "nodes[]", "fault");
            if (f == "crash") e.fault = FaultKind::Crash;
            else if (f == "malicious-negate") e.fault = FaultKind::MaliciousNegate;
            else if (f == "malicious-noise") e.fault = FaultKind::MaliciousNoise;
            else throw invalid_value("nodes[].fault",
                                     "must be crash, malicious-negate or malicious-noise");
        }
        nodes.push_back(std::move(e));
    }
    return nodes;
}

void validate_cross_section(const JobConfig& cfg) {
    std::set<std::string> ids;
    std::size_t n_clients = 0, n_workers = 0;
    for (const auto& n : cfg.nodes) {
        ids.insert(n.id);
        if (n.role == NodeRole::Client || n.role == NodeRole::ClientWorker) ++n_clients;
        if (n.role == NodeRole::Worker || n.role == NodeRole::ClientWorker) ++n_workers;
    }
    if (n_clients == 0) throw invalid_value("nodes", "at least one client-role node required");
    if (n_workers == 0) throw invalid_value("nodes", "at least one worker-role node required");

    switch (cfg.topology.kind) {
    case TopologyKind::Hierarchical: {
        std::map<std::string, std::size_t> membership;
        for (const auto& c : cfg.topology.clusters) {
            bool has_worker = false;
            for (const auto& node : c.nodes) {
                if (!ids.contains(node)) {
                    throw invalid_value("topology.clusters", "unknown node " + node);
                }
                membership[node] += 1;
                for (const auto& e : cfg.nodes) {
                    if (e.id == node &&
                        (e.role == NodeRole::Worker || e.role == NodeRole::ClientWorker)) {
                        has_worker = true;
                    }
                }
            }
            if (!has_worker) {
                throw invalid_value("topology.clusters",
                                    "cluster " + c.name + " has no worker-role node");
            }
        }
        for (const auto& id : ids) {
            auto it = membership.find(id);
            if (it == membership.end()) {
                throw invalid_value("topology.clusters", "node " + id + " missing from clusters");
            }
            if (it->second != 1) {
                throw invalid_value("topology.clusters",
                                    "node " + id + " appears in multiple clusters");
            }
        }
        break;
    }
    case TopologyKind::Decentralized: {
        for (const auto& n : cfg.nodes) {
            if (n.role != NodeRole::ClientWorker) {
                throw invalid_value("nodes[].role",
                                    "decentralized topology requires role client+worker for " +
                                        n.id);
            }
        }
        for (const auto& [node, peers] : cfg.topology.peers) {
            if (!ids.contains(node)) throw invalid_value("topology.peers", "unknown node " + node);
            for (const auto& p : peers) {
                if (!ids.contains(p)) {
                    throw invalid_value("topology.peers", "unknown peer " + p + " of " + node);
                }
            }
        }
        break;
    }
    case TopologyKind::ClientServer:
        break;
    }

    if (cfg.topology.kind == TopologyKind::Hierarchical && cfg.strategy.name == "scaffold") {
        throw invalid_value("strategy.name",
                            "scaffold is not supported on hierarchical topology");
    }
}

} // namespace

JobConfig parse_job_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw invalid_value("document", std::string("not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw invalid_value("document", "top level must be an object");

    static const char* kSections[] = {"dataset",  "consensus",     "topology",
                                      "strategy", "node_defaults", "nodes"};
    for (const char* s : kSections) {
        if (!doc.contains(s)) throw missing_section(s);
    }
    check_keys(doc, "document",
               {"dataset", "consensus", "topology", "strategy", "node_defaults", "nodes"});

    JobConfig cfg;
    cfg.dataset = parse_dataset(doc["dataset"]);
    cfg.consensus = parse_consensus(doc["consensus"]);
    cfg.topology = parse_topology(doc["topology"]);
    cfg.strategy = parse_strategy(doc["strategy"]);
    cfg.node_defaults = parse_node_config(doc["node_defaults"], "node_defaults");
    cfg.nodes = parse_nodes(doc["nodes"]);
    validate_cross_section(cfg);
    return cfg;
}

std::string serialize_job_config(const JobConfig& cfg) {
    json doc;
    json ds;
    ds["name"] = cfg.dataset.spec.name;
    ds["params"] = cfg.dataset.spec.params;
    ds["partitioner"] = cfg.dataset.partitioner;
    ds["alpha"] = cfg.dataset.alpha;
    ds["seed"] = cfg.dataset.seed;
    ds["train_fraction"] = cfg.dataset.train_fraction;
    doc["dataset"] = ds;

    json cs;
    cs["name"] = cfg.consensus.name;
    cs["hyperparams"] = cfg.consensus.hyperparams;
    if (cfg.consensus.timeout_s) cs["timeout_s"] = *cfg.consensus.timeout_s;
    doc["consensus"] = cs;

    json ts;
    ts["kind"] = topology_kind_name(cfg.topology.kind);
    if (!cfg.topology.clusters.empty()) {
        json clusters = json::array();
        for (const auto& c : cfg.topology.clusters) {
            clusters.push_back({{"name", c.name}, {"nodes", c.nodes}});
        }
        ts["clusters"] = clusters;
    }
    if (!cfg.topology.peers.empty()) ts["peers"] = cfg.topology.peers;
    doc["topology"] = ts;

    json ss;
    ss["name"] = cfg.strategy.name;
    json model;
    model["kind"] =
        cfg.strategy.model_kind == ModelKind::LogisticRegression ? "logistic-regression" : "mlp";
    if (!cfg.strategy.hidden_dims.empty()) model["hidden_dims"] = cfg.strategy.hidden_dims;
    ss["model"] = model;
    ss["train"] = {{"learning_rate", cfg.strategy.train.learning_rate},
                   {"batch_size", cfg.strategy.train.batch_size},
                   {"local_epochs", cfg.strategy.train.local_epochs}};
    ss["aggregation"] = {{"server_momentum", cfg.strategy.aggregation.beta},
                         {"server_lr", cfg.strategy.aggregation.server_lr},
                         {"uniform_weighting", cfg.strategy.aggregation.uniform_weighting}};
    if (cfg.strategy.aggregation.scaffold_k > 0) {
        ss["aggregation"]["scaffold_k"] = cfg.strategy.aggregation.scaffold_k;
    }
    ss["total_rounds"] = cfg.strategy.total_rounds;
    doc["strategy"] = ss;

    doc["node_defaults"] = {{"poll_interval_ms", cfg.node_defaults.poll_interval_ms},
                            {"timeout_ms", cfg.node_defaults.timeout_ms},
                            {"link_delay_ms", cfg.node_defaults.link_delay_ms}};

    json nodes = json::array();
    for (const auto& n : cfg.nodes) {
        json e;
        e["id"] = n.id;
        e["role"] = node_role_name(n.role);
        if (n.poll_interval_ms) e["poll_interval_ms"] = *n.poll_interval_ms;
        if (n.timeout_ms) e["timeout_ms"] = *n.timeout_ms;
        if (n.link_delay_ms) e["link_delay_ms"] = *n.link_delay_ms;
        if (n.fault != FaultKind::None) e["fault"] = fault_kind_name(n.fault);
        nodes.push_back(e);
    }
    doc["nodes"] = nodes;
    return doc.dump(2);
}

std::map<std::string, ResolvedNode> resolve_roles(const JobConfig& cfg) {
    std::map<std::string, ResolvedNode> out;
    for (const auto& n : cfg.nodes) {
        ResolvedNode r;
        r.role = n.role;
        r.config = cfg.node_defaults;
        if (n.poll_interval_ms) r.config.poll_interval_ms = *n.poll_interval_ms;
        if (n.timeout_ms) r.config.timeout_ms = *n.timeout_ms;
        if (n.link_delay_ms) r.config.link_delay_ms = *n.link_delay_ms;
        r.fault = n.fault;
        out[n.id] = r;
    }
    return out;
}

Digest256 job_digest(const JobConfig& cfg, std::uint64_t effective_seed) {
    std::string text = serialize_job_config(cfg);
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    wire::put_u64(bytes, effective_seed);
    return sha256(std::span<const std::uint8_t>(bytes));
}

} // namespace flsim
