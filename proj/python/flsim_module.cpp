#include "flsim/consensus.hpp"
#include "flsim/dataset.hpp"
#include "flsim/digest.hpp"
#include "flsim/errors.hpp"
#include "flsim/jobconfig.hpp"
#include "flsim/model.hpp"
#include "flsim/partition.hpp"
#include "flsim/runner.hpp"
#include "flsim/strategy.hpp"
#include "flsim/sync.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace flsim;

namespace {

py::dict report_to_dict(const ExperimentReport& report) {
    py::dict d;
    d["job_digest"] = to_hex(report.job_digest);
    d["total_rounds"] = report.total_rounds;
    py::list rounds;
    for (const auto& r : report.rounds) {
        py::dict row;
        row["round"] = r.round;
        row["accuracy"] = r.accuracy;
        row["loss"] = r.loss;
        row["elapsed_ms"] = r.elapsed_ms;
        row["bytes_sent"] = r.bytes_sent;
        row["bytes_received"] = r.bytes_received;
        row["client_to_worker_bytes"] = r.client_to_worker_bytes;
        row["global_digest"] = to_hex(r.global_digest);
        row["winning_worker"] = r.winning_worker;
        rounds.append(row);
    }
    d["rounds"] = rounds;
    d["aborted_rounds"] = report.aborted_rounds;
    d["final_global_digest"] = to_hex(report.final_global_digest);
    d["ledger_entries"] = report.ledger_entries;
    d["ledger_ok"] = report.ledger_ok;
    d["bytes_sent"] = report.total_bytes_sent;
    d["bytes_received"] = report.total_bytes_received;
    return d;
}

ModelSpec make_model_spec(const std::string& kind, std::uint32_t input_dim,
                          std::uint32_t n_classes, const std::vector<std::uint32_t>& hidden,
                          std::uint64_t seed) {
    ModelSpec spec;
    if (kind == "logistic-regression") spec.kind = ModelKind::LogisticRegression;
    else if (kind == "mlp") spec.kind = ModelKind::Mlp;
    else throw invalid_value("kind", "must be logistic-regression or mlp");
    spec.input_dim = input_dim;
    spec.n_classes = n_classes;
    spec.hidden_dims = hidden;
    spec.init_seed = seed;
    return spec;
}

DataSet make_data_set(const std::vector<double>& features, const std::vector<std::uint32_t>& labels,
                      std::uint32_t n_classes) {
    if (labels.empty() || features.size() % labels.size() != 0) {
        throw invalid_value("features", "length must be a multiple of len(labels)");
    }
    DataSet ds;
    ds.n = labels.size();
    ds.d = features.size() / labels.size();
    ds.n_classes = n_classes;
    ds.features = features;
    ds.labels = labels;
    return ds;
}

} // namespace

PYBIND11_MODULE(_flsim, m) {
    m.doc() = "Deterministic federated learning simulation core";

    m.def("sha256_hex", [](const std::string& data) { return sha256_hex(data); },
          py::arg("data"), "SHA-256 hex digest of a byte string");

    m.def(
        "parse_job_config",
        [](const std::string& text) {
            JobConfig cfg = parse_job_config(text);
            py::dict d;
            d["canonical"] = serialize_job_config(cfg);
            d["strategy"] = cfg.strategy.name;
            d["consensus"] = cfg.consensus.name;
            d["topology"] = topology_kind_name(cfg.topology.kind);
            d["total_rounds"] = cfg.strategy.total_rounds;
            auto roles = resolve_roles(cfg);
            py::dict nodes;
            for (const auto& [id, node] : roles) {
                py::dict entry;
                entry["role"] = node_role_name(node.role);
                entry["poll_interval_ms"] = node.config.poll_interval_ms;
                entry["timeout_ms"] = node.config.timeout_ms;
                entry["fault"] = fault_kind_name(node.fault);
                nodes[py::str(id)] = entry;
            }
            d["nodes"] = nodes;
            return d;
        },
        py::arg("text"), "Parse and validate a job config document");

    m.def(
        "run_job",
        [](const std::string& text, bool deterministic, std::optional<std::uint64_t> seed) {
            JobConfig cfg = parse_job_config(text);
            RunOptions opts;
            opts.deterministic = deterministic;
            if (seed) opts.seed = *seed;
            ExperimentResult result = run_experiment(cfg, opts);
            return report_to_dict(result.report);
        },
        py::arg("text"), py::arg("deterministic") = true, py::arg("seed") = std::nullopt,
        "Run an experiment from a job config document and return the report");

    m.def(
        "iid_partition",
        [](std::uint64_t n_samples, const std::vector<std::string>& ids, std::uint64_t seed) {
            ChunkManifest manifest = iid_partition(n_samples, ids, seed);
            py::dict d;
            for (const auto& [node, idx] : manifest.chunks) d[py::str(node)] = idx;
            return d;
        },
        py::arg("n_samples"), py::arg("client_ids"), py::arg("seed"));

    m.def(
        "dirichlet_partition",
        [](const std::vector<std::uint32_t>& labels, const std::vector<std::string>& ids,
           double alpha, std::uint64_t seed) {
            ChunkManifest manifest = dirichlet_partition(labels, ids, alpha, seed);
            py::dict d;
            for (const auto& [node, idx] : manifest.chunks) d[py::str(node)] = idx;
            return d;
        },
        py::arg("labels"), py::arg("client_ids"), py::arg("alpha"), py::arg("seed"));

    m.def(
        "init_params",
        [](const std::string& kind, std::uint32_t input_dim, std::uint32_t n_classes,
           const std::vector<std::uint32_t>& hidden, std::uint64_t seed) {
            return init_params(make_model_spec(kind, input_dim, n_classes, hidden, seed)).values;
        },
        py::arg("kind"), py::arg("input_dim"), py::arg("n_classes"),
        py::arg("hidden_dims") = std::vector<std::uint32_t>{}, py::arg("seed") = 0);

    m.def(
        "train_local",
        [](const std::string& kind, std::uint32_t input_dim, std::uint32_t n_classes,
           const std::vector<std::uint32_t>& hidden, const std::vector<double>& params,
           const std::vector<double>& features, const std::vector<std::uint32_t>& labels,
           double learning_rate, std::uint32_t batch_size, std::uint32_t local_epochs,
           std::uint64_t shuffle_seed) {
            ModelSpec spec = make_model_spec(kind, input_dim, n_classes, hidden, 0);
            ParamVector pv{model_layout(spec), params};
            if (pv.values.size() != layout_count(pv.layout)) {
                throw invalid_value("params", "length does not match model layout");
            }
            DataSet ds = make_data_set(features, labels, n_classes);
            TrainConfig cfg{learning_rate, batch_size, local_epochs, shuffle_seed};
            return train_local(spec, std::move(pv), ds, cfg).params.values;
        },
        py::arg("kind"), py::arg("input_dim"), py::arg("n_classes"), py::arg("hidden_dims"),
        py::arg("params"), py::arg("features"), py::arg("labels"), py::arg("learning_rate"),
        py::arg("batch_size"), py::arg("local_epochs"), py::arg("shuffle_seed") = 0);

    m.def(
        "evaluate",
        [](const std::string& kind, std::uint32_t input_dim, std::uint32_t n_classes,
           const std::vector<std::uint32_t>& hidden, const std::vector<double>& params,
           const std::vector<double>& features, const std::vector<std::uint32_t>& labels) {
            ModelSpec spec = make_model_spec(kind, input_dim, n_classes, hidden, 0);
            ParamVector pv{model_layout(spec), params};
            if (pv.values.size() != layout_count(pv.layout)) {
                throw invalid_value("params", "length does not match model layout");
            }
            Metrics metrics = evaluate(spec, pv, make_data_set(features, labels, n_classes));
            return py::make_tuple(metrics.accuracy, metrics.loss);
        },
        py::arg("kind"), py::arg("input_dim"), py::arg("n_classes"), py::arg("hidden_dims"),
        py::arg("params"), py::arg("features"), py::arg("labels"));

    m.def(
        "fedavg",
        [](const std::vector<std::pair<std::vector<double>, std::uint64_t>>& updates) {
            if (updates.empty()) throw Error(ErrorCode::EmptyUpdateSet, "no client updates");
            Layout layout{{"p", {std::uint32_t(updates[0].first.size())}}};
            std::vector<ClientUpdate> list;
            for (std::size_t i = 0; i < updates.size(); ++i) {
                ClientUpdate u;
                // zero-padded so the id sort preserves list order
                char id[16];
                std::snprintf(id, sizeof id, "u%08zu", i);
                u.node_id = id;
                u.params = ParamVector{layout, updates[i].first};
                u.n_samples = updates[i].second;
                list.push_back(std::move(u));
            }
            return fedavg_aggregate(list).values;
        },
        py::arg("updates"), "Weighted mean of (values, n_samples) pairs");
}
