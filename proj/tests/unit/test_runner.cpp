#include "flsim/runner.hpp"

#include "flsim/jobconfig.hpp"
#include "flsim/rng.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace flsim;
using nlohmann::json;

namespace {

json runnable_doc(int rounds) {
    json doc;
    doc["dataset"] = {{"name", "synthetic-blobs"},
                      {"params", {{"n_samples", 80}, {"n_features", 3}, {"n_classes", 2}}},
                      {"partitioner", "iid"},
                      {"seed", 21},
                      {"train_fraction", 0.75}};
    doc["consensus"] = {{"name", "majority-hash"}};
    doc["topology"] = {{"kind", "client-server"}};
    doc["strategy"] = {{"name", "fedavg"},
                       {"model", {{"kind", "logistic-regression"}}},
                       {"train", {{"learning_rate", 0.2}, {"batch_size", 8}, {"local_epochs", 1}}},
                       {"total_rounds", rounds}};
    doc["node_defaults"] = {{"poll_interval_ms", 50}, {"timeout_ms", 2000}};
    doc["nodes"] = json::array();
    doc["nodes"].push_back({{"id", "c1"}, {"role", "client"}});
    doc["nodes"].push_back({{"id", "c2"}, {"role", "client"}});
    doc["nodes"].push_back({{"id", "w1"}, {"role", "worker"}});
    return doc;
}

int invoke(std::vector<std::string> args) {
    std::vector<const char*> argv;
    argv.push_back("flsim");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_main(int(argv.size()), argv.data());
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("17-digit formatting round-trips doubles") {
    CounterRng rng(404, 0);
    for (int i = 0; i < 200; ++i) {
        double v = rng.normal() * std::pow(10.0, double(rng.next_below(13)) - 6.0);
        double back = std::strtod(format_real17(v).c_str(), nullptr);
        CHECK(back == v);
    }
    CHECK(format_real17(0.5) == "0.5");
}

TEST_CASE("metrics CSV has the exact column contract") {
    RunOptions opts;
    opts.deterministic = true;
    ExperimentResult result = run_experiment(parse_job_config(runnable_doc(2).dump()), opts);
    std::ostringstream out;
    write_metrics_csv(result.report, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "round,accuracy,loss,elapsed_ms,bytes_sent,bytes_received,global_digest");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 2);
}

TEST_CASE("per-round byte columns sum to the bus totals") {
    RunOptions opts;
    opts.deterministic = true;
    ExperimentResult result = run_experiment(parse_job_config(runnable_doc(3).dump()), opts);
    std::uint64_t sent = 0, received = 0;
    for (const auto& r : result.report.rounds) {
        sent += r.bytes_sent;
        received += r.bytes_received;
    }
    // cumulative totals additionally include the init round (round 0)
    CHECK(sent <= result.report.total_bytes_sent);
    CHECK(received <= result.report.total_bytes_received);
    CHECK(result.report.total_bytes_sent - sent > 0); // init traffic exists
}

TEST_CASE("missing job file exits with the config code and names the path") {
    CHECK(invoke({"run", "--job", "/nonexistent/job.json"}) == kExitConfig);
}

TEST_CASE("invalid configs exit with the config code") {
    auto path = temp_path("flsim_bad_job.json");
    json doc = runnable_doc(1);
    doc["strategy"]["total_rounds"] = 0;
    std::ofstream(path) << doc.dump();
    CHECK(invoke({"run", "--job", path.string(), "--metrics-out",
                  temp_path("flsim_bad_metrics.csv").string()}) == kExitConfig);
    std::filesystem::remove(path);
}

TEST_CASE("a valid job writes metrics and exits zero") {
    auto job = temp_path("flsim_ok_job.json");
    auto csv = temp_path("flsim_ok_metrics.csv");
    auto ledger = temp_path("flsim_ok_ledger.txt");
    std::ofstream(job) << runnable_doc(2).dump();
    CHECK(invoke({"run", "--job", job.string(), "--metrics-out", csv.string(), "--ledger-out",
                  ledger.string(), "--deterministic", "--seed", "3"}) == kExitOk);

    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "round,accuracy,loss,elapsed_ms,bytes_sent,bytes_received,global_digest");
    CHECK(std::filesystem::file_size(ledger) > 0);
    std::filesystem::remove(job);
    std::filesystem::remove(csv);
    std::filesystem::remove(ledger);
}

TEST_CASE("a run with no live workers exits 4 with a header-only CSV") {
    auto job = temp_path("flsim_nw_job.json");
    auto csv = temp_path("flsim_nw_metrics.csv");
    json doc = runnable_doc(2);
    doc["node_defaults"]["timeout_ms"] = 400;
    doc["nodes"][2]["fault"] = "crash";
    std::ofstream(job) << doc.dump();
    CHECK(invoke({"run", "--job", job.string(), "--metrics-out", csv.string(),
                  "--deterministic"}) == kExitAllAborted);
    std::ifstream in(csv);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "round,accuracy,loss,elapsed_ms,bytes_sent,bytes_received,global_digest\n");
    std::filesystem::remove(job);
    std::filesystem::remove(csv);
}
