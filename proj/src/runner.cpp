#include "flsim/runner.hpp"

#include "flsim/errors.hpp"
#include "flsim/jobconfig.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace flsim {

std::string format_real17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_metrics_csv(const ExperimentReport& report, std::ostream& out) {
    out << "round,accuracy,loss,elapsed_ms,bytes_sent,bytes_received,global_digest\n";
    for (const auto& r : report.rounds) {
        out << r.round << ',' << format_real17(r.accuracy) << ',' << format_real17(r.loss) << ','
            << r.elapsed_ms << ',' << r.bytes_sent << ',' << r.bytes_received << ','
            << to_hex(r.global_digest) << '\n';
    }
}

void write_metrics_csv(const ExperimentReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    write_metrics_csv(report, out);
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

namespace {

std::optional<bool> env_deterministic() {
    const char* v = std::getenv("DETERMINISTIC");
    if (!v) return std::nullopt;
    std::string s(v);
    for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    return std::nullopt;
}

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("RANDOM_SEED");
    if (!v) return std::nullopt;
    try {
        return std::stoull(v);
    } catch (...) {
        return std::nullopt;
    }
}

void print_summary(const ExperimentReport& report, std::ostream& out) {
    out << "job digest:      " << to_hex(report.job_digest) << "\n";
    out << "rounds:          " << report.rounds.size() << "/" << report.total_rounds
        << " completed";
    if (!report.aborted_rounds.empty()) {
        out << " (" << report.aborted_rounds.size() << " aborted)";
    }
    out << "\n";
    if (!report.rounds.empty()) {
        const auto& last = report.rounds.back();
        out << "final accuracy:  " << format_real17(last.accuracy) << "\n";
        out << "final loss:      " << format_real17(last.loss) << "\n";
    }
    out << "final global:    " << to_hex(report.final_global_digest) << "\n";
    out << "bytes sent:      " << report.total_bytes_sent << "\n";
    out << "bytes received:  " << report.total_bytes_received << "\n";
    out << "ledger entries:  " << report.ledger_entries
        << (report.ledger_ok ? " (chain ok)" : " (CHAIN BROKEN)") << "\n";
}

} // namespace

int run_main(int argc, const char* const* argv) {
    CLI::App app{"flsim: deterministic federated learning simulation"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute an experiment from a job config");
    std::string job_path;
    std::string metrics_out = "flsim_metrics.csv";
    std::string ledger_out;
    std::string chunks_dir;
    std::optional<std::uint64_t> seed_flag;
    std::optional<bool> det_flag;
    run->add_option("--job", job_path, "job config file")->required();
    run->add_option("--metrics-out", metrics_out, "metrics CSV path");
    run->add_option("--ledger-out", ledger_out, "provenance chain export path");
    run->add_option("--chunks-dir", chunks_dir, "directory for dataset chunk files");
    run->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed_flag = v; }, "override the experiment seed");
    run->add_flag_callback("--deterministic", [&] { det_flag = true; },
                           "deterministic virtual-time execution");
    run->add_flag_callback("--no-deterministic", [&] { det_flag = false; },
                           "wall-clock execution with scheduling jitter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    std::ifstream job_file(job_path);
    if (!job_file) {
        std::cerr << "error: cannot open job file: " << job_path << "\n";
        return kExitConfig;
    }
    std::stringstream buffer;
    buffer << job_file.rdbuf();

    try {
        JobConfig cfg = parse_job_config(buffer.str());

        RunOptions opts;
        opts.deterministic = det_flag.value_or(env_deterministic().value_or(false));
        if (seed_flag) {
            opts.seed = *seed_flag;
        } else if (auto es = env_seed()) {
            opts.seed = *es;
        }
        if (!chunks_dir.empty()) opts.chunk_dir = chunks_dir;

        ExperimentResult result = run_experiment(cfg, opts);

        write_metrics_csv(result.report, std::filesystem::path(metrics_out));
        if (!ledger_out.empty()) result.ledger.export_file(ledger_out);
        print_summary(result.report, std::cout);

        if (result.report.rounds.empty()) return kExitAllAborted;
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_config_error() ? kExitConfig : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

} // namespace flsim
