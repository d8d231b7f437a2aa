#pragma once

#include "flsim/report.hpp"
#include "flsim/sync.hpp"

#include <iosfwd>
#include <string>

namespace flsim {

// 17 significant digits: enough to round-trip any 64-bit real.
std::string format_real17(double v);

// Columns: round,accuracy,loss,elapsed_ms,bytes_sent,bytes_received,global_digest
void write_metrics_csv(const ExperimentReport& report, std::ostream& out);
void write_metrics_csv(const ExperimentReport& report, const std::filesystem::path& path);

// Exit codes: 0 success, 2 config error, 3 runtime error, 4 every round aborted.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitAllAborted = 4;

// Full CLI: flsim run --job <path> [--metrics-out <path>] [--ledger-out <path>]
// [--seed N] [--deterministic] ... DETERMINISTIC / RANDOM_SEED env vars apply
// when the flags are absent; flags win over env, env wins over the config.
int run_main(int argc, const char* const* argv);

} // namespace flsim
