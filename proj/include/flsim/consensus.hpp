#pragma once

#include "flsim/digest.hpp"
#include "flsim/param_vector.hpp"
#include "flsim/strategy.hpp"

#include <functional>
#include <map>
#include <string>

namespace flsim {

// A worker's vote: the digest of its published aggregate payload.
struct Ballot {
    std::string worker_id;
    Digest256 digest{};
    std::uint64_t round = 0;
};

// One worker's submitted aggregate; digest covers the exact published bytes.
struct AggregateSubmission {
    ParamBundle bundle;
    Digest256 digest{};
};

struct ConsensusInput {
    std::map<std::string, AggregateSubmission> aggregates; // worker id -> submission
    std::map<std::string, double> hyperparams;
};

// A consensus function inspects the submitted aggregates and returns the id
// of the worker whose submission becomes the next global parameter.
using ConsensusFn = std::function<std::string(const ConsensusInput&)>;

void register_consensus(const std::string& name, ConsensusFn fn);
ConsensusFn lookup_consensus(const std::string& name);
bool consensus_registered(const std::string& name);

// Runs the named function; throws EmptyInput on an empty aggregate set.
const AggregateSubmission& run_consensus(const std::string& name, const ConsensusInput& input,
                                         std::string* winner_id = nullptr);

// Built-in default ("majority-hash"): group submissions by digest, pick the
// largest group; ties break to the smallest digest (byte order). The
// reported winner is the smallest worker id inside the winning group.
std::string majority_hash_consensus(const ConsensusInput& input);

enum class PoisonMode { Negate, RandomNoise };

// Wraps a strategy so its published aggregate is poisoned while its internal
// server state evolves honestly: Negate flips the sign of every parameter;
// RandomNoise adds 5 * normal() per coordinate from
// CounterRng(noise_key, combine_stream(fnv1a64("poison"), round)).
StrategyPtr make_malicious_strategy(StrategyPtr inner, PoisonMode mode, std::uint64_t noise_key);

} // namespace flsim
