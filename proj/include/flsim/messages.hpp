#pragma once

#include "flsim/bus.hpp"
#include "flsim/digest.hpp"
#include "flsim/param_vector.hpp"

#include <string>
#include <vector>

namespace flsim {

// Fixed topic names (the bit-exact naming contract).
namespace topics {
inline const std::string kGlobalParams = "global/params";
inline const std::string kControlPhase = "control/phase";
inline const std::string kConsensusBallots = "consensus/ballots";
inline std::string client_params(const std::string& id) { return "client/" + id + "/params"; }
inline std::string worker_aggregate(const std::string& id) { return "worker/" + id + "/aggregate"; }
inline std::string control_stage(const std::string& id) { return "control/stage/" + id; }
inline std::string cluster_aggregate(const std::string& name) {
    return "cluster/" + name + "/aggregate";
}
} // namespace topics

// control/phase: process phase, current round, download flags and (in phase
// 2) the round's pinned participant list.
struct PhaseMsg {
    std::uint8_t phase = 0;
    std::uint32_t round = 0;
    bool download_job_config = false;
    bool download_dataset = false;
    std::vector<std::string> participants;
};

// control/stage/<id>: role_mask bit 0 = client stage, bit 1 = worker stage.
struct StageMsg {
    std::uint8_t role_mask = 0;
    std::uint8_t stage = 0;
    std::uint32_t round = 0;
};

// client/<id>/params
struct ClientParamsMsg {
    std::uint32_t round = 0;
    std::uint64_t n_samples = 0;
    bool has_metrics = false;
    double local_accuracy = 0.0;
    double local_loss = 0.0;
    ParamBundle bundle;
};

// worker/<id>/aggregate and cluster/<name>/aggregate
struct AggregateMsg {
    std::uint32_t round = 0;
    std::uint64_t total_samples = 0;
    ParamBundle bundle;
};

// consensus/ballots (key = worker id)
struct BallotMsg {
    std::uint32_t round = 0;
    Digest256 digest{};
};

Payload encode_phase(const PhaseMsg& m);
PhaseMsg decode_phase(const Payload& p);
Payload encode_stage(const StageMsg& m);
StageMsg decode_stage(const Payload& p);
Payload encode_client_params(const ClientParamsMsg& m);
ClientParamsMsg decode_client_params(const Payload& p);
Payload encode_aggregate(const AggregateMsg& m);
AggregateMsg decode_aggregate(const Payload& p);
Payload encode_ballot(const BallotMsg& m);
BallotMsg decode_ballot(const Payload& p);

} // namespace flsim
