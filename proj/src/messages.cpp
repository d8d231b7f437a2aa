#include "flsim/messages.hpp"

#include "flsim/errors.hpp"

namespace flsim {

Payload encode_phase(const PhaseMsg& m) {
    Payload p;
    p.push_back(m.phase);
    wire::put_u32(p, m.round);
    std::uint8_t flags = 0;
    if (m.download_job_config) flags |= 1;
    if (m.download_dataset) flags |= 2;
    p.push_back(flags);
    wire::put_u32(p, std::uint32_t(m.participants.size()));
    for (const auto& id : m.participants) wire::put_string(p, id);
    return p;
}

PhaseMsg decode_phase(const Payload& p) {
    std::size_t off = 0;
    if (p.empty()) throw Error(ErrorCode::InvalidValue, "empty phase message");
    PhaseMsg m;
    m.phase = p[off++];
    m.round = wire::get_u32(p, off);
    std::uint8_t flags = p.at(off++);
    m.download_job_config = flags & 1;
    m.download_dataset = flags & 2;
    std::uint32_t n = wire::get_u32(p, off);
    m.participants.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) m.participants.push_back(wire::get_string(p, off));
    return m;
}

Payload encode_stage(const StageMsg& m) {
    Payload p;
    p.push_back(m.role_mask);
    p.push_back(m.stage);
    wire::put_u32(p, m.round);
    return p;
}

StageMsg decode_stage(const Payload& p) {
    if (p.size() < 6) throw Error(ErrorCode::InvalidValue, "short stage message");
    StageMsg m;
    m.role_mask = p[0];
    m.stage = p[1];
    std::size_t off = 2;
    m.round = wire::get_u32(p, off);
    return m;
}

Payload encode_client_params(const ClientParamsMsg& m) {
    Payload p;
    wire::put_u32(p, m.round);
    wire::put_u64(p, m.n_samples);
    p.push_back(m.has_metrics ? 1 : 0);
    wire::put_f64(p, m.local_accuracy);
    wire::put_f64(p, m.local_loss);
    serialize_bundle(m.bundle, p);
    return p;
}

ClientParamsMsg decode_client_params(const Payload& p) {
    std::size_t off = 0;
    ClientParamsMsg m;
    m.round = wire::get_u32(p, off);
    m.n_samples = wire::get_u64(p, off);
    if (off >= p.size()) throw Error(ErrorCode::InvalidValue, "short client params message");
    m.has_metrics = p[off++] != 0;
    m.local_accuracy = wire::get_f64(p, off);
    m.local_loss = wire::get_f64(p, off);
    m.bundle = deserialize_bundle(p, off);
    return m;
}

Payload encode_aggregate(const AggregateMsg& m) {
    Payload p;
    wire::put_u32(p, m.round);
    wire::put_u64(p, m.total_samples);
    serialize_bundle(m.bundle, p);
    return p;
}

AggregateMsg decode_aggregate(const Payload& p) {
    std::size_t off = 0;
    AggregateMsg m;
    m.round = wire::get_u32(p, off);
    m.total_samples = wire::get_u64(p, off);
    m.bundle = deserialize_bundle(p, off);
    return m;
}

Payload encode_ballot(const BallotMsg& m) {
    Payload p;
    wire::put_u32(p, m.round);
    p.insert(p.end(), m.digest.begin(), m.digest.end());
    return p;
}

BallotMsg decode_ballot(const Payload& p) {
    std::size_t off = 0;
    BallotMsg m;
    m.round = wire::get_u32(p, off);
    if (p.size() < off + 32) throw Error(ErrorCode::InvalidValue, "short ballot message");
    std::copy(p.begin() + off, p.begin() + off + 32, m.digest.begin());
    return m;
}

} // namespace flsim
