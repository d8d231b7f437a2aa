#include "flsim/bus.hpp"

#include "flsim/errors.hpp"

#include <algorithm>

namespace flsim {

void Bus::register_topic(const std::string& topic) {
    topics_.try_emplace(topic);
}

bool Bus::topic_registered(const std::string& topic) const {
    return topics_.contains(topic);
}

Bus::Topic& Bus::topic_ref(const std::string& topic) {
    auto it = topics_.find(topic);
    if (it == topics_.end()) throw Error(ErrorCode::UnknownTopic, "unknown topic: " + topic);
    return it->second;
}

const Bus::Topic& Bus::topic_ref(const std::string& topic) const {
    auto it = topics_.find(topic);
    if (it == topics_.end()) throw Error(ErrorCode::UnknownTopic, "unknown topic: " + topic);
    return it->second;
}

std::uint64_t Bus::publish(const std::string& topic, const std::string& key, Payload payload,
                           const std::string& publisher) {
    Topic& t = topic_ref(topic);
    const std::uint64_t size = payload.size();

    Message msg;
    msg.topic = topic;
    msg.key = key;
    msg.publisher = publisher;
    msg.seq = t.next_seq++;
    msg.payload = std::move(payload);

    traffic_.per_node[publisher].sent += size;
    traffic_.per_topic[topic].sent += size;
    traffic_.per_round[current_round_].sent += size;
    traffic_.total.sent += size;

    // store before delivery so callbacks reading the key see the new value
    t.values[key] = msg.payload;
    if (clock_) t.stamps[key] = clock_();

    // snapshot subscriber list: a callback may (un)subscribe
    auto subscribers = t.subscribers;
    for (const auto& [node, cb] : subscribers) {
        traffic_.per_node[node].received += size;
        traffic_.per_topic[topic].received += size;
        traffic_.per_round[current_round_].received += size;
        traffic_.per_round_topic_received[current_round_][topic] += size;
        traffic_.total.received += size;
        if (cb) cb(msg);
    }
    return msg.seq;
}

void Bus::subscribe(const std::string& topic, const std::string& node, Callback cb) {
    Topic& t = topic_ref(topic);
    for (const auto& [existing, _] : t.subscribers) {
        if (existing == node) {
            throw invalid_value("subscribe", "node " + node + " already subscribed to " + topic);
        }
    }
    t.subscribers.emplace_back(node, std::move(cb));
}

void Bus::unsubscribe(const std::string& topic, const std::string& node) {
    Topic& t = topic_ref(topic);
    std::erase_if(t.subscribers, [&](const auto& s) { return s.first == node; });
}

std::optional<Payload> Bus::get(const std::string& topic, const std::string& key) const {
    const Topic& t = topic_ref(topic);
    auto it = t.values.find(key);
    if (it == t.values.end()) return std::nullopt;
    return it->second;
}

std::optional<std::int64_t> Bus::publish_time(const std::string& topic,
                                              const std::string& key) const {
    const Topic& t = topic_ref(topic);
    auto it = t.stamps.find(key);
    if (it == t.stamps.end()) return std::nullopt;
    return it->second;
}

std::vector<std::pair<std::string, Payload>> Bus::snapshot(const std::string& topic) const {
    const Topic& t = topic_ref(topic);
    std::vector<std::pair<std::string, Payload>> out;
    out.reserve(t.values.size());
    for (const auto& [key, payload] : t.values) out.emplace_back(key, payload);
    return out;
}

TrafficLedger::Counters Bus::round_traffic(std::uint64_t round) const {
    auto it = traffic_.per_round.find(round);
    if (it == traffic_.per_round.end()) return {};
    return it->second;
}

std::uint64_t Bus::round_topic_received(std::uint64_t round, const std::string& prefix) const {
    auto it = traffic_.per_round_topic_received.find(round);
    if (it == traffic_.per_round_topic_received.end()) return 0;
    std::uint64_t total = 0;
    for (const auto& [topic, bytes] : it->second) {
        if (topic.starts_with(prefix)) total += bytes;
    }
    return total;
}

} // namespace flsim
