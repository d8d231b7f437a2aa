#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flsim {

using Payload = std::vector<std::uint8_t>;

struct Message {
    std::string topic;
    std::string key;
    Payload payload;
    std::string publisher;
    std::uint64_t seq = 0; // per-topic, strictly increasing
};

// Byte accounting per node, per topic and per round. "Sent" counts each
// publish once; "received" counts one delivery per subscriber present at
// publish time.
struct TrafficLedger {
    struct Counters {
        std::uint64_t sent = 0;
        std::uint64_t received = 0;
    };
    std::map<std::string, Counters> per_node;
    std::map<std::string, Counters> per_topic;
    std::map<std::uint64_t, Counters> per_round;
    // per round, per topic received bytes (bandwidth breakdowns)
    std::map<std::uint64_t, std::map<std::string, std::uint64_t>> per_round_topic_received;
    Counters total;
};

// In-process last-value pub-sub broker (the Key-Value Store). Payloads are
// opaque bytes; delivery to subscribers is synchronous and FIFO per topic.
// Single logical scheduler drives all calls, so no locking here.
class Bus {
public:
    using Callback = std::function<void(const Message&)>;

    void register_topic(const std::string& topic);
    bool topic_registered(const std::string& topic) const;

    // Current subscribers receive the message inline, in subscription order.
    std::uint64_t publish(const std::string& topic, const std::string& key, Payload payload,
                          const std::string& publisher);

    // Subscription affects future publishes only.
    void subscribe(const std::string& topic, const std::string& node, Callback cb = {});
    void unsubscribe(const std::string& topic, const std::string& node);

    // Latest value under (topic, key); reads are free of traffic accounting
    // (the transfer was counted when the value was delivered).
    std::optional<Payload> get(const std::string& topic, const std::string& key) const;

    // Virtual publish timestamps, available once a clock is attached; lets
    // nodes model fixed link delays without wall sleeps.
    void set_clock(std::function<std::int64_t()> now) { clock_ = std::move(now); }
    std::optional<std::int64_t> publish_time(const std::string& topic,
                                             const std::string& key) const;

    // All (key, payload) pairs currently stored under a topic, in key order.
    std::vector<std::pair<std::string, Payload>> snapshot(const std::string& topic) const;

    void begin_round(std::uint64_t round) { current_round_ = round; }
    std::uint64_t current_round() const { return current_round_; }

    const TrafficLedger& traffic() const { return traffic_; }
    TrafficLedger::Counters round_traffic(std::uint64_t round) const;
    std::uint64_t round_topic_received(std::uint64_t round, const std::string& topic_prefix) const;

private:
    struct Topic {
        std::map<std::string, Payload> values;
        std::map<std::string, std::int64_t> stamps;
        std::vector<std::pair<std::string, Callback>> subscribers;
        std::uint64_t next_seq = 0;
    };

    Topic& topic_ref(const std::string& topic);
    const Topic& topic_ref(const std::string& topic) const;

    std::map<std::string, Topic> topics_;
    TrafficLedger traffic_;
    std::function<std::int64_t()> clock_;
    std::uint64_t current_round_ = 0;
};

} // namespace flsim
