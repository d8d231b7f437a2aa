#include "flsim/strategy.hpp"

#include "flsim/errors.hpp"
#include "flsim/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace flsim;

namespace {

Layout dim_layout(std::uint32_t n) { return {{"p", {n}}}; }

ClientUpdate update_of(const std::string& id, std::vector<double> values, std::uint64_t n) {
    ClientUpdate u;
    u.node_id = id;
    u.params = ParamVector{dim_layout(std::uint32_t(values.size())), std::move(values)};
    u.n_samples = n;
    return u;
}

std::vector<ClientUpdate> random_updates(std::uint64_t seed, std::size_t count, std::uint32_t dim) {
    CounterRng rng(seed, 0);
    std::vector<ClientUpdate> updates;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.normal();
        char id[32];
        std::snprintf(id, sizeof id, "c%03zu", i);
        updates.push_back(update_of(id, std::move(v), 1 + rng.next_below(100)));
    }
    return updates;
}

} // namespace

TEST_CASE("fedavg midpoint and idempotence") {
    auto mid = fedavg_aggregate({update_of("a", {0, 0}, 5), update_of("b", {2, 4}, 5)});
    CHECK(mid.values == std::vector<double>{1, 2});

    // pairs of identical updates: weights are exact powers of two
    std::vector<double> x{0.5, -1.25, 3.0};
    auto same = fedavg_aggregate({update_of("a", x, 7), update_of("b", x, 7)});
    CHECK(same.values == x);

    // three-way idempotence holds to rounding
    auto thrice =
        fedavg_aggregate({update_of("a", x, 3), update_of("b", x, 3), update_of("c", x, 3)});
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(thrice.values[i] == doctest::Approx(x[i]).epsilon(1e-15));
    }
}

TEST_CASE("fedavg matches a brute-force weighted mean") {
    for (int trial = 0; trial < 100; ++trial) {
        CounterRng rng(7000 + trial, 1);
        auto updates = random_updates(trial, 1 + rng.next_below(5), 1 + std::uint32_t(rng.next_below(64)));
        ParamVector got = fedavg_aggregate(updates);

        // oracle: long-double accumulation, per-coordinate, reversed order
        long double total = 0;
        for (const auto& u : updates) total += u.n_samples;
        for (std::size_t i = 0; i < got.values.size(); ++i) {
            long double acc = 0;
            for (auto it = updates.rbegin(); it != updates.rend(); ++it) {
                acc += (long double)(it->params.values[i]) * it->n_samples / total;
            }
            CHECK(std::abs(double(acc) - got.values[i]) <= 1e-12);
        }
    }
}

TEST_CASE("fedavg is invariant under update permutations") {
    auto updates = random_updates(55, 6, 16);
    auto base = fedavg_aggregate(updates);
    std::reverse(updates.begin(), updates.end());
    CHECK(bit_equal(fedavg_aggregate(updates), base));
    std::rotate(updates.begin(), updates.begin() + 2, updates.end());
    CHECK(bit_equal(fedavg_aggregate(updates), base));
}

TEST_CASE("fedavg output stays inside the per-coordinate hull") {
    auto updates = random_updates(77, 5, 32);
    auto avg = fedavg_aggregate(updates);
    for (std::size_t i = 0; i < avg.values.size(); ++i) {
        double lo = updates[0].params.values[i], hi = lo;
        for (const auto& u : updates) {
            lo = std::min(lo, u.params.values[i]);
            hi = std::max(hi, u.params.values[i]);
        }
        CHECK(avg.values[i] >= lo - 1e-15);
        CHECK(avg.values[i] <= hi + 1e-15);
    }
}

TEST_CASE("fedavg error paths") {
    CHECK_THROWS_AS(fedavg_aggregate({}), Error);
    CHECK_THROWS_AS(fedavg_aggregate({update_of("a", {1}, 0), update_of("b", {2}, 0)}), Error);
    auto bad = std::vector<ClientUpdate>{update_of("a", {1, 2}, 1), update_of("b", {1}, 1)};
    CHECK_THROWS_AS(fedavg_aggregate(bad), Error);

    // zero-sample updates are excluded, not errors, when others remain
    auto mixed = fedavg_aggregate({update_of("a", {4, 4}, 0), update_of("b", {2, 2}, 10)});
    CHECK(mixed.values == std::vector<double>{2, 2});
}

TEST_CASE("fedavgm with beta 0 and unit server lr is bitwise fedavg") {
    auto updates = random_updates(99, 4, 24);
    ServerState state = make_server_state(ParamVector{dim_layout(24), std::vector<double>(24, 0.5)});
    // seed a nonzero momentum to prove beta = 0 ignores it
    for (auto& v : state.momentum.values) v = 0.75;
    StrategyConfig cfg;
    cfg.beta = 0.0;
    cfg.server_lr = 1.0;
    ServerState next = fedavgm_aggregate(state, updates, cfg);
    CHECK(bit_equal(next.global, fedavg_aggregate(updates)));
}

TEST_CASE("fedavgm zero-delta round leaves only the momentum decay term") {
    std::vector<double> g{1.0, -2.0, 0.25};
    ServerState state = make_server_state(ParamVector{dim_layout(3), g});
    state.momentum.values = {0.5, 0.5, 0.5};
    StrategyConfig cfg;
    cfg.beta = 0.9;
    cfg.server_lr = 1.0;
    // all updates equal to the current global: delta = 0
    auto updates = std::vector<ClientUpdate>{update_of("a", g, 2), update_of("b", g, 2)};
    ServerState next = fedavgm_aggregate(state, updates, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(next.global.values[i] ==
              doctest::Approx(g[i] - cfg.server_lr * cfg.beta * 0.5).epsilon(1e-15));
        CHECK(next.momentum.values[i] == doctest::Approx(cfg.beta * 0.5).epsilon(1e-15));
    }
}

TEST_CASE("fedavgm two-round recurrence matches a hand-stepped oracle") {
    const double beta = 0.9, slr = 0.7;
    StrategyConfig cfg;
    cfg.beta = beta;
    cfg.server_lr = slr;

    std::vector<double> g0{0.2, -0.4, 1.0, 0.0};
    auto r1 = std::vector<ClientUpdate>{update_of("a", {1.0, 0.0, 0.5, 2.0}, 30),
                                        update_of("b", {-1.0, 1.0, 0.5, 0.0}, 70)};
    auto r2 = std::vector<ClientUpdate>{update_of("a", {0.5, 0.5, 0.5, 0.5}, 30),
                                        update_of("b", {0.0, 1.5, -0.5, 1.0}, 70)};

    ServerState s = make_server_state(ParamVector{dim_layout(4), g0});
    s = fedavgm_aggregate(s, r1, cfg);
    s = fedavgm_aggregate(s, r2, cfg);

    // oracle: scripted recurrence, plain formulas
    std::vector<double> g = g0, m(4, 0.0);
    for (const auto* round : {&r1, &r2}) {
        std::vector<double> avg(4, 0.0);
        double total = 0;
        for (const auto& u : *round) total += double(u.n_samples);
        for (const auto& u : *round) {
            for (int i = 0; i < 4; ++i) avg[i] += u.params.values[i] * double(u.n_samples) / total;
        }
        for (int i = 0; i < 4; ++i) {
            m[i] = beta * m[i] + (g[i] - avg[i]);
            g[i] = g[i] - slr * m[i];
        }
    }
    for (int i = 0; i < 4; ++i) {
        CHECK(s.global.values[i] == doctest::Approx(g[i]).epsilon(1e-12));
        CHECK(s.momentum.values[i] == doctest::Approx(m[i]).epsilon(1e-12));
    }
}

TEST_CASE("scaffold client with zero variates equals one plain SGD step") {
    ModelSpec spec{ModelKind::LogisticRegression, 3, 2, {}, 12};
    DataSet ds;
    ds.n = 6;
    ds.d = 3;
    ds.n_classes = 2;
    CounterRng rng(3, 3);
    for (std::size_t i = 0; i < ds.n * ds.d; ++i) ds.features.push_back(rng.normal());
    for (std::size_t i = 0; i < ds.n; ++i) ds.labels.push_back(std::uint32_t(i % 2));

    ParamVector global = init_params(spec);
    TrainConfig train{0.1, 8, 1, 321};
    StrategyConfig cfg;
    cfg.scaffold_k = 1;

    ClientUpdate u = scaffold_client_step("c", global, ds, spec, zeros_like(global),
                                          zeros_like(global), cfg, train);
    TrainResult plain = train_local(spec, global, ds, train, nullptr, 1);
    CHECK(bit_equal(u.params, plain.params));
    REQUIRE(u.extra_state.contains("scaffold_delta"));
}

TEST_CASE("scaffold zero-gradient toy leaves params fixed and shifts the variate") {
    // single-class softmax has identically zero gradient
    ModelSpec spec{ModelKind::LogisticRegression, 2, 1, {}, 5};
    DataSet ds;
    ds.n = 3;
    ds.d = 2;
    ds.n_classes = 1;
    ds.features = {1, 2, 3, 4, 5, 6};
    ds.labels = {0, 0, 0};

    ParamVector x = init_params(spec);
    ParamVector client_c = zeros_like(x);
    ParamVector server_c = zeros_like(x);
    for (std::size_t i = 0; i < client_c.values.size(); ++i) {
        client_c.values[i] = 0.3;
        server_c.values[i] = 0.1;
    }
    TrainConfig train{0.5, 2, 1, 9};
    StrategyConfig cfg;
    cfg.scaffold_k = 4;
    ClientUpdate u = scaffold_client_step("c", x, ds, spec, client_c, server_c, cfg, train);

    // corrected gradient = 0 + (server_c - client_c) = -0.2 per coordinate,
    // so params drift by +0.2*lr per step; with y = x - K*lr*(sc-cc):
    // c' = c - sc + (x - y)/(K lr) = c - sc + (sc - cc)... check numerically
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        CHECK(u.params.values[i] == doctest::Approx(x.values[i] + 4 * 0.5 * 0.2).epsilon(1e-12));
        double cprime = u.extra_state.at("scaffold_delta").values[i] + client_c.values[i];
        // c' = c - sc + (x - y)/(K lr) = 0.3 - 0.1 + (-0.2) = 0.0
        CHECK(cprime == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("scaffold client matches a hand-stepped 1-d oracle") {
    // 1 feature, 2 classes, K = 2, batch = dataset (full-batch steps)
    ModelSpec spec{ModelKind::LogisticRegression, 1, 2, {}, 77};
    DataSet ds;
    ds.n = 2;
    ds.d = 1;
    ds.n_classes = 2;
    ds.features = {1.5, -0.5};
    ds.labels = {0, 1};

    ParamVector x = init_params(spec); // [w0, w1, b0, b1]
    ParamVector cc = zeros_like(x), sc = zeros_like(x);
    cc.values = {0.05, -0.02, 0.01, 0.0};
    sc.values = {-0.03, 0.04, 0.0, 0.02};
    const double lr = 0.2;
    TrainConfig train{lr, 2, 1, 4242};
    StrategyConfig cfg;
    cfg.scaffold_k = 2;

    ClientUpdate u = scaffold_client_step("c", x, ds, spec, cc, sc, cfg, train);

    // oracle: full-batch logistic gradient stepped by hand
    auto grad_at = [&](const std::vector<double>& w) {
        std::vector<double> g(4, 0.0);
        for (int s = 0; s < 2; ++s) {
            double xv = ds.features[s];
            double z0 = w[0] * xv + w[2], z1 = w[1] * xv + w[3];
            double mx = std::max(z0, z1);
            double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
            double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
            double d0 = p0 - (ds.labels[s] == 0 ? 1.0 : 0.0);
            double d1 = p1 - (ds.labels[s] == 1 ? 1.0 : 0.0);
            g[0] += d0 * xv / 2.0;
            g[1] += d1 * xv / 2.0;
            g[2] += d0 / 2.0;
            g[3] += d1 / 2.0;
        }
        return g;
    };
    std::vector<double> w = x.values;
    for (int step = 0; step < 2; ++step) {
        auto g = grad_at(w);
        for (int i = 0; i < 4; ++i) w[i] -= lr * (g[i] + (sc.values[i] - cc.values[i]));
    }
    for (int i = 0; i < 4; ++i) {
        CHECK(u.params.values[i] == doctest::Approx(w[i]).epsilon(1e-12));
        double cprime = cc.values[i] - sc.values[i] + (x.values[i] - w[i]) / (2.0 * lr);
        CHECK(u.extra_state.at("scaffold_delta").values[i] ==
              doctest::Approx(cprime - cc.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("scaffold server aggregate matches brute force and updates the variate") {
    const std::uint32_t dim = 6;
    ServerState state = make_server_state(ParamVector{dim_layout(dim), std::vector<double>(dim, 0.1)});
    StrategyConfig cfg;
    cfg.server_lr = 0.8;

    CounterRng rng(123, 9);
    std::vector<ClientUpdate> updates;
    for (int i = 0; i < 3; ++i) {
        std::vector<double> y(dim), delta(dim);
        for (auto& v : y) v = rng.normal();
        for (auto& v : delta) v = rng.normal();
        auto u = update_of("c" + std::to_string(i), y, 10);
        u.extra_state["scaffold_delta"] = ParamVector{dim_layout(dim), delta};
        updates.push_back(std::move(u));
    }

    ServerState next = scaffold_server_aggregate(state, updates, cfg, 5);
    for (std::uint32_t i = 0; i < dim; ++i) {
        double mean = 0, dsum = 0;
        for (const auto& u : updates) {
            mean += u.params.values[i] / 3.0;
            dsum += u.extra_state.at("scaffold_delta").values[i];
        }
        // global + slr/|S| * sum(y - global) = (1-slr) g + slr mean
        CHECK(next.global.values[i] ==
              doctest::Approx(0.1 + cfg.server_lr * (mean - 0.1)).epsilon(1e-12));
        CHECK(next.server_c.values[i] == doctest::Approx(dsum / 5.0).epsilon(1e-12));
    }

    // deltas = 0, slr = 1: global' = uniform mean, server_c unchanged
    for (auto& u : updates) {
        u.extra_state["scaffold_delta"] = zeros_like(u.params);
    }
    StrategyConfig unit;
    unit.server_lr = 1.0;
    ServerState reduced = scaffold_server_aggregate(state, updates, unit, 5);
    ParamVector mean = zeros_like(state.global);
    for (const auto& u : updates) mean = axpy(1.0 / 3.0, u.params, mean);
    CHECK(bit_equal(reduced.global, mean));
    CHECK(bit_equal(reduced.server_c, state.server_c));
}

TEST_CASE("scaffold server requires the control-variate delta") {
    ServerState state = make_server_state(ParamVector{dim_layout(2), {0, 0}});
    auto updates = std::vector<ClientUpdate>{update_of("a", {1, 1}, 5)};
    StrategyConfig cfg;
    CHECK_THROWS_AS(scaffold_server_aggregate(state, updates, cfg, 3), Error);
}

TEST_CASE("single-participant scaffold algebra") {
    ServerState state = make_server_state(ParamVector{dim_layout(2), {1.0, -1.0}});
    auto u = update_of("a", {3.0, 0.0}, 4);
    u.extra_state["scaffold_delta"] = ParamVector{dim_layout(2), {0.5, 0.5}};
    StrategyConfig cfg;
    cfg.server_lr = 0.25;
    ServerState next = scaffold_server_aggregate(state, {u}, cfg, 4);
    CHECK(next.global.values[0] == doctest::Approx(1.0 + 0.25 * (3.0 - 1.0)).epsilon(1e-12));
    CHECK(next.global.values[1] == doctest::Approx(-1.0 + 0.25 * (0.0 + 1.0)).epsilon(1e-12));
    CHECK(next.server_c.values[0] == doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("strategy registry lookups and duplicates") {
    CHECK(lookup_strategy("fedavg")->name() == "fedavg");
    CHECK(lookup_strategy("fedavgm")->name() == "fedavgm");
    CHECK(lookup_strategy("scaffold")->name() == "scaffold");
    CHECK_THROWS_AS(lookup_strategy("nope"), Error);
    CHECK_THROWS_AS(register_strategy("fedavg", lookup_strategy("fedavg")), Error);

    CHECK_FALSE(strategy_registered("custom-mean"));
    register_strategy("custom-mean", lookup_strategy("fedavg"));
    CHECK(strategy_registered("custom-mean"));
    CHECK(lookup_strategy("custom-mean") == lookup_strategy("fedavg"));
}
