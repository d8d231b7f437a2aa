#include "flsim/partition.hpp"

#include "flsim/errors.hpp"
#include "flsim/param_vector.hpp"
#include "flsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flsim {

namespace {

std::vector<std::string> sorted_ids(const std::vector<std::string>& ids) {
    if (ids.empty()) throw invalid_value("client_ids", "at least one client required");
    std::vector<std::string> out = ids;
    std::sort(out.begin(), out.end());
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] == out[i - 1]) throw invalid_value("client_ids", "duplicate id " + out[i]);
    }
    return out;
}

} // namespace

Digest256 manifest_digest(const ChunkManifest& m) {
    std::vector<std::uint8_t> bytes;
    wire::put_string(bytes, m.partitioner);
    wire::put_u64(bytes, m.seed);
    for (const auto& [node, indices] : m.chunks) {
        wire::put_string(bytes, node);
        wire::put_u64(bytes, indices.size());
        for (auto i : indices) wire::put_u64(bytes, i);
    }
    return sha256(std::span<const std::uint8_t>(bytes));
}

ChunkManifest iid_partition(std::uint64_t n_samples, const std::vector<std::string>& client_ids,
                            std::uint64_t seed) {
    auto ids = sorted_ids(client_ids);
    std::vector<std::uint64_t> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(seed, fnv1a64("iid"));
    rng.shuffle(order);

    ChunkManifest m;
    m.partitioner = "iid";
    m.seed = seed;
    const std::uint64_t k = ids.size();
    const std::uint64_t base = n_samples / k;
    const std::uint64_t extra = n_samples % k;
    std::size_t at = 0;
    for (std::uint64_t i = 0; i < k; ++i) {
        std::uint64_t take = base + (i < extra ? 1 : 0);
        m.chunks[ids[i]] =
            std::vector<std::uint64_t>(order.begin() + at, order.begin() + at + take);
        at += take;
    }
    return m;
}

ChunkManifest dirichlet_partition(const std::vector<std::uint32_t>& labels,
                                  const std::vector<std::string>& client_ids, double alpha,
                                  std::uint64_t seed) {
    if (!(alpha > 0.0)) throw invalid_value("alpha", "must be > 0");
    auto ids = sorted_ids(client_ids);
    const std::size_t k = ids.size();

    std::uint32_t n_classes = 0;
    for (auto l : labels) n_classes = std::max(n_classes, l + 1);

    ChunkManifest m;
    m.partitioner = "dirichlet";
    m.alpha = alpha;
    m.seed = seed;
    for (const auto& id : ids) m.chunks[id] = {};

    for (std::uint32_t c = 0; c < n_classes; ++c) {
        std::vector<std::uint64_t> class_idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == c) class_idx.push_back(i);
        }
        if (class_idx.empty()) continue;

        CounterRng shuffle_rng(seed, combine_stream(fnv1a64("dirichlet-shuffle"), c));
        shuffle_rng.shuffle(class_idx);

        CounterRng prop_rng(seed, combine_stream(fnv1a64("dirichlet-prop"), c));
        std::vector<double> g(k);
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            g[i] = prop_rng.gamma(alpha);
            total += g[i];
        }
        std::vector<double> p(k);
        if (total > 0.0) {
            for (std::size_t i = 0; i < k; ++i) p[i] = g[i] / total;
        } else {
            for (std::size_t i = 0; i < k; ++i) p[i] = 1.0 / double(k);
        }

        // largest-remainder rounding of p * m so every index lands somewhere
        const double mcount = double(class_idx.size());
        std::vector<std::uint64_t> counts(k);
        std::vector<double> frac(k);
        std::uint64_t assigned = 0;
        for (std::size_t i = 0; i < k; ++i) {
            double target = p[i] * mcount;
            counts[i] = std::uint64_t(std::floor(target));
            frac[i] = target - double(counts[i]);
            assigned += counts[i];
        }
        std::vector<std::size_t> by_frac(k);
        std::iota(by_frac.begin(), by_frac.end(), 0);
        std::stable_sort(by_frac.begin(), by_frac.end(),
                         [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
        const std::uint64_t leftover = class_idx.size() > assigned ? class_idx.size() - assigned : 0;
        for (std::uint64_t r = 0; r < leftover; ++r) {
            counts[by_frac[r % k]] += 1;
        }

        std::size_t at = 0;
        for (std::size_t i = 0; i < k; ++i) {
            auto& chunk = m.chunks[ids[i]];
            chunk.insert(chunk.end(), class_idx.begin() + at, class_idx.begin() + at + counts[i]);
            at += counts[i];
        }
    }
    return m;
}

ChunkSplit preprocess_chunk(const std::vector<std::uint64_t>& indices, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw invalid_value("train_fraction", "must be in (0, 1)");
    }
    ChunkSplit split;
    if (indices.empty()) return split;

    std::vector<std::uint64_t> order = indices;
    std::sort(order.begin(), order.end());
    std::vector<std::uint8_t> encoded;
    encoded.reserve(order.size() * 8);
    for (auto i : order) wire::put_u64(encoded, i);
    std::string_view view(reinterpret_cast<const char*>(encoded.data()), encoded.size());
    CounterRng rng(fnv1a64(view), fnv1a64("preprocess"));
    rng.shuffle(order);

    if (order.size() == 1) {
        split.train = order;
        return split;
    }
    auto n = order.size();
    auto n_train = std::size_t(std::floor(train_fraction * double(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    split.train.assign(order.begin(), order.begin() + n_train);
    split.test.assign(order.begin() + n_train, order.end());
    return split;
}

void validate_manifest(const ChunkManifest& m, std::uint64_t n_samples) {
    std::vector<std::uint8_t> seen(n_samples, 0);
    std::uint64_t total = 0;
    for (const auto& [node, indices] : m.chunks) {
        for (auto i : indices) {
            if (i >= n_samples) throw invalid_value("manifest", "index out of range");
            if (seen[i]) throw invalid_value("manifest", "index assigned twice");
            seen[i] = 1;
            ++total;
        }
    }
    if (total != n_samples) throw invalid_value("manifest", "indices missing from partition");
}

void archive_chunks(const DataSet& root, ChunkManifest& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [node, indices] : m.chunks) {
        auto path = dir / (node + ".chunk");
        write_tensor_file(path, take_rows(root, indices));
        m.file_digests[node] = file_digest(path);
    }
}

bool partitioner_registered(const std::string& name) {
    return name == "iid" || name == "dirichlet";
}

} // namespace flsim
