#include "flsim/dataset.hpp"

#include "flsim/errors.hpp"
#include "flsim/param_vector.hpp"
#include "flsim/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace flsim {

namespace {

using nlohmann::json;

std::uint64_t require_count(const json& params, const std::string& key) {
    if (!params.contains(key) || !params[key].is_number_integer()) {
        throw invalid_value("dataset.params." + key, "required integer");
    }
    auto v = params[key].get<std::int64_t>();
    if (v < 1) throw invalid_value("dataset.params." + key, "must be >= 1");
    return std::uint64_t(v);
}

double optional_real(const json& params, const std::string& key, double fallback) {
    if (!params.contains(key)) return fallback;
    if (!params[key].is_number()) throw invalid_value("dataset.params." + key, "must be a number");
    return params[key].get<double>();
}

void standardize(DataSet& ds) {
    for (std::size_t j = 0; j < ds.d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < ds.n; ++i) mean += ds.features[i * ds.d + j];
        mean /= double(ds.n);
        double var = 0.0;
        for (std::size_t i = 0; i < ds.n; ++i) {
            double c = ds.features[i * ds.d + j] - mean;
            var += c * c;
        }
        var /= double(ds.n);
        double sd = std::sqrt(var);
        if (sd < 1e-12) sd = 1.0;
        for (std::size_t i = 0; i < ds.n; ++i) {
            ds.features[i * ds.d + j] = (ds.features[i * ds.d + j] - mean) / sd;
        }
    }
}

DataSet make_blobs(const json& params, std::uint64_t seed) {
    const std::uint64_t n = require_count(params, "n_samples");
    const std::uint64_t d = require_count(params, "n_features");
    const std::uint64_t k = require_count(params, "n_classes");
    const double cluster_std = optional_real(params, "cluster_std", 0.6);
    const double center_box = optional_real(params, "center_box", 4.0);

    std::vector<double> centers(k * d);
    CounterRng center_rng(seed, fnv1a64("blobs-centers"));
    for (auto& c : centers) c = (2.0 * center_rng.next_double() - 1.0) * center_box;

    DataSet ds;
    ds.n = n;
    ds.d = d;
    ds.n_classes = std::uint32_t(k);
    ds.features.resize(n * d);
    ds.labels.resize(n);
    CounterRng noise_rng(seed, fnv1a64("blobs-noise"));
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint32_t label = std::uint32_t(i % k);
        ds.labels[i] = label;
        for (std::uint64_t j = 0; j < d; ++j) {
            ds.features[i * d + j] = centers[label * d + j] + noise_rng.normal() * cluster_std;
        }
    }
    standardize(ds);
    return ds;
}

DataSet make_linear(const json& params, std::uint64_t seed) {
    const std::uint64_t n = require_count(params, "n_samples");
    const std::uint64_t d = require_count(params, "n_features");
    const std::uint64_t k = require_count(params, "n_classes");

    DataSet ds;
    ds.n = n;
    ds.d = d;
    ds.n_classes = std::uint32_t(k);
    ds.features.resize(n * d);
    ds.labels.resize(n);

    CounterRng x_rng(seed, fnv1a64("linear-x"));
    for (auto& v : ds.features) v = x_rng.normal();

    std::vector<double> teacher(k * d);
    CounterRng w_rng(seed, fnv1a64("linear-teacher"));
    for (auto& v : teacher) v = w_rng.normal();

    for (std::uint64_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_score = 0.0;
        for (std::uint64_t c = 0; c < k; ++c) {
            double score = 0.0;
            for (std::uint64_t j = 0; j < d; ++j) {
                score += teacher[c * d + j] * ds.features[i * d + j];
            }
            if (c == 0 || score > best_score) {
                best = c;
                best_score = score;
            }
        }
        ds.labels[i] = std::uint32_t(best);
    }
    standardize(ds);
    return ds;
}

DataSet load_mnist_like(const json& params, std::uint64_t /*seed*/) {
    if (!params.contains("path") || !params["path"].is_string()) {
        throw invalid_value("dataset.params.path", "required string for mnist-like");
    }
    return read_tensor_file(params["path"].get<std::string>());
}

} // namespace

bool dataset_registered(const std::string& name) {
    return name == "synthetic-blobs" || name == "synthetic-linear" || name == "mnist-like";
}

DataSet prepare_root_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.name == "synthetic-blobs") return make_blobs(spec.params, seed);
    if (spec.name == "synthetic-linear") return make_linear(spec.params, seed);
    if (spec.name == "mnist-like") return load_mnist_like(spec.params, seed);
    throw Error(ErrorCode::UnknownDataset, "unknown dataset: " + spec.name);
}

void write_tensor_file(const std::filesystem::path& path, const DataSet& data) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(24 + data.features.size() * 8 + data.labels.size() * 4);
    bytes.push_back('F');
    bytes.push_back('L');
    bytes.push_back('D');
    bytes.push_back('S');
    wire::put_u32(bytes, 1);
    wire::put_u64(bytes, data.n);
    wire::put_u64(bytes, data.d);
    wire::put_u32(bytes, data.n_classes);
    for (double v : data.features) wire::put_f64(bytes, v);
    for (auto l : data.labels) wire::put_u32(bytes, l);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

DataSet read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    std::size_t off = 0;
    if (bytes.size() < 4 || bytes[0] != 'F' || bytes[1] != 'L' || bytes[2] != 'D' ||
        bytes[3] != 'S') {
        throw Error(ErrorCode::InvalidValue, "bad tensor file magic: " + path.string());
    }
    off = 4;
    std::uint32_t version = wire::get_u32(bytes, off);
    if (version != 1) throw Error(ErrorCode::InvalidValue, "unsupported tensor file version");
    DataSet ds;
    ds.n = wire::get_u64(bytes, off);
    ds.d = wire::get_u64(bytes, off);
    ds.n_classes = wire::get_u32(bytes, off);
    ds.features.reserve(ds.n * ds.d);
    for (std::size_t i = 0; i < ds.n * ds.d; ++i) ds.features.push_back(wire::get_f64(bytes, off));
    ds.labels.reserve(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) ds.labels.push_back(wire::get_u32(bytes, off));
    for (auto l : ds.labels) {
        if (l >= ds.n_classes) {
            throw Error(ErrorCode::InvalidValue, "label out of range in " + path.string());
        }
    }
    return ds;
}

Digest256 file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    Sha256 h;
    char buf[8192];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h.update(buf, std::size_t(in.gcount()));
    }
    return h.finish();
}

DataSet take_rows(const DataSet& data, const std::vector<std::uint64_t>& rows) {
    DataSet out;
    out.d = data.d;
    out.n_classes = data.n_classes;
    out.n = rows.size();
    out.features.reserve(rows.size() * data.d);
    out.labels.reserve(rows.size());
    for (auto r : rows) {
        if (r >= data.n) throw invalid_value("rows", "index out of range");
        auto row = data.row(r);
        out.features.insert(out.features.end(), row.begin(), row.end());
        out.labels.push_back(data.labels[r]);
    }
    return out;
}

} // namespace flsim
