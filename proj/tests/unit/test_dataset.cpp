#include "flsim/dataset.hpp"

#include "flsim/errors.hpp"
#include "reference_oracles.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace flsim;
using nlohmann::json;

namespace {

DatasetSpec blobs_spec(int n, int d, int k) {
    DatasetSpec spec;
    spec.name = "synthetic-blobs";
    spec.params = json{{"n_samples", n}, {"n_features", d}, {"n_classes", k}};
    return spec;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("blobs are balanced and standardized") {
    DataSet ds = prepare_root_dataset(blobs_spec(200, 6, 2), 7);
    REQUIRE(ds.n == 200);
    REQUIRE(ds.d == 6);
    std::size_t class0 = 0;
    for (auto l : ds.labels) class0 += l == 0 ? 1 : 0;
    CHECK(class0 == 100);

    for (std::size_t j = 0; j < ds.d; ++j) {
        double mean = 0, var = 0;
        for (std::size_t i = 0; i < ds.n; ++i) mean += ds.features[i * ds.d + j];
        mean /= double(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) {
            double c = ds.features[i * ds.d + j] - mean;
            var += c * c;
        }
        var /= double(ds.n);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("same spec and seed regenerate bit-identical data") {
    DataSet a = prepare_root_dataset(blobs_spec(64, 4, 4), 11);
    DataSet b = prepare_root_dataset(blobs_spec(64, 4, 4), 11);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    DataSet c = prepare_root_dataset(blobs_spec(64, 4, 4), 12);
    CHECK(a.features != c.features);
}

TEST_CASE("blobs match an independent regeneration of the documented recipe") {
    const std::uint64_t seed = 41;
    const std::size_t n = 30, d = 3, k = 2;
    DataSet ds = prepare_root_dataset(blobs_spec(int(n), int(d), int(k)), seed);

    refimpl::Rng centers_rng(seed, refimpl::fnv("blobs-centers"));
    std::vector<double> centers(k * d);
    for (auto& c : centers) c = (2.0 * centers_rng.unit() - 1.0) * 4.0;
    refimpl::Rng noise(seed, refimpl::fnv("blobs-noise"));
    std::vector<double> feats(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            feats[i * d + j] = centers[(i % k) * d + j] + noise.gauss() * 0.6;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += feats[i * d + j];
        mean /= double(n);
        double var = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double c = feats[i * d + j] - mean;
            var += c * c;
        }
        var /= double(n);
        double sd = std::sqrt(var);
        if (sd < 1e-12) sd = 1.0;
        for (std::size_t i = 0; i < n; ++i) feats[i * d + j] = (feats[i * d + j] - mean) / sd;
    }
    CHECK(ds.features == feats);
}

TEST_CASE("linear teacher labels are argmax of the teacher scores") {
    DatasetSpec spec;
    spec.name = "synthetic-linear";
    spec.params = json{{"n_samples", 50}, {"n_features", 4}, {"n_classes", 3}};
    DataSet ds = prepare_root_dataset(spec, 5);
    REQUIRE(ds.n == 50);
    std::uint32_t max_label = 0;
    for (auto l : ds.labels) max_label = std::max(max_label, l);
    CHECK(max_label <= 2);
}

TEST_CASE("unknown dataset and bad parameters are rejected") {
    DatasetSpec spec;
    spec.name = "cifar-10";
    spec.params = json::object();
    CHECK_THROWS_AS(prepare_root_dataset(spec, 0), Error);

    DatasetSpec zero = blobs_spec(0, 3, 2);
    CHECK_THROWS_AS(prepare_root_dataset(zero, 0), Error);
}

TEST_CASE("tensor file round trip and digest stability") {
    DataSet ds = prepare_root_dataset(blobs_spec(20, 3, 2), 3);
    auto path = temp_file("flsim_test_tensor.bin");
    write_tensor_file(path, ds);
    DataSet back = read_tensor_file(path);
    CHECK(back.features == ds.features);
    CHECK(back.labels == ds.labels);
    CHECK(back.n_classes == ds.n_classes);

    Digest256 d1 = file_digest(path);
    write_tensor_file(path, ds);
    CHECK(file_digest(path) == d1);
    std::filesystem::remove(path);
}

TEST_CASE("mnist-like loads a binary tensor file without restandardizing") {
    DataSet ds = prepare_root_dataset(blobs_spec(16, 2, 2), 9);
    ds.features[0] = 12345.5; // deliberately unnormalized
    auto path = temp_file("flsim_test_mnistlike.bin");
    write_tensor_file(path, ds);

    DatasetSpec spec;
    spec.name = "mnist-like";
    spec.params = json{{"path", path.string()}};
    DataSet loaded = prepare_root_dataset(spec, 0);
    CHECK(loaded.features == ds.features);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt tensor files are rejected") {
    auto path = temp_file("flsim_test_bad.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "not a tensor file";
    }
    CHECK_THROWS_AS(read_tensor_file(path), Error);
    std::filesystem::remove(path);
}
