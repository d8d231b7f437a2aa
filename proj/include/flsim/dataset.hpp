#pragma once

#include "flsim/digest.hpp"
#include "flsim/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace flsim {

// Named dataset source plus its generator parameters (taken verbatim from
// the job config "dataset" section).
struct DatasetSpec {
    std::string name;
    nlohmann::json params; // generator-specific
};

// Built-in generators. All draws come from the framework generator; the
// exact constructions are documented here because reference implementations
// must be able to reproduce them byte-for-byte.
//
// synthetic-blobs (params: n_samples, n_features, n_classes,
//                  cluster_std = 0.6, center_box = 4.0):
//   centers: CounterRng(seed, fnv1a64("blobs-centers")),
//     centers[c][j] = (2 u - 1) * center_box, c-major then j
//   labels[i] = i mod n_classes
//   noise: CounterRng(seed, fnv1a64("blobs-noise")),
//     features[i][j] = centers[labels[i]][j] + normal() * cluster_std,
//     i-major then j
//   then per-feature standardization (see below)
//
// synthetic-linear (params: n_samples, n_features, n_classes):
//   features: CounterRng(seed, fnv1a64("linear-x")), normal(), i-major then j
//   teacher:  CounterRng(seed, fnv1a64("linear-teacher")), normal(),
//     W*[c][j] c-major then j
//   labels[i] = argmax_c sum_j W*[c][j] * features[i][j], ties -> lowest c
//   then per-feature standardization
//
// Standardization: per feature column, mean and variance accumulate
// left-to-right over rows; std = sqrt(var), columns with std < 1e-12 are
// left centered but unscaled. x := (x - mean) / std.
//
// mnist-like (params: path): reads a binary tensor file in the chunk
// archive format below; no standardization is applied.
DataSet prepare_root_dataset(const DatasetSpec& spec, std::uint64_t seed);

bool dataset_registered(const std::string& name);

// Chunk archive / binary tensor file format (all integers little-endian):
//   magic "FLDS" | u32 version = 1 | u64 n | u64 d | u32 n_classes
//   f64 features[n*d] row-major | u32 labels[n]
// The chunk digest is the SHA-256 of the complete file bytes.
void write_tensor_file(const std::filesystem::path& path, const DataSet& data);
DataSet read_tensor_file(const std::filesystem::path& path);
Digest256 file_digest(const std::filesystem::path& path);

// Row subset of a dataset, rows in the order given.
DataSet take_rows(const DataSet& data, const std::vector<std::uint64_t>& rows);

} // namespace flsim
