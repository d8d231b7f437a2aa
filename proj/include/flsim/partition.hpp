#pragma once

#include "flsim/dataset.hpp"
#include "flsim/digest.hpp"

#include <map>
#include <string>
#include <vector>

namespace flsim {

// Index of dataset chunks per node. file_digests fill in when chunks are
// archived to disk (SHA-256 of each chunk file's bytes).
struct ChunkManifest {
    std::map<std::string, std::vector<std::uint64_t>> chunks;
    std::map<std::string, Digest256> file_digests;
    std::string partitioner;
    double alpha = 0.0; // dirichlet only
    std::uint64_t seed = 0;
};

// Digest over the canonical manifest encoding (partitioner | seed | per node
// in map order: id, index count, indices as little-endian u64). Fully
// determined by the partition inputs.
Digest256 manifest_digest(const ChunkManifest& m);

// Shuffles 0..n_samples-1 with CounterRng(seed, fnv1a64("iid")) and deals
// contiguous blocks to clients in ascending id order; the first
// n_samples mod n_clients clients receive one extra index.
ChunkManifest iid_partition(std::uint64_t n_samples, const std::vector<std::string>& client_ids,
                            std::uint64_t seed);

// Per class c (ascending): the class's indices (ascending) are shuffled with
// CounterRng(seed, combine_stream(fnv1a64("dirichlet-shuffle"), c)); client
// proportions come from Gamma(alpha) draws, one per client in ascending id
// order, from CounterRng(seed, combine_stream(fnv1a64("dirichlet-prop"), c)),
// normalized to sum 1 (all-zero draws fall back to uniform). Counts resolve
// by largest remainder: floor each target, then grant the leftover one index
// each by descending fractional part (ties to the lower client position).
// Clients then take consecutive slices in ascending id order.
ChunkManifest dirichlet_partition(const std::vector<std::uint32_t>& labels,
                                  const std::vector<std::string>& client_ids, double alpha,
                                  std::uint64_t seed);

// Deterministic per-node train/test split. The chunk's indices are sorted
// ascending, shuffled with CounterRng(fnv1a64 over their little-endian u64
// encoding, fnv1a64("preprocess")), and cut at
// clamp(floor(train_fraction * n), 1, n - 1); a single-index chunk goes
// entirely to train, an empty chunk yields two empty splits.
struct ChunkSplit {
    std::vector<std::uint64_t> train;
    std::vector<std::uint64_t> test;
};
ChunkSplit preprocess_chunk(const std::vector<std::uint64_t>& indices, double train_fraction);

// Throws InvalidValue unless chunks are pairwise disjoint and cover exactly
// 0..n_samples-1.
void validate_manifest(const ChunkManifest& m, std::uint64_t n_samples);

// Writes <dir>/<node-id>.chunk for every manifest entry (rows in chunk index
// order) and records each file's digest in the manifest.
void archive_chunks(const DataSet& root, ChunkManifest& m, const std::filesystem::path& dir);

bool partitioner_registered(const std::string& name);

} // namespace flsim
