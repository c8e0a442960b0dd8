#pragma once

#include <string>
#include <vector>

#include "sflsim/privacy.hpp"
#include "sflsim/rng.hpp"
#include "sflsim/tensor.hpp"

namespace sflsim {

/// Per-channel normalization statistics, computed on the training split only.
struct NormStats {
  std::vector<double> mean, stdev;
  bool empty() const { return mean.empty(); }
};

struct Dataset {
  std::vector<size_t> sample_shape;           // {C,H,W} for images, {D} for vectors
  std::vector<std::vector<double>> inputs;
  std::vector<size_t> labels;
  size_t num_classes = 0;
  NormStats stats;                            // stats the inputs were normalized with

  size_t size() const { return inputs.size(); }
  size_t sample_dim() const { return shape_product(sample_shape); }
};

/// Parses the public CIFAR-10 binary layout: 3073-byte records, one label
/// byte then 3072 pixel bytes (row-major R,G,B planes). Pixels are scaled to
/// [0,1]; normalization is a separate step. Throws on truncated files or
/// label bytes > 9, naming the byte offset.
Dataset load_cifar10_binary(const std::string& path, size_t max_records);

/// Writes records back in the same binary layout. Inputs must be raw [0,1]
/// values with shape {3,32,32} (i.e. not yet normalized).
void save_cifar10_binary(const Dataset& raw, const std::string& path);

NormStats compute_norm_stats(const Dataset& train_raw);
void normalize_dataset(Dataset& ds, const NormStats& stats);

/// Class-conditional Gaussian vectors with mean separation `separation`;
/// linearly separable when separation is large. Raw (un-normalized).
Dataset synth_dataset(size_t n, size_t num_classes, size_t input_dim, double separation,
                      uint64_t seed);

/// CIFAR-shaped synthetic images in [0,1]: one smooth random template per
/// class plus pixel noise. Stand-in when no CIFAR-10 files are available;
/// written/loaded through the same binary format as the real data.
Dataset synth_image_dataset(size_t n, size_t num_classes, double noise_sigma, uint64_t seed);

using Shard = std::vector<std::vector<size_t>>;  // client id -> indices

/// Random permutation split into disjoint shards with sizes differing by <= 1.
Shard shard_iid(size_t n_samples, size_t num_clients, uint64_t seed);

/// Every client gets its own `per_client` indices (sampled without
/// replacement per client from a seeded permutation, wrapping if needed).
/// Used by the latency sweep, where per-client data volume stays fixed as
/// the client count grows.
Shard shard_fixed_size(size_t n_samples, size_t num_clients, size_t per_client, uint64_t seed);

/// Dirichlet(alpha) non-IID partition over class proportions.
Shard shard_dirichlet(const std::vector<size_t>& labels, size_t num_classes, size_t num_clients,
                      double alpha, uint64_t seed);

struct Batch {
  Tensor inputs;               // [N, ...sample_shape]
  std::vector<Label> labels;   // guarded labels; never readable in server scope
};

Batch make_batch(const Dataset& ds, const std::vector<size_t>& indices, size_t start,
                 size_t count);

}  // namespace sflsim
