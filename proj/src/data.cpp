#include "sflsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sflsim {

namespace {
constexpr size_t kCifarRecord = 3073;
constexpr size_t kCifarPixels = 3072;
}  // namespace

Dataset load_cifar10_binary(const std::string& path, size_t max_records) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot open CIFAR-10 file: " + path);
  auto file_size = static_cast<size_t>(is.tellg());
  if (file_size % kCifarRecord != 0) {
    throw std::runtime_error("CIFAR-10 format error: " + path + " has " +
                             std::to_string(file_size) + " bytes, not a multiple of 3073");
  }
  is.seekg(0);
  size_t records = std::min(file_size / kCifarRecord, max_records);

  Dataset ds;
  ds.sample_shape = {3, 32, 32};
  ds.num_classes = 10;
  ds.inputs.reserve(records);
  ds.labels.reserve(records);

  std::vector<unsigned char> rec(kCifarRecord);
  for (size_t r = 0; r < records; ++r) {
    is.read(reinterpret_cast<char*>(rec.data()), kCifarRecord);
    if (!is) {
      throw std::runtime_error("CIFAR-10 format error: short read at byte offset " +
                               std::to_string(r * kCifarRecord));
    }
    if (rec[0] > 9) {
      throw std::runtime_error("CIFAR-10 format error: label byte " + std::to_string(rec[0]) +
                               " > 9 at byte offset " + std::to_string(r * kCifarRecord));
    }
    ds.labels.push_back(rec[0]);
    std::vector<double> px(kCifarPixels);
    for (size_t i = 0; i < kCifarPixels; ++i) px[i] = rec[1 + i] / 255.0;
    ds.inputs.push_back(std::move(px));
  }
  return ds;
}

void save_cifar10_binary(const Dataset& raw, const std::string& path) {
  if (raw.sample_shape != std::vector<size_t>{3, 32, 32}) {
    throw std::invalid_argument("save_cifar10_binary: samples must be shaped [3,32,32]");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (size_t r = 0; r < raw.size(); ++r) {
    unsigned char label = static_cast<unsigned char>(raw.labels[r]);
    os.write(reinterpret_cast<const char*>(&label), 1);
    for (double v : raw.inputs[r]) {
      double scaled = std::round(v * 255.0);
      scaled = std::clamp(scaled, 0.0, 255.0);
      unsigned char b = static_cast<unsigned char>(scaled);
      os.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

NormStats compute_norm_stats(const Dataset& train_raw) {
  size_t channels = train_raw.sample_shape.size() == 3 ? train_raw.sample_shape[0] : 1;
  size_t per_channel = train_raw.sample_dim() / channels;
  NormStats st;
  st.mean.assign(channels, 0.0);
  st.stdev.assign(channels, 0.0);
  size_t n = train_raw.size();
  if (n == 0) throw std::invalid_argument("compute_norm_stats: empty dataset");
  for (const auto& x : train_raw.inputs)
    for (size_t c = 0; c < channels; ++c)
      for (size_t i = 0; i < per_channel; ++i) st.mean[c] += x[c * per_channel + i];
  for (auto& m : st.mean) m /= static_cast<double>(n * per_channel);
  for (const auto& x : train_raw.inputs)
    for (size_t c = 0; c < channels; ++c)
      for (size_t i = 0; i < per_channel; ++i) {
        double dv = x[c * per_channel + i] - st.mean[c];
        st.stdev[c] += dv * dv;
      }
  for (auto& s : st.stdev) {
    s = std::sqrt(s / static_cast<double>(n * per_channel));
    if (s < 1e-12) s = 1.0;  // constant channel
  }
  return st;
}

void normalize_dataset(Dataset& ds, const NormStats& stats) {
  size_t channels = stats.mean.size();
  size_t per_channel = ds.sample_dim() / channels;
  for (auto& x : ds.inputs)
    for (size_t c = 0; c < channels; ++c)
      for (size_t i = 0; i < per_channel; ++i)
        x[c * per_channel + i] = (x[c * per_channel + i] - stats.mean[c]) / stats.stdev[c];
  ds.stats = stats;
}

Dataset synth_dataset(size_t n, size_t num_classes, size_t input_dim, double separation,
                      uint64_t seed) {
  Dataset ds;
  ds.sample_shape = {input_dim};
  ds.num_classes = num_classes;

  // class means: separation * random unit vector per class
  Rng mean_rng = named_rng(seed, {"synth", "means"});
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(input_dim));
  for (auto& m : means) {
    double norm = 0.0;
    for (auto& v : m) {
      v = mean_rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : m) v = separation * v / norm;
  }

  Rng rng = named_rng(seed, {"synth", "samples"});
  std::vector<size_t> label_order(n);
  for (size_t i = 0; i < n; ++i) label_order[i] = i % num_classes;
  Rng lrng = named_rng(seed, {"synth", "labels"});
  lrng.shuffle(label_order);

  ds.inputs.reserve(n);
  ds.labels.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    size_t c = label_order[i];
    std::vector<double> x(input_dim);
    for (size_t j = 0; j < input_dim; ++j) x[j] = means[c][j] + rng.normal();
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(c);
  }
  return ds;
}

Dataset synth_image_dataset(size_t n, size_t num_classes, double noise_sigma, uint64_t seed) {
  constexpr size_t C = 3, H = 32, W = 32, G = 4;  // template grid G x G, upsampled
  Dataset ds;
  ds.sample_shape = {C, H, W};
  ds.num_classes = num_classes;

  Rng trng = named_rng(seed, {"synthimg", "templates"});
  std::vector<std::vector<double>> templates(num_classes, std::vector<double>(C * H * W));
  for (auto& tmpl : templates) {
    double grid[C][G][G];
    for (size_t c = 0; c < C; ++c)
      for (size_t gy = 0; gy < G; ++gy)
        for (size_t gx = 0; gx < G; ++gx) grid[c][gy][gx] = trng.uniform(0.15, 0.85);
    // bilinear upsample for smooth class patterns
    for (size_t c = 0; c < C; ++c) {
      for (size_t y = 0; y < H; ++y) {
        double fy = (y + 0.5) / H * G - 0.5;
        size_t y0 = static_cast<size_t>(std::clamp(std::floor(fy), 0.0, double(G - 1)));
        size_t y1 = std::min(y0 + 1, G - 1);
        double wy = std::clamp(fy - double(y0), 0.0, 1.0);
        for (size_t x = 0; x < W; ++x) {
          double fx = (x + 0.5) / W * G - 0.5;
          size_t x0 = static_cast<size_t>(std::clamp(std::floor(fx), 0.0, double(G - 1)));
          size_t x1 = std::min(x0 + 1, G - 1);
          double wx = std::clamp(fx - double(x0), 0.0, 1.0);
          double v = (1 - wy) * ((1 - wx) * grid[c][y0][x0] + wx * grid[c][y0][x1]) +
                     wy * ((1 - wx) * grid[c][y1][x0] + wx * grid[c][y1][x1]);
          tmpl[(c * H + y) * W + x] = v;
        }
      }
    }
  }

  Rng rng = named_rng(seed, {"synthimg", "samples"});
  std::vector<size_t> label_order(n);
  for (size_t i = 0; i < n; ++i) label_order[i] = i % num_classes;
  Rng lrng = named_rng(seed, {"synthimg", "labels"});
  lrng.shuffle(label_order);

  ds.inputs.reserve(n);
  ds.labels.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    size_t cls = label_order[i];
    std::vector<double> x(C * H * W);
    for (size_t j = 0; j < x.size(); ++j) {
      x[j] = std::clamp(templates[cls][j] + noise_sigma * rng.normal(), 0.0, 1.0);
    }
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(cls);
  }
  return ds;
}

Shard shard_iid(size_t n_samples, size_t num_clients, uint64_t seed) {
  if (num_clients == 0) throw std::invalid_argument("shard_iid: zero clients");
  std::vector<size_t> perm(n_samples);
  for (size_t i = 0; i < n_samples; ++i) perm[i] = i;
  Rng rng = named_rng(seed, {"shard", "iid"});
  rng.shuffle(perm);

  Shard shards(num_clients);
  size_t base = n_samples / num_clients, extra = n_samples % num_clients;
  size_t off = 0;
  for (size_t c = 0; c < num_clients; ++c) {
    size_t take = base + (c < extra ? 1 : 0);
    shards[c].assign(perm.begin() + off, perm.begin() + off + take);
    off += take;
  }
  return shards;
}

Shard shard_fixed_size(size_t n_samples, size_t num_clients, size_t per_client, uint64_t seed) {
  if (per_client == 0 || n_samples == 0) {
    throw std::invalid_argument("shard_fixed_size: empty request");
  }
  Shard shards(num_clients);
  for (size_t c = 0; c < num_clients; ++c) {
    StreamId id(seed);
    id.add("shard").add("fixed").add(c);
    Rng rng = id.rng();
    std::vector<size_t> perm(n_samples);
    for (size_t i = 0; i < n_samples; ++i) perm[i] = i;
    rng.shuffle(perm);
    shards[c].reserve(per_client);
    for (size_t i = 0; i < per_client; ++i) shards[c].push_back(perm[i % n_samples]);
  }
  return shards;
}

namespace {
// Marsaglia-Tsang gamma sampler; alpha < 1 boosted via the power trick.
double sample_gamma(double alpha, Rng& rng) {
  if (alpha < 1.0) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    return sample_gamma(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}
}  // namespace

Shard shard_dirichlet(const std::vector<size_t>& labels, size_t num_classes, size_t num_clients,
                      double alpha, uint64_t seed) {
  Shard shards(num_clients);
  Rng rng = named_rng(seed, {"shard", "dirichlet"});
  std::vector<std::vector<size_t>> by_class(num_classes);
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  for (size_t cls = 0; cls < num_classes; ++cls) {
    auto& idx = by_class[cls];
    rng.shuffle(idx);
    std::vector<double> w(num_clients);
    double total = 0.0;
    for (auto& v : w) {
      v = sample_gamma(alpha, rng);
      total += v;
    }
    size_t assigned = 0;
    for (size_t c = 0; c < num_clients; ++c) {
      size_t take = c + 1 == num_clients
                        ? idx.size() - assigned
                        : static_cast<size_t>(std::floor(w[c] / total * idx.size()));
      take = std::min(take, idx.size() - assigned);
      for (size_t i = 0; i < take; ++i) shards[c].push_back(idx[assigned + i]);
      assigned += take;
    }
  }
  return shards;
}

Batch make_batch(const Dataset& ds, const std::vector<size_t>& indices, size_t start,
                 size_t count) {
  size_t dim = ds.sample_dim();
  Batch b;
  std::vector<size_t> shape{count};
  shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
  b.inputs = Tensor::zeros(shape);
  b.labels.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    size_t idx = indices[start + i];
    const auto& x = ds.inputs[idx];
    std::copy(x.begin(), x.end(), b.inputs.values.begin() + i * dim);
    b.labels.emplace_back(ds.labels[idx]);
  }
  return b;
}

}  // namespace sflsim
