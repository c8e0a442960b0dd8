#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "sflsim/data.hpp"

using namespace sflsim;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_cifar_records(const std::string& path, size_t n, unsigned char label_base) {
  std::ofstream os(path, std::ios::binary);
  for (size_t r = 0; r < n; ++r) {
    unsigned char label = static_cast<unsigned char>((label_base + r) % 10);
    os.put(static_cast<char>(label));
    for (size_t i = 0; i < 3072; ++i) os.put(static_cast<char>((r * 31 + i) % 256));
  }
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cifar loader parses 3073-byte records") {
  std::string path = temp_path("cifar_ok.bin");
  write_cifar_records(path, 5, 2);
  Dataset ds = load_cifar10_binary(path, 100);
  CHECK(ds.size() == 5);
  CHECK(ds.sample_shape == std::vector<size_t>{3, 32, 32});
  CHECK(ds.labels == std::vector<size_t>{2, 3, 4, 5, 6});
  CHECK(ds.inputs[0].size() == 3072);
  for (double v : ds.inputs[0]) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // max_records truncates
  Dataset limited = load_cifar10_binary(path, 2);
  CHECK(limited.size() == 2);
  std::filesystem::remove(path);
}

TEST_CASE("cifar loader rejects bad label bytes, naming the offset") {
  std::string path = temp_path("cifar_badlabel.bin");
  {
    std::ofstream os(path, std::ios::binary);
    os.put(3);
    for (size_t i = 0; i < 3072; ++i) os.put(0);
    os.put(10);  // invalid label at offset 3073
    for (size_t i = 0; i < 3072; ++i) os.put(0);
  }
  try {
    load_cifar10_binary(path, 100);
    FAIL("expected a format error");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("3073") != std::string::npos);
    CHECK(msg.find("10") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("cifar loader rejects truncated files") {
  std::string path = temp_path("cifar_trunc.bin");
  {
    std::ofstream os(path, std::ios::binary);
    for (size_t i = 0; i < 3073 + 100; ++i) os.put(1);
  }
  CHECK_THROWS_AS(load_cifar10_binary(path, 100), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("loader round-trip reproduces the file bytes exactly") {
  std::string path = temp_path("cifar_rt_in.bin");
  write_cifar_records(path, 4, 0);
  Dataset ds = load_cifar10_binary(path, 100);
  std::string out = temp_path("cifar_rt_out.bin");
  save_cifar10_binary(ds, out);
  CHECK(read_all(path) == read_all(out));
  std::filesystem::remove(path);
  std::filesystem::remove(out);
}

TEST_CASE("synthetic datasets are reproducible and balanced") {
  Dataset a = synth_dataset(100, 4, 16, 5.0, 42);
  Dataset b = synth_dataset(100, 4, 16, 5.0, 42);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  Dataset c = synth_dataset(100, 4, 16, 5.0, 43);
  CHECK(a.inputs != c.inputs);

  std::vector<size_t> counts(4, 0);
  for (size_t l : a.labels) counts[l]++;
  for (size_t cnt : counts) CHECK(cnt == 25);
}

TEST_CASE("synthetic image dataset is cifar-shaped and in range") {
  Dataset ds = synth_image_dataset(20, 10, 0.1, 7);
  CHECK(ds.size() == 20);
  CHECK(ds.sample_shape == std::vector<size_t>{3, 32, 32});
  for (const auto& x : ds.inputs)
    for (double v : x) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  // it can ride through the binary format unchanged up to quantization
  std::string path = temp_path("synth_img.bin");
  save_cifar10_binary(ds, path);
  Dataset back = load_cifar10_binary(path, 100);
  CHECK(back.labels == ds.labels);
  for (size_t i = 0; i < ds.inputs[0].size(); ++i) {
    CHECK(std::abs(back.inputs[0][i] - ds.inputs[0][i]) <= 0.5 / 255.0 + 1e-12);
  }
  std::filesystem::remove(path);
}

TEST_CASE("normalization uses training statistics, applied to both splits") {
  Dataset train = synth_image_dataset(50, 10, 0.1, 1);
  Dataset test = synth_image_dataset(30, 10, 0.1, 2);
  NormStats stats = compute_norm_stats(train);
  CHECK(stats.mean.size() == 3);
  normalize_dataset(train, stats);
  normalize_dataset(test, stats);

  // per-channel mean ~0 and std ~1 on the split the stats came from
  NormStats after = compute_norm_stats(train);
  for (double m : after.mean) CHECK(std::abs(m) < 1e-9);
  for (double s : after.stdev) CHECK(std::abs(s - 1.0) < 1e-9);

  // the test split keeps the train stats (no leakage)
  CHECK(test.stats.mean == stats.mean);
  CHECK(test.stats.stdev == stats.stdev);

  // recomputing stats on an identically-built dataset matches bitwise
  Dataset train2 = synth_image_dataset(50, 10, 0.1, 1);
  NormStats stats2 = compute_norm_stats(train2);
  CHECK(stats2.mean == stats.mean);
  CHECK(stats2.stdev == stats.stdev);
}

TEST_CASE("iid shards split near-equally") {
  Shard s = shard_iid(10, 3, 1);
  CHECK(s[0].size() == 4);
  CHECK(s[1].size() == 3);
  CHECK(s[2].size() == 3);

  Shard one = shard_iid(10, 1, 1);
  CHECK(one[0].size() == 10);
}

TEST_CASE("iid shards are disjoint and cover everything") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Shard s = shard_iid(53, 4, seed);
    std::set<size_t> seen;
    size_t total = 0;
    for (const auto& shard : s) {
      total += shard.size();
      for (size_t idx : shard) {
        CHECK(seen.insert(idx).second);  // disjoint
        CHECK(idx < 53);
      }
    }
    CHECK(total == 53);
  }
}

TEST_CASE("fixed-size shards keep per-client volume constant") {
  Shard s = shard_fixed_size(100, 4, 32, 9);
  for (const auto& shard : s) CHECK(shard.size() == 32);
  // per-client draws are deterministic and distinct between clients
  Shard s2 = shard_fixed_size(100, 4, 32, 9);
  CHECK(s == s2);
  CHECK(s[0] != s[1]);
}

TEST_CASE("dirichlet sharding covers the dataset disjointly") {
  Dataset ds = synth_dataset(200, 4, 8, 3.0, 3);
  Shard s = shard_dirichlet(ds.labels, 4, 3, 0.5, 7);
  std::set<size_t> seen;
  size_t total = 0;
  for (const auto& shard : s) {
    total += shard.size();
    for (size_t idx : shard) CHECK(seen.insert(idx).second);
  }
  CHECK(total == 200);
}

TEST_CASE("batches carry guarded labels") {
  Dataset ds = synth_dataset(10, 2, 4, 1.0, 5);
  std::vector<size_t> idx{0, 1, 2, 3};
  Batch b = make_batch(ds, idx, 1, 2);
  CHECK(b.inputs.shape == std::vector<size_t>{2, 4});
  CHECK(b.labels.size() == 2);
  CHECK(b.labels[0].value() == ds.labels[1]);
  ServerScope server;
  CHECK_THROWS_AS((void)b.labels[0].value(), std::logic_error);
}
