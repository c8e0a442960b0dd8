#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace sflsim {

/// 64-bit FNV-1a, used for stream derivation and parameter hashing.
uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t fnv1a_str(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t fnv1a_u64(uint64_t v, uint64_t h);

/// Deterministic xoshiro256** generator. All randomness in the simulator
/// comes from named streams so that parallel and sequential execution of
/// the same run produce identical results on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Unbiased integer in [0, n).
  uint64_t bounded(uint64_t n);

  /// Standard normal via Box-Muller (explicit, implementation-independent).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives the seed of a named stream from a run seed and a path of
/// string/integer components, e.g. stream_seed(seed, {"client", "3", "round", "17"}).
class StreamId {
 public:
  explicit StreamId(uint64_t run_seed);
  StreamId& add(std::string_view part);
  StreamId& add(uint64_t part);
  uint64_t value() const { return h_; }
  Rng rng() const { return Rng(h_); }

 private:
  uint64_t h_;
};

Rng named_rng(uint64_t run_seed, std::initializer_list<std::string_view> parts);

}  // namespace sflsim
