#include "sflsim/rng.hpp"

#include <cmath>
#include <cstring>

namespace sflsim {

uint64_t fnv1a(const void* data, size_t len, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a_str(std::string_view s, uint64_t h) { return fnv1a(s.data(), s.size(), h); }

uint64_t fnv1a_u64(uint64_t v, uint64_t h) {
  unsigned char buf[8];
  std::memcpy(buf, &v, 8);
  return fnv1a(buf, 8, h);
}

namespace {

// splitmix64, used only to expand a seed into generator state.
uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
  uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint64_t Rng::bounded(uint64_t n) {
  // rejection sampling, no modulo bias
  uint64_t threshold = (0 - n) % n;
  for (;;) {
    uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

StreamId::StreamId(uint64_t run_seed) : h_(fnv1a_u64(run_seed, 0xcbf29ce484222325ULL)) {}

StreamId& StreamId::add(std::string_view part) {
  h_ = fnv1a_str(part, h_);
  h_ = fnv1a_str("/", h_);
  return *this;
}

StreamId& StreamId::add(uint64_t part) {
  h_ = fnv1a_u64(part, h_);
  h_ = fnv1a_str("/", h_);
  return *this;
}

Rng named_rng(uint64_t run_seed, std::initializer_list<std::string_view> parts) {
  StreamId id(run_seed);
  for (auto p : parts) id.add(p);
  return id.rng();
}

}  // namespace sflsim
