#include "sflsim/nsm.hpp"

#include <stdexcept>

namespace sflsim {

NsmPolicy NsmPolicy::fixed(const Ratio& cr) {
  NsmPolicy p;
  p.fallback = cr;
  return p;
}

NsmPolicy NsmPolicy::default_policy() {
  NsmPolicy p;
  p.table = {{15.0, {1, 3}}, {10.0, {1, 6}}, {5.0, {1, 8}}};
  p.fallback = {1, 12};
  return p;
}

void NsmPolicy::validate() const {
  if (table.size() > 8) {
    throw std::invalid_argument("nsm policy: table exceeds 8 entries (constant-time contract)");
  }
  for (size_t i = 0; i + 1 < table.size(); ++i) {
    if (!(table[i].snr_floor_db > table[i + 1].snr_floor_db)) {
      throw std::invalid_argument("nsm policy: snr floors must be strictly descending");
    }
  }
  for (const auto& e : table) {
    if (!is_supported_cr(e.cr)) {
      throw std::invalid_argument("nsm policy: unsupported cr " + e.cr.str());
    }
  }
  if (!is_supported_cr(fallback)) {
    throw std::invalid_argument("nsm policy: unsupported fallback cr " + fallback.str());
  }
  // monotone contract: higher SNR never selects a smaller CR
  double prev = table.empty() ? fallback.value() : table.front().cr.value();
  for (const auto& e : table) {
    if (e.cr.value() > prev) {
      throw std::invalid_argument("nsm policy: cr must be non-increasing as snr floors descend");
    }
    prev = e.cr.value();
  }
  if (!table.empty() && fallback.value() > prev) {
    throw std::invalid_argument("nsm policy: fallback cr larger than lowest table entry");
  }
}

bool NsmPolicy::is_static() const {
  if (table.empty()) return true;
  for (const auto& e : table) {
    if (!(e.cr == fallback)) return false;
  }
  return true;
}

double observe(const ChannelTrace& trace, size_t client, size_t round) {
  return trace.at(client, round, 0).effective_snr_db();
}

Ratio select_cr(const NsmPolicy& policy, double snr_db, size_t* comparisons) {
  size_t steps = 0;
  for (const auto& e : policy.table) {
    ++steps;
    if (snr_db >= e.snr_floor_db) {
      if (comparisons) *comparisons = steps;
      return e.cr;
    }
  }
  if (comparisons) *comparisons = steps;
  return policy.fallback;
}

}  // namespace sflsim
