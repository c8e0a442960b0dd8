#pragma once

#include <vector>

#include "sflsim/channel.hpp"
#include "sflsim/codec.hpp"

namespace sflsim {

/// Threshold table mapping observed SNR to a compression ratio. Entries are
/// ordered by strictly descending snr_floor; the first floor at or below the
/// observed SNR wins, otherwise the fallback applies. At most 8 entries, so
/// a lookup is a handful of comparisons.
struct NsmPolicy {
  struct Entry {
    double snr_floor_db;
    Ratio cr;
  };
  std::vector<Entry> table;
  Ratio fallback{1, 12};

  /// Single-row static policy: every SNR selects `cr`.
  static NsmPolicy fixed(const Ratio& cr);
  static NsmPolicy default_policy();

  /// Throws unless floors are strictly descending and the table is small.
  void validate() const;

  bool is_static() const;
};

/// Effective uplink SNR (including the fading factor under perfect CSI) for
/// one (client, round) cell of the trace.
double observe(const ChannelTrace& trace, size_t client, size_t round);

/// First table entry whose floor <= snr_db, else the fallback. Pure function.
/// `comparisons`, when given, counts the lookups performed (bounded-cost contract).
Ratio select_cr(const NsmPolicy& policy, double snr_db, size_t* comparisons = nullptr);

}  // namespace sflsim
