#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sflsim/rng.hpp"

namespace sflsim {

enum class ChannelModel { awgn, rayleigh };

ChannelModel channel_model_from_name(const std::string& name);
std::string channel_model_name(ChannelModel m);

/// Wireless state for one transmission block. Unit-average-power convention:
/// noise variance sigma^2 = 10^(-snr_db/10). snr_db = +inf is the noiseless
/// sentinel (sigma = 0).
struct ChannelRealization {
  ChannelModel model = ChannelModel::awgn;
  double snr_db = 10.0;
  double h = 1.0;          // fading magnitude; 1.0 for awgn, E[h^2]=1 for rayleigh
  uint64_t noise_seed = 0;

  double noise_variance() const;
  /// SNR including the h^2 fading factor, in dB (what a perfect-CSI monitor sees).
  double effective_snr_db() const;
};

ChannelRealization sample_realization(ChannelModel model, double snr_db, Rng& rng,
                                      uint64_t noise_seed);

/// y = h*x + n with n iid Gaussian(0, sigma^2) drawn from `rng`.
/// Input must be power-normalized (mean square 1 +- 1e-6) unless sigma = 0.
std::vector<double> transmit(const std::vector<double>& symbols, const ChannelRealization& real,
                             Rng& rng);

/// Perfect-CSI equalization: y / h. Identity for awgn.
std::vector<double> equalize(const std::vector<double>& received, const ChannelRealization& real);

/// B * log2(1 + 10^(snr_db/10)) bits per second; snr_db = -inf gives rate 0.
double shannon_rate(double bandwidth_hz, double snr_db);

/// SNR schedule: constant level or piecewise-constant breakpoints
/// (round_start, snr_db), sorted by round_start, first entry at round 0.
struct SnrSchedule {
  std::vector<std::pair<size_t, double>> breakpoints;

  static SnrSchedule constant(double snr_db);
  double at(size_t round) const;
};

/// Pre-generated per-(client, round, direction) channel realizations.
/// Deterministic given seed + schedule; direction 0 = uplink, 1 = downlink.
class ChannelTrace {
 public:
  ChannelTrace() = default;
  ChannelTrace(ChannelModel model, const SnrSchedule& schedule, size_t num_clients,
               size_t rounds, uint64_t seed);

  const ChannelRealization& at(size_t client, size_t round, size_t direction = 0) const;
  size_t num_clients() const { return num_clients_; }
  size_t rounds() const { return rounds_; }

 private:
  size_t num_clients_ = 0, rounds_ = 0;
  std::vector<ChannelRealization> cells_;
};

}  // namespace sflsim
