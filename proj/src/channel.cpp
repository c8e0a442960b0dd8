#include "sflsim/channel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sflsim {

ChannelModel channel_model_from_name(const std::string& name) {
  if (name == "awgn") return ChannelModel::awgn;
  if (name == "rayleigh") return ChannelModel::rayleigh;
  throw std::invalid_argument("unknown channel model: " + name);
}

std::string channel_model_name(ChannelModel m) {
  return m == ChannelModel::awgn ? "awgn" : "rayleigh";
}

double ChannelRealization::noise_variance() const {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

double ChannelRealization::effective_snr_db() const {
  if (model == ChannelModel::awgn) return snr_db;
  return snr_db + 10.0 * std::log10(h * h);
}

ChannelRealization sample_realization(ChannelModel model, double snr_db, Rng& rng,
                                      uint64_t noise_seed) {
  if (std::isnan(snr_db)) throw std::invalid_argument("sample_realization: snr_db is NaN");
  ChannelRealization r;
  r.model = model;
  r.snr_db = snr_db;
  r.noise_seed = noise_seed;
  if (model == ChannelModel::rayleigh) {
    // h = |g|, g standard complex Gaussian (components N(0, 1/2)), so E[h^2] = 1
    double gr = rng.normal();
    double gi = rng.normal();
    r.h = std::sqrt((gr * gr + gi * gi) / 2.0);
    if (r.h <= 0.0) r.h = std::numeric_limits<double>::min();
  }
  return r;
}

std::vector<double> transmit(const std::vector<double>& symbols, const ChannelRealization& real,
                             Rng& rng) {
  double sigma2 = real.noise_variance();
  if (sigma2 > 0.0) {
    double power = 0.0;
    for (double s : symbols) power += s * s;
    power /= static_cast<double>(symbols.size());
    if (std::abs(power - 1.0) > 1e-6) {
      throw std::invalid_argument("transmit: input not power-normalized (mean square " +
                                  std::to_string(power) + ")");
    }
  }
  std::vector<double> y(symbols.size());
  if (sigma2 == 0.0) {
    if (real.h == 1.0) return symbols;  // exact noiseless identity
    for (size_t i = 0; i < symbols.size(); ++i) y[i] = real.h * symbols[i];
    return y;
  }
  double sigma = std::sqrt(sigma2);
  for (size_t i = 0; i < symbols.size(); ++i) y[i] = real.h * symbols[i] + sigma * rng.normal();
  return y;
}

std::vector<double> equalize(const std::vector<double>& received,
                             const ChannelRealization& real) {
  if (real.h == 1.0) return received;
  std::vector<double> out(received.size());
  for (size_t i = 0; i < received.size(); ++i) out[i] = received[i] / real.h;
  return out;
}

double shannon_rate(double bandwidth_hz, double snr_db) {
  if (bandwidth_hz < 0.0) throw std::invalid_argument("shannon_rate: negative bandwidth");
  if (std::isinf(snr_db) && snr_db < 0) return 0.0;
  double snr = std::pow(10.0, snr_db / 10.0);
  return bandwidth_hz * std::log2(1.0 + snr);
}

SnrSchedule SnrSchedule::constant(double snr_db) {
  SnrSchedule s;
  s.breakpoints = {{0, snr_db}};
  return s;
}

double SnrSchedule::at(size_t round) const {
  if (breakpoints.empty() || breakpoints.front().first != 0) {
    throw std::invalid_argument("snr schedule must start at round 0");
  }
  double v = breakpoints.front().second;
  for (const auto& [start, snr] : breakpoints) {
    if (start <= round) v = snr;
    else break;
  }
  return v;
}

ChannelTrace::ChannelTrace(ChannelModel model, const SnrSchedule& schedule, size_t num_clients,
                           size_t rounds, uint64_t seed)
    : num_clients_(num_clients), rounds_(rounds) {
  cells_.reserve(num_clients * rounds * 2);
  for (size_t c = 0; c < num_clients; ++c) {
    for (size_t r = 0; r < rounds; ++r) {
      for (size_t dir = 0; dir < 2; ++dir) {
        StreamId fading(seed);
        fading.add("fading").add(c).add(r).add(dir);
        StreamId noise(seed);
        noise.add("noise").add(c).add(r).add(dir);
        Rng frng = fading.rng();
        cells_.push_back(sample_realization(model, schedule.at(r), frng, noise.value()));
      }
    }
  }
}

const ChannelRealization& ChannelTrace::at(size_t client, size_t round, size_t direction) const {
  if (client >= num_clients_ || round >= rounds_ || direction > 1) {
    throw std::out_of_range("channel trace: no realization for client " + std::to_string(client) +
                            " round " + std::to_string(round) + " direction " +
                            std::to_string(direction));
  }
  return cells_[(client * rounds_ + round) * 2 + direction];
}

}  // namespace sflsim
