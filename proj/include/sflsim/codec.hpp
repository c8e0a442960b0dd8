#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sflsim/channel.hpp"
#include "sflsim/model.hpp"

namespace sflsim {

/// Exact rational compression ratio (transmitted symbols / feature elements).
struct Ratio {
  uint32_t num = 1;
  uint32_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;
  bool operator==(const Ratio&) const = default;
};

Ratio ratio_from_string(const std::string& s);

/// The four CRs of the adaptive set, plus 1 for the identity fixture.
bool is_supported_cr(const Ratio& cr);

/// Frozen encoder/decoder pair for one compression ratio. The identity
/// variant (cr = 1, no layers) reproduces its input exactly through a
/// noiseless channel and anchors the equivalence tests.
struct SemanticCodec {
  Ratio cr;
  size_t d = 0;  // feature dimension
  size_t k = 0;  // transmitted symbols per sample, k = d * cr exactly
  std::vector<Layer> encoder;
  std::vector<Layer> decoder;
  bool frozen = false;
  double train_snr_db = 10.0;

  bool identity() const { return encoder.empty() && decoder.empty(); }
  uint64_t parameter_hash() const;

  static SemanticCodec make_identity(size_t d);
};

/// k = d * cr as an exact integer; throws if cr does not divide d.
size_t latent_size(size_t d, const Ratio& cr);

struct NormalizedSymbols {
  std::vector<double> symbols;  // mean square exactly 1 up to rounding
  double scale;                 // ||x|| / sqrt(k); decoder multiplies by this
};

/// s = sqrt(k) * x / ||x||. Throws on the zero vector.
NormalizedSymbols power_normalize(const std::vector<double>& x);

struct EncodedFeatures {
  std::vector<double> symbols;
  double scale;
};

/// encoder(features) power-normalized; features length must equal codec.d.
EncodedFeatures sc_encode(const SemanticCodec& codec, const std::vector<double>& features);

/// decoder(scale * received); received length must equal codec.k.
std::vector<double> sc_decode(const SemanticCodec& codec, const std::vector<double>& received,
                              double scale);

/// One batched pass of features [N,d] (or [d]) through encode -> channel ->
/// decode, keeping the contexts codec_backward needs.
struct CodecPass {
  Tensor reconstructed;
  std::vector<double> scales;
  SegmentContexts enc_ctx, dec_ctx;
  size_t symbols_per_sample = 0;
};

CodecPass codec_apply(const SemanticCodec& codec, const Tensor& features,
                      const ChannelRealization& real, Rng& noise_rng);

/// Gradient w.r.t. the original features: back through the decoder, straight
/// through the channel (fading equalized, noise constant), back through the
/// encoder. Never touches codec parameters; throws if the codec is not frozen.
Tensor codec_backward(const SemanticCodec& codec, const CodecPass& pass,
                      const Tensor& grad_wrt_reconstruction);

/// 10*log10(peak^2 / MSE) with peak = max |original| entry; capped at 100 dB
/// (and exactly 100 dB when MSE = 0).
double psnr_db(const Tensor& original, const Tensor& reconstructed);
double psnr_db_with_peak(const std::vector<double>& original,
                         const std::vector<double>& reconstructed, double peak);

struct PretrainResult {
  SemanticCodec codec;                // frozen = true
  std::vector<double> epoch_loss;     // mean reconstruction MSE per epoch
};

struct PretrainOptions {
  size_t epochs = 12;
  size_t batch_size = 64;
  double lr = 1e-3;
  double train_snr_db = 10.0;
};

/// Trains one encoder/decoder pair end to end as an autoencoder through a
/// simulated AWGN channel at train_snr_db, then freezes it.
PretrainResult pretrain_codec(const std::vector<std::vector<double>>& feature_dataset,
                              const Ratio& cr, const PretrainOptions& opt, uint64_t seed);

// ---- checkpoint file: versioned header + flat little-endian f64 block ----

void save_codec(const SemanticCodec& codec, const std::string& path);
SemanticCodec load_codec(const std::string& path);  // verifies the parameter hash

}  // namespace sflsim
