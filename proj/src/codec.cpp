#include "sflsim/codec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sflsim {

std::string Ratio::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

Ratio ratio_from_string(const std::string& s) {
  Ratio r;
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos) {
      r.num = static_cast<uint32_t>(std::stoul(s));
      r.den = 1;
    } else {
      r.num = static_cast<uint32_t>(std::stoul(s.substr(0, slash)));
      r.den = static_cast<uint32_t>(std::stoul(s.substr(slash + 1)));
    }
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse compression ratio: " + s);
  }
  if (r.num == 0 || r.den == 0) throw std::invalid_argument("compression ratio must be positive");
  return r;
}

bool is_supported_cr(const Ratio& cr) {
  static const Ratio supported[] = {{1, 3}, {1, 6}, {1, 8}, {1, 12}, {1, 1}};
  for (const auto& s : supported)
    if (cr == s) return true;
  return false;
}

size_t latent_size(size_t d, const Ratio& cr) {
  size_t scaled = d * cr.num;
  if (scaled % cr.den != 0) {
    throw std::invalid_argument("compression ratio " + cr.str() + " does not divide feature dim " +
                                std::to_string(d));
  }
  size_t k = scaled / cr.den;
  if (k == 0) throw std::invalid_argument("latent size is zero for d=" + std::to_string(d));
  return k;
}

uint64_t SemanticCodec::parameter_hash() const {
  uint64_t h = param_hash(encoder);
  for (const auto& l : decoder)
    for (const auto& p : l.params) h = fnv1a(p.values.data(), p.values.size() * sizeof(double), h);
  return h;
}

SemanticCodec SemanticCodec::make_identity(size_t d) {
  SemanticCodec c;
  c.cr = {1, 1};
  c.d = d;
  c.k = d;
  c.frozen = true;
  return c;
}

NormalizedSymbols power_normalize(const std::vector<double>& x) {
  double sumsq = 0.0;
  for (double v : x) sumsq += v * v;
  if (sumsq == 0.0) {
    throw std::invalid_argument("power_normalize: zero vector has no direction");
  }
  double norm = std::sqrt(sumsq);
  double rootk = std::sqrt(static_cast<double>(x.size()));
  double f = rootk / norm;
  NormalizedSymbols out;
  out.symbols.resize(x.size());
  for (size_t i = 0; i < x.size(); ++i) out.symbols[i] = f * x[i];
  out.scale = norm / rootk;
  return out;
}

namespace {

Tensor layers_forward(const std::vector<Layer>& layers, const Tensor& input,
                      SegmentContexts& ctx) {
  ctx.per_layer.clear();
  Tensor cur = input;
  for (const auto& l : layers) {
    auto [out, lctx] = forward(l, cur);
    ctx.per_layer.push_back(std::move(lctx));
    cur = std::move(out);
  }
  return cur;
}

Tensor layers_backward(const std::vector<Layer>& layers, const SegmentContexts& ctx,
                       const Tensor& upstream, std::vector<std::vector<Tensor>>* param_grads) {
  Tensor grad = upstream;
  for (size_t i = layers.size(); i-- > 0;) {
    BackwardResult br = backward(layers[i], ctx.per_layer[i], grad);
    if (param_grads) {
      for (size_t pi = 0; pi < br.param_grads.size(); ++pi) {
        auto& buf = (*param_grads)[i][pi].values;
        const auto& g = br.param_grads[pi].values;
        for (size_t k = 0; k < buf.size(); ++k) buf[k] += g[k];
      }
    }
    grad = std::move(br.input_grad);
  }
  return grad;
}

// enc: d -> h -> h -> k (relu between, linear bottleneck)
// dec: k -> h -> h -> d (relu between, linear output)
size_t hidden_width(size_t d, size_t k) { return std::max(d / 3, k); }

std::vector<Layer> make_coder(size_t in, size_t hidden, size_t out, uint64_t seed,
                              const char* side) {
  auto rng_at = [&](size_t idx) {
    StreamId id(seed);
    id.add("codec").add(side).add(idx);
    return id.rng();
  };
  std::vector<Layer> L;
  {
    Rng r = rng_at(0);
    L.push_back(make_dense(in, hidden, r));
  }
  L.push_back(make_relu());
  {
    Rng r = rng_at(2);
    L.push_back(make_dense(hidden, hidden, r));
  }
  L.push_back(make_relu());
  {
    Rng r = rng_at(4);
    L.push_back(make_dense(hidden, out, r));
  }
  return L;
}

}  // namespace

EncodedFeatures sc_encode(const SemanticCodec& codec, const std::vector<double>& features) {
  if (features.size() != codec.d) {
    throw std::invalid_argument("sc_encode: feature length " + std::to_string(features.size()) +
                                " != codec d " + std::to_string(codec.d));
  }
  std::vector<double> enc_out;
  if (codec.identity()) {
    enc_out = features;
  } else {
    SegmentContexts ctx;
    Tensor out = layers_forward(codec.encoder, Tensor::vec(features), ctx);
    enc_out = std::move(out.values);
  }
  NormalizedSymbols ns = power_normalize(enc_out);
  return {std::move(ns.symbols), ns.scale};
}

std::vector<double> sc_decode(const SemanticCodec& codec, const std::vector<double>& received,
                              double scale) {
  if (received.size() != codec.k) {
    throw std::invalid_argument("sc_decode: symbol count " + std::to_string(received.size()) +
                                " != codec k " + std::to_string(codec.k));
  }
  std::vector<double> denorm(received.size());
  for (size_t i = 0; i < received.size(); ++i) denorm[i] = scale * received[i];
  if (codec.identity()) return denorm;
  SegmentContexts ctx;
  Tensor out = layers_forward(codec.decoder, Tensor::vec(std::move(denorm)), ctx);
  return out.values;
}

CodecPass codec_apply(const SemanticCodec& codec, const Tensor& features,
                      const ChannelRealization& real, Rng& noise_rng) {
  bool batched = features.rank() == 2;
  size_t n = batched ? features.shape[0] : 1;
  size_t d = batched ? features.shape[1] : features.shape[0];
  if (d != codec.d) {
    throw std::invalid_argument("codec_apply: feature dim " + std::to_string(d) + " != codec d " +
                                std::to_string(codec.d));
  }

  CodecPass pass;
  pass.symbols_per_sample = codec.k;

  Tensor enc_out = codec.identity()
                       ? features
                       : layers_forward(codec.encoder, features, pass.enc_ctx);

  size_t k = codec.k;
  Tensor denorm = batched ? Tensor::zeros({n, k}) : Tensor::zeros({k});
  pass.scales.resize(n);
  for (size_t s = 0; s < n; ++s) {
    std::vector<double> row(enc_out.values.begin() + s * k, enc_out.values.begin() + (s + 1) * k);
    NormalizedSymbols ns = power_normalize(row);
    std::vector<double> received = transmit(ns.symbols, real, noise_rng);
    received = equalize(received, real);
    pass.scales[s] = ns.scale;
    for (size_t i = 0; i < k; ++i) denorm.values[s * k + i] = ns.scale * received[i];
  }

  pass.reconstructed = codec.identity() ? std::move(denorm)
                                        : layers_forward(codec.decoder, denorm, pass.dec_ctx);
  assert_finite(pass.reconstructed, "codec reconstruction");
  return pass;
}

Tensor codec_backward(const SemanticCodec& codec, const CodecPass& pass,
                      const Tensor& grad_wrt_reconstruction) {
  if (!codec.frozen) {
    throw std::logic_error("codec_backward: codec is not frozen; refusing to run inside a "
                           "federated round");
  }
  if (codec.identity()) {
    // normalize/denormalize cancel, channel is straight-through: gradient unchanged
    return grad_wrt_reconstruction;
  }
  Tensor grad = layers_backward(codec.decoder, pass.dec_ctx, grad_wrt_reconstruction, nullptr);
  // straight-through across normalize -> channel -> denormalize (scale cancels, noise constant)
  return layers_backward(codec.encoder, pass.enc_ctx, grad, nullptr);
}

double psnr_db_with_peak(const std::vector<double>& original,
                         const std::vector<double>& reconstructed, double peak) {
  if (original.size() != reconstructed.size()) {
    throw std::invalid_argument("psnr: size mismatch " + std::to_string(original.size()) + " vs " +
                                std::to_string(reconstructed.size()));
  }
  double mse = 0.0;
  for (size_t i = 0; i < original.size(); ++i) {
    double e = original[i] - reconstructed[i];
    mse += e * e;
  }
  mse /= static_cast<double>(original.size());
  if (mse == 0.0) return 100.0;
  if (peak == 0.0) return -100.0;
  double v = 10.0 * std::log10(peak * peak / mse);
  return std::min(v, 100.0);
}

double psnr_db(const Tensor& original, const Tensor& reconstructed) {
  if (!same_shape(original, reconstructed)) {
    throw std::invalid_argument("psnr: shape mismatch " + shape_str(original.shape) + " vs " +
                                shape_str(reconstructed.shape));
  }
  double peak = 0.0;
  for (double v : original.values) peak = std::max(peak, std::abs(v));
  return psnr_db_with_peak(original.values, reconstructed.values, peak);
}

PretrainResult pretrain_codec(const std::vector<std::vector<double>>& feature_dataset,
                              const Ratio& cr, const PretrainOptions& opt, uint64_t seed) {
  if (feature_dataset.empty()) {
    throw std::invalid_argument("pretrain_codec: empty feature dataset");
  }
  size_t d = feature_dataset.front().size();
  for (const auto& f : feature_dataset) {
    if (f.size() != d) throw std::invalid_argument("pretrain_codec: ragged feature dataset");
  }
  size_t k = latent_size(d, cr);
  size_t h = hidden_width(d, k);

  SemanticCodec codec;
  codec.cr = cr;
  codec.d = d;
  codec.k = k;
  codec.train_snr_db = opt.train_snr_db;
  codec.encoder = make_coder(d, h, k, seed, "enc");
  codec.decoder = make_coder(k, h, d, seed, "dec");

  // wrap in segments for optimizer state
  ModelSegment enc, dec;
  enc.layers = std::move(codec.encoder);
  dec.layers = std::move(codec.decoder);
  enc.init_optimizer(opt.lr);
  dec.init_optimizer(opt.lr);

  ChannelRealization real;
  real.model = ChannelModel::awgn;
  real.snr_db = opt.train_snr_db;

  PretrainResult res;
  size_t n = feature_dataset.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    StreamId sid(seed);
    sid.add("codec").add("shuffle").add(epoch);
    Rng shuffle_rng = sid.rng();
    shuffle_rng.shuffle(order);

    StreamId nid(seed);
    nid.add("codec").add("noise").add(epoch);
    Rng noise_rng = nid.rng();

    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < n; start += opt.batch_size) {
      size_t bs = std::min(opt.batch_size, n - start);
      Tensor batch = Tensor::zeros({bs, d});
      for (size_t b = 0; b < bs; ++b) {
        const auto& f = feature_dataset[order[start + b]];
        std::copy(f.begin(), f.end(), batch.values.begin() + b * d);
      }

      SegmentContexts enc_ctx, dec_ctx;
      Tensor enc_out = segment_forward(enc, batch, enc_ctx);
      Tensor denorm = Tensor::zeros({bs, k});
      for (size_t s = 0; s < bs; ++s) {
        std::vector<double> row(enc_out.values.begin() + s * k,
                                enc_out.values.begin() + (s + 1) * k);
        NormalizedSymbols ns = power_normalize(row);
        std::vector<double> received = transmit(ns.symbols, real, noise_rng);
        for (size_t i = 0; i < k; ++i) denorm.values[s * k + i] = ns.scale * received[i];
      }
      Tensor recon = segment_forward(dec, denorm, dec_ctx);

      double loss = 0.0;
      Tensor grad = Tensor::zeros(recon.shape);
      double scale = 1.0 / static_cast<double>(bs * d);
      for (size_t i = 0; i < recon.size(); ++i) {
        double e = recon.values[i] - batch.values[i];
        loss += e * e;
        grad.values[i] = 2.0 * e * scale;
      }
      loss *= scale;

      Tensor g = segment_backward(dec, dec_ctx, grad);
      segment_backward(enc, enc_ctx, g);  // straight-through channel stage
      enc.apply_adam();
      dec.apply_adam();

      epoch_loss += loss;
      ++batches;
    }
    res.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }

  codec.encoder = std::move(enc.layers);
  codec.decoder = std::move(dec.layers);
  codec.frozen = true;
  res.codec = std::move(codec);
  return res;
}

// ---- checkpoint io ----

namespace {

constexpr char kMagic[4] = {'S', 'C', 'M', 'C'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("codec checkpoint: truncated file");
  return v;
}

std::string codec_arch_string(const SemanticCodec& c) {
  if (c.identity()) return "identity";
  size_t h = c.encoder[0].hyper.out_dim;
  return "dense3:h=" + std::to_string(h);
}

}  // namespace

void save_codec(const SemanticCodec& codec, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open codec checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, codec.cr.num);
  write_pod(os, codec.cr.den);
  write_pod(os, static_cast<uint64_t>(codec.d));
  write_pod(os, codec.train_snr_db);
  std::string arch = codec_arch_string(codec);
  write_pod(os, static_cast<uint32_t>(arch.size()));
  os.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  write_pod(os, codec.parameter_hash());

  std::vector<double> flat;
  for (const auto* side : {&codec.encoder, &codec.decoder})
    for (const auto& l : *side)
      for (const auto& p : l.params) flat.insert(flat.end(), p.values.begin(), p.values.end());
  write_pod(os, static_cast<uint64_t>(flat.size()));
  os.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw std::runtime_error("codec checkpoint: write failed: " + path);
}

SemanticCodec load_codec(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open codec checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("codec checkpoint: bad magic in " + path);
  }
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion) {
    throw std::runtime_error("codec checkpoint: unsupported version " + std::to_string(version));
  }
  SemanticCodec c;
  c.cr.num = read_pod<uint32_t>(is);
  c.cr.den = read_pod<uint32_t>(is);
  c.d = static_cast<size_t>(read_pod<uint64_t>(is));
  c.train_snr_db = read_pod<double>(is);
  uint32_t arch_len = read_pod<uint32_t>(is);
  std::string arch(arch_len, '\0');
  is.read(arch.data(), arch_len);
  if (!is) throw std::runtime_error("codec checkpoint: truncated arch string");
  uint64_t stored_hash = read_pod<uint64_t>(is);
  uint64_t count = read_pod<uint64_t>(is);
  std::vector<double> flat(count);
  is.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw std::runtime_error("codec checkpoint: truncated parameter block");

  c.k = latent_size(c.d, c.cr);
  if (arch == "identity") {
    if (count != 0) throw std::runtime_error("codec checkpoint: identity codec with parameters");
  } else if (arch.rfind("dense3:h=", 0) == 0) {
    size_t h = std::stoul(arch.substr(9));
    c.encoder = make_coder(c.d, h, c.k, 0, "enc");
    c.decoder = make_coder(c.k, h, c.d, 0, "dec");
    size_t off = 0;
    for (auto* side : {&c.encoder, &c.decoder}) {
      for (auto& l : *side) {
        for (auto& p : l.params) {
          if (off + p.size() > flat.size()) {
            throw std::runtime_error("codec checkpoint: parameter block too short");
          }
          std::copy(flat.begin() + off, flat.begin() + off + p.size(), p.values.begin());
          off += p.size();
        }
      }
    }
    if (off != flat.size()) {
      throw std::runtime_error("codec checkpoint: parameter block length mismatch");
    }
  } else {
    throw std::runtime_error("codec checkpoint: unknown arch string '" + arch + "'");
  }
  c.frozen = true;
  if (c.parameter_hash() != stored_hash) {
    throw std::runtime_error("codec checkpoint: parameter hash mismatch (corrupt file?): " + path);
  }
  return c;
}

}  // namespace sflsim
