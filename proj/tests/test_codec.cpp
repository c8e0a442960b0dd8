#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "sflsim/codec.hpp"

using namespace sflsim;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

ChannelRealization noiseless() {
  ChannelRealization r;
  r.snr_db = kInf;
  return r;
}

std::vector<std::vector<double>> activation_like_features(size_t n, size_t d, uint64_t seed) {
  // nonnegative, correlated across coordinates, like post-relu head activations
  Rng rng = named_rng(seed, {"feat"});
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> f(d);
    double base = std::abs(rng.normal());
    for (auto& v : f) v = std::max(0.0, base + 0.5 * rng.normal());
    out.push_back(std::move(f));
  }
  return out;
}

double mean_psnr(const SemanticCodec& codec, const std::vector<std::vector<double>>& feats,
                 double snr_db, uint64_t seed) {
  Rng noise = named_rng(seed, {"psnr-noise"});
  ChannelRealization real;
  real.snr_db = snr_db;
  double sum = 0.0;
  for (const auto& f : feats) {
    Tensor x = Tensor::vec(f);
    CodecPass pass = codec_apply(codec, x, real, noise);
    sum += psnr_db(x, pass.reconstructed);
  }
  return sum / static_cast<double>(feats.size());
}
}  // namespace

TEST_CASE("ratio parsing and the supported set") {
  CHECK(ratio_from_string("1/3") == Ratio{1, 3});
  CHECK(ratio_from_string("1") == Ratio{1, 1});
  CHECK(ratio_from_string("1/12").value() == doctest::Approx(1.0 / 12).epsilon(1e-15));
  CHECK_THROWS_AS(ratio_from_string("0/3"), std::invalid_argument);
  CHECK_THROWS_AS(ratio_from_string("x"), std::invalid_argument);
  CHECK(is_supported_cr({1, 8}));
  CHECK_FALSE(is_supported_cr({2, 3}));
}

TEST_CASE("latent sizes are exact integers") {
  CHECK(latent_size(3072, {1, 12}) == 256);
  CHECK(latent_size(1536, {1, 3}) == 512);
  CHECK(latent_size(1536, {1, 6}) == 256);
  CHECK(latent_size(1536, {1, 8}) == 192);
  CHECK(latent_size(1536, {1, 12}) == 128);
  CHECK(latent_size(24, {1, 1}) == 24);
  CHECK_THROWS_AS(latent_size(100, {1, 3}), std::invalid_argument);
}

TEST_CASE("power normalization matches the forced values") {
  NormalizedSymbols s = power_normalize({3.0, 4.0});
  CHECK(s.symbols[0] == doctest::Approx(0.848528137423857).epsilon(1e-12));
  CHECK(s.symbols[1] == doctest::Approx(1.131370849898476).epsilon(1e-12));
  double power = (s.symbols[0] * s.symbols[0] + s.symbols[1] * s.symbols[1]) / 2.0;
  CHECK(power == doctest::Approx(1.0).epsilon(1e-12));

  NormalizedSymbols e = power_normalize({2.0, 2.0});
  CHECK(e.symbols == std::vector<double>{1.0, 1.0});

  CHECK_THROWS_AS(power_normalize({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("identity codec reproduces unit-power input exactly") {
  SemanticCodec id = SemanticCodec::make_identity(4);
  std::vector<double> x{1.0, -1.0, 1.0, -1.0};  // mean square exactly 1
  EncodedFeatures enc = sc_encode(id, x);
  CHECK(enc.symbols == x);
  std::vector<double> back = sc_decode(id, enc.symbols, enc.scale);
  CHECK(back == x);
}

TEST_CASE("identity codec round-trips arbitrary input within 1e-12") {
  SemanticCodec id = SemanticCodec::make_identity(3);
  std::vector<double> x{0.3, -7.25, 2.5};
  EncodedFeatures enc = sc_encode(id, x);
  std::vector<double> back = sc_decode(id, enc.symbols, enc.scale);
  for (size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-12);
}

TEST_CASE("encode/decode dimension mismatches are rejected") {
  SemanticCodec id = SemanticCodec::make_identity(4);
  CHECK_THROWS_AS(sc_encode(id, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(sc_decode(id, {1.0, 2.0}, 1.0), std::invalid_argument);
}

TEST_CASE("pretrained codec is deterministic given the seed") {
  auto feats = activation_like_features(64, 24, 5);
  PretrainOptions opt;
  opt.epochs = 3;
  PretrainResult a = pretrain_codec(feats, {1, 3}, opt, 11);
  PretrainResult b = pretrain_codec(feats, {1, 3}, opt, 11);
  CHECK(a.codec.parameter_hash() == b.codec.parameter_hash());
  CHECK(a.epoch_loss == b.epoch_loss);

  // decode(encode(x)) with frozen weights is deterministic in the noiseless channel
  Tensor x = Tensor::vec(feats[0]);
  Rng n1(1), n2(1);
  CodecPass p1 = codec_apply(a.codec, x, noiseless(), n1);
  CodecPass p2 = codec_apply(a.codec, x, noiseless(), n2);
  CHECK(p1.reconstructed.values == p2.reconstructed.values);
}

TEST_CASE("pretraining reduces the reconstruction loss") {
  auto feats = activation_like_features(128, 24, 6);
  PretrainOptions opt;
  opt.epochs = 8;
  PretrainResult r = pretrain_codec(feats, {1, 3}, opt, 3);
  REQUIRE(r.epoch_loss.size() == 8);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  CHECK(r.codec.frozen);
  CHECK(r.codec.k == 8);
}

TEST_CASE("pretraining rejects an empty dataset") {
  PretrainOptions opt;
  CHECK_THROWS_AS(pretrain_codec({}, {1, 3}, opt, 1), std::invalid_argument);
}

TEST_CASE("cr=1 codec learns a near-identity on a quiet channel") {
  auto feats = activation_like_features(128, 24, 7);
  PretrainOptions opt;
  opt.epochs = 60;
  opt.lr = 3e-3;
  opt.train_snr_db = 30.0;
  PretrainResult r = pretrain_codec(feats, {1, 1}, opt, 9);
  double psnr = mean_psnr(r.codec, feats, 30.0, 21);
  CHECK(psnr > 30.0);
}

TEST_CASE("milder compression reconstructs better at the train snr") {
  auto feats = activation_like_features(192, 24, 8);
  PretrainOptions opt;
  opt.epochs = 25;
  PretrainResult third = pretrain_codec(feats, {1, 3}, opt, 13);
  PretrainResult twelfth = pretrain_codec(feats, {1, 12}, opt, 13);
  double p3 = mean_psnr(third.codec, feats, opt.train_snr_db, 31);
  double p12 = mean_psnr(twelfth.codec, feats, opt.train_snr_db, 31);
  CHECK(p3 > p12 + 0.3);
}

TEST_CASE("codec_backward refuses unfrozen codecs and skips parameters") {
  auto feats = activation_like_features(64, 24, 9);
  PretrainOptions opt;
  opt.epochs = 2;
  PretrainResult r = pretrain_codec(feats, {1, 3}, opt, 15);

  Tensor x = Tensor::vec(feats[0]);
  Rng noise(1);
  CodecPass pass = codec_apply(r.codec, x, noiseless(), noise);
  uint64_t before = r.codec.parameter_hash();
  Tensor up = Tensor::zeros(pass.reconstructed.shape);
  for (auto& v : up.values) v = 0.1;
  codec_backward(r.codec, pass, up);
  CHECK(r.codec.parameter_hash() == before);

  SemanticCodec unfrozen = r.codec;
  unfrozen.frozen = false;
  CHECK_THROWS_AS(codec_backward(unfrozen, pass, up), std::logic_error);
}

TEST_CASE("identity codec backward is the exact identity chain") {
  SemanticCodec id = SemanticCodec::make_identity(4);
  Rng noise(2);
  Tensor x = Tensor::vec({1.0, -1.0, 1.0, -1.0});
  CodecPass pass = codec_apply(id, x, noiseless(), noise);
  Tensor up = Tensor::vec({0.1, 0.2, 0.3, 0.4});
  Tensor g = codec_backward(id, pass, up);
  CHECK(g.values == up.values);
}

TEST_CASE("frozen codec gradient matches finite differences of decode(encode(x))") {
  auto feats = activation_like_features(64, 24, 10);
  PretrainOptions opt;
  opt.epochs = 3;
  PretrainResult r = pretrain_codec(feats, {1, 3}, opt, 17);
  const SemanticCodec& codec = r.codec;

  Rng crng(3);
  Tensor x = Tensor::vec(feats[1]);
  Tensor cvec = Tensor::zeros({codec.d});
  for (auto& v : cvec.values) v = crng.normal();

  Rng noise(4);
  CodecPass pass = codec_apply(codec, x, noiseless(), noise);
  Tensor analytic = codec_backward(codec, pass, cvec);

  Tensor fd = finite_diff_grad(
      [&](const Tensor& probe) {
        Rng n(5);
        CodecPass p = codec_apply(codec, probe, noiseless(), n);
        double s = 0.0;
        for (size_t i = 0; i < p.reconstructed.size(); ++i)
          s += cvec.values[i] * p.reconstructed.values[i];
        return s;
      },
      x, 1e-5);
  for (size_t i = 0; i < fd.size(); ++i) {
    double denom = std::max({std::abs(fd.values[i]), std::abs(analytic.values[i]), 1e-6});
    CHECK(std::abs(fd.values[i] - analytic.values[i]) / denom < 1e-3);
  }
}

TEST_CASE("psnr follows the capped-peak definition") {
  Tensor a = Tensor::vec({1.0, -0.5, 0.25});
  CHECK(psnr_db(a, a) == 100.0);

  // peak 1, mse 0.01 -> 20 dB
  Tensor orig = Tensor::vec({1.0, 0.0});
  Tensor recon = Tensor::vec({1.0 - 0.1, 0.1});
  CHECK(psnr_db(orig, recon) == doctest::Approx(20.0).epsilon(1e-9));

  // peak 1, mse 1 -> 0 dB
  Tensor recon2 = Tensor::vec({0.0, 1.0});
  CHECK(psnr_db(orig, recon2) == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(psnr_db(orig, a), std::invalid_argument);
}

TEST_CASE("symbols per sample equal d*cr for the whole set") {
  const size_t d = 1536;
  for (auto [cr, want] : std::initializer_list<std::pair<Ratio, size_t>>{
           {{1, 3}, 512}, {{1, 6}, 256}, {{1, 8}, 192}, {{1, 12}, 128}, {{1, 1}, 1536}}) {
    CHECK(latent_size(d, cr) == want);
  }
}

TEST_CASE("checkpoint files round-trip and verify their hash") {
  auto feats = activation_like_features(64, 24, 11);
  PretrainOptions opt;
  opt.epochs = 2;
  PretrainResult r = pretrain_codec(feats, {1, 6}, opt, 19);

  std::string path = (std::filesystem::temp_directory_path() / "codec_test.scm").string();
  save_codec(r.codec, path);
  SemanticCodec loaded = load_codec(path);
  CHECK(loaded.parameter_hash() == r.codec.parameter_hash());
  CHECK(loaded.cr == r.codec.cr);
  CHECK(loaded.d == r.codec.d);
  CHECK(loaded.k == r.codec.k);
  CHECK(loaded.train_snr_db == r.codec.train_snr_db);
  CHECK(loaded.frozen);

  // flip one payload byte; the loader must notice
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(-9, std::ios::end);
  char b;
  f.seekg(-9, std::ios::end);
  f.read(&b, 1);
  b = static_cast<char>(b ^ 0x7f);
  f.seekp(-9, std::ios::end);
  f.write(&b, 1);
  f.close();
  CHECK_THROWS_WITH_AS(load_codec(path), doctest::Contains("hash mismatch"), std::runtime_error);
  std::filesystem::remove(path);

  // identity codecs survive the format too
  SemanticCodec id = SemanticCodec::make_identity(48);
  std::string idpath = (std::filesystem::temp_directory_path() / "codec_id.scm").string();
  save_codec(id, idpath);
  SemanticCodec idl = load_codec(idpath);
  CHECK(idl.identity());
  CHECK(idl.d == 48);
  std::filesystem::remove(idpath);
}
