#include "sflsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sflsim {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt_histogram(const std::map<std::string, size_t>& h) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : h) {
    if (!first) os << ";";
    os << k << ":" << v;
    first = false;
  }
  return os.str();
}

}  // namespace

std::string csv_header() {
  return "round,regime,train_loss,test_accuracy,mean_feature_psnr_db,test_loss,"
         "uplink_bytes,downlink_bytes,latency_s,cr_histogram,success";
}

std::string csv_row(const RoundRecord& r) {
  std::ostringstream os;
  os << r.round << ',' << r.regime << ',' << fmt_double(r.train_loss) << ','
     << fmt_double(r.test_accuracy) << ',';
  if (r.mean_psnr_db) os << fmt_double(*r.mean_psnr_db);
  os << ',' << fmt_double(r.test_loss) << ',' << r.uplink_bytes << ',' << r.downlink_bytes << ','
     << fmt_double(r.latency_s) << ',' << fmt_histogram(r.cr_histogram) << ','
     << (r.success ? 1 : 0);
  return os.str();
}

DataSplits build_datasets(const ExperimentConfig& cfg) {
  DataSplits out;
  const auto& dc = cfg.data;
  switch (dc.source) {
    case DataConfig::Source::cifar10: {
      if (dc.data_dir.empty()) {
        throw std::invalid_argument("cifar10 data source needs data.dir (or --data-dir)");
      }
      size_t remaining = dc.max_train;
      for (int batch = 1; batch <= 5 && remaining > 0; ++batch) {
        std::string path = dc.data_dir + "/data_batch_" + std::to_string(batch) + ".bin";
        if (!std::filesystem::exists(path)) {
          if (batch == 1) throw std::runtime_error("missing CIFAR-10 file: " + path);
          break;
        }
        Dataset part = load_cifar10_binary(path, remaining);
        if (out.train.size() == 0) {
          out.train = std::move(part);
        } else {
          for (size_t i = 0; i < part.size(); ++i) {
            out.train.inputs.push_back(std::move(part.inputs[i]));
            out.train.labels.push_back(part.labels[i]);
          }
        }
        remaining = dc.max_train - out.train.size();
      }
      out.test = load_cifar10_binary(dc.data_dir + "/test_batch.bin", dc.max_test);
      break;
    }
    case DataConfig::Source::synth: {
      Dataset all = synth_dataset(dc.train_n + dc.test_n, dc.num_classes, dc.input_dim,
                                  dc.separation, cfg.run.seed);
      out.train.sample_shape = all.sample_shape;
      out.train.num_classes = all.num_classes;
      out.test.sample_shape = all.sample_shape;
      out.test.num_classes = all.num_classes;
      for (size_t i = 0; i < all.size(); ++i) {
        auto& dst = i < dc.train_n ? out.train : out.test;
        dst.inputs.push_back(std::move(all.inputs[i]));
        dst.labels.push_back(all.labels[i]);
      }
      break;
    }
    case DataConfig::Source::synth_image: {
      Dataset all = synth_image_dataset(dc.train_n + dc.test_n, dc.num_classes,
                                        dc.image_noise_sigma, cfg.run.seed);
      out.train.sample_shape = all.sample_shape;
      out.train.num_classes = all.num_classes;
      out.test.sample_shape = all.sample_shape;
      out.test.num_classes = all.num_classes;
      for (size_t i = 0; i < all.size(); ++i) {
        auto& dst = i < dc.train_n ? out.train : out.test;
        dst.inputs.push_back(std::move(all.inputs[i]));
        dst.labels.push_back(all.labels[i]);
      }
      break;
    }
  }
  if (out.train.size() == 0 || out.test.size() == 0) {
    throw std::runtime_error("dataset build produced an empty split");
  }
  // training-split statistics only; the test split reuses them
  NormStats stats = compute_norm_stats(out.train);
  normalize_dataset(out.train, stats);
  normalize_dataset(out.test, stats);

  if (out.train.sample_shape != cfg.run.arch.input_shape) {
    throw std::invalid_argument("dataset sample shape " + shape_str(out.train.sample_shape) +
                                " does not match architecture input " +
                                shape_str(cfg.run.arch.input_shape));
  }
  if (out.train.num_classes != cfg.run.arch.num_classes) {
    throw std::invalid_argument("dataset classes != architecture classes");
  }
  return out;
}

std::vector<std::vector<double>> collect_warmup_features(const ExperimentConfig& cfg,
                                                         const Dataset& train, size_t n) {
  RunConfig wcfg = cfg.run;
  wcfg.regime = Regime::centralized;
  wcfg.num_clients = 1;
  wcfg.rounds = 1;
  wcfg.local_epochs = 1;
  Orchestrator warm(wcfg, &train, {});
  warm.run_round(0);

  // head slice of the warmed-up full model
  ModelBuild mb = build_model(cfg.run.arch, cfg.run.seed);
  SplitSpec spec = cfg.run.split.value_or(mb.default_spec);
  ModelSegment head;
  head.role = SegmentRole::head;
  const auto& full = warm.full_model().layers;
  head.layers.assign(full.begin(), full.begin() + spec.cut1);
  head.init_optimizer(cfg.run.lr);

  n = std::min(n, train.size());
  std::vector<std::vector<double>> features;
  features.reserve(n);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t batch = cfg.eval_batch;
  for (size_t start = 0; start < n; start += batch) {
    size_t bs = std::min(batch, n - start);
    Batch b = make_batch(train, order, start, bs);
    SegmentContexts ctx;
    Tensor feat = segment_forward(head, b.inputs, ctx);
    size_t d = feat.size() / bs;
    for (size_t s = 0; s < bs; ++s) {
      features.emplace_back(feat.values.begin() + s * d, feat.values.begin() + (s + 1) * d);
    }
  }
  return features;
}

namespace {

size_t split_feature_dim(const RunConfig& cfg) {
  ModelBuild mb = build_model(cfg.arch, cfg.seed);
  SplitSpec spec = cfg.split.value_or(mb.default_spec);
  ModelSegment head;
  head.layers.assign(mb.layers.begin(), mb.layers.begin() + spec.cut1);
  auto shape = segment_output_shape(head, cfg.arch.input_shape);
  if (shape.size() != 1) {
    throw std::invalid_argument("split feature at cut1 is not rank-1: " + shape_str(shape));
  }
  return shape[0];
}

std::vector<Ratio> policy_crs(const NsmPolicy& policy) {
  std::vector<Ratio> crs;
  auto push = [&](const Ratio& r) {
    for (const auto& c : crs)
      if (c == r) return;
    crs.push_back(r);
  };
  for (const auto& e : policy.table) push(e.cr);
  push(policy.fallback);
  return crs;
}

}  // namespace

std::map<std::string, SemanticCodec> build_codecs(const ExperimentConfig& cfg,
                                                  const Dataset& train) {
  std::map<std::string, SemanticCodec> codecs;
  if (cfg.run.regime != Regime::scusfl) return codecs;

  std::vector<Ratio> needed = policy_crs(cfg.run.nsm);
  switch (cfg.run.codec_source) {
    case CodecSource::identity: {
      size_t d = split_feature_dim(cfg.run);
      for (const auto& cr : needed) {
        if (!(cr == Ratio{1, 1})) {
          throw std::invalid_argument("identity codec source only provides cr=1, policy needs " +
                                      cr.str());
        }
      }
      codecs["1"] = SemanticCodec::make_identity(d);
      break;
    }
    case CodecSource::pretrain: {
      auto features = collect_warmup_features(cfg, train, cfg.codec_feature_samples);
      for (const auto& cr : needed) {
        if (cr == Ratio{1, 1}) {
          codecs["1"] = SemanticCodec::make_identity(split_feature_dim(cfg.run));
          continue;
        }
        StreamId sid(cfg.run.seed);
        sid.add("codec-pretrain").add(cr.str());
        PretrainResult pr = pretrain_codec(features, cr, cfg.run.pretrain, sid.value());
        codecs[cr.str()] = std::move(pr.codec);
      }
      break;
    }
    case CodecSource::files: {
      for (const auto& cr : needed) {
        std::string path = cfg.run.codec_dir + "/codec_" + std::to_string(cr.num) + "_" +
                           std::to_string(cr.den) + ".scm";
        codecs[cr.str()] = load_codec(path);
      }
      break;
    }
  }
  return codecs;
}

EvalResult evaluate_full(const ModelSegment& model, const Dataset& test, size_t batch) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  std::vector<size_t> order(test.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  EvalResult res;
  double loss_sum = 0.0;
  size_t correct = 0;
  ModelSegment m = model;  // contexts need mutable forward bufs? forward is const; copy keeps API simple
  for (size_t start = 0; start < test.size(); start += batch) {
    size_t bs = std::min(batch, test.size() - start);
    Batch b = make_batch(test, order, start, bs);
    SegmentContexts ctx;
    Tensor logits = segment_forward(m, b.inputs, ctx);
    size_t classes = logits.size() / bs;
    std::vector<size_t> lbl(bs);
    for (size_t i = 0; i < bs; ++i) lbl[i] = b.labels[i].value();
    LossResult lr = softmax_cross_entropy_batch(logits, lbl);
    loss_sum += lr.loss * static_cast<double>(bs);
    for (size_t s = 0; s < bs; ++s) {
      size_t arg = 0;
      for (size_t c = 1; c < classes; ++c)
        if (logits.values[s * classes + c] > logits.values[s * classes + arg]) arg = c;
      if (arg == lbl[s]) ++correct;
    }
  }
  res.task_loss = loss_sum / static_cast<double>(test.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return res;
}

EvalResult evaluate_split(const ModelSegment& head, const ModelSegment& body,
                          const ModelSegment* tail, const Dataset& test, size_t batch,
                          const SemanticCodec* codec, ChannelModel channel, double snr_db,
                          uint64_t eval_seed) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  std::vector<size_t> order(test.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  StreamId fid(eval_seed);
  fid.add("eval").add("fading");
  Rng fading_rng = fid.rng();
  StreamId nid(eval_seed);
  nid.add("eval").add("noise");
  Rng noise_rng = nid.rng();

  double loss_sum = 0.0, psnr_sum = 0.0;
  size_t correct = 0;

  ModelSegment h = head, bd = body;
  ModelSegment tl;
  if (tail) tl = *tail;

  for (size_t start = 0; start < test.size(); start += batch) {
    size_t bs = std::min(batch, test.size() - start);
    Batch b = make_batch(test, order, start, bs);
    SegmentContexts hctx;
    Tensor features = segment_forward(h, b.inputs, hctx);
    size_t d = features.size() / bs;

    Tensor body_in = features;
    if (codec) {
      double peak = 0.0;
      for (double v : features.values) peak = std::max(peak, std::abs(v));
      body_in = Tensor::zeros(features.shape);
      // one transmission (and one fading draw) per sample
      for (size_t s = 0; s < bs; ++s) {
        ChannelRealization real = sample_realization(channel, snr_db, fading_rng, 0);
        Tensor one({d}, std::vector<double>(features.values.begin() + s * d,
                                            features.values.begin() + (s + 1) * d));
        CodecPass pass = codec_apply(*codec, one, real, noise_rng);
        std::copy(pass.reconstructed.values.begin(), pass.reconstructed.values.end(),
                  body_in.values.begin() + s * d);
        psnr_sum += psnr_db_with_peak(one.values, pass.reconstructed.values, peak);
      }
    } else {
      psnr_sum += 100.0 * static_cast<double>(bs);  // lossless transfer, capped PSNR
    }

    SegmentContexts bctx;
    Tensor out = segment_forward(bd, body_in, bctx);
    if (tail) {
      SegmentContexts tctx;
      out = segment_forward(tl, out, tctx);
    }
    size_t classes = out.size() / bs;
    std::vector<size_t> lbl(bs);
    for (size_t i = 0; i < bs; ++i) lbl[i] = b.labels[i].value();
    LossResult lr = softmax_cross_entropy_batch(out, lbl);
    loss_sum += lr.loss * static_cast<double>(bs);
    for (size_t s = 0; s < bs; ++s) {
      size_t arg = 0;
      for (size_t c = 1; c < classes; ++c)
        if (out.values[s * classes + c] > out.values[s * classes + arg]) arg = c;
      if (arg == lbl[s]) ++correct;
    }
  }

  EvalResult res;
  res.task_loss = loss_sum / static_cast<double>(test.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  res.mean_psnr_db = psnr_sum / static_cast<double>(test.size());
  return res;
}

EvalResult evaluate(const Orchestrator& orch, const Dataset& test, size_t round_idx,
                    size_t batch) {
  const RunConfig& cfg = orch.config();
  switch (cfg.regime) {
    case Regime::centralized:
    case Regime::fl:
      return evaluate_full(orch.full_model(), test, batch);
    case Regime::local: {
      EvalResult agg;
      for (const auto& c : orch.clients()) {
        EvalResult one = evaluate_full(c.full, test, batch);
        agg.accuracy += one.accuracy;
        agg.task_loss += one.task_loss;
      }
      double n = static_cast<double>(orch.clients().size());
      agg.accuracy /= n;
      agg.task_loss /= n;
      return agg;
    }
    case Regime::sfl:
      return evaluate_split(orch.head(), orch.body(), nullptr, test, batch, nullptr,
                            cfg.channel_model, cfg.snr_schedule.at(round_idx),
                            cfg.seed);
    case Regime::usfl:
      return evaluate_split(orch.head(), orch.body(), &orch.tail(), test, batch, nullptr,
                            cfg.channel_model, cfg.snr_schedule.at(round_idx), cfg.seed);
    case Regime::scusfl: {
      double snr = cfg.snr_schedule.at(round_idx);
      Ratio cr = select_cr(cfg.nsm, snr);
      const SemanticCodec& codec = orch.codecs().at(cr.str());
      StreamId sid(cfg.seed);
      sid.add("eval-round").add(round_idx);
      return evaluate_split(orch.head(), orch.body(), &orch.tail(), test, batch, &codec,
                            cfg.channel_model, snr, sid.value());
    }
  }
  throw std::logic_error("unreachable regime");
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  DataSplits data = build_datasets(cfg);
  auto codecs = build_codecs(cfg, data.train);
  Orchestrator orch(cfg.run, &data.train, std::move(codecs));

  ExperimentResult res;
  std::vector<double> latencies;
  for (size_t r = 0; r < cfg.run.rounds; ++r) {
    RoundOutcome out = orch.run_round(r);
    EvalResult ev = evaluate(orch, data.test, r, cfg.eval_batch);
    RoundRecord rec;
    rec.round = r;
    rec.regime = regime_name(cfg.run.regime);
    rec.train_loss = out.train_loss;
    rec.test_accuracy = ev.accuracy;
    rec.mean_psnr_db = ev.mean_psnr_db;
    rec.test_loss = ev.task_loss;
    rec.uplink_bytes = out.uplink_bytes;
    rec.downlink_bytes = out.downlink_bytes;
    rec.latency_s = out.latency_s;
    rec.cr_histogram = out.cr_histogram;
    rec.success = out.latency_s <= cfg.run.deadline_s;
    latencies.push_back(out.latency_s);
    res.records.push_back(std::move(rec));
  }
  res.task_success_prob = task_success(latencies, cfg.run.deadline_s);
  return res;
}

void write_records_csv(const std::vector<RoundRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write csv: " + path);
  os << csv_header() << "\n";
  for (const auto& r : records) os << csv_row(r) << "\n";
}

void write_summary_json(const ExperimentResult& res, const ExperimentConfig& cfg,
                        const std::string& path) {
  nlohmann::json j;
  j["regime"] = regime_name(cfg.run.regime);
  j["rounds"] = res.records.size();
  j["seed"] = cfg.run.seed;
  uint64_t up = 0, down = 0;
  double latency_sum = 0.0;
  for (const auto& r : res.records) {
    up += r.uplink_bytes;
    down += r.downlink_bytes;
    latency_sum += r.latency_s;
  }
  j["total_uplink_bytes"] = up;
  j["total_downlink_bytes"] = down;
  j["mean_latency_s"] = res.records.empty() ? 0.0 : latency_sum / res.records.size();
  j["task_success"] = res.task_success_prob;
  j["deadline_s"] = cfg.run.deadline_s;
  if (!res.records.empty()) {
    j["final_test_accuracy"] = res.records.back().test_accuracy;
    j["final_train_loss"] = res.records.back().train_loss;
    j["final_test_loss"] = res.records.back().test_loss;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write summary: " + path);
  os << j.dump(2) << "\n";
}

ExperimentResult run_experiment_to_dir(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ExperimentResult res = run_experiment(cfg);
  write_records_csv(res.records, out_dir + "/records.csv");
  write_summary_json(res, cfg, out_dir + "/summary.json");
  return res;
}

GridResult run_grid(const ExperimentConfig& base, const std::vector<Ratio>& crs,
                    const std::vector<double>& snrs_db,
                    const std::vector<ChannelModel>& channels) {
  DataSplits data = build_datasets(base);
  auto features = collect_warmup_features(base, data.train, base.codec_feature_samples);

  std::map<std::string, SemanticCodec> codecs;
  for (const auto& cr : crs) {
    StreamId sid(base.run.seed);
    sid.add("codec-pretrain").add(cr.str());
    codecs[cr.str()] = pretrain_codec(features, cr, base.run.pretrain, sid.value()).codec;
  }

  RunConfig rcfg = base.run;
  rcfg.regime = Regime::usfl;
  Orchestrator orch(rcfg, &data.train, {});
  for (size_t r = 0; r < rcfg.rounds; ++r) orch.run_round(r);

  GridResult grid;
  for (ChannelModel channel : channels) {
    for (const auto& cr : crs) {
      for (double snr : snrs_db) {
        StreamId sid(base.run.seed);
        sid.add("grid").add(channel_model_name(channel)).add(cr.str()).add(fmt_double(snr));
        EvalResult ev = evaluate_split(orch.head(), orch.body(), &orch.tail(), data.test,
                                       base.eval_batch, &codecs.at(cr.str()), channel, snr,
                                       sid.value());
        GridCell cell;
        cell.channel = channel_model_name(channel);
        cell.cr = cr.str();
        cell.snr_db = snr;
        cell.mean_psnr_db = ev.mean_psnr_db.value_or(0.0);
        cell.mean_task_loss = ev.task_loss;
        grid.cells.push_back(std::move(cell));
      }
    }
  }
  return grid;
}

void write_grid_csv(const GridResult& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write grid csv: " + path);
  os << "channel,cr,snr_db,mean_psnr_db,mean_task_loss\n";
  for (const auto& c : grid.cells) {
    os << c.channel << ',' << c.cr << ',' << fmt_double(c.snr_db) << ','
       << fmt_double(c.mean_psnr_db) << ',' << fmt_double(c.mean_task_loss) << "\n";
  }
}

SweepResult run_latency_sweep(const ExperimentConfig& base, const std::vector<size_t>& counts,
                              const std::vector<Regime>& regimes, size_t rounds_per_cell) {
  DataSplits data = build_datasets(base);

  bool needs_codec = std::any_of(regimes.begin(), regimes.end(),
                                 [](Regime r) { return r == Regime::scusfl; });
  SemanticCodec third_codec;
  if (needs_codec) {
    auto features = collect_warmup_features(base, data.train, base.codec_feature_samples);
    StreamId sid(base.run.seed);
    sid.add("codec-pretrain").add("1/3");
    third_codec = pretrain_codec(features, {1, 3}, base.run.pretrain, sid.value()).codec;
  }

  SweepResult sweep;
  for (Regime regime : regimes) {
    for (size_t count : counts) {
      ExperimentConfig cell = base;
      cell.run.regime = regime;
      cell.run.num_clients = count;
      cell.run.rounds = rounds_per_cell;
      cell.run.shard_mode = ShardMode::fixed_size;
      if (cell.run.samples_per_client == 0) cell.run.samples_per_client = 128;
      cell.run.latency.shared_bandwidth = true;
      std::map<std::string, SemanticCodec> codecs;
      if (regime == Regime::scusfl) {
        cell.run.nsm = NsmPolicy::fixed({1, 3});
        codecs["1/3"] = third_codec;
      }
      Orchestrator orch(cell.run, &data.train, std::move(codecs));
      double latency_sum = 0.0;
      uint64_t up = 0, down = 0;
      for (size_t r = 0; r < rounds_per_cell; ++r) {
        RoundOutcome out = orch.run_round(r);
        latency_sum += out.latency_s;
        if (r == 0) {
          up = out.uplink_bytes;
          down = out.downlink_bytes;
        }
      }
      SweepCell sc;
      sc.regime = regime_name(regime);
      sc.num_clients = count;
      sc.mean_latency_s = latency_sum / static_cast<double>(rounds_per_cell);
      sc.uplink_bytes = up;
      sc.downlink_bytes = down;
      sweep.cells.push_back(std::move(sc));
    }
  }
  return sweep;
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write sweep csv: " + path);
  os << "regime,num_clients,mean_latency_s,uplink_bytes,downlink_bytes\n";
  for (const auto& c : sweep.cells) {
    os << c.regime << ',' << c.num_clients << ',' << fmt_double(c.mean_latency_s) << ','
       << c.uplink_bytes << ',' << c.downlink_bytes << "\n";
  }
}

}  // namespace sflsim
