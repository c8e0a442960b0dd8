#include "sflsim/orchestrator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace sflsim {

Regime regime_from_name(const std::string& name) {
  if (name == "centralized") return Regime::centralized;
  if (name == "local") return Regime::local;
  if (name == "fl") return Regime::fl;
  if (name == "sfl") return Regime::sfl;
  if (name == "usfl") return Regime::usfl;
  if (name == "scusfl") return Regime::scusfl;
  throw std::invalid_argument("unknown regime: " + name);
}

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::centralized: return "centralized";
    case Regime::local: return "local";
    case Regime::fl: return "fl";
    case Regime::sfl: return "sfl";
    case Regime::usfl: return "usfl";
    case Regime::scusfl: return "scusfl";
  }
  return "?";
}

bool is_split_regime(Regime r) {
  return r == Regime::sfl || r == Regime::usfl || r == Regime::scusfl;
}

std::vector<double> fedavg(const std::vector<std::vector<double>>& weight_sets,
                           const std::vector<double>& sample_counts) {
  if (weight_sets.empty() || weight_sets.size() != sample_counts.size()) {
    throw std::invalid_argument("fedavg: need one positive count per weight set");
  }
  size_t n = weight_sets.front().size();
  double total = 0.0;
  for (double c : sample_counts) {
    if (c <= 0.0) throw std::invalid_argument("fedavg: sample counts must be positive");
    total += c;
  }
  std::vector<double> out(n, 0.0);
  for (size_t s = 0; s < weight_sets.size(); ++s) {
    if (weight_sets[s].size() != n) {
      throw std::invalid_argument("fedavg: weight set size mismatch");
    }
    double w = sample_counts[s] / total;
    const auto& ws = weight_sets[s];
    for (size_t i = 0; i < n; ++i) out[i] += ws[i] * w;
  }
  return out;
}

double task_success(const std::vector<double>& round_latencies, double deadline_s) {
  if (round_latencies.empty()) return 0.0;
  size_t ok = 0;
  for (double t : round_latencies)
    if (t <= deadline_s) ++ok;
  return static_cast<double>(ok) / static_cast<double>(round_latencies.size());
}

namespace {
// forward + backward compute, as a multiple of forward FLOPs
constexpr double kTrainFlopsMultiplier = 3.0;

Rng shuffle_rng(uint64_t seed, size_t client, size_t round, size_t epoch) {
  StreamId id(seed);
  id.add("shuffle").add(client).add(round).add(epoch);
  return id.rng();
}
}  // namespace

Orchestrator::Orchestrator(RunConfig cfg, const Dataset* train,
                           std::map<std::string, SemanticCodec> codecs)
    : cfg_(std::move(cfg)), train_(train) {
  if (cfg_.regime == Regime::centralized) cfg_.num_clients = 1;
  if (cfg_.num_clients == 0) throw std::invalid_argument("run config: num_clients must be >= 1");
  if (cfg_.rounds == 0) throw std::invalid_argument("run config: rounds must be >= 1");
  cfg_.nsm.validate();

  ModelBuild mb = build_model(cfg_.arch, cfg_.seed);
  SplitSpec spec = cfg_.split.value_or(mb.default_spec);
  feature_dim_ = mb.feature_dim;

  // shards
  Shard shards;
  if (cfg_.shard_mode == ShardMode::fixed_size) {
    size_t per = cfg_.samples_per_client ? cfg_.samples_per_client : train_->size();
    shards = shard_fixed_size(train_->size(), cfg_.num_clients, per, cfg_.seed);
  } else if (cfg_.dirichlet_alpha > 0.0) {
    shards = shard_dirichlet(train_->labels, train_->num_classes, cfg_.num_clients,
                             cfg_.dirichlet_alpha, cfg_.seed);
  } else {
    shards = shard_iid(train_->size(), cfg_.num_clients, cfg_.seed);
  }

  clients_.resize(cfg_.num_clients);
  const auto& sample_shape = train_->sample_shape;

  switch (cfg_.regime) {
    case Regime::centralized:
    case Regime::local:
    case Regime::fl: {
      ModelSegment full = full_segment(mb.layers, cfg_.lr);
      full_flops_ = flop_count(full, sample_shape);
      for (size_t c = 0; c < cfg_.num_clients; ++c) {
        clients_[c].id = c;
        clients_[c].full = full;  // identical init everywhere
        clients_[c].shard = shards[c];
      }
      break;
    }
    case Regime::usfl:
    case Regime::scusfl: {
      Partition p = partition(mb.layers, spec, cfg_.lr);
      auto feat_shape = segment_output_shape(p.head, sample_shape);
      if (feat_shape.size() != 1) {
        throw std::invalid_argument("split regimes need a rank-1 feature at cut1; head emits " +
                                    shape_str(feat_shape));
      }
      cut_dim_ = feat_shape[0];
      if (cut_dim_ != feature_dim_) feature_dim_ = cut_dim_;
      body_out_dim_ = segment_output_shape(p.body, feat_shape)[0];
      head_flops_ = flop_count(p.head, sample_shape);
      body_flops_ = flop_count(p.body, feat_shape);
      tail_flops_ = flop_count(p.tail, {body_out_dim_});
      for (size_t c = 0; c < cfg_.num_clients; ++c) {
        clients_[c].id = c;
        clients_[c].head = p.head;
        clients_[c].tail = p.tail;
        clients_[c].shard = shards[c];
        server_.body_replicas.push_back(p.body);
      }
      break;
    }
    case Regime::sfl: {
      // two-segment split: client head, server body+classifier
      SplitSpec two = SplitSpec::cuts(spec.cut1, spec.cut1, mb.layers.size(), true);
      Partition p = partition(mb.layers, two, cfg_.lr);
      // body is empty; the tail slice holds everything past cut1
      auto feat_shape = segment_output_shape(p.head, sample_shape);
      if (feat_shape.size() != 1) {
        throw std::invalid_argument("sfl needs a rank-1 feature at cut1; head emits " +
                                    shape_str(feat_shape));
      }
      cut_dim_ = feat_shape[0];
      head_flops_ = flop_count(p.head, sample_shape);
      ModelSegment server_seg = p.tail;
      server_seg.role = SegmentRole::body;
      server_seg_flops_ = flop_count(server_seg, feat_shape);
      for (size_t c = 0; c < cfg_.num_clients; ++c) {
        clients_[c].id = c;
        clients_[c].head = p.head;
        clients_[c].shard = shards[c];
        server_.body_replicas.push_back(server_seg);
      }
      break;
    }
  }

  if (cfg_.regime == Regime::scusfl) {
    if (codecs.empty()) {
      throw std::invalid_argument("scusfl requires a codec set (identity, pretrained or files)");
    }
    for (auto& [name, codec] : codecs) {
      if (!codec.frozen) throw std::invalid_argument("codec " + name + " is not frozen");
      if (codec.d != cut_dim_) {
        throw std::invalid_argument("codec " + name + " built for d=" + std::to_string(codec.d) +
                                    " but features have d=" + std::to_string(cut_dim_));
      }
    }
    // every CR the policy can select must be available
    std::vector<Ratio> needed;
    for (const auto& e : cfg_.nsm.table) needed.push_back(e.cr);
    needed.push_back(cfg_.nsm.fallback);
    for (const auto& cr : needed) {
      if (!codecs.count(cr.str())) {
        throw std::invalid_argument("nsm policy selects cr " + cr.str() +
                                    " but no codec with that ratio was provided");
      }
    }
  }
  server_.codecs = std::move(codecs);

  trace_ = ChannelTrace(cfg_.channel_model, cfg_.snr_schedule, cfg_.num_clients, cfg_.rounds,
                        cfg_.seed);
}

const ModelSegment& Orchestrator::head() const { return clients_.front().head; }
const ModelSegment& Orchestrator::body() const { return server_.body_replicas.front(); }
const ModelSegment& Orchestrator::tail() const { return clients_.front().tail; }
const ModelSegment& Orchestrator::full_model() const { return clients_.front().full; }

uint64_t Orchestrator::codec_param_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, codec] : server_.codecs) {
    h = fnv1a_str(name, h);
    h = fnv1a_u64(codec.parameter_hash(), h);
  }
  return h;
}

double Orchestrator::client_bandwidth_hz() const {
  if (cfg_.latency.shared_bandwidth) {
    return cfg_.latency.total_bandwidth_hz / static_cast<double>(cfg_.num_clients);
  }
  return cfg_.latency.bandwidth_hz;
}

Orchestrator::ClientRoundStats Orchestrator::train_full_round(size_t client, size_t round_idx) {
  ClientRoundStats st;
  auto& cs = clients_[client];
  size_t dim_batch = cfg_.batch_size;
  for (size_t epoch = 0; epoch < cfg_.local_epochs; ++epoch) {
    Rng srng = shuffle_rng(cfg_.seed, client, round_idx, epoch);
    std::vector<size_t> order = cs.shard;
    srng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += dim_batch) {
      size_t bs = std::min(dim_batch, order.size() - start);
      Batch b = make_batch(*train_, order, start, bs);
      SegmentContexts ctx;
      Tensor logits = segment_forward(cs.full, b.inputs, ctx);
      std::vector<size_t> lbl(bs);
      for (size_t i = 0; i < bs; ++i) lbl[i] = b.labels[i].value();
      LossResult lr = softmax_cross_entropy_batch(logits, lbl);
      segment_backward(cs.full, ctx, lr.logit_grad);
      cs.full.apply_adam();
      st.loss_sum += lr.loss;
      st.batch_count += 1;
      st.sample_passes += bs;
    }
  }
  return st;
}

Orchestrator::ClientRoundStats Orchestrator::train_u_split_round(size_t client, size_t round_idx,
                                                                 bool with_codec) {
  ClientRoundStats st;
  auto& cs = clients_[client];
  auto& body = server_.body_replicas[client];
  const uint64_t bps = cfg_.latency.bytes_per_symbol;
  const ChannelRealization& real = trace_.at(client, round_idx, 0);

  StreamId nid(cfg_.seed);
  nid.add("chan-noise").add(client).add(round_idx);
  Rng noise_rng = nid.rng();

  const SemanticCodec* codec = nullptr;
  Ratio cr{1, 1};
  if (with_codec) {
    double snr_obs = observe(trace_, client, round_idx);
    cr = select_cr(cfg_.nsm, snr_obs);
    codec = &server_.codecs.at(cr.str());
  }

  for (size_t epoch = 0; epoch < cfg_.local_epochs; ++epoch) {
    Rng srng = shuffle_rng(cfg_.seed, client, round_idx, epoch);
    std::vector<size_t> order = cs.shard;
    srng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      size_t bs = std::min(cfg_.batch_size, order.size() - start);
      Batch b = make_batch(*train_, order, start, bs);

      SegmentContexts hctx;
      Tensor features = segment_forward(cs.head, b.inputs, hctx);

      Tensor body_in;
      CodecPass pass;
      if (with_codec) {
        pass = codec_apply(*codec, features, real, noise_rng);
        body_in = pass.reconstructed;
        st.uplink_bytes += bs * codec->k * bps;
        st.cr_histogram[cr.str()] += 1;
      } else {
        body_in = features;
        st.uplink_bytes += bs * cut_dim_ * bps;
      }

      Tensor body_out;
      SegmentContexts bctx;
      {
        ServerScope server;
        body_out = segment_forward(body, body_in, bctx);
      }
      st.downlink_bytes += bs * body_out_dim_ * bps;  // features to the tail

      SegmentContexts tctx;
      Tensor logits = segment_forward(cs.tail, body_out, tctx);
      std::vector<size_t> lbl(bs);
      for (size_t i = 0; i < bs; ++i) lbl[i] = b.labels[i].value();  // private labels, client side
      LossResult lr = softmax_cross_entropy_batch(logits, lbl);

      Tensor grad_tail_in = segment_backward(cs.tail, tctx, lr.logit_grad);
      st.downlink_bytes += bs * body_out_dim_ * bps;  // gradient return to the body

      Tensor grad_body_in;
      {
        ServerScope server;
        grad_body_in = segment_backward(body, bctx, grad_tail_in);
      }
      st.downlink_bytes += bs * cut_dim_ * bps;  // gradient down to the head

      Tensor grad_features =
          with_codec ? codec_backward(*codec, pass, grad_body_in) : std::move(grad_body_in);
      segment_backward(cs.head, hctx, grad_features);

      cs.head.apply_adam();
      cs.tail.apply_adam();
      body.apply_adam();

      st.loss_sum += lr.loss;
      st.batch_count += 1;
      st.sample_passes += bs;
    }
  }
  return st;
}

Orchestrator::ClientRoundStats Orchestrator::train_sfl_round(size_t client, size_t round_idx) {
  ClientRoundStats st;
  auto& cs = clients_[client];
  auto& server_seg = server_.body_replicas[client];
  const uint64_t bps = cfg_.latency.bytes_per_symbol;

  for (size_t epoch = 0; epoch < cfg_.local_epochs; ++epoch) {
    Rng srng = shuffle_rng(cfg_.seed, client, round_idx, epoch);
    std::vector<size_t> order = cs.shard;
    srng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      size_t bs = std::min(cfg_.batch_size, order.size() - start);
      Batch b = make_batch(*train_, order, start, bs);

      SegmentContexts hctx;
      Tensor features = segment_forward(cs.head, b.inputs, hctx);

      // labels are uploaded with the features in this configuration
      std::vector<size_t> lbl(bs);
      for (size_t i = 0; i < bs; ++i) lbl[i] = b.labels[i].disclose();
      st.uplink_bytes += bs * cut_dim_ * bps + bs * 4;  // features + 4-byte labels

      Tensor grad_cut;
      double loss = 0.0;
      {
        ServerScope server;
        SegmentContexts sctx;
        Tensor logits = segment_forward(server_seg, features, sctx);
        LossResult lr = softmax_cross_entropy_batch(logits, lbl);
        loss = lr.loss;
        grad_cut = segment_backward(server_seg, sctx, lr.logit_grad);
      }
      st.downlink_bytes += bs * cut_dim_ * bps;  // gradient at the cut

      segment_backward(cs.head, hctx, grad_cut);
      cs.head.apply_adam();
      server_seg.apply_adam();

      st.loss_sum += loss;
      st.batch_count += 1;
      st.sample_passes += bs;
    }
  }
  return st;
}

Orchestrator::ClientRoundStats Orchestrator::train_client_round(size_t client, size_t round_idx) {
  switch (cfg_.regime) {
    case Regime::centralized:
    case Regime::local:
    case Regime::fl:
      return train_full_round(client, round_idx);
    case Regime::usfl:
      return train_u_split_round(client, round_idx, false);
    case Regime::scusfl:
      return train_u_split_round(client, round_idx, true);
    case Regime::sfl:
      return train_sfl_round(client, round_idx);
  }
  throw std::logic_error("unreachable regime");
}

void Orchestrator::aggregate() {
  if (cfg_.regime == Regime::local || clients_.size() == 0) return;

  std::vector<double> counts;
  counts.reserve(clients_.size());
  for (const auto& c : clients_) counts.push_back(static_cast<double>(c.shard.size()));

  auto avg_segments = [&](auto get_segment) {
    std::vector<std::vector<double>> sets;
    sets.reserve(clients_.size());
    for (size_t c = 0; c < clients_.size(); ++c) sets.push_back(flat_params(*get_segment(c)));
    std::vector<double> avg = fedavg(sets, counts);
    for (size_t c = 0; c < clients_.size(); ++c) set_flat_params(*get_segment(c), avg);
  };

  switch (cfg_.regime) {
    case Regime::centralized:
    case Regime::fl:
      avg_segments([&](size_t c) { return &clients_[c].full; });
      break;
    case Regime::usfl:
    case Regime::scusfl:
      avg_segments([&](size_t c) { return &clients_[c].head; });
      avg_segments([&](size_t c) { return &clients_[c].tail; });
      avg_segments([&](size_t c) { return &server_.body_replicas[c]; });
      break;
    case Regime::sfl:
      avg_segments([&](size_t c) { return &clients_[c].head; });
      avg_segments([&](size_t c) { return &server_.body_replicas[c]; });
      break;
    case Regime::local:
      break;
  }
}

double Orchestrator::client_latency(size_t client, size_t round_idx,
                                    const ClientRoundStats& st) const {
  const double bw = client_bandwidth_hz();
  double up_rate = shannon_rate(bw, trace_.at(client, round_idx, 0).effective_snr_db());
  double down_rate = shannon_rate(bw, trace_.at(client, round_idx, 1).effective_snr_db());

  double passes = static_cast<double>(st.sample_passes);
  double device_flops = 0.0, server_flops = 0.0;
  switch (cfg_.regime) {
    case Regime::centralized:
    case Regime::local:
    case Regime::fl:
      device_flops = static_cast<double>(full_flops_) * passes * kTrainFlopsMultiplier;
      break;
    case Regime::usfl:
    case Regime::scusfl:
      device_flops =
          static_cast<double>(head_flops_ + tail_flops_) * passes * kTrainFlopsMultiplier;
      server_flops = static_cast<double>(body_flops_) * passes * kTrainFlopsMultiplier;
      break;
    case Regime::sfl:
      device_flops = static_cast<double>(head_flops_) * passes * kTrainFlopsMultiplier;
      server_flops = static_cast<double>(server_seg_flops_) * passes * kTrainFlopsMultiplier;
      break;
  }

  double t = device_flops / cfg_.latency.device_flops + server_flops / cfg_.latency.server_flops;
  double up_bits = static_cast<double>(st.uplink_bytes) * 8.0;
  double down_bits = static_cast<double>(st.downlink_bytes) * 8.0;
  if (up_bits > 0.0) {
    if (up_rate <= 0.0) return std::numeric_limits<double>::infinity();
    t += up_bits / up_rate;
  }
  if (down_bits > 0.0) {
    if (down_rate <= 0.0) return std::numeric_limits<double>::infinity();
    t += down_bits / down_rate;
  }
  return t;
}

RoundOutcome Orchestrator::run_round(size_t round_idx) {
  if (round_idx >= cfg_.rounds) {
    throw std::out_of_range("run_round: round " + std::to_string(round_idx) +
                            " outside configured " + std::to_string(cfg_.rounds));
  }

  std::vector<ClientRoundStats> stats(clients_.size());
  if (cfg_.parallel_clients && clients_.size() > 1) {
    std::vector<std::thread> workers;
    workers.reserve(clients_.size());
    std::vector<std::exception_ptr> errors(clients_.size());
    for (size_t c = 0; c < clients_.size(); ++c) {
      workers.emplace_back([&, c] {
        try {
          stats[c] = train_client_round(c, round_idx);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (size_t c = 0; c < clients_.size(); ++c) stats[c] = train_client_round(c, round_idx);
  }

  // fl exchanges full weight sets once per round
  if (cfg_.regime == Regime::fl) {
    uint64_t wire = clients_.front().full.param_count() * cfg_.latency.bytes_per_symbol;
    for (auto& st : stats) {
      st.uplink_bytes += wire;
      st.downlink_bytes += wire;
    }
  }

  aggregate();

  RoundOutcome out;
  double loss_sum = 0.0;
  size_t batch_count = 0;
  double max_latency = 0.0;
  for (size_t c = 0; c < clients_.size(); ++c) {
    const auto& st = stats[c];
    loss_sum += st.loss_sum;
    batch_count += st.batch_count;
    out.uplink_bytes += st.uplink_bytes;
    out.downlink_bytes += st.downlink_bytes;
    for (const auto& [k, v] : st.cr_histogram) out.cr_histogram[k] += v;
    max_latency = std::max(max_latency, client_latency(c, round_idx, st));
  }
  out.train_loss = batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0;
  out.latency_s = max_latency;
  return out;
}

}  // namespace sflsim
