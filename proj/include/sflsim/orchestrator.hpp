#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sflsim/channel.hpp"
#include "sflsim/codec.hpp"
#include "sflsim/data.hpp"
#include "sflsim/model.hpp"
#include "sflsim/nsm.hpp"

namespace sflsim {

enum class Regime { centralized, local, fl, sfl, usfl, scusfl };

Regime regime_from_name(const std::string& name);
std::string regime_name(Regime r);
bool is_split_regime(Regime r);

/// Stylized latency model: compute terms over FLOP budgets, transmission
/// terms over Shannon rates. bytes_per_symbol covers the float32 wire format.
struct LatencyModel {
  double bandwidth_hz = 1e6;        // per-client uplink/downlink bandwidth
  bool shared_bandwidth = false;    // divide total_bandwidth_hz equally instead
  double total_bandwidth_hz = 8e6;
  double device_flops = 1e9;
  double server_flops = 1e11;
  uint64_t bytes_per_symbol = 4;
};

enum class CodecSource { identity, pretrain, files };

enum class ShardMode { partition, fixed_size };

struct RunConfig {
  Regime regime = Regime::usfl;
  size_t num_clients = 2;
  size_t rounds = 200;
  size_t local_epochs = 3;
  size_t batch_size = 64;
  double lr = 1e-4;
  uint64_t seed = 1;

  ArchConfig arch;
  std::optional<SplitSpec> split;   // defaults to the preset's cuts

  ChannelModel channel_model = ChannelModel::awgn;
  SnrSchedule snr_schedule = SnrSchedule::constant(10.0);

  NsmPolicy nsm = NsmPolicy::default_policy();
  LatencyModel latency;
  double deadline_s = std::numeric_limits<double>::infinity();

  bool parallel_clients = false;

  CodecSource codec_source = CodecSource::pretrain;
  std::string codec_dir;            // for CodecSource::files
  PretrainOptions pretrain;

  ShardMode shard_mode = ShardMode::partition;
  size_t samples_per_client = 0;    // for ShardMode::fixed_size
  double dirichlet_alpha = 0.0;     // > 0 switches the partition to Dirichlet non-IID
};

/// Sample-count weighted elementwise mean. With one client this is an exact
/// identity (the single weight is exactly 1.0).
std::vector<double> fedavg(const std::vector<std::vector<double>>& weight_sets,
                           const std::vector<double>& sample_counts);

struct ClientState {
  size_t id = 0;
  ModelSegment head, tail;   // split regimes
  ModelSegment full;         // centralized/local/fl
  std::vector<size_t> shard;
};

struct ServerState {
  std::vector<ModelSegment> body_replicas;  // usfl/scusfl: body; sfl: body+tail merged
  std::map<std::string, SemanticCodec> codecs;
};

/// Raw per-round outcome before test-set evaluation. The uplink column counts
/// the forward feature/weight payload (the path the SCM compresses); the
/// gradient exchange and other error-free return transfers are grouped under
/// downlink so the uplink ratio between SC-USFL and USFL is exactly the CR.
struct RoundOutcome {
  double train_loss = 0.0;
  uint64_t uplink_bytes = 0;
  uint64_t downlink_bytes = 0;
  double latency_s = 0.0;
  std::map<std::string, size_t> cr_histogram;  // one entry per uplink transmission
};

double task_success(const std::vector<double>& round_latencies, double deadline_s);

/// Owns the clients, the server state and the channel trace for one run,
/// and executes communication rounds for the configured regime.
class Orchestrator {
 public:
  Orchestrator(RunConfig cfg, const Dataset* train, std::map<std::string, SemanticCodec> codecs);

  RoundOutcome run_round(size_t round_idx);

  const RunConfig& config() const { return cfg_; }
  const ChannelTrace& trace() const { return trace_; }
  size_t feature_dim() const { return feature_dim_; }

  // aggregated segments for evaluation (valid after any round, post-aggregation)
  const ModelSegment& head() const;
  const ModelSegment& body() const;
  const ModelSegment& tail() const;
  const ModelSegment& full_model() const;
  const std::vector<ClientState>& clients() const { return clients_; }
  const std::map<std::string, SemanticCodec>& codecs() const { return server_.codecs; }

  uint64_t codec_param_hash() const;

 private:
  struct ClientRoundStats {
    double loss_sum = 0.0;
    size_t batch_count = 0;
    uint64_t uplink_bytes = 0;
    uint64_t downlink_bytes = 0;
    uint64_t sample_passes = 0;
    std::map<std::string, size_t> cr_histogram;
  };

  ClientRoundStats train_client_round(size_t client, size_t round_idx);
  ClientRoundStats train_full_round(size_t client, size_t round_idx);
  ClientRoundStats train_u_split_round(size_t client, size_t round_idx, bool with_codec);
  ClientRoundStats train_sfl_round(size_t client, size_t round_idx);
  void aggregate();
  double client_latency(size_t client, size_t round_idx, const ClientRoundStats& st) const;
  double client_bandwidth_hz() const;

  RunConfig cfg_;
  const Dataset* train_;
  std::vector<ClientState> clients_;
  ServerState server_;
  ChannelTrace trace_;
  size_t feature_dim_ = 0;
  size_t cut_dim_ = 0;          // width of the uplink features (= feature_dim_)
  size_t body_out_dim_ = 0;     // width of the downlink features (usfl/scusfl)
  uint64_t head_flops_ = 0, body_flops_ = 0, tail_flops_ = 0, full_flops_ = 0;
  uint64_t server_seg_flops_ = 0;  // sfl merged segment
};

}  // namespace sflsim
