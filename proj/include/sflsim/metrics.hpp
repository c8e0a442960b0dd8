#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sflsim/orchestrator.hpp"

namespace sflsim {

/// One CSV row. Column order is the field order here and is frozen per
/// artifact version (golden-header test).
struct RoundRecord {
  size_t round = 0;
  std::string regime;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> mean_psnr_db;  // split regimes only
  double test_loss = 0.0;
  uint64_t uplink_bytes = 0;
  uint64_t downlink_bytes = 0;
  double latency_s = 0.0;
  std::map<std::string, size_t> cr_histogram;
  bool success = false;
};

std::string csv_header();
std::string csv_row(const RoundRecord& r);

// ---- data / experiment configuration ----

struct DataConfig {
  enum class Source { cifar10, synth, synth_image };
  Source source = Source::synth;
  std::string data_dir;          // cifar10: directory with data_batch_*.bin, test_batch.bin
  size_t max_train = 2000;
  size_t max_test = 1000;
  size_t num_classes = 10;       // synthetic sources
  size_t input_dim = 48;         // synth vectors
  double separation = 6.0;
  double image_noise_sigma = 0.12;
  size_t train_n = 512;
  size_t test_n = 256;
};

struct ExperimentConfig {
  RunConfig run;
  DataConfig data;
  size_t eval_batch = 64;
  size_t codec_feature_samples = 1024;  // features collected for codec pretraining
};

struct DataSplits {
  Dataset train, test;  // normalized with the training-split statistics
};

DataSplits build_datasets(const ExperimentConfig& cfg);

/// Head features over (up to) n training samples after a one-epoch
/// centralized warm-up; the codec pretraining distribution.
std::vector<std::vector<double>> collect_warmup_features(const ExperimentConfig& cfg,
                                                         const Dataset& train, size_t n);

/// Builds the codec set the run needs (identity, fresh pretraining, or
/// checkpoint files), keyed by CR string.
std::map<std::string, SemanticCodec> build_codecs(const ExperimentConfig& cfg,
                                                  const Dataset& train);

struct EvalResult {
  double accuracy = 0.0;
  double task_loss = 0.0;
  std::optional<double> mean_psnr_db;
};

EvalResult evaluate_full(const ModelSegment& model, const Dataset& test, size_t batch);

/// Split-path evaluation. With a codec, features go through encode ->
/// channel at `snr_db` -> decode per sample (fresh fading per sample for
/// rayleigh), and the PSNR of the reconstructions is averaged.
EvalResult evaluate_split(const ModelSegment& head, const ModelSegment& body,
                          const ModelSegment* tail, const Dataset& test, size_t batch,
                          const SemanticCodec* codec, ChannelModel channel, double snr_db,
                          uint64_t eval_seed);

/// Evaluates the orchestrator's aggregated model for one round, honoring the
/// regime's transmission semantics.
EvalResult evaluate(const Orchestrator& orch, const Dataset& test, size_t round_idx,
                    size_t batch);

struct ExperimentResult {
  std::vector<RoundRecord> records;
  double task_success_prob = 0.0;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

void write_records_csv(const std::vector<RoundRecord>& records, const std::string& path);
void write_summary_json(const ExperimentResult& res, const ExperimentConfig& cfg,
                        const std::string& path);

/// Runs, then writes records.csv and summary.json under out_dir.
ExperimentResult run_experiment_to_dir(const ExperimentConfig& cfg, const std::string& out_dir);

// ---- figure protocols ----

struct GridCell {
  std::string channel;
  std::string cr;
  double snr_db = 0.0;
  double mean_psnr_db = 0.0;
  double mean_task_loss = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;  // full cross product channels x crs x snrs
};

/// Fig. 5 protocol: pretrain one codec per CR, train the model once (USFL),
/// then evaluate every (channel, cr, snr) cell on the test set.
GridResult run_grid(const ExperimentConfig& base, const std::vector<Ratio>& crs,
                    const std::vector<double>& snrs_db, const std::vector<ChannelModel>& channels);

void write_grid_csv(const GridResult& grid, const std::string& path);

struct SweepCell {
  std::string regime;
  size_t num_clients = 0;
  double mean_latency_s = 0.0;
  uint64_t uplink_bytes = 0;    // per round, summed over clients
  uint64_t downlink_bytes = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
};

/// Fig. 4(b) protocol: per-round latency for each regime x client count with
/// fixed per-client data volume.
SweepResult run_latency_sweep(const ExperimentConfig& base, const std::vector<size_t>& counts,
                              const std::vector<Regime>& regimes, size_t rounds_per_cell);

void write_sweep_csv(const SweepResult& sweep, const std::string& path);

}  // namespace sflsim
