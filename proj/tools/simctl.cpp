// simctl: batch experiment driver for the split-federated-learning simulator.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sflsim/config.hpp"
#include "sflsim/metrics.hpp"

namespace fs = std::filesystem;
using namespace sflsim;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir = "out";
  std::string data_dir;
  int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--preset", args.preset,
                  "built-in preset (fig4a, fig4b, fig5-awgn, fig5-rayleigh, smoke)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--data-dir", args.data_dir, "CIFAR-10 binary directory (or $SIMCTL_DATA_DIR)");
  cmd->add_option("--seed", args.seed, "override the config seed");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = load_experiment_config(args.config_path);
  } else if (!args.preset.empty()) {
    cfg = parse_experiment_config(preset_config(args.preset));
  } else {
    throw std::invalid_argument("need --config or --preset");
  }
  if (args.seed >= 0) cfg.run.seed = static_cast<uint64_t>(args.seed);
  std::string dir = args.data_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("SIMCTL_DATA_DIR")) dir = env;
  }
  if (!dir.empty()) cfg.data.data_dir = dir;
  return cfg;
}

void dump_config(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream os(out_dir + "/config.json");
  os << experiment_config_to_json(cfg) << "\n";
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<std::string> parse_strings(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"split federated learning simulator"};
  app.require_subcommand(1);

  CommonArgs run_args, grid_args, sweep_args, pre_args;

  auto* run_cmd = app.add_subcommand("run", "run one experiment (CSV of per-round records)");
  add_common(run_cmd, run_args);
  std::string run_regimes;
  run_cmd->add_option("--regimes", run_regimes,
                      "comma list of regimes to run back to back (one CSV each)");

  auto* grid_cmd = app.add_subcommand("grid", "CR x SNR x channel evaluation grid");
  add_common(grid_cmd, grid_args);
  std::string grid_crs = "1/3,1/6,1/8,1/12";
  std::string grid_snrs = "0,5,10,15,20";
  std::string grid_channels;
  grid_cmd->add_option("--crs", grid_crs, "compression ratios");
  grid_cmd->add_option("--snrs", grid_snrs, "evaluation SNRs in dB");
  grid_cmd->add_option("--channels", grid_channels, "channel models (default: config channel)");

  auto* sweep_cmd = app.add_subcommand("sweep", "per-round latency vs client count");
  add_common(sweep_cmd, sweep_args);
  std::string sweep_clients = "1,2,4,8";
  std::string sweep_regimes = "fl,sfl,usfl,scusfl";
  size_t sweep_rounds = 2;
  sweep_cmd->add_option("--clients", sweep_clients, "client counts");
  sweep_cmd->add_option("--regimes", sweep_regimes, "regimes to sweep");
  sweep_cmd->add_option("--rounds-per-cell", sweep_rounds, "rounds averaged per cell");

  auto* pre_cmd = app.add_subcommand("pretrain", "pretrain codec checkpoints");
  add_common(pre_cmd, pre_args);
  std::string pre_cr = "all";
  double pre_snr = 10.0;
  int64_t pre_epochs = -1;
  pre_cmd->add_option("--cr", pre_cr, "ratio to pretrain (e.g. 1/3) or 'all'");
  pre_cmd->add_option("--snr", pre_snr, "training SNR in dB");
  pre_cmd->add_option("--epochs", pre_epochs, "override pretraining epochs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      ExperimentConfig cfg = resolve_config(run_args);
      std::vector<std::string> regimes;
      if (!run_regimes.empty()) {
        regimes = parse_strings(run_regimes);
      } else if (run_args.preset == "fig4a") {
        regimes = {"centralized", "local", "fl", "sfl", "usfl", "scusfl"};
      }
      dump_config(cfg, run_args.out_dir);
      if (regimes.empty()) {
        ExperimentResult res = run_experiment_to_dir(cfg, run_args.out_dir);
        std::cout << "wrote " << res.records.size() << " rounds to " << run_args.out_dir
                  << "/records.csv (task success " << res.task_success_prob << ")\n";
      } else {
        for (const auto& name : regimes) {
          ExperimentConfig one = cfg;
          one.run.regime = regime_from_name(name);
          std::string dir = run_args.out_dir + "/" + name;
          ExperimentResult res = run_experiment_to_dir(one, dir);
          std::cout << name << ": final accuracy "
                    << (res.records.empty() ? 0.0 : res.records.back().test_accuracy) << " -> "
                    << dir << "/records.csv\n";
        }
      }
    } else if (*grid_cmd) {
      ExperimentConfig cfg = resolve_config(grid_args);
      std::vector<Ratio> crs;
      for (const auto& s : parse_strings(grid_crs)) crs.push_back(ratio_from_string(s));
      std::vector<double> snrs = parse_doubles(grid_snrs);
      std::vector<ChannelModel> channels;
      if (grid_channels.empty()) {
        channels = {cfg.run.channel_model};
      } else {
        for (const auto& s : parse_strings(grid_channels))
          channels.push_back(channel_model_from_name(s));
      }
      dump_config(cfg, grid_args.out_dir);
      GridResult grid = run_grid(cfg, crs, snrs, channels);
      fs::create_directories(grid_args.out_dir);
      write_grid_csv(grid, grid_args.out_dir + "/grid.csv");
      std::cout << "wrote " << grid.cells.size() << " grid cells to " << grid_args.out_dir
                << "/grid.csv\n";
    } else if (*sweep_cmd) {
      ExperimentConfig cfg = resolve_config(sweep_args);
      std::vector<size_t> counts;
      for (double v : parse_doubles(sweep_clients)) counts.push_back(static_cast<size_t>(v));
      std::vector<Regime> regimes;
      for (const auto& s : parse_strings(sweep_regimes)) regimes.push_back(regime_from_name(s));
      dump_config(cfg, sweep_args.out_dir);
      SweepResult sweep = run_latency_sweep(cfg, counts, regimes, sweep_rounds);
      fs::create_directories(sweep_args.out_dir);
      write_sweep_csv(sweep, sweep_args.out_dir + "/sweep.csv");
      std::cout << "wrote " << sweep.cells.size() << " sweep cells to " << sweep_args.out_dir
                << "/sweep.csv\n";
    } else if (*pre_cmd) {
      ExperimentConfig cfg = resolve_config(pre_args);
      cfg.run.pretrain.train_snr_db = pre_snr;
      if (pre_epochs > 0) cfg.run.pretrain.epochs = static_cast<size_t>(pre_epochs);
      DataSplits data = build_datasets(cfg);
      auto features = collect_warmup_features(cfg, data.train, cfg.codec_feature_samples);
      std::vector<Ratio> crs;
      if (pre_cr == "all") {
        crs = {{1, 3}, {1, 6}, {1, 8}, {1, 12}};
      } else {
        crs.push_back(ratio_from_string(pre_cr));
      }
      fs::create_directories(pre_args.out_dir);
      for (const auto& cr : crs) {
        StreamId sid(cfg.run.seed);
        sid.add("codec-pretrain").add(cr.str());
        PretrainResult pr = pretrain_codec(features, cr, cfg.run.pretrain, sid.value());
        std::string path = pre_args.out_dir + "/codec_" + std::to_string(cr.num) + "_" +
                           std::to_string(cr.den) + ".scm";
        save_codec(pr.codec, path);
        std::cout << "cr " << cr.str() << ": loss " << pr.epoch_loss.front() << " -> "
                  << pr.epoch_loss.back() << ", saved " << path << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
