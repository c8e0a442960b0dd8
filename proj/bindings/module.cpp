#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sflsim/config.hpp"
#include "sflsim/metrics.hpp"

namespace py = pybind11;
using namespace sflsim;

namespace {

py::dict run_from_json(const std::string& config_json, const std::string& out_dir) {
  ExperimentConfig cfg = parse_experiment_config(config_json);
  ExperimentResult res = run_experiment_to_dir(cfg, out_dir);
  py::dict d;
  d["rounds"] = res.records.size();
  d["task_success"] = res.task_success_prob;
  if (!res.records.empty()) {
    d["final_test_accuracy"] = res.records.back().test_accuracy;
    d["final_train_loss"] = res.records.back().train_loss;
    d["final_test_loss"] = res.records.back().test_loss;
  }
  d["records_csv"] = out_dir + "/records.csv";
  d["summary_json"] = out_dir + "/summary.json";
  return d;
}

py::list grid_from_json(const std::string& config_json, const std::vector<std::string>& crs,
                        const std::vector<double>& snrs_db,
                        const std::vector<std::string>& channels) {
  ExperimentConfig cfg = parse_experiment_config(config_json);
  std::vector<Ratio> ratios;
  for (const auto& s : crs) ratios.push_back(ratio_from_string(s));
  std::vector<ChannelModel> models;
  for (const auto& s : channels) models.push_back(channel_model_from_name(s));
  GridResult grid = run_grid(cfg, ratios, snrs_db, models);
  py::list out;
  for (const auto& c : grid.cells) {
    py::dict d;
    d["channel"] = c.channel;
    d["cr"] = c.cr;
    d["snr_db"] = c.snr_db;
    d["mean_psnr_db"] = c.mean_psnr_db;
    d["mean_task_loss"] = c.mean_task_loss;
    out.append(d);
  }
  return out;
}

py::list sweep_from_json(const std::string& config_json, const std::vector<size_t>& counts,
                         const std::vector<std::string>& regimes, size_t rounds_per_cell) {
  ExperimentConfig cfg = parse_experiment_config(config_json);
  std::vector<Regime> rs;
  for (const auto& s : regimes) rs.push_back(regime_from_name(s));
  SweepResult sweep = run_latency_sweep(cfg, counts, rs, rounds_per_cell);
  py::list out;
  for (const auto& c : sweep.cells) {
    py::dict d;
    d["regime"] = c.regime;
    d["num_clients"] = c.num_clients;
    d["mean_latency_s"] = c.mean_latency_s;
    d["uplink_bytes"] = c.uplink_bytes;
    d["downlink_bytes"] = c.downlink_bytes;
    out.append(d);
  }
  return out;
}

double psnr_vectors(const std::vector<double>& original, const std::vector<double>& recon) {
  return psnr_db(Tensor::vec(original), Tensor::vec(recon));
}

std::string select_cr_py(double snr_db) {
  return select_cr(NsmPolicy::default_policy(), snr_db).str();
}

std::vector<double> transmit_py(const std::vector<double>& symbols, const std::string& model,
                                double snr_db, uint64_t seed) {
  Rng fading = named_rng(seed, {"py", "fading"});
  ChannelRealization real =
      sample_realization(channel_model_from_name(model), snr_db, fading, seed);
  Rng noise = named_rng(seed, {"py", "noise"});
  return equalize(transmit(symbols, real, noise), real);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "split federated learning simulator core";

  m.def("run_experiment", &run_from_json, py::arg("config_json"), py::arg("out_dir"),
        "Run one experiment from a JSON config string; writes records.csv + summary.json.");
  m.def("run_grid", &grid_from_json, py::arg("config_json"), py::arg("crs"), py::arg("snrs_db"),
        py::arg("channels"), "CR x SNR x channel evaluation grid.");
  m.def("run_latency_sweep", &sweep_from_json, py::arg("config_json"), py::arg("client_counts"),
        py::arg("regimes"), py::arg("rounds_per_cell") = 2);
  m.def("preset_config", &preset_config, py::arg("name"),
        "Built-in preset config JSON (fig4a, fig4b, fig5-awgn, fig5-rayleigh, smoke).");
  m.def("shannon_rate", &shannon_rate, py::arg("bandwidth_hz"), py::arg("snr_db"));
  m.def("psnr_db", &psnr_vectors, py::arg("original"), py::arg("reconstructed"));
  m.def("select_cr", &select_cr_py, py::arg("snr_db"),
        "CR chosen by the default threshold policy.");
  m.def("transmit", &transmit_py, py::arg("symbols"), py::arg("channel"), py::arg("snr_db"),
        py::arg("seed"), "Power-normalized symbols through the channel, equalized.");
}
