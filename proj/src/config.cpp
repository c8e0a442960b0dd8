#include "sflsim/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace sflsim {

using nlohmann::json;

namespace {

[[noreturn]] void bad_key(const std::string& path, const std::string& why) {
  throw std::invalid_argument("config error at \"" + path + "\": " + why);
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) bad_key(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) bad_key(path + "." + it.key(), "unknown key");
  }
}

double snr_value(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    bad_key(path, "expected a number or \"inf\"");
  }
  bad_key(path, "expected a number or \"inf\"");
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  check_keys(j, "", {"regime", "num_clients", "rounds", "local_epochs", "batch_size", "lr",
                     "seed", "parallel_clients", "deadline_s", "arch", "channel", "nsm",
                     "latency", "codec", "data", "shard", "eval"});

  auto& run = cfg.run;
  if (j.contains("regime")) run.regime = regime_from_name(j["regime"].get<std::string>());
  if (j.contains("num_clients")) run.num_clients = j["num_clients"].get<size_t>();
  if (j.contains("rounds")) run.rounds = j["rounds"].get<size_t>();
  if (j.contains("local_epochs")) run.local_epochs = j["local_epochs"].get<size_t>();
  if (j.contains("batch_size")) run.batch_size = j["batch_size"].get<size_t>();
  if (j.contains("lr")) run.lr = j["lr"].get<double>();
  if (j.contains("seed")) run.seed = j["seed"].get<uint64_t>();
  if (j.contains("parallel_clients")) run.parallel_clients = j["parallel_clients"].get<bool>();
  if (j.contains("deadline_s")) run.deadline_s = snr_value(j["deadline_s"], "deadline_s");

  if (j.contains("arch")) {
    const json& a = j["arch"];
    check_keys(a, "arch", {"preset", "input_shape", "num_classes", "cut1", "cut2"});
    if (a.contains("preset")) run.arch.preset = arch_preset_from_name(a["preset"].get<std::string>());
    if (a.contains("input_shape")) {
      run.arch.input_shape = a["input_shape"].get<std::vector<size_t>>();
    } else if (run.arch.preset == ArchPreset::mlp) {
      run.arch.input_shape = {48};
    }
    if (a.contains("num_classes")) run.arch.num_classes = a["num_classes"].get<size_t>();
    if (a.contains("cut1") != a.contains("cut2")) {
      bad_key("arch", "cut1 and cut2 must be given together");
    }
    if (a.contains("cut1")) {
      ModelBuild mb = build_model(run.arch, run.seed);
      run.split = SplitSpec::cuts(a["cut1"].get<size_t>(), a["cut2"].get<size_t>(),
                                  mb.layers.size());
    }
  }

  if (j.contains("channel")) {
    const json& c = j["channel"];
    check_keys(c, "channel", {"model", "snr_db", "snr_schedule"});
    if (c.contains("model")) run.channel_model = channel_model_from_name(c["model"].get<std::string>());
    if (c.contains("snr_db") && c.contains("snr_schedule")) {
      bad_key("channel", "give either snr_db or snr_schedule, not both");
    }
    if (c.contains("snr_db")) {
      run.snr_schedule = SnrSchedule::constant(snr_value(c["snr_db"], "channel.snr_db"));
    }
    if (c.contains("snr_schedule")) {
      SnrSchedule sch;
      for (const auto& bp : c["snr_schedule"]) {
        if (!bp.is_array() || bp.size() != 2) {
          bad_key("channel.snr_schedule", "expected [round_start, snr_db] pairs");
        }
        sch.breakpoints.emplace_back(bp[0].get<size_t>(),
                                     snr_value(bp[1], "channel.snr_schedule"));
      }
      run.snr_schedule = sch;
    }
  }

  if (j.contains("nsm")) {
    const json& n = j["nsm"];
    check_keys(n, "nsm", {"table", "fallback"});
    NsmPolicy p;
    if (n.contains("table")) {
      for (const auto& e : n["table"]) {
        check_keys(e, "nsm.table[]", {"snr_floor_db", "cr"});
        p.table.push_back({snr_value(e["snr_floor_db"], "nsm.table[].snr_floor_db"),
                           ratio_from_string(e["cr"].get<std::string>())});
      }
    }
    if (n.contains("fallback")) p.fallback = ratio_from_string(n["fallback"].get<std::string>());
    p.validate();
    run.nsm = p;
  }

  if (j.contains("latency")) {
    const json& l = j["latency"];
    check_keys(l, "latency", {"bandwidth_hz", "shared_bandwidth", "total_bandwidth_hz",
                              "device_flops", "server_flops", "bytes_per_symbol"});
    if (l.contains("bandwidth_hz")) run.latency.bandwidth_hz = l["bandwidth_hz"].get<double>();
    if (l.contains("shared_bandwidth")) run.latency.shared_bandwidth = l["shared_bandwidth"].get<bool>();
    if (l.contains("total_bandwidth_hz")) run.latency.total_bandwidth_hz = l["total_bandwidth_hz"].get<double>();
    if (l.contains("device_flops")) run.latency.device_flops = l["device_flops"].get<double>();
    if (l.contains("server_flops")) run.latency.server_flops = l["server_flops"].get<double>();
    if (l.contains("bytes_per_symbol")) run.latency.bytes_per_symbol = l["bytes_per_symbol"].get<uint64_t>();
    if (run.latency.bandwidth_hz <= 0 || run.latency.device_flops <= 0 ||
        run.latency.server_flops <= 0 || run.latency.bytes_per_symbol == 0) {
      bad_key("latency", "all latency model parameters must be positive");
    }
  }

  if (j.contains("codec")) {
    const json& c = j["codec"];
    check_keys(c, "codec", {"source", "dir", "epochs", "batch_size", "lr", "train_snr_db",
                            "feature_samples"});
    if (c.contains("source")) {
      std::string s = c["source"].get<std::string>();
      if (s == "identity") run.codec_source = CodecSource::identity;
      else if (s == "pretrain") run.codec_source = CodecSource::pretrain;
      else if (s == "files") run.codec_source = CodecSource::files;
      else bad_key("codec.source", "expected identity|pretrain|files");
    }
    if (c.contains("dir")) run.codec_dir = c["dir"].get<std::string>();
    if (c.contains("epochs")) run.pretrain.epochs = c["epochs"].get<size_t>();
    if (c.contains("batch_size")) run.pretrain.batch_size = c["batch_size"].get<size_t>();
    if (c.contains("lr")) run.pretrain.lr = c["lr"].get<double>();
    if (c.contains("train_snr_db")) run.pretrain.train_snr_db = snr_value(c["train_snr_db"], "codec.train_snr_db");
    if (c.contains("feature_samples")) cfg.codec_feature_samples = c["feature_samples"].get<size_t>();
  }

  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, "data", {"source", "dir", "max_train", "max_test", "num_classes", "input_dim",
                           "separation", "image_noise_sigma", "train_n", "test_n"});
    if (d.contains("source")) {
      std::string s = d["source"].get<std::string>();
      if (s == "cifar10") cfg.data.source = DataConfig::Source::cifar10;
      else if (s == "synth") cfg.data.source = DataConfig::Source::synth;
      else if (s == "synth_image") cfg.data.source = DataConfig::Source::synth_image;
      else bad_key("data.source", "expected cifar10|synth|synth_image");
    }
    if (d.contains("dir")) cfg.data.data_dir = d["dir"].get<std::string>();
    if (d.contains("max_train")) cfg.data.max_train = d["max_train"].get<size_t>();
    if (d.contains("max_test")) cfg.data.max_test = d["max_test"].get<size_t>();
    if (d.contains("num_classes")) cfg.data.num_classes = d["num_classes"].get<size_t>();
    if (d.contains("input_dim")) cfg.data.input_dim = d["input_dim"].get<size_t>();
    if (d.contains("separation")) cfg.data.separation = d["separation"].get<double>();
    if (d.contains("image_noise_sigma")) cfg.data.image_noise_sigma = d["image_noise_sigma"].get<double>();
    if (d.contains("train_n")) cfg.data.train_n = d["train_n"].get<size_t>();
    if (d.contains("test_n")) cfg.data.test_n = d["test_n"].get<size_t>();
  }

  if (j.contains("shard")) {
    const json& s = j["shard"];
    check_keys(s, "shard", {"mode", "samples_per_client", "dirichlet_alpha"});
    if (s.contains("mode")) {
      std::string m = s["mode"].get<std::string>();
      if (m == "partition") run.shard_mode = ShardMode::partition;
      else if (m == "fixed_size") run.shard_mode = ShardMode::fixed_size;
      else bad_key("shard.mode", "expected partition|fixed_size");
    }
    if (s.contains("samples_per_client")) run.samples_per_client = s["samples_per_client"].get<size_t>();
    if (s.contains("dirichlet_alpha")) run.dirichlet_alpha = s["dirichlet_alpha"].get<double>();
  }

  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, "eval", {"batch_size"});
    if (e.contains("batch_size")) cfg.eval_batch = e["batch_size"].get<size_t>();
  }

  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  const auto& run = cfg.run;
  j["regime"] = regime_name(run.regime);
  j["num_clients"] = run.num_clients;
  j["rounds"] = run.rounds;
  j["local_epochs"] = run.local_epochs;
  j["batch_size"] = run.batch_size;
  j["lr"] = run.lr;
  j["seed"] = run.seed;
  j["parallel_clients"] = run.parallel_clients;
  if (std::isfinite(run.deadline_s)) j["deadline_s"] = run.deadline_s;
  else j["deadline_s"] = "inf";

  j["arch"]["preset"] = arch_preset_name(run.arch.preset);
  j["arch"]["input_shape"] = run.arch.input_shape;
  j["arch"]["num_classes"] = run.arch.num_classes;
  if (run.split) {
    j["arch"]["cut1"] = run.split->cut1;
    j["arch"]["cut2"] = run.split->cut2;
  }

  j["channel"]["model"] = channel_model_name(run.channel_model);
  if (run.snr_schedule.breakpoints.size() == 1) {
    double v = run.snr_schedule.breakpoints.front().second;
    if (std::isinf(v)) j["channel"]["snr_db"] = v > 0 ? "inf" : "-inf";
    else j["channel"]["snr_db"] = v;
  } else {
    json sch = json::array();
    for (const auto& [r, v] : run.snr_schedule.breakpoints) sch.push_back({r, v});
    j["channel"]["snr_schedule"] = sch;
  }

  json table = json::array();
  for (const auto& e : run.nsm.table) {
    table.push_back({{"snr_floor_db", e.snr_floor_db}, {"cr", e.cr.str()}});
  }
  j["nsm"]["table"] = table;
  j["nsm"]["fallback"] = run.nsm.fallback.str();

  j["latency"]["bandwidth_hz"] = run.latency.bandwidth_hz;
  j["latency"]["shared_bandwidth"] = run.latency.shared_bandwidth;
  j["latency"]["total_bandwidth_hz"] = run.latency.total_bandwidth_hz;
  j["latency"]["device_flops"] = run.latency.device_flops;
  j["latency"]["server_flops"] = run.latency.server_flops;
  j["latency"]["bytes_per_symbol"] = run.latency.bytes_per_symbol;

  const char* src = run.codec_source == CodecSource::identity
                        ? "identity"
                        : run.codec_source == CodecSource::pretrain ? "pretrain" : "files";
  j["codec"]["source"] = src;
  if (!run.codec_dir.empty()) j["codec"]["dir"] = run.codec_dir;
  j["codec"]["epochs"] = run.pretrain.epochs;
  j["codec"]["batch_size"] = run.pretrain.batch_size;
  j["codec"]["lr"] = run.pretrain.lr;
  j["codec"]["train_snr_db"] = run.pretrain.train_snr_db;
  j["codec"]["feature_samples"] = cfg.codec_feature_samples;

  const char* dsrc = cfg.data.source == DataConfig::Source::cifar10
                         ? "cifar10"
                         : cfg.data.source == DataConfig::Source::synth ? "synth" : "synth_image";
  j["data"]["source"] = dsrc;
  if (!cfg.data.data_dir.empty()) j["data"]["dir"] = cfg.data.data_dir;
  j["data"]["max_train"] = cfg.data.max_train;
  j["data"]["max_test"] = cfg.data.max_test;
  j["data"]["num_classes"] = cfg.data.num_classes;
  j["data"]["input_dim"] = cfg.data.input_dim;
  j["data"]["separation"] = cfg.data.separation;
  j["data"]["image_noise_sigma"] = cfg.data.image_noise_sigma;
  j["data"]["train_n"] = cfg.data.train_n;
  j["data"]["test_n"] = cfg.data.test_n;

  j["shard"]["mode"] = run.shard_mode == ShardMode::partition ? "partition" : "fixed_size";
  j["shard"]["samples_per_client"] = run.samples_per_client;
  j["shard"]["dirichlet_alpha"] = run.dirichlet_alpha;

  j["eval"]["batch_size"] = cfg.eval_batch;
  return j.dump(2);
}

std::string preset_config(const std::string& name) {
  // shared desk-scale base: synthetic CIFAR-shaped images, tinycnn
  static const char* kFig4a = R"({
    "regime": "scusfl",
    "num_clients": 2,
    "rounds": 15,
    "local_epochs": 3,
    "batch_size": 64,
    "lr": 1e-4,
    "seed": 7,
    "arch": {"preset": "tinycnn", "input_shape": [3, 32, 32], "num_classes": 10},
    "channel": {"model": "awgn", "snr_db": 10},
    "nsm": {"table": [], "fallback": "1/3"},
    "codec": {"source": "pretrain", "epochs": 10, "lr": 1e-3, "train_snr_db": 10,
              "feature_samples": 768},
    "data": {"source": "synth_image", "train_n": 1024, "test_n": 512, "num_classes": 10,
             "image_noise_sigma": 0.12},
    "deadline_s": 60
  })";
  static const char* kFig4b = R"({
    "regime": "usfl",
    "num_clients": 2,
    "rounds": 2,
    "local_epochs": 3,
    "batch_size": 64,
    "lr": 1e-4,
    "seed": 7,
    "arch": {"preset": "tinycnn", "input_shape": [3, 32, 32], "num_classes": 10},
    "channel": {"model": "awgn", "snr_db": 10},
    "codec": {"source": "pretrain", "epochs": 8, "lr": 1e-3, "train_snr_db": 10,
              "feature_samples": 512},
    "data": {"source": "synth_image", "train_n": 768, "test_n": 128, "num_classes": 10,
             "image_noise_sigma": 0.12},
    "shard": {"mode": "fixed_size", "samples_per_client": 128},
    "latency": {"shared_bandwidth": true, "total_bandwidth_hz": 8e6}
  })";
  static const char* kFig5Awgn = R"({
    "regime": "usfl",
    "num_clients": 2,
    "rounds": 8,
    "local_epochs": 3,
    "batch_size": 64,
    "lr": 1e-4,
    "seed": 7,
    "arch": {"preset": "tinycnn", "input_shape": [3, 32, 32], "num_classes": 10},
    "channel": {"model": "awgn", "snr_db": 10},
    "codec": {"source": "pretrain", "epochs": 10, "lr": 1e-3, "train_snr_db": 10,
              "feature_samples": 768},
    "data": {"source": "synth_image", "train_n": 1024, "test_n": 512, "num_classes": 10,
             "image_noise_sigma": 0.12}
  })";
  static const char* kSmoke = R"({
    "regime": "usfl",
    "num_clients": 2,
    "rounds": 3,
    "local_epochs": 1,
    "batch_size": 16,
    "lr": 1e-3,
    "seed": 3,
    "arch": {"preset": "mlp", "input_shape": [48], "num_classes": 2},
    "channel": {"model": "awgn", "snr_db": 10},
    "data": {"source": "synth", "train_n": 192, "test_n": 96, "num_classes": 2,
             "input_dim": 48, "separation": 6.0},
    "deadline_s": 10
  })";

  if (name == "fig4a") return kFig4a;
  if (name == "fig4b") return kFig4b;
  if (name == "fig5-awgn") return kFig5Awgn;
  if (name == "fig5-rayleigh") {
    std::string s = kFig5Awgn;
    auto pos = s.find("\"awgn\"");
    s.replace(pos, 6, "\"rayleigh\"");
    return s;
  }
  if (name == "smoke") return kSmoke;
  throw std::invalid_argument("unknown preset: " + name +
                              " (expected fig4a, fig4b, fig5-awgn, fig5-rayleigh or smoke)");
}

}  // namespace sflsim
