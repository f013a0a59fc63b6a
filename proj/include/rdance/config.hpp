#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdance/errors.hpp"
#include "rdance/generator.hpp"
#include "rdance/rng.hpp"

namespace rdance {

struct TrainConfig {
  double lr = 1e-4;
  std::vector<int64_t> decay_steps = {35000, 60000};  // x0.1 after each
  int batch = 128;
  int64_t iters = 100000;
  double lambda_rec = 1.0;
  double lambda_foot = 0.1;
  double lambda_trip = 0.1;
  double margin = 0.2;
  TrainScheme scheme = TrainScheme::kUnpaired;
  uint64_t seed = 0;
  int64_t checkpoint_every = 0;  // 0 = final only
};

struct RunConfig {
  GeneratorConfig model;
  TrainConfig train;
  std::string manifest;

  /// Learning rate at a given 1-based step: initial value decayed by 0.1
  /// after each boundary.
  double lr_at(int64_t step) const {
    double lr = train.lr;
    for (int64_t b : train.decay_steps)
      if (step > b) lr *= 0.1;
    return lr;
  }
};

namespace config_detail {

inline void reject_unknown(const nlohmann::json& j,
                           const std::set<std::string>& known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw Error(ErrorCode::kBadConfig, "unknown key '" + it.key() + "' in " + where);
}

template <typename V>
void read_if(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::kBadConfig, std::string("bad value for ") + key);
    }
  }
}

}  // namespace config_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using namespace config_detail;
  reject_unknown(j, {"model", "train", "data"}, "config root");
  RunConfig cfg;

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m,
                   {"layers", "heads", "d_model", "ffn", "n", "m", "w_ctx",
                    "w_style", "mag_layer", "mag_beta", "tta_cap", "fusion",
                    "long_history"},
                   "model");
    read_if(m, "layers", cfg.model.layers);
    read_if(m, "heads", cfg.model.heads);
    read_if(m, "d_model", cfg.model.d_model);
    read_if(m, "ffn", cfg.model.ffn);
    read_if(m, "n", cfg.model.horizon);
    read_if(m, "m", cfg.model.window_m);
    read_if(m, "w_ctx", cfg.model.w_ctx);
    read_if(m, "w_style", cfg.model.w_style);
    read_if(m, "mag_layer", cfg.model.mag_layer);
    read_if(m, "mag_beta", cfg.model.mag_beta);
    read_if(m, "tta_cap", cfg.model.tta_cap);
    if (m.contains("fusion")) {
      std::string f = m.at("fusion").get<std::string>();
      if (f == "cln")
        cfg.model.fusion = FusionMode::kCln;
      else if (f == "mt")
        cfg.model.fusion = FusionMode::kMt;
      else
        throw Error(ErrorCode::kBadConfig, "fusion must be cln or mt");
    }
    if (m.contains("long_history")) {
      const auto& lh = m.at("long_history");
      if (lh.is_boolean())
        cfg.model.long_history = lh.get<bool>();
      else if (lh.is_string() && (lh == "on" || lh == "off"))
        cfg.model.long_history = lh == "on";
      else
        throw Error(ErrorCode::kBadConfig, "long_history must be on or off");
    }
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t,
                   {"lr", "decay_steps", "batch", "iters", "lambda_rec",
                    "lambda_foot", "lambda_trip", "margin", "scheme", "seed",
                    "checkpoint_every"},
                   "train");
    read_if(t, "lr", cfg.train.lr);
    read_if(t, "decay_steps", cfg.train.decay_steps);
    read_if(t, "batch", cfg.train.batch);
    read_if(t, "iters", cfg.train.iters);
    read_if(t, "lambda_rec", cfg.train.lambda_rec);
    read_if(t, "lambda_foot", cfg.train.lambda_foot);
    read_if(t, "lambda_trip", cfg.train.lambda_trip);
    read_if(t, "margin", cfg.train.margin);
    read_if(t, "seed", cfg.train.seed);
    read_if(t, "checkpoint_every", cfg.train.checkpoint_every);
    if (t.contains("scheme")) {
      std::string s = t.at("scheme").get<std::string>();
      if (s == "unpaired")
        cfg.train.scheme = TrainScheme::kUnpaired;
      else if (s == "paired")
        cfg.train.scheme = TrainScheme::kPaired;
      else
        throw Error(ErrorCode::kBadConfig, "scheme must be paired or unpaired");
    }
  }

  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"manifest"}, "data");
    read_if(d, "manifest", cfg.manifest);
  }

  cfg.model.validate();
  if (cfg.train.batch < 1) throw Error(ErrorCode::kBadConfig, "batch < 1");
  if (cfg.train.iters < 1) throw Error(ErrorCode::kBadConfig, "iters < 1");
  if (cfg.train.lr <= 0) throw Error(ErrorCode::kBadConfig, "lr <= 0");
  return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["model"] = {
      {"layers", cfg.model.layers},
      {"heads", cfg.model.heads},
      {"d_model", cfg.model.d_model},
      {"ffn", cfg.model.ffn},
      {"n", cfg.model.horizon},
      {"m", cfg.model.window_m},
      {"w_ctx", cfg.model.w_ctx},
      {"w_style", cfg.model.w_style},
      {"mag_layer", cfg.model.mag_layer},
      {"mag_beta", cfg.model.mag_beta},
      {"tta_cap", cfg.model.tta_cap},
      {"fusion", cfg.model.fusion == FusionMode::kCln ? "cln" : "mt"},
      {"long_history", cfg.model.long_history ? "on" : "off"},
  };
  j["train"] = {
      {"lr", cfg.train.lr},
      {"decay_steps", cfg.train.decay_steps},
      {"batch", cfg.train.batch},
      {"iters", cfg.train.iters},
      {"lambda_rec", cfg.train.lambda_rec},
      {"lambda_foot", cfg.train.lambda_foot},
      {"lambda_trip", cfg.train.lambda_trip},
      {"margin", cfg.train.margin},
      {"scheme", cfg.train.scheme == TrainScheme::kUnpaired ? "unpaired" : "paired"},
      {"seed", cfg.train.seed},
      {"checkpoint_every", cfg.train.checkpoint_every},
  };
  j["data"] = {{"manifest", cfg.manifest}};
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIoFailure, "cannot open config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kBadConfig, std::string("config parse: ") + e.what());
  }
  return parse_run_config(j);
}

inline uint64_t config_hash(const RunConfig& cfg) {
  std::string s = run_config_to_json(cfg).dump();
  uint64_t h = 0x8011affeULL;
  for (char c : s) h = splitmix64(h ^ uint64_t(uint8_t(c)));
  return h;
}

}  // namespace rdance
