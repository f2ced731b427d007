#pragma once

#include <string>

#include <json.hpp>

#include "asl/data.hpp"
#include "asl/errors.hpp"
#include "asl/io.hpp"
#include "asl/model.hpp"
#include "asl/pipeline.hpp"

namespace asl {

struct TrainConfig {
  uint64_t seed = 1;
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  std::string optimizer = "adam";  // "adam" or "sgd"
  double clip_norm = 1.0;
  double lambda_contrastive = 0.3;
  bool class_sensitivity = true;
  bool instance_sensitivity = true;
  ModelConfig model;              // num_classes is taken from the data
  ContrastiveConfig contrastive;

  LossWeights loss_weights() const {
    return {lambda_contrastive, class_sensitivity, instance_sensitivity};
  }

  void validate() const {
    if (epochs < 1) throw DataError("config: epochs must be >= 1");
    if (batch_size < 1) throw DataError("config: batch_size must be >= 1");
    if (!(lr > 0.0)) throw DataError("config: lr must be positive");
    if (optimizer != "adam" && optimizer != "sgd") throw DataError("config: optimizer must be adam or sgd");
    if (clip_norm < 0.0) throw DataError("config: clip_norm must be >= 0 (0 disables)");
    if (lambda_contrastive < 0.0) throw DataError("config: lambda_contrastive must be >= 0");
    if (model.dim < 2) throw DataError("config: model.dim must be >= 2");
    if (model.levels < 1) throw DataError("config: model.levels must be >= 1");
    if (model.base_blocks < 1) throw DataError("config: model.base_blocks must be >= 1");
    if (model.theta < 0.0 || model.theta > 1.0) throw DataError("config: model.theta must be in [0, 1]");
    if (!(contrastive.tau > 0.0)) throw DataError("config: contrastive.tau must be positive");
    if (contrastive.delta < 0.0) throw DataError("config: contrastive.delta must be >= 0");
  }
};

// Strict parse: every key must be recognized, so typos fail loudly instead
// of silently training with defaults.
inline TrainConfig parse_train_config(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("config: expected a JSON object");
  TrainConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "seed")
        cfg.seed = it.value().get<uint64_t>();
      else if (k == "epochs")
        cfg.epochs = it.value().get<int>();
      else if (k == "batch_size")
        cfg.batch_size = it.value().get<int>();
      else if (k == "lr")
        cfg.lr = it.value().get<double>();
      else if (k == "optimizer")
        cfg.optimizer = it.value().get<std::string>();
      else if (k == "clip_norm")
        cfg.clip_norm = it.value().get<double>();
      else if (k == "lambda_contrastive")
        cfg.lambda_contrastive = it.value().get<double>();
      else if (k == "class_sensitivity")
        cfg.class_sensitivity = it.value().get<bool>();
      else if (k == "instance_sensitivity")
        cfg.instance_sensitivity = it.value().get<bool>();
      else if (k == "model") {
        const nlohmann::json& m = it.value();
        if (!m.is_object()) throw DataError("config: model must be an object");
        // dim and num_classes always come from the data, so the config
        // cannot contradict the features on disk.
        for (auto mt = m.begin(); mt != m.end(); ++mt) {
          const std::string& mk = mt.key();
          if (mk == "levels")
            cfg.model.levels = mt.value().get<int>();
          else if (mk == "base_blocks")
            cfg.model.base_blocks = mt.value().get<int>();
          else if (mk == "theta")
            cfg.model.theta = mt.value().get<double>();
          else
            throw DataError("config: unknown key 'model." + mk + "'");
        }
      } else if (k == "contrastive") {
        const nlohmann::json& c = it.value();
        if (!c.is_object()) throw DataError("config: contrastive must be an object");
        for (auto ct = c.begin(); ct != c.end(); ++ct) {
          const std::string& ck = ct.key();
          if (ck == "tau")
            cfg.contrastive.tau = ct.value().get<double>();
          else if (ck == "delta")
            cfg.contrastive.delta = ct.value().get<double>();
          else
            throw DataError("config: unknown key 'contrastive." + ck + "'");
        }
      } else {
        throw DataError("config: unknown key '" + k + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("config: bad value for '" + k + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
  return parse_train_config(parse_json_file(path));
}

inline GenerateConfig parse_generate_config(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("config: expected a JSON object");
  GenerateConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "seed")
        cfg.seed = it.value().get<uint64_t>();
      else if (k == "train_videos")
        cfg.num_train = it.value().get<int>();
      else if (k == "test_videos")
        cfg.num_test = it.value().get<int>();
      else if (k == "frames")
        cfg.num_frames = it.value().get<int>();
      else if (k == "dim")
        cfg.dim = it.value().get<int>();
      else if (k == "classes")
        cfg.num_classes = it.value().get<int>();
      else if (k == "min_instances")
        cfg.min_instances = it.value().get<int>();
      else if (k == "max_instances")
        cfg.max_instances = it.value().get<int>();
      else if (k == "min_duration")
        cfg.min_duration = it.value().get<int>();
      else if (k == "max_duration")
        cfg.max_duration = it.value().get<int>();
      else if (k == "noise")
        cfg.noise = it.value().get<double>();
      else
        throw DataError("config: unknown key '" + k + "'");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("config: bad value for '" + k + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline GenerateConfig load_generate_config(const std::string& path) {
  return parse_generate_config(parse_json_file(path));
}

}  // namespace asl
