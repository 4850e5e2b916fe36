#ifndef AACPRED_MODEL_TRAINING_CONFIG_HPP
#define AACPRED_MODEL_TRAINING_CONFIG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/hash.hpp"
#include "aacpred/picto_embeddings.hpp"

namespace aacpred::model {

/// Fine-tuning recipe. Defaults are the full-scale settings.
struct TrainingConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::string schedule = "linear";
  int warmup_steps = 0;
  int batch_sequences = 768;
  int micro_batch_sequences = 0;  // 0: whole batch per forward pass
  int sequence_length = 13;
  double mask_fraction = 0.15;
  std::array<double, 3> corrupt_split = {0.8, 0.1, 0.1};  // mask, random, unchanged
  int epochs = 200;
  std::uint64_t rng_seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints

  /// 200 epochs for caption and synonyms, 500 for everything else.
  static TrainingConfig defaults_for(EmbeddingStrategy s) {
    TrainingConfig c;
    c.epochs = (s == EmbeddingStrategy::caption || s == EmbeddingStrategy::synonyms) ? 200 : 500;
    return c;
  }

  int tokens_per_batch() const { return batch_sequences * sequence_length; }

  int micro_batch() const {
    return micro_batch_sequences > 0 && micro_batch_sequences < batch_sequences ? micro_batch_sequences
                                                                                : batch_sequences;
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(Errc::invalid_config, what); };
    if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) bad("mask_fraction must lie in (0, 1)");
    double sum = 0.0;
    for (double p : corrupt_split) {
      if (!(p >= 0.0)) bad("corrupt_split entries must be non-negative");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) bad("corrupt_split must sum to 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad("betas must lie in [0, 1)");
    if (weight_decay < 0.0) bad("weight_decay must be >= 0");
    if (schedule != "linear" && schedule != "constant") bad("schedule must be linear or constant");
    if (warmup_steps < 0) bad("warmup_steps must be >= 0");
    if (batch_sequences < 1) bad("batch_sequences must be >= 1");
    if (micro_batch_sequences < 0) bad("micro_batch_sequences must be >= 0");
    if (sequence_length < 3) bad("sequence_length must leave room for one token between the markers");
    if (epochs < 1) bad("epochs must be >= 1");
    if (checkpoint_every < 0) bad("checkpoint_every must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"weight_decay", weight_decay},
            {"schedule", schedule},
            {"warmup_steps", warmup_steps},
            {"batch_sequences", batch_sequences},
            {"micro_batch_sequences", micro_batch_sequences},
            {"sequence_length", sequence_length},
            {"mask_fraction", mask_fraction},
            {"corrupt_split", corrupt_split},
            {"epochs", epochs},
            {"rng_seed", rng_seed},
            {"checkpoint_every", checkpoint_every}};
  }

  // Missing keys keep their defaults; unknown keys are rejected so typos
  // do not silently fall back.
  static TrainingConfig from_json(const nlohmann::json& j) { return from_json(j, TrainingConfig{}); }

  static TrainingConfig from_json(const nlohmann::json& j, TrainingConfig base) {
    if (!j.is_object()) throw Error(Errc::invalid_config, "training config must be a JSON object");
    TrainingConfig c = base;
    const auto known = c.to_json();
    try {
      for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (!known.contains(k)) throw Error(Errc::invalid_config, "unknown training config key '" + k + "'");
        const auto& v = it.value();
        if (k == "learning_rate") c.learning_rate = v.get<double>();
        else if (k == "beta1") c.beta1 = v.get<double>();
        else if (k == "beta2") c.beta2 = v.get<double>();
        else if (k == "adam_eps") c.adam_eps = v.get<double>();
        else if (k == "weight_decay") c.weight_decay = v.get<double>();
        else if (k == "schedule") c.schedule = v.get<std::string>();
        else if (k == "warmup_steps") c.warmup_steps = v.get<int>();
        else if (k == "batch_sequences") c.batch_sequences = v.get<int>();
        else if (k == "micro_batch_sequences") c.micro_batch_sequences = v.get<int>();
        else if (k == "sequence_length") c.sequence_length = v.get<int>();
        else if (k == "mask_fraction") c.mask_fraction = v.get<double>();
        else if (k == "corrupt_split") c.corrupt_split = v.get<std::array<double, 3>>();
        else if (k == "epochs") c.epochs = v.get<int>();
        else if (k == "rng_seed") c.rng_seed = v.get<std::uint64_t>();
        else if (k == "checkpoint_every") c.checkpoint_every = v.get<int>();
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::invalid_config, ex.what());
    }
    c.validate();
    return c;
  }

  std::string hash() const { return sha256_hex(to_json().dump()); }
};

inline TrainingConfig load_training_config(const std::filesystem::path& path, TrainingConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::invalid_config, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::invalid_config, path.string() + ": " + ex.what());
  }
  return TrainingConfig::from_json(j, base);
}

/// Learning rate for optimizer step `step` (0-based) of `total`.
inline double scheduled_lr(const TrainingConfig& c, long step, long total) {
  if (c.warmup_steps > 0 && step < c.warmup_steps)
    return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  if (c.schedule == "constant") return c.learning_rate;
  const long after = step - c.warmup_steps;
  const long span = total - c.warmup_steps;
  if (span <= 0) return c.learning_rate;
  const double frac = 1.0 - static_cast<double>(after) / static_cast<double>(span);
  return c.learning_rate * (frac > 0.0 ? frac : 0.0);
}

}  // namespace aacpred::model

#endif  // AACPRED_MODEL_TRAINING_CONFIG_HPP
