#ifndef AACPRED_MODEL_FINETUNE_HPP
#define AACPRED_MODEL_FINETUNE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/model/adapted_model.hpp"
#include "aacpred/model/masking.hpp"
#include "aacpred/model/training_config.hpp"
#include "aacpred/nn/transformer.hpp"
#include "aacpred/rng.hpp"
#include "aacpred/text_to_pictogram.hpp"

namespace aacpred::model {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  long steps = 0;
  double last_lr = 0.0;
};

inline nlohmann::json history_to_json(const std::vector<EpochRecord>& h) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : h)
    a.push_back({{"epoch", r.epoch},
                 {"train_loss", r.train_loss},
                 {"validation_loss", r.validation_loss},
                 {"steps", r.steps},
                 {"last_lr", r.last_lr}});
  return a;
}

struct FinetuneOptions {
  std::filesystem::path checkpoint_dir;  // epoch-N subdirectories; empty disables
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Framed index sequences for a split; sentences too long for `length` are rejected.
inline std::vector<std::vector<std::int32_t>> frame_corpus(const AdaptedModel& m,
                                                           const std::vector<PictoSentence>& corpus,
                                                           std::size_t length) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      out.push_back(frame_sequence(m.table, m.indices(corpus[i]), length));
    } catch (const Error& ex) {
      throw Error(ex.code(), "sentence " + std::to_string(i) + ": " + ex.what());
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::vector<std::int32_t>> gather(const std::vector<std::vector<std::int32_t>>& data,
                                                     const std::vector<std::size_t>& order, std::size_t from,
                                                     std::size_t to) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(to - from);
  for (std::size_t i = from; i < to; ++i) out.push_back(data[order[i]]);
  return out;
}

}  // namespace detail

// Masked-prediction loss on `data` with masks drawn from a fixed seed, so the
// figure is comparable across epochs.
inline double masked_loss(const AdaptedModel& m, const std::vector<std::vector<std::int32_t>>& data,
                          const TrainingConfig& cfg, std::uint64_t seed) {
  if (data.empty()) return 0.0;
  MaskCollator collate(m.table, cfg);
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto chunk = static_cast<std::size_t>(cfg.micro_batch());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t from = 0; from < data.size(); from += chunk) {
    auto mb = collate(detail::gather(data, order, from, std::min(data.size(), from + chunk)), rng);
    const auto rows = mb.selected_rows();
    const auto logits = m.encoder.logits(mb.input, rows);
    sum += nn::detail::softmax_cross_entropy(logits, mb.targets()) * static_cast<double>(rows.size());
    count += rows.size();
  }
  return sum / static_cast<double>(count);
}

// Masked-LM fine-tuning with AdamW and the configured schedule. Each optimizer
// step sees `batch_sequences` sequences (split into micro-batches whose
// gradients are weighted to reproduce the full-batch mean). Deterministic for
// a fixed config.
inline std::vector<EpochRecord> finetune(AdaptedModel& m, const std::vector<PictoSentence>& train,
                                         const std::vector<PictoSentence>& validation, const TrainingConfig& cfg,
                                         const FinetuneOptions& opt = {}) {
  cfg.validate();
  if (train.empty() || validation.empty())
    throw Error(Errc::invalid_config, "fine-tuning needs non-empty train and validation splits");
  if (cfg.sequence_length > m.encoder.config().max_positions)
    throw Error(Errc::invalid_config, "sequence_length exceeds the encoder's position budget");
  const auto len = static_cast<std::size_t>(cfg.sequence_length);
  const auto train_seqs = frame_corpus(m, train, len);
  const auto val_seqs = frame_corpus(m, validation, len);

  MaskCollator collate(m.table, cfg);
  Rng rng(cfg.rng_seed);
  nn::AdamW opt_state({cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  auto params = m.encoder.params();
  const auto batch = static_cast<std::size_t>(cfg.batch_sequences);
  const auto micro = static_cast<std::size_t>(cfg.micro_batch());
  const long steps_per_epoch = static_cast<long>((train_seqs.size() + batch - 1) / batch);
  const long total_steps = steps_per_epoch * cfg.epochs;
  const std::uint64_t val_seed = cfg.rng_seed ^ 0x5eed5eed5eed5eedULL;

  std::vector<std::size_t> order(train_seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<EpochRecord> history;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_sum = 0.0;
    std::size_t epoch_count = 0;
    double lr = 0.0;
    for (std::size_t from = 0; from < order.size(); from += batch) {
      const std::size_t to = std::min(order.size(), from + batch);
      std::vector<MaskedBatch> parts;
      std::size_t selected = 0;
      for (std::size_t f = from; f < to; f += micro) {
        parts.push_back(collate(detail::gather(train_seqs, order, f, std::min(to, f + micro)), rng));
        selected += parts.back().selected_rows().size();
      }
      m.encoder.zero_grad();
      for (const auto& mb : parts) {
        const auto rows = mb.selected_rows();
        const double w = static_cast<double>(rows.size()) / static_cast<double>(selected);
        const double loss = m.encoder.loss_and_backward(mb.input, rows, mb.targets(), w);
        if (!std::isfinite(loss))
          throw Error(Errc::divergence_detected, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                                     std::to_string(step));
        epoch_sum += loss * static_cast<double>(rows.size());
        epoch_count += rows.size();
      }
      lr = scheduled_lr(cfg, step, total_steps);
      opt_state.step(params, lr);
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_sum / static_cast<double>(epoch_count);
    rec.validation_loss = masked_loss(m, val_seqs, cfg, val_seed);
    if (!std::isfinite(rec.validation_loss))
      throw Error(Errc::divergence_detected, "non-finite validation loss at epoch " + std::to_string(epoch));
    rec.steps = step;
    rec.last_lr = lr;
    history.push_back(rec);
    m.epoch = epoch;
    if (opt.on_epoch) opt.on_epoch(rec);
    if (!opt.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
      save_checkpoint(m, opt.checkpoint_dir / ("epoch-" + std::to_string(epoch)),
                      {{"training", cfg.to_json()}, {"history", history_to_json(history)}});
  }
  return history;
}

}  // namespace aacpred::model

#endif  // AACPRED_MODEL_FINETUNE_HPP
