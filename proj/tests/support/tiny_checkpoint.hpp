#ifndef AACPRED_TESTS_TINY_CHECKPOINT_HPP
#define AACPRED_TESTS_TINY_CHECKPOINT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "aacpred/model/adapted_model.hpp"
#include "aacpred/model/finetune.hpp"
#include "support/desk_fixture.hpp"
#include "support/fixtures.hpp"

namespace aacpred::testing {

struct TinyCheckpoint {
  std::filesystem::path root;
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;
};

// Fixture vocabulary (20 ids) plus 40 synthetic ids and one OOV literal, a
// few epochs on a small repeated corpus. Builds in about a second.
inline TinyCheckpoint make_tiny_checkpoint(const std::string& name, int epochs = 3) {
  TinyCheckpoint t;
  t.root = scratch_dir(name);
  t.checkpoint = t.root / "ckpt";
  t.vocab = t.root / "vocab.jsonl";
  auto entries = desk_vocabulary(40).entries();
  const auto fixture = load_vocabulary(data_path("vocab_fixture.json"), VocabFormat::arasaac_json);
  for (const auto& [id, e] : fixture.entries()) entries.emplace(id, e);
  std::vector<PictogramEntry> flat;
  for (auto& [id, e] : entries) flat.push_back(e);
  const auto vocab = Vocabulary::from_entries(std::move(flat));
  save_vocabulary(vocab, t.vocab);

  auto ids = [](std::initializer_list<std::int64_t> xs, const char* literal = nullptr) {
    PictoSentence s;
    for (auto x : xs) s.tokens.push_back(PictoToken::pictogram(PictogramId(x)));
    if (literal) s.tokens.push_back(PictoToken::oov(literal));
    return s;
  };
  std::vector<PictoSentence> train;
  for (int r = 0; r < 8; ++r) {
    train.push_back(ids({6481, 31141, 16713}));
    train.push_back(ids({6481, 2275, 2418, 2419}));
    train.push_back(ids({2472, 2474, 4626}, "bolo"));
    train.push_back(ids({1001 + r, 1010 + r, 1020 + r, 1030 + r}));
  }
  auto base = desk_base_encoder(vocab, 9);
  TextEncoder te(base);
  auto matrix = build_embedding_matrix(vocab, EmbeddingStrategy::caption, &te, nullptr, {}, nullptr);
  auto m = model::swap_vocabulary(*base, model::build_token_table(train, vocab), matrix, vocab.id_hash());
  model::TrainingConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_sequences = 8;
  cfg.epochs = epochs;
  cfg.rng_seed = 4;
  auto history = model::finetune(m, train, {train.begin(), train.begin() + 3}, cfg, {});
  model::save_checkpoint(m, t.checkpoint, {{"training", cfg.to_json()}, {"history", model::history_to_json(history)}});
  return t;
}

}  // namespace aacpred::testing

#endif  // AACPRED_TESTS_TINY_CHECKPOINT_HPP
