#ifndef AACPRED_TEXT_ENCODER_HPP
#define AACPRED_TEXT_ENCODER_HPP

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/encoder.hpp"
#include "aacpred/error.hpp"
#include "aacpred/nn/transformer.hpp"
#include "aacpred/nn/weights_io.hpp"
#include "aacpred/wordpiece.hpp"

namespace aacpred {

/// A pre-trained subword encoder: weights plus its tokenizer.
struct BaseEncoder {
  nn::Transformer model;
  WordPieceTokenizer tokenizer;
  std::string name;
};

inline constexpr int kCheckpointFormat = 1;

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::checkpoint_io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::checkpoint_io, path.string() + ": " + ex.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::checkpoint_io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace detail

// Directory layout: manifest.json, vocab.txt (one subtoken per line), weights.bin.
inline void save_base_encoder(const BaseEncoder& enc, const std::filesystem::path& dir) {
  nn::write_directory_atomically(dir, [&](const std::filesystem::path& tmp) {
    nlohmann::json manifest = {{"format_version", kCheckpointFormat},
                               {"kind", "base"},
                               {"encoder_id", enc.name},
                               {"lowercase", enc.tokenizer.lowercase()},
                               {"encoder", enc.model.config().to_json()}};
    detail::write_json_file(tmp / "manifest.json", manifest);
    enc.tokenizer.vocab().save(tmp / "vocab.txt");
    nn::save_weights(enc.model, tmp / "weights.bin");
  });
}

inline BaseEncoder load_base_encoder(const std::filesystem::path& dir) {
  auto manifest = detail::read_json_file(dir / "manifest.json");
  if (manifest.value("format_version", 0) != kCheckpointFormat)
    throw Error(Errc::version_mismatch, "unsupported encoder format in " + dir.string());
  if (manifest.value("kind", "") != "base")
    throw Error(Errc::version_mismatch, dir.string() + " is not a base encoder");
  BaseEncoder enc;
  enc.name = manifest.value("encoder_id", dir.filename().string());
  auto cfg = nn::EncoderConfig::from_json(manifest.at("encoder"));
  auto vocab = TokenTable::load(dir / "vocab.txt");
  if (static_cast<int>(vocab.size()) != cfg.vocab_size)
    throw Error(Errc::version_mismatch, "vocab.txt size does not match encoder shape");
  for (const char* special : {TokenTable::kPad, TokenTable::kUnk, TokenTable::kStart, TokenTable::kEnd,
                              TokenTable::kMask})
    if (!vocab.contains(special))
      throw Error(Errc::version_mismatch, std::string("vocabulary lacks special token ") + special);
  enc.tokenizer = WordPieceTokenizer(std::move(vocab), manifest.value("lowercase", false));
  enc.model = nn::Transformer(cfg);
  nn::load_weights(enc.model, dir / "weights.bin");
  return enc;
}

struct EncoderShape {
  int hidden = 64;
  int layers = 4;
  int heads = 4;
  int intermediate = 256;
  int max_positions = 64;
};

/// Randomly initialised encoder whose subword vocabulary covers `words`.
inline BaseEncoder make_random_base_encoder(const std::vector<std::string>& words, const EncoderShape& shape,
                                            std::uint64_t seed, std::string name = {}) {
  BaseEncoder enc;
  auto vocab = build_subword_vocab(words);
  nn::EncoderConfig cfg;
  cfg.vocab_size = static_cast<int>(vocab.size());
  cfg.hidden = shape.hidden;
  cfg.layers = shape.layers;
  cfg.heads = shape.heads;
  cfg.intermediate = shape.intermediate;
  cfg.max_positions = shape.max_positions;
  enc.model = nn::Transformer(cfg);
  Rng rng(seed);
  enc.model.init_random(rng);
  enc.tokenizer = WordPieceTokenizer(std::move(vocab), true);
  enc.name = name.empty() ? "random-h" + std::to_string(shape.hidden) + "-l" + std::to_string(shape.layers) +
                                "-seed" + std::to_string(seed)
                          : std::move(name);
  return enc;
}

/// EncoderHandle over a BaseEncoder: [CLS] subtokens [SEP], truncated to the position budget.
class TextEncoder final : public EncoderHandle {
 public:
  explicit TextEncoder(std::shared_ptr<const BaseEncoder> base) : base_(std::move(base)) {}

  std::string id() const override { return base_->name; }
  std::size_t hidden_size() const override { return static_cast<std::size_t>(base_->model.hidden()); }

  std::vector<Subtoken> subtokenize(std::string_view text) const override {
    return base_->tokenizer.tokenize(text);
  }

  Vec input_embedding(std::int32_t subtoken) const override {
    const auto& w = base_->model.word_embeddings().value;
    if (subtoken < 0 || subtoken >= w.rows()) throw Error(Errc::unknown_subtoken, "subtoken index out of range");
    return w.row(subtoken).transpose();
  }

  LayerStates encode(std::string_view text) const override {
    const auto& vocab = base_->tokenizer.vocab();
    auto pieces = subtokenize(text);
    const auto budget = static_cast<std::size_t>(base_->model.config().max_positions - 2);
    if (pieces.size() > budget) pieces.resize(budget);
    nn::Batch b;
    b.batch = 1;
    b.ids.push_back(vocab.start());
    for (const auto& p : pieces) b.ids.push_back(p.id);
    b.ids.push_back(vocab.end());
    b.length = static_cast<int>(b.ids.size());
    b.attend.assign(b.ids.size(), 1);
    LayerStates out;
    try {
      out.layers = base_->model.hidden_states(b);
    } catch (const Error& ex) {
      throw Error(Errc::encoder_failure, ex.what());
    }
    return out;
  }

  std::int32_t unknown_subtoken() const override { return base_->tokenizer.vocab().unk(); }

  const BaseEncoder& base() const { return *base_; }

 private:
  std::shared_ptr<const BaseEncoder> base_;
};

}  // namespace aacpred

#endif  // AACPRED_TEXT_ENCODER_HPP
