#ifndef AACPRED_MODEL_ADAPTED_MODEL_HPP
#define AACPRED_MODEL_ADAPTED_MODEL_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/hash.hpp"
#include "aacpred/nn/transformer.hpp"
#include "aacpred/nn/weights_io.hpp"
#include "aacpred/picto_embeddings.hpp"
#include "aacpred/text_encoder.hpp"
#include "aacpred/text_to_pictogram.hpp"
#include "aacpred/vocabulary.hpp"
#include "aacpred/wordpiece.hpp"

namespace aacpred::model {

inline const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r = {TokenTable::kPad, TokenTable::kUnk, TokenTable::kStart, TokenTable::kEnd,
                                             TokenTable::kMask};
  return r;
}

/// Decimal pictogram id if `tok` is one, else nothing.
inline std::optional<PictogramId> parse_id_token(std::string_view tok) {
  if (tok.empty() || tok.size() > 18 || tok.front() == '0') return std::nullopt;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) return std::nullopt;
  return PictogramId{v};
}

// Reserved tokens, then every vocabulary id ascending, then corpus OOV
// literals in byte order. A literal spelled like a vocabulary id collapses
// onto that id's token.
inline TokenTable build_token_table(const std::vector<PictoSentence>& corpus, const Vocabulary& vocab) {
  std::vector<std::string> toks = reserved_tokens();
  std::set<std::string> taken(toks.begin(), toks.end());
  for (const auto& [id, e] : vocab.entries()) {
    toks.push_back(id.str());
    taken.insert(id.str());
  }
  std::set<std::string> literals;
  for (const auto& s : corpus)
    for (const auto& t : s.tokens) {
      if (t.is_pictogram()) {
        if (!vocab.contains(t.id))
          throw Error(Errc::unknown_token, "corpus pictogram " + t.id.str() + " is not in the vocabulary");
        continue;
      }
      if (!taken.count(t.literal)) literals.insert(t.literal);
    }
  toks.insert(toks.end(), literals.begin(), literals.end());
  return TokenTable(std::move(toks));
}

/// Per-index flags for the five reserved tokens.
inline std::vector<char> reserved_flags(const TokenTable& table) {
  std::vector<char> f(table.size(), 0);
  for (const auto& r : reserved_tokens()) {
    auto i = table.find(r);
    if (i < 0) throw Error(Errc::invalid_config, "token table lacks " + r);
    f[static_cast<std::size_t>(i)] = 1;
  }
  return f;
}

/// Encoder whose word embeddings (and tied output layer) index the pictogram token table.
struct AdaptedModel {
  nn::Transformer encoder;
  TokenTable table;
  EmbeddingStrategy strategy = EmbeddingStrategy::caption;
  std::string base_encoder_id;
  std::string vocab_hash;
  int epoch = 0;

  std::size_t hidden() const { return static_cast<std::size_t>(encoder.hidden()); }

  /// Table indices for token strings; unknown strings raise UnknownToken.
  std::vector<std::int32_t> indices(const std::vector<std::string>& tokens) const {
    std::vector<std::int32_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(table.at(t));
    return out;
  }

  std::vector<std::int32_t> indices(const PictoSentence& s) const { return indices(s.table_tokens()); }
};

// New embedding layer rows: pictogram ids from `matrix`, reserved tokens from
// the base encoder's own specials, OOV literals from the caption embedding of
// the literal under the base encoder. Every other tensor is copied unchanged
// and the output bias restarts at zero.
inline AdaptedModel swap_vocabulary(const BaseEncoder& base, const TokenTable& table, const EmbeddingMatrix& matrix,
                                    std::string vocab_hash = {}) {
  const auto h = static_cast<std::size_t>(base.model.hidden());
  if (matrix.h != h)
    throw Error(Errc::dimension_mismatch,
                "embedding matrix width " + std::to_string(matrix.h) + " differs from encoder width " + std::to_string(h));
  auto cfg = base.model.config();
  cfg.vocab_size = static_cast<int>(table.size());
  AdaptedModel out;
  out.encoder = nn::Transformer(cfg);
  out.table = table;
  out.strategy = matrix.strategy;
  out.base_encoder_id = base.name;
  out.vocab_hash = std::move(vocab_hash);

  const auto& src_params = base.model.params();
  for (auto* p : out.encoder.params()) {
    if (p == &out.encoder.word_embeddings() || p == &out.encoder.output_bias()) continue;
    auto it = std::find_if(src_params.begin(), src_params.end(), [&](const nn::Param* q) { return q->name == p->name; });
    if (it == src_params.end() || (*it)->value.rows() != p->value.rows() || (*it)->value.cols() != p->value.cols())
      throw Error(Errc::dimension_mismatch, "base encoder tensor " + p->name + " missing or misshaped");
    p->value = (*it)->value;
  }
  out.encoder.output_bias().value.setZero();

  TextEncoder text(std::shared_ptr<const BaseEncoder>(&base, [](const BaseEncoder*) {}));
  const auto& base_vocab = base.tokenizer.vocab();
  auto& rows = out.encoder.word_embeddings().value;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& tok = table.token(static_cast<std::int32_t>(i));
    const auto r = static_cast<Eigen::Index>(i);
    if (std::find(reserved_tokens().begin(), reserved_tokens().end(), tok) != reserved_tokens().end()) {
      rows.row(r) = base.model.word_embeddings().value.row(base_vocab.at(tok));
      continue;
    }
    if (auto id = parse_id_token(tok)) {
      const Vec* v = matrix.find(*id);
      if (!v) throw Error(Errc::missing_row, "embedding matrix has no row for pictogram " + tok);
      rows.row(r) = v->transpose();
      continue;
    }
    try {
      rows.row(r) = caption_embedding(text, tok).transpose();
    } catch (const Error&) {
      rows.row(r) = base.model.word_embeddings().value.row(base_vocab.unk());
    }
  }
  return out;
}

inline constexpr int kAdaptedFormat = 1;

// Directory layout: manifest.json, tokens.txt, weights.bin. The manifest pins
// the token table and weight digests so damage is detected on load.
inline void save_checkpoint(const AdaptedModel& m, const std::filesystem::path& dir,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  nn::write_directory_atomically(dir, [&](const std::filesystem::path& tmp) {
    m.table.save(tmp / "tokens.txt");
    nn::save_weights(m.encoder, tmp / "weights.bin");
    const auto weights_sha = sha256_hex(aacpred::detail::read_file(tmp / "weights.bin", Errc::checkpoint_io));
    nlohmann::json manifest = {{"format_version", kAdaptedFormat},
                               {"kind", "adapted"},
                               {"strategy", strategy_name(m.strategy)},
                               {"h", m.hidden()},
                               {"token_table_hash", m.table.content_hash()},
                               {"token_count", m.table.size()},
                               {"vocab_hash", m.vocab_hash},
                               {"epoch", m.epoch},
                               {"base_encoder_id", m.base_encoder_id},
                               {"encoder", m.encoder.config().to_json()},
                               {"weights_sha256", weights_sha}};
    if (!extra.is_null() && !extra.empty()) manifest["extra"] = extra;
    aacpred::detail::write_json_file(tmp / "manifest.json", manifest);
  });
}

inline nlohmann::json read_checkpoint_manifest(const std::filesystem::path& dir) {
  auto j = aacpred::detail::read_json_file(dir / "manifest.json");
  if (j.value("format_version", 0) != kAdaptedFormat)
    throw Error(Errc::version_mismatch, "unsupported checkpoint format in " + dir.string());
  if (j.value("kind", "") != "adapted") throw Error(Errc::version_mismatch, dir.string() + " is not an adapted model");
  return j;
}

/// Short stable name for a checkpoint: strategy plus a weight digest prefix.
inline std::string checkpoint_model_id(const nlohmann::json& manifest) {
  return manifest.at("strategy").get<std::string>() + "-" + manifest.at("weights_sha256").get<std::string>().substr(0, 12);
}

// With `vocab`, the checkpoint must have been built against the same id set
// (VersionMismatch otherwise).
inline AdaptedModel load_checkpoint(const std::filesystem::path& dir, const Vocabulary* vocab = nullptr) {
  nlohmann::json manifest;
  try {
    manifest = read_checkpoint_manifest(dir);
    AdaptedModel m;
    m.table = TokenTable::load(dir / "tokens.txt");
    if (m.table.content_hash() != manifest.at("token_table_hash").get<std::string>())
      throw Error(Errc::checkpoint_io, "tokens.txt does not match the manifest digest");
    const auto weights = aacpred::detail::read_file(dir / "weights.bin", Errc::checkpoint_io);
    if (sha256_hex(weights) != manifest.at("weights_sha256").get<std::string>())
      throw Error(Errc::checkpoint_io, "weights.bin does not match the manifest digest");
    auto cfg = nn::EncoderConfig::from_json(manifest.at("encoder"));
    if (static_cast<std::size_t>(cfg.vocab_size) != m.table.size())
      throw Error(Errc::checkpoint_io, "encoder shape disagrees with the token table");
    m.encoder = nn::Transformer(cfg);
    nn::load_weights(m.encoder, dir / "weights.bin");
    m.strategy = parse_strategy(manifest.at("strategy").get<std::string>());
    m.base_encoder_id = manifest.value("base_encoder_id", "");
    m.vocab_hash = manifest.value("vocab_hash", "");
    m.epoch = manifest.value("epoch", 0);
    reserved_flags(m.table);
    if (vocab) {
      if (m.vocab_hash != vocab->id_hash())
        throw Error(Errc::version_mismatch, "checkpoint " + dir.string() + " was built for a different vocabulary");
      for (const auto& tok : m.table.tokens())
        if (auto id = parse_id_token(tok); id && !vocab->contains(*id))
          throw Error(Errc::version_mismatch, "checkpoint token " + tok + " is not in the supplied vocabulary");
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::checkpoint_io, dir.string() + ": " + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == Errc::invalid_config) throw Error(Errc::checkpoint_io, ex.what());
    throw;
  }
}

}  // namespace aacpred::model

#endif  // AACPRED_MODEL_ADAPTED_MODEL_HPP
