#ifndef AACPRED_TEXT_TO_PICTOGRAM_HPP
#define AACPRED_TEXT_TO_PICTOGRAM_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/encoder.hpp"
#include "aacpred/error.hpp"
#include "aacpred/lemmatizer.hpp"
#include "aacpred/picto_embeddings.hpp"
#include "aacpred/text.hpp"
#include "aacpred/vocabulary.hpp"

namespace aacpred {

/// A lemma (or merged expression) with the byte range of its source words.
struct LemmaToken {
  std::string lemma;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Greedy left-to-right longest match. A run of words merges when its joined
// lemmas form a lexicon entry; the joined surface forms are tried second so an
// expression listed with an inflected word still matches.
inline std::vector<LemmaToken> tokenize_mwe_spans(std::string_view text, const std::set<std::string>& lexicon,
                                                  const Lemmatizer& lemmatizer) {
  auto spans = text::word_spans(text);
  std::vector<std::string> surface;
  std::vector<std::string> lemmas;
  for (const auto& s : spans) {
    surface.push_back(text::to_lower(s.word));
    lemmas.push_back(lemmatizer.lemma(surface.back()));
  }
  std::size_t longest = 1;
  for (const auto& m : lexicon) longest = std::max(longest, text::split_whitespace(m).size());

  std::vector<LemmaToken> out;
  std::size_t i = 0;
  while (i < spans.size()) {
    std::size_t taken = 1;
    std::string merged = lemmas[i];
    for (std::size_t n = std::min(longest, spans.size() - i); n >= 2; --n) {
      std::vector<std::string> by_lemma(lemmas.begin() + i, lemmas.begin() + i + n);
      std::vector<std::string> by_surface(surface.begin() + i, surface.begin() + i + n);
      auto a = text::join(by_lemma, " ");
      auto b = text::join(by_surface, " ");
      if (lexicon.count(a)) {
        merged = a;
      } else if (lexicon.count(b)) {
        merged = b;
      } else {
        continue;
      }
      taken = n;
      break;
    }
    out.push_back({merged, spans[i].begin, spans[i + taken - 1].end});
    i += taken;
  }
  return out;
}

inline std::vector<std::string> tokenize_mwe(std::string_view text, const std::set<std::string>& lexicon,
                                             const Lemmatizer& lemmatizer) {
  std::vector<std::string> out;
  for (auto& t : tokenize_mwe_spans(text, lexicon, lemmatizer)) out.push_back(std::move(t.lemma));
  return out;
}

/// Sum of the last four layers at the start marker over the entry's definition text.
inline Vec encode_pictogram_sense(const EncoderHandle& encoder, const PictogramEntry& entry) {
  if (entry.keywords.empty()) throw Error(Errc::encoder_failure, "entry " + entry.id.str() + " has no keywords");
  auto states = encoder.encode(definition_text(entry));
  Vec v = sum_last_layers(states, EncoderHandle::marker_position());
  if (static_cast<std::size_t>(v.size()) != encoder.hidden_size())
    throw Error(Errc::encoder_failure, "sense vector width differs from hidden size");
  return v;
}

// Encodes the whole sentence and averages the per-position last-four-layer
// sums of every subtoken overlapping [begin, end).
inline Vec encode_token_in_context(const EncoderHandle& encoder, std::string_view sentence, std::size_t begin,
                                   std::size_t end) {
  if (begin >= end || end > sentence.size())
    throw Error(Errc::span_out_of_range, "span [" + std::to_string(begin) + ", " + std::to_string(end) +
                                             ") outside a " + std::to_string(sentence.size()) + "-byte sentence");
  auto pieces = encoder.subtokenize(sentence);
  auto states = encoder.encode(sentence);
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].begin < end && pieces[i].end > begin && i + 1 < states.positions()) positions.push_back(i + 1);
  }
  if (positions.empty()) throw Error(Errc::span_out_of_range, "span covers no subtoken");
  Vec acc = Vec::Zero(static_cast<Eigen::Index>(encoder.hidden_size()));
  for (auto p : positions) acc += sum_last_layers(states, p);
  if (positions.size() == 1) return acc;
  return acc / static_cast<float>(positions.size());
}

/// 1-nearest neighbour under cosine distance; equal distances go to the smaller id.
inline PictogramId disambiguate(const Vec& context, const std::vector<std::pair<PictogramId, Vec>>& candidates) {
  if (candidates.empty()) throw Error(Errc::malformed_input, "no candidates to disambiguate");
  if (candidates.size() == 1) return candidates.front().first;
  PictogramId best = candidates.front().first;
  float best_d = cosine_distance(context, candidates.front().second);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& [id, v] = candidates[i];
    const float d = cosine_distance(context, v);
    if (d < best_d || (d == best_d && id < best)) {
      best = id;
      best_d = d;
    }
  }
  return best;
}

/// Per-pictogram sense vectors, computed lazily and shareable between threads.
class SenseCache {
 public:
  SenseCache() = default;
  SenseCache(std::string encoder_id, std::size_t h) : encoder_id_(std::move(encoder_id)), h_(h) {}
  SenseCache(SenseCache&& o) noexcept {
    std::lock_guard lock(o.mutex_);
    encoder_id_ = std::move(o.encoder_id_);
    h_ = o.h_;
    vectors_ = std::move(o.vectors_);
  }

  const std::string& encoder_id() const { return encoder_id_; }
  std::size_t hidden_size() const { return h_; }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return vectors_.size();
  }

  Vec get(const EncoderHandle& encoder, const PictogramEntry& entry) {
    {
      std::lock_guard lock(mutex_);
      bind(encoder);
      if (auto it = vectors_.find(entry.id); it != vectors_.end()) return it->second;
    }
    Vec v = encode_pictogram_sense(encoder, entry);
    std::lock_guard lock(mutex_);
    return vectors_.emplace(entry.id, std::move(v)).first->second;
  }

  void put(PictogramId id, Vec v) {
    std::lock_guard lock(mutex_);
    if (h_ == 0) h_ = static_cast<std::size_t>(v.size());
    if (static_cast<std::size_t>(v.size()) != h_) throw Error(Errc::dimension_mismatch, "sense vector width");
    vectors_.insert_or_assign(id, std::move(v));
  }

  /// Encodes every ambiguous pictogram of the vocabulary up front.
  void warm(const EncoderHandle& encoder, const Vocabulary& vocab) {
    std::set<PictogramId> ambiguous;
    for (const auto& [lemma, ids] : vocab.term_index())
      if (ids.size() > 1) ambiguous.insert(ids.begin(), ids.end());
    for (auto id : ambiguous) get(encoder, vocab.at(id));
  }

  // JSONL: a header {"encoder_id", "h"} then one {"id", "vector"} per line.
  void save(const std::filesystem::path& path) const {
    std::lock_guard lock(mutex_);
    std::ofstream out(path);
    if (!out) throw Error(Errc::checkpoint_io, "cannot write " + path.string());
    out << nlohmann::json{{"encoder_id", encoder_id_}, {"h", h_}}.dump() << '\n';
    for (const auto& [id, v] : vectors_)
      out << nlohmann::json{{"id", id.value}, {"vector", std::vector<float>(v.data(), v.data() + v.size())}}.dump()
          << '\n';
  }

  static SenseCache load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::checkpoint_io, "cannot open " + path.string());
    std::string line;
    SenseCache cache;
    bool header = true;
    while (std::getline(in, line)) {
      if (text::trim_view(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::checkpoint_io, path.string() + ": " + ex.what());
      }
      if (header) {
        cache.encoder_id_ = j.at("encoder_id").get<std::string>();
        cache.h_ = j.at("h").get<std::size_t>();
        header = false;
        continue;
      }
      auto values = j.at("vector").get<std::vector<float>>();
      if (values.size() != cache.h_) throw Error(Errc::checkpoint_io, "sense vector width differs from header");
      cache.vectors_.emplace(PictogramId(j.at("id").get<std::int64_t>()),
                             Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    if (header) throw Error(Errc::checkpoint_io, path.string() + " has no header");
    return cache;
  }

 private:
  void bind(const EncoderHandle& encoder) {
    if (encoder_id_.empty() && vectors_.empty()) {
      encoder_id_ = encoder.id();
      h_ = encoder.hidden_size();
    } else if (encoder_id_ != encoder.id() || h_ != encoder.hidden_size()) {
      throw Error(Errc::version_mismatch, "sense cache built with encoder '" + encoder_id_ + "', got '" +
                                              encoder.id() + "'");
    }
  }

  mutable std::mutex mutex_;
  std::string encoder_id_;
  std::size_t h_ = 0;
  std::map<PictogramId, Vec> vectors_;
};

struct PictoToken {
  enum class Kind { pictogram, oov_word };
  Kind kind = Kind::oov_word;
  PictogramId id;
  std::string literal;

  static PictoToken pictogram(PictogramId id, std::string literal = {}) {
    return {Kind::pictogram, id, std::move(literal)};
  }
  static PictoToken oov(std::string literal) { return {Kind::oov_word, PictogramId{}, std::move(literal)}; }

  bool is_pictogram() const { return kind == Kind::pictogram; }

  /// Spelling in the model's token table: the decimal id or the literal.
  std::string table_token() const { return is_pictogram() ? id.str() : literal; }

  bool operator==(const PictoToken& o) const {
    return kind == o.kind && (is_pictogram() ? id == o.id : literal == o.literal);
  }
};

struct PictoSentence {
  std::vector<PictoToken> tokens;
  std::string source_text;

  std::vector<std::string> table_tokens() const {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.table_token());
    return out;
  }
};

/// Lemmatizer that leaves every vocabulary lemma untouched.
inline PortugueseLemmatizer vocabulary_lemmatizer(const Vocabulary& vocab) {
  std::set<std::string> known;
  for (const auto& [lemma, ids] : vocab.term_index()) known.insert(lemma);
  return PortugueseLemmatizer(std::move(known));
}

inline PictoSentence sentence_to_picto(std::string_view text, const Vocabulary& vocab, const Lemmatizer& lemmatizer,
                                       const EncoderHandle& encoder, SenseCache& cache) {
  PictoSentence out;
  out.source_text = std::string(text);
  for (const auto& tok : tokenize_mwe_spans(text, vocab.mwe_lexicon(), lemmatizer)) {
    auto ids = lookup_term(vocab, tok.lemma);
    if (ids.empty()) {
      out.tokens.push_back(PictoToken::oov(tok.lemma));
    } else if (ids.size() == 1) {
      out.tokens.push_back(PictoToken::pictogram(ids.front(), tok.lemma));
    } else {
      Vec ctx = encode_token_in_context(encoder, text, tok.begin, tok.end);
      std::vector<std::pair<PictogramId, Vec>> candidates;
      for (auto id : ids) candidates.emplace_back(id, cache.get(encoder, vocab.at(id)));
      out.tokens.push_back(PictoToken::pictogram(disambiguate(ctx, candidates), tok.lemma));
    }
  }
  if (out.tokens.empty()) throw Error(Errc::malformed_input, "sentence has no words: '" + out.source_text + "'");
  return out;
}

inline nlohmann::json picto_to_json(const PictoSentence& s) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : s.tokens) {
    if (t.is_pictogram())
      tokens.push_back({{"kind", "pictogram"}, {"id", t.id.value}});
    else
      tokens.push_back({{"kind", "oov_word"}, {"literal", t.literal}});
  }
  return {{"source_text", s.source_text}, {"tokens", tokens}};
}

inline PictoSentence picto_from_json(const nlohmann::json& j) {
  PictoSentence s;
  try {
    s.source_text = j.value("source_text", "");
    for (const auto& t : j.at("tokens")) {
      const auto kind = t.at("kind").get<std::string>();
      if (kind == "pictogram")
        s.tokens.push_back(PictoToken::pictogram(PictogramId(t.at("id").get<std::int64_t>())));
      else if (kind == "oov_word")
        s.tokens.push_back(PictoToken::oov(t.at("literal").get<std::string>()));
      else
        throw Error(Errc::malformed_input, "unknown token kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::malformed_input, std::string("picto sentence: ") + ex.what());
  }
  if (s.tokens.empty()) throw Error(Errc::malformed_input, "picto sentence without tokens");
  return s;
}

inline std::vector<PictoSentence> read_picto_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::malformed_input, "cannot open " + path.string());
  std::vector<PictoSentence> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim_view(line).empty()) continue;
    try {
      out.push_back(picto_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::malformed_input, path.string() + ":" + std::to_string(n) + ": " + ex.what());
    }
  }
  return out;
}

inline void write_picto_corpus(const std::vector<PictoSentence>& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::malformed_input, "cannot write " + path.string());
  for (const auto& s : corpus) out << picto_to_json(s).dump() << '\n';
}

}  // namespace aacpred

#endif  // AACPRED_TEXT_TO_PICTOGRAM_HPP
