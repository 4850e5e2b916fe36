#ifndef AACPRED_VOCABULARY_HPP
#define AACPRED_VOCABULARY_HPP

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/hash.hpp"
#include "aacpred/text.hpp"

namespace aacpred {

/// Pictogram identifier as published by the symbol set (ARASAAC `_id`).
struct PictogramId {
  std::int64_t value = 0;

  constexpr PictogramId() = default;
  constexpr explicit PictogramId(std::int64_t v) : value(v) {}

  friend constexpr auto operator<=>(PictogramId, PictogramId) = default;
  std::string str() const { return std::to_string(value); }
};

struct Keyword {
  std::string term;
  std::optional<std::string> definition;
  std::string lemma;
};

struct PictogramEntry {
  PictogramId id;
  std::vector<Keyword> keywords;
  std::optional<std::string> image_ref;

  /// First keyword: what a board shows under the picture.
  const std::string& caption() const { return keywords.front().term; }
};

/// Where pictogram bitmaps live. Local refs are only set for files that exist.
struct ImageSource {
  enum class Kind { none, local_dir, base_url };
  Kind kind = Kind::none;
  std::string location;

  std::optional<std::string> resolve(PictogramId id) const {
    switch (kind) {
      case Kind::none:
        return std::nullopt;
      case Kind::base_url: {
        std::string base = location;
        while (!base.empty() && base.back() == '/') base.pop_back();
        return base + "/" + id.str();
      }
      case Kind::local_dir: {
        auto p = std::filesystem::path(location) / (id.str() + ".png");
        if (std::filesystem::exists(p)) return p.string();
        return std::nullopt;
      }
    }
    return std::nullopt;
  }
};

/// The controlled vocabulary. Immutable once built.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Validates and indexes. Terms are lowercased and whitespace-normalized;
  // repeated keywords inside one entry are dropped.
  static Vocabulary from_entries(std::vector<PictogramEntry> entries) {
    if (entries.empty()) throw Error(Errc::empty_vocabulary, "vocabulary has no entries");
    Vocabulary v;
    for (auto& e : entries) {
      if (e.id.value <= 0)
        throw Error(Errc::malformed_dump, "non-positive pictogram id " + e.id.str());
      std::vector<Keyword> kept;
      std::set<std::string> seen;
      for (auto& k : e.keywords) {
        Keyword nk;
        nk.term = text::to_lower(text::normalize_space(k.term));
        if (nk.term.empty()) continue;
        nk.lemma = k.lemma.empty() ? nk.term : text::to_lower(text::normalize_space(k.lemma));
        if (nk.lemma.empty()) nk.lemma = nk.term;
        if (k.definition) {
          auto d = text::normalize_space(*k.definition);
          if (!d.empty()) nk.definition = d;
        }
        if (!seen.insert(nk.term).second) continue;
        kept.push_back(std::move(nk));
      }
      if (kept.empty())
        throw Error(Errc::malformed_dump, "entry " + e.id.str() + " has no keywords");
      e.keywords = std::move(kept);
      auto id = e.id;
      if (!v.entries_.emplace(id, std::move(e)).second)
        throw Error(Errc::duplicate_id, "pictogram id " + id.str() + " appears twice");
    }
    for (const auto& [id, e] : v.entries_) {
      for (const auto& k : e.keywords) {
        auto& ids = v.term_index_[k.lemma];
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
      }
    }
    for (auto& [lemma, ids] : v.term_index_) {
      std::sort(ids.begin(), ids.end());
      if (text::contains_space(lemma)) v.mwe_lexicon_.insert(lemma);
    }
    return v;
  }

  const std::map<PictogramId, PictogramEntry>& entries() const { return entries_; }
  const std::map<std::string, std::vector<PictogramId>>& term_index() const { return term_index_; }
  const std::set<std::string>& mwe_lexicon() const { return mwe_lexicon_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(PictogramId id) const { return entries_.count(id) != 0; }

  const PictogramEntry* find(PictogramId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const PictogramEntry& at(PictogramId id) const {
    auto* e = find(id);
    if (!e) throw Error(Errc::unknown_token, "pictogram " + id.str() + " not in vocabulary");
    return *e;
  }

  /// Distinct keyword terms (words and expressions), sorted.
  std::vector<std::string> unique_terms() const {
    std::set<std::string> terms;
    for (const auto& [id, e] : entries_)
      for (const auto& k : e.keywords) terms.insert(k.term);
    return {terms.begin(), terms.end()};
  }

  std::size_t keyword_count() const {
    std::size_t n = 0;
    for (const auto& [id, e] : entries_) n += e.keywords.size();
    return n;
  }

  /// Digest of the sorted id list; checkpoints record it to detect mismatched vocabularies.
  std::string id_hash() const {
    std::string buf;
    for (const auto& [id, e] : entries_) buf += id.str() + "\n";
    return sha256_hex(buf);
  }

  std::size_t skipped_entries() const { return skipped_; }

 private:
  friend Vocabulary parse_arasaac_json(std::string_view, const ImageSource&);

  std::map<PictogramId, PictogramEntry> entries_;
  std::map<std::string, std::vector<PictogramId>> term_index_;
  std::set<std::string> mwe_lexicon_;
  std::size_t skipped_ = 0;
};

enum class VocabFormat { autodetect, arasaac_json, normalized_jsonl };

namespace detail {

inline std::string read_file(const std::filesystem::path& path, Errc err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(err, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::int64_t json_id(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw Error(Errc::malformed_dump, std::string("missing integer field '") + key + "'");
  return j[key].get<std::int64_t>();
}

}  // namespace detail

// Public ARASAAC `pictograms/all/{locale}` response. Extra fields are ignored.
// Entries whose keyword list is empty after normalization are skipped and
// counted in skipped_entries().
inline Vocabulary parse_arasaac_json(std::string_view text, const ImageSource& images = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::malformed_dump, ex.what());
  }
  if (!doc.is_array()) throw Error(Errc::malformed_dump, "expected a JSON array of pictograms");
  std::vector<PictogramEntry> entries;
  std::size_t skipped = 0;
  for (const auto& obj : doc) {
    if (!obj.is_object()) throw Error(Errc::malformed_dump, "pictogram record is not an object");
    PictogramEntry e;
    e.id = PictogramId(detail::json_id(obj, "_id"));
    if (obj.contains("keywords")) {
      if (!obj["keywords"].is_array()) throw Error(Errc::malformed_dump, "keywords must be an array");
      for (const auto& kw : obj["keywords"]) {
        if (!kw.is_object() || !kw.contains("keyword") || !kw["keyword"].is_string()) continue;
        Keyword k;
        k.term = kw["keyword"].get<std::string>();
        if (kw.contains("meaning") && kw["meaning"].is_string()) k.definition = kw["meaning"].get<std::string>();
        if (text::trim_view(k.term).empty()) continue;
        e.keywords.push_back(std::move(k));
      }
    }
    if (e.keywords.empty()) {
      ++skipped;
      continue;
    }
    e.image_ref = images.resolve(e.id);
    entries.push_back(std::move(e));
  }
  auto v = Vocabulary::from_entries(std::move(entries));
  v.skipped_ = skipped;
  return v;
}

inline nlohmann::json entry_to_json(const PictogramEntry& e) {
  nlohmann::json kws = nlohmann::json::array();
  for (const auto& k : e.keywords) {
    nlohmann::json kj = {{"term", k.term}, {"lemma", k.lemma}};
    kj["definition"] = k.definition ? nlohmann::json(*k.definition) : nlohmann::json(nullptr);
    kws.push_back(std::move(kj));
  }
  nlohmann::json j = {{"id", e.id.value}, {"keywords", std::move(kws)}};
  j["image_ref"] = e.image_ref ? nlohmann::json(*e.image_ref) : nlohmann::json(nullptr);
  return j;
}

/// Normalized format: one entry per line.
inline Vocabulary parse_vocabulary_jsonl(std::string_view text, const ImageSource& images = {}) {
  std::vector<PictogramEntry> entries;
  std::size_t line_no = 0;
  for (const auto& line : text::split(text, '\n')) {
    ++line_no;
    if (text::trim_view(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::malformed_dump, "line " + std::to_string(line_no) + ": " + ex.what());
    }
    PictogramEntry e;
    e.id = PictogramId(detail::json_id(obj, "id"));
    if (!obj.contains("keywords") || !obj["keywords"].is_array())
      throw Error(Errc::malformed_dump, "line " + std::to_string(line_no) + ": keywords missing");
    for (const auto& kw : obj["keywords"]) {
      if (!kw.contains("term") || !kw["term"].is_string())
        throw Error(Errc::malformed_dump, "line " + std::to_string(line_no) + ": keyword without term");
      Keyword k;
      k.term = kw["term"].get<std::string>();
      if (kw.contains("lemma") && kw["lemma"].is_string()) k.lemma = kw["lemma"].get<std::string>();
      if (kw.contains("definition") && kw["definition"].is_string())
        k.definition = kw["definition"].get<std::string>();
      e.keywords.push_back(std::move(k));
    }
    if (obj.contains("image_ref") && obj["image_ref"].is_string())
      e.image_ref = obj["image_ref"].get<std::string>();
    else
      e.image_ref = images.resolve(e.id);
    entries.push_back(std::move(e));
  }
  return Vocabulary::from_entries(std::move(entries));
}

inline std::string vocabulary_to_jsonl(const Vocabulary& v) {
  std::string out;
  for (const auto& [id, e] : v.entries()) out += entry_to_json(e).dump() + "\n";
  return out;
}

inline void save_vocabulary(const Vocabulary& v, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::malformed_dump, "cannot write " + path.string());
  out << vocabulary_to_jsonl(v);
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path,
                                  VocabFormat format = VocabFormat::autodetect,
                                  const ImageSource& images = {}) {
  auto content = detail::read_file(path, Errc::malformed_dump);
  if (format == VocabFormat::autodetect) {
    auto head = text::trim_view(content);
    format = (!head.empty() && head.front() == '[') ? VocabFormat::arasaac_json
                                                     : VocabFormat::normalized_jsonl;
  }
  if (format == VocabFormat::arasaac_json) return parse_arasaac_json(content, images);
  return parse_vocabulary_jsonl(content, images);
}

/// Candidate pictograms for a lemma, ascending id; empty when out of vocabulary.
inline std::vector<PictogramId> lookup_term(const Vocabulary& vocab, std::string_view lemma) {
  auto key = text::to_lower(text::normalize_space(lemma));
  auto it = vocab.term_index().find(key);
  if (it == vocab.term_index().end()) return {};
  return it->second;
}

inline std::set<std::string> mwe_lexicon(const Vocabulary& vocab) { return vocab.mwe_lexicon(); }

}  // namespace aacpred

template <>
struct std::hash<aacpred::PictogramId> {
  std::size_t operator()(aacpred::PictogramId id) const noexcept {
    return std::hash<std::int64_t>{}(id.value);
  }
};

#endif  // AACPRED_VOCABULARY_HPP
