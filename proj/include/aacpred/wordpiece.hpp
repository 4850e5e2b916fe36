#ifndef AACPRED_WORDPIECE_HPP
#define AACPRED_WORDPIECE_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aacpred/encoder.hpp"
#include "aacpred/error.hpp"
#include "aacpred/hash.hpp"
#include "aacpred/text.hpp"

namespace aacpred {

/// Dense string <-> index table. Used both for subword vocabularies and the
/// pictogram token table.
class TokenTable {
 public:
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kStart = "[CLS]";
  static constexpr const char* kEnd = "[SEP]";
  static constexpr const char* kMask = "[MASK]";

  TokenTable() = default;
  explicit TokenTable(std::vector<std::string> tokens) : tokens_(std::move(tokens)) { reindex(); }

  static TokenTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::checkpoint_io, "cannot open token list " + path.string());
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      toks.push_back(line);
    }
    while (!toks.empty() && toks.back().empty()) toks.pop_back();
    return TokenTable(std::move(toks));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::checkpoint_io, "cannot write token list " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::int32_t idx) const { return tokens_.at(static_cast<std::size_t>(idx)); }

  std::int32_t find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    return it == index_.end() ? -1 : it->second;
  }
  bool contains(std::string_view tok) const { return find(tok) >= 0; }

  std::int32_t at(std::string_view tok) const {
    auto i = find(tok);
    if (i < 0) throw Error(Errc::unknown_token, "token '" + std::string(tok) + "' not in table");
    return i;
  }

  std::int32_t pad() const { return find(kPad); }
  std::int32_t unk() const { return find(kUnk); }
  std::int32_t start() const { return find(kStart); }
  std::int32_t end() const { return find(kEnd); }
  std::int32_t mask() const { return find(kMask); }

  bool is_reserved(std::int32_t idx) const {
    return idx == pad() || idx == unk() || idx == start() || idx == end() || idx == mask();
  }

  std::string content_hash() const {
    std::string buf;
    for (const auto& t : tokens_) buf += t + "\n";
    return sha256_hex(buf);
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second)
        throw Error(Errc::invalid_config, "duplicate token '" + tokens_[i] + "'");
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// BERT-style subword tokenizer: whitespace and punctuation pre-split
// (punctuation becomes its own piece), then greedy longest-match-first
// WordPiece with "##" continuation pieces.
class WordPieceTokenizer {
 public:
  WordPieceTokenizer() = default;
  WordPieceTokenizer(TokenTable vocab, bool lowercase) : vocab_(std::move(vocab)), lowercase_(lowercase) {}

  const TokenTable& vocab() const { return vocab_; }
  bool lowercase() const { return lowercase_; }

  std::vector<Subtoken> tokenize(std::string_view input) const {
    std::string text = lowercase_ ? text::to_lower(input) : std::string(input);
    std::vector<Subtoken> out;
    std::size_t pos = 0;
    std::size_t word_begin = std::string::npos;
    auto flush = [&](std::size_t end) {
      if (word_begin != std::string::npos && end > word_begin) wordpiece(text, word_begin, end, out);
      word_begin = std::string::npos;
    };
    while (pos < text.size()) {
      auto [cp, len] = text::decode_utf8(text, pos);
      if (cp < 0x80 && text::is_space(static_cast<char>(cp))) {
        flush(pos);
      } else if (text::is_punct(cp)) {
        flush(pos);
        wordpiece(text, pos, pos + len, out);
      } else if (word_begin == std::string::npos) {
        word_begin = pos;
      }
      pos += len;
    }
    flush(text.size());
    return out;
  }

 private:
  void wordpiece(const std::string& text, std::size_t begin, std::size_t end, std::vector<Subtoken>& out) const {
    const std::int32_t unk = vocab_.unk();
    if (end - begin > 200) {
      out.push_back({unk, begin, end});
      return;
    }
    std::vector<Subtoken> pieces;
    std::size_t start = begin;
    while (start < end) {
      std::size_t stop = end;
      std::int32_t found = -1;
      while (stop > start) {
        std::string piece = text.substr(start, stop - start);
        if (start > begin) piece = "##" + piece;
        found = vocab_.find(piece);
        if (found >= 0) break;
        // step back one whole code point
        --stop;
        while (stop > start && (static_cast<unsigned char>(text[stop]) & 0xC0) == 0x80) --stop;
      }
      if (found < 0) {
        out.push_back({unk, begin, end});
        return;
      }
      pieces.push_back({found, start, stop});
      start = stop;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
  }

  TokenTable vocab_;
  bool lowercase_ = false;
};

/// Builds a small subword vocabulary that covers `words` exactly plus every
/// printable ASCII character, the Portuguese letters and every code point seen.
inline TokenTable build_subword_vocab(const std::vector<std::string>& words) {
  std::vector<std::string> toks = {TokenTable::kPad, TokenTable::kUnk, TokenTable::kStart, TokenTable::kEnd,
                                   TokenTable::kMask};
  std::set<std::string> whole, chars;
  for (char c = 0x21; c < 0x7f; ++c)
    if (c < 'A' || c > 'Z') chars.insert(std::string(1, c));
  for (const char* c : {"á", "à", "â", "ã", "ç", "é", "ê", "í", "ó", "ô", "õ", "ú", "ü"}) chars.insert(c);
  for (const auto& w : words) {
    for (auto& ws : text::word_spans(w)) whole.insert(ws.word);
    std::size_t pos = 0;
    while (pos < w.size()) {
      auto [cp, len] = text::decode_utf8(w, pos);
      if (!(cp < 0x80 && text::is_space(static_cast<char>(cp)))) chars.insert(w.substr(pos, len));
      pos += len;
    }
  }
  std::set<std::string> all;
  for (const auto& c : chars) {
    all.insert(c);
    all.insert("##" + c);
  }
  all.insert(whole.begin(), whole.end());
  for (const auto& t : all)
    if (t.front() != '[') toks.push_back(t);
  return TokenTable(std::move(toks));
}

}  // namespace aacpred

#endif  // AACPRED_WORDPIECE_HPP
