#ifndef AACPRED_TEXT_HPP
#define AACPRED_TEXT_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace aacpred::text {

// Lowercases ASCII and the Latin-1 supplement block (À..Þ) in UTF-8 input.
// Diacritics are kept; no other folding happens.
inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto c = static_cast<unsigned char>(out[i]);
    if (c >= 'A' && c <= 'Z') {
      out[i] = static_cast<char>(c + 32);
    } else if (c == 0xC3 && i + 1 < out.size()) {
      auto d = static_cast<unsigned char>(out[i + 1]);
      if (d >= 0x80 && d <= 0x9E && d != 0x97) out[i + 1] = static_cast<char>(d + 0x20);
      ++i;
    }
  }
  return out;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim_view(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline std::string trim(std::string_view s) { return std::string(trim_view(s)); }

/// Trims and collapses internal whitespace runs to a single space.
inline std::string normalize_space(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : trim_view(s)) {
    if (is_space(c)) {
      pending = true;
      continue;
    }
    if (pending && !out.empty()) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Decodes one UTF-8 code point at `pos`; returns {code point, byte length}.
/// Invalid bytes decode as themselves with length 1.
inline std::pair<char32_t, std::size_t> decode_utf8(std::string_view s, std::size_t pos) {
  auto c = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t k) -> int {
    if (pos + k >= s.size()) return -1;
    auto d = static_cast<unsigned char>(s[pos + k]);
    return (d & 0xC0) == 0x80 ? (d & 0x3F) : -1;
  };
  if (c < 0x80) return {c, 1};
  if ((c & 0xE0) == 0xC0) {
    int b1 = cont(1);
    if (b1 >= 0) return {static_cast<char32_t>(((c & 0x1F) << 6) | b1), 2};
  } else if ((c & 0xF0) == 0xE0) {
    int b1 = cont(1), b2 = cont(2);
    if (b1 >= 0 && b2 >= 0) return {static_cast<char32_t>(((c & 0x0F) << 12) | (b1 << 6) | b2), 3};
  } else if ((c & 0xF8) == 0xF0) {
    int b1 = cont(1), b2 = cont(2), b3 = cont(3);
    if (b1 >= 0 && b2 >= 0 && b3 >= 0)
      return {static_cast<char32_t>(((c & 0x07) << 18) | (b1 << 12) | (b2 << 6) | b3), 4};
  }
  return {c, 1};
}

inline bool is_punct(char32_t cp) {
  if (cp < 0x80) {
    switch (cp) {
      case '.': case ',': case '!': case '?': case ';': case ':': case '"':
      case '(': case ')': case '[': case ']': case '{': case '}': case '/':
      case '\\': case '*': case '#': case '@': case '&': case '%': case '$':
      case '+': case '=': case '<': case '>': case '|': case '~': case '^':
      case '`': case '_': case '-': case '\'':
        return true;
      default:
        return false;
    }
  }
  switch (cp) {
    case 0x00A1: case 0x00BF: case 0x00AB: case 0x00BB:  // ¡ ¿ « »
    case 0x2013: case 0x2014: case 0x2018: case 0x2019:  // – — ‘ ’
    case 0x201C: case 0x201D: case 0x2026:               // “ ” …
      return true;
    default:
      return false;
  }
}

/// A word and its byte range in the source string.
struct WordSpan {
  std::string word;
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Splits on whitespace and punctuation. Hyphens and apostrophes between two
// word characters stay inside the word ("esconde-esconde", "d'água").
inline std::vector<WordSpan> word_spans(std::string_view s) {
  std::vector<WordSpan> out;
  std::size_t pos = 0;
  std::size_t word_begin = std::string_view::npos;
  auto flush = [&](std::size_t end) {
    if (word_begin != std::string_view::npos && end > word_begin)
      out.push_back({std::string(s.substr(word_begin, end - word_begin)), word_begin, end});
    word_begin = std::string_view::npos;
  };
  while (pos < s.size()) {
    auto [cp, len] = decode_utf8(s, pos);
    bool joiner = (cp == '-' || cp == '\'' || cp == 0x2019);
    if (joiner && word_begin != std::string_view::npos && pos + len < s.size()) {
      auto [next, nlen] = decode_utf8(s, pos + len);
      (void)nlen;
      if (!is_punct(next) && !(next < 0x80 && is_space(static_cast<char>(next)))) {
        pos += len;
        continue;
      }
    }
    if ((cp < 0x80 && is_space(static_cast<char>(cp))) || is_punct(cp)) {
      flush(pos);
    } else if (word_begin == std::string_view::npos) {
      word_begin = pos;
    }
    pos += len;
  }
  flush(s.size());
  return out;
}

/// Lowercased words with punctuation removed.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : word_spans(s)) out.push_back(to_lower(w.word));
  return out;
}

inline bool contains_space(std::string_view s) {
  for (char c : s)
    if (is_space(c)) return true;
  return false;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace aacpred::text

#endif  // AACPRED_TEXT_HPP
