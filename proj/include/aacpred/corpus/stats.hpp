#ifndef AACPRED_CORPUS_STATS_HPP
#define AACPRED_CORPUS_STATS_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/text.hpp"

namespace aacpred::corpus {

using Ngram = std::vector<std::string>;

struct CorpusStats {
  std::size_t total_words = 0;
  std::size_t unique_words = 0;
  std::size_t total_sentences = 0;
  std::size_t length_min = 0;
  std::size_t length_max = 0;
  double length_mean = 0.0;
  std::size_t length_mode = 0;
  std::size_t length_mode_count = 0;
  std::map<std::string, std::size_t> word_freq;
  std::map<std::string, std::size_t> stopword_freq;
  std::map<Ngram, std::size_t> bigram_freq;
  std::map<Ngram, std::size_t> trigram_freq;
};

inline std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::malformed_input, "cannot open stopword list " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::to_lower(text::trim(line));
    if (!t.empty() && t.front() != '#') out.insert(t);
  }
  return out;
}

// Words are lowercased with punctuation removed; n-grams never cross a
// sentence boundary. Sentences without words are ignored.
inline CorpusStats corpus_stats(const std::vector<std::string>& sentences, const std::set<std::string>& stopwords) {
  CorpusStats st;
  std::map<std::size_t, std::size_t> lengths;
  std::set<std::string> vocab;
  st.length_min = std::numeric_limits<std::size_t>::max();
  for (const auto& s : sentences) {
    auto w = text::words(s);
    if (w.empty()) continue;
    ++st.total_sentences;
    st.total_words += w.size();
    ++lengths[w.size()];
    st.length_min = std::min(st.length_min, w.size());
    st.length_max = std::max(st.length_max, w.size());
    for (const auto& x : w) {
      vocab.insert(x);
      ++(stopwords.count(x) ? st.stopword_freq : st.word_freq)[x];
    }
    for (std::size_t i = 0; i + 1 < w.size(); ++i) ++st.bigram_freq[{w[i], w[i + 1]}];
    for (std::size_t i = 0; i + 2 < w.size(); ++i) ++st.trigram_freq[{w[i], w[i + 1], w[i + 2]}];
  }
  if (st.total_sentences == 0) {
    st.length_min = 0;
    return st;
  }
  st.unique_words = vocab.size();
  st.length_mean = static_cast<double>(st.total_words) / static_cast<double>(st.total_sentences);
  for (const auto& [len, count] : lengths) {
    if (count > st.length_mode_count) {
      st.length_mode = len;
      st.length_mode_count = count;
    }
  }
  return st;
}

/// Highest counts first; equal counts in key order.
template <typename Key>
std::vector<std::pair<Key, std::size_t>> top_n(const std::map<Key, std::size_t>& freq, std::size_t n) {
  std::vector<std::pair<Key, std::size_t>> v(freq.begin(), freq.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (v.size() > n) v.resize(n);
  return v;
}

inline std::string ngram_label(const Ngram& g) { return text::join(g, " "); }

inline nlohmann::json stats_to_json(const CorpusStats& st, std::size_t top = 20) {
  auto words = [&](const std::map<std::string, std::size_t>& m) {
    nlohmann::json a = nlohmann::json::array();
    for (auto& [k, c] : top_n(m, top)) a.push_back({k, c});
    return a;
  };
  auto grams = [&](const std::map<Ngram, std::size_t>& m) {
    nlohmann::json a = nlohmann::json::array();
    for (auto& [k, c] : top_n(m, top)) a.push_back({ngram_label(k), c});
    return a;
  };
  return {{"total_sentences", st.total_sentences},
          {"total_words", st.total_words},
          {"unique_words", st.unique_words},
          {"length", {{"min", st.length_min},
                      {"max", st.length_max},
                      {"mean", st.length_mean},
                      {"mode", st.length_mode},
                      {"mode_count", st.length_mode_count}}},
          {"top_words", words(st.word_freq)},
          {"top_stopwords", words(st.stopword_freq)},
          {"top_bigrams", grams(st.bigram_freq)},
          {"top_trigrams", grams(st.trigram_freq)}};
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Horizontal bar chart as a standalone SVG document.
inline std::string svg_bar_chart(const std::string& title,
                                 const std::vector<std::pair<std::string, std::size_t>>& bars) {
  const int row = 22, left = 170, width = 640, top = 40;
  const int height = top + row * static_cast<int>(bars.size()) + 20;
  std::size_t peak = 1;
  for (const auto& b : bars) peak = std::max(peak, b.second);
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"10\" y=\"22\" font-size=\"15\">" + detail::xml_escape(title) + "</text>\n";
  const int span = width - left - 70;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const int y = top + static_cast<int>(i) * row;
    const int w = static_cast<int>(static_cast<double>(span) * static_cast<double>(bars[i].second) /
                                   static_cast<double>(peak));
    svg += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(y + 14) +
           "\" text-anchor=\"end\">" + detail::xml_escape(bars[i].first) + "</text>\n";
    svg += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(y + 3) + "\" width=\"" +
           std::to_string(std::max(w, 1)) + "\" height=\"" + std::to_string(row - 6) + "\" fill=\"#4c72b0\"/>\n";
    svg += "<text x=\"" + std::to_string(left + w + 4) + "\" y=\"" + std::to_string(y + 14) + "\">" +
           std::to_string(bars[i].second) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

/// Writes words.svg, stopwords.svg, bigrams.svg and trigrams.svg into `dir`.
inline std::vector<std::filesystem::path> write_frequency_charts(const CorpusStats& st,
                                                                  const std::filesystem::path& dir,
                                                                  std::size_t top = 20) {
  std::filesystem::create_directories(dir);
  auto labelled = [&](const std::map<Ngram, std::size_t>& m) {
    std::vector<std::pair<std::string, std::size_t>> v;
    for (auto& [k, c] : top_n(m, top)) v.emplace_back(ngram_label(k), c);
    return v;
  };
  std::vector<std::pair<std::string, std::string>> charts = {
      {"words.svg", svg_bar_chart("Most frequent words (stopwords excluded)", top_n(st.word_freq, top))},
      {"stopwords.svg", svg_bar_chart("Most frequent stopwords", top_n(st.stopword_freq, top))},
      {"bigrams.svg", svg_bar_chart("Most frequent bigrams", labelled(st.bigram_freq))},
      {"trigrams.svg", svg_bar_chart("Most frequent trigrams", labelled(st.trigram_freq))},
  };
  std::vector<std::filesystem::path> written;
  for (const auto& [name, svg] : charts) {
    std::ofstream(dir / name) << svg;
    written.push_back(dir / name);
  }
  return written;
}

}  // namespace aacpred::corpus

#endif  // AACPRED_CORPUS_STATS_HPP
