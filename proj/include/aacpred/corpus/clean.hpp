#ifndef AACPRED_CORPUS_CLEAN_HPP
#define AACPRED_CORPUS_CLEAN_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "aacpred/corpus/sentence.hpp"
#include "aacpred/error.hpp"
#include "aacpred/text.hpp"

namespace aacpred::corpus {

using PerplexityScorer = std::function<double(std::string_view)>;
using ToxicityFilter = std::function<bool(std::string_view)>;
using TokenCounter = std::function<std::size_t(std::string_view)>;

inline bool allow_all(std::string_view) { return false; }

inline std::size_t whitespace_tokens(std::string_view s) { return text::split_whitespace(s).size(); }

struct CleanOptions {
  std::size_t min_len = 3;
  std::size_t max_len = 11;
  TokenCounter count_tokens = whitespace_tokens;
};

struct CleanReport {
  std::size_t input = 0;
  std::size_t toxic = 0;
  std::size_t length = 0;
  std::size_t duplicate = 0;
  std::size_t perplexity = 0;
  double threshold = 0.0;
};

/// 75th percentile with linear interpolation between closest ranks.
inline double upper_quartile(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = 0.75 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Filters in order: toxicity, token length outside [min_len, max_len], repeats
// (lowercased and trimmed), then perplexity strictly above the upper quartile
// of the sentences still standing. Survivors keep their input order.
inline std::vector<NaturalSentence> clean(const std::vector<NaturalSentence>& sentences,
                                          const PerplexityScorer& ppl, const ToxicityFilter& toxic = allow_all,
                                          const CleanOptions& opt = {}, CleanReport* report = nullptr) {
  CleanReport local;
  CleanReport& rep = report ? *report : local;
  rep.input += sentences.size();
  std::vector<const NaturalSentence*> kept;
  std::set<std::string> seen;
  for (const auto& s : sentences) {
    if (toxic(s.text)) {
      ++rep.toxic;
      continue;
    }
    const auto n = opt.count_tokens(s.text);
    if (n < opt.min_len || n > opt.max_len) {
      ++rep.length;
      continue;
    }
    if (!seen.insert(text::to_lower(text::trim(s.text))).second) {
      ++rep.duplicate;
      continue;
    }
    kept.push_back(&s);
  }
  std::vector<double> scores;
  scores.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    double score = 0.0;
    try {
      score = ppl(kept[i]->text);
    } catch (const std::exception& ex) {
      throw Error(Errc::scorer_failure, "scoring sentence " + std::to_string(i) + " failed: " + ex.what());
    }
    if (!std::isfinite(score))
      throw Error(Errc::scorer_failure, "non-finite perplexity for '" + kept[i]->text + "'");
    scores.push_back(score);
  }
  rep.threshold = upper_quartile(scores);
  std::vector<NaturalSentence> out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (scores[i] > rep.threshold) {
      ++rep.perplexity;
      continue;
    }
    out.push_back(*kept[i]);
  }
  return out;
}

}  // namespace aacpred::corpus

#endif  // AACPRED_CORPUS_CLEAN_HPP
