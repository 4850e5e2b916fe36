#ifndef AACPRED_CORPUS_PROMPTS_HPP
#define AACPRED_CORPUS_PROMPTS_HPP

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "aacpred/corpus/sentence.hpp"
#include "aacpred/error.hpp"
#include "aacpred/rng.hpp"
#include "aacpred/text.hpp"

namespace aacpred::corpus {

inline constexpr std::size_t kExampleGroup = 10;
inline constexpr std::size_t kTermGroup = 20;
inline constexpr std::size_t kTermsSearched = 5;
inline constexpr std::size_t kMinExamples = 3;
inline constexpr std::size_t kMaxExamples = 6;

inline constexpr std::string_view kExampleHeader = "This is a list of distinct Portuguese sentences in direct order:";
inline constexpr std::string_view kVocabHeader =
    "These are examples of Portuguese sentences using the words in this vocabulary: ";

namespace detail {

inline std::string numbered(const std::vector<std::string>& sentences) {
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += "\n\n";
    out += "Example " + std::to_string(i + 1) + ": " + text::trim(sentences[i]);
  }
  return out;
}

}  // namespace detail

/// Few-shot prompt over ten practitioner sentences, ending with a dangling "Example 11:".
inline std::string build_example_prompt(const std::vector<std::string>& examples) {
  if (examples.size() != kExampleGroup)
    throw Error(Errc::wrong_group_size, "example prompt needs 10 sentences, got " + std::to_string(examples.size()));
  return std::string(kExampleHeader) + "\n\n" + detail::numbered(examples) + "\n\nExample 11:";
}

/// Vocabulary-guided prompt: the twenty quoted terms, 3 to 6 examples, then the next dangling example.
inline std::string build_vocab_prompt(const std::vector<std::string>& terms, const std::vector<std::string>& examples) {
  if (terms.size() != kTermGroup)
    throw Error(Errc::wrong_group_size, "vocabulary prompt needs 20 terms, got " + std::to_string(terms.size()));
  if (examples.size() < kMinExamples || examples.size() > kMaxExamples)
    throw Error(Errc::wrong_example_count, "vocabulary prompt needs 3 to 6 examples, got " +
                                               std::to_string(examples.size()));
  std::string out(kVocabHeader);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) out += ", ";
    out += "“" + text::trim(terms[i]) + "”";
  }
  out += ".\n\n\n" + detail::numbered(examples);
  out += "\n\n\nExample " + std::to_string(examples.size() + 1) + ":";
  return out;
}

/// True when the words of `term` occur contiguously among the words of `sentence`.
inline bool mentions(const std::vector<std::string>& sentence_words, const std::string& term) {
  auto tw = text::words(term);
  if (tw.empty() || tw.size() > sentence_words.size()) return false;
  return std::search(sentence_words.begin(), sentence_words.end(), tw.begin(), tw.end()) != sentence_words.end();
}

// Picks five of the terms, gathers pool sentences mentioning any of them and
// samples 3 to 6; short matches are topped up with random pool sentences.
inline std::vector<std::string> select_examples_for_terms(const std::vector<std::string>& terms,
                                                          const std::vector<NaturalSentence>& pool,
                                                          std::uint64_t seed) {
  if (pool.empty()) throw Error(Errc::malformed_input, "example pool is empty");
  Rng rng(seed);
  std::vector<std::string> picked;
  for (auto i : sample_indices(rng, terms.size(), std::min(kTermsSearched, terms.size()))) picked.push_back(terms[i]);

  std::vector<std::size_t> matches;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto w = text::words(pool[i].text);
    if (std::any_of(picked.begin(), picked.end(), [&](const std::string& t) { return mentions(w, t); }))
      matches.push_back(i);
  }
  const std::size_t want = kMinExamples + uniform_index(rng, kMaxExamples - kMinExamples + 1);
  std::vector<std::size_t> chosen;
  for (auto i : sample_indices(rng, matches.size(), std::min(want, matches.size()))) chosen.push_back(matches[i]);
  if (chosen.size() < kMinExamples) {
    std::set<std::size_t> taken(chosen.begin(), chosen.end());
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!taken.count(i)) rest.push_back(i);
    const auto need = std::min(kMinExamples - chosen.size(), rest.size());
    for (auto i : sample_indices(rng, rest.size(), need)) chosen.push_back(rest[i]);
  }
  std::vector<std::string> out;
  for (auto i : chosen) out.push_back(pool[i].text);
  return out;
}

/// Shuffles the sentences and builds one prompt per complete group of ten.
inline std::vector<std::string> make_example_prompts(std::vector<std::string> sentences, std::uint64_t seed) {
  Rng rng(seed);
  shuffle(sentences, rng);
  std::vector<std::string> prompts;
  for (std::size_t i = 0; i + kExampleGroup <= sentences.size(); i += kExampleGroup)
    prompts.push_back(build_example_prompt({sentences.begin() + i, sentences.begin() + i + kExampleGroup}));
  return prompts;
}

/// Shuffles the vocabulary terms and builds one prompt per complete group of twenty.
inline std::vector<std::string> make_vocab_prompts(std::vector<std::string> terms,
                                                   const std::vector<NaturalSentence>& pool, std::uint64_t seed) {
  Rng rng(seed);
  shuffle(terms, rng);
  std::vector<std::string> prompts;
  for (std::size_t i = 0; i + kTermGroup <= terms.size(); i += kTermGroup) {
    std::vector<std::string> group(terms.begin() + i, terms.begin() + i + kTermGroup);
    auto examples = select_examples_for_terms(group, pool, rng());
    if (examples.size() < kMinExamples) continue;
    prompts.push_back(build_vocab_prompt(group, examples));
  }
  return prompts;
}

}  // namespace aacpred::corpus

#endif  // AACPRED_CORPUS_PROMPTS_HPP
