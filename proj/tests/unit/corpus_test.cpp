#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "aacpred/corpus/clean.hpp"
#include "aacpred/corpus/coverage.hpp"
#include "aacpred/corpus/generator.hpp"
#include "aacpred/corpus/prompts.hpp"
#include "aacpred/corpus/sentence.hpp"
#include "aacpred/corpus/split.hpp"
#include "aacpred/corpus/stats.hpp"
#include "support/fixtures.hpp"
#include "support/stub_encoder.hpp"

namespace aacpred::corpus {
namespace {

using aacpred::testing::data_path;
using aacpred::testing::scratch_dir;

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invalid_config;
}

const std::vector<std::string> kCollected = {
    "eu brinquei de esconde-esconde com meus coleguinhas.",
    "eu quero comer cuscuz.",
    "eu gosto de ler muito.",
    "o menino me bateu.",
    "eu quero comer carne.",
    "minha mãe fez comigo.",
    "vamos voltar pra casa?",
    "trocar a bombona de água.",
    "eu brinquei com Maria ontem.",
    "eu sou joão.",
};

const std::vector<std::string> kTerms = {"delas",  "vizinho",   "avó",    "médico",   "bebê",     "pai",      "professor",
                                         "policial", "garota",  "profissões", "primas", "irmã", "crianças", "rapaz",
                                         "avô",    "de vocês", "motorista", "filho",  "dentista", "adulto"};

const std::vector<std::string> kVocabExamples = {
    "eu tenho um filho e uma filha.", "eu vi meu filho feliz.",  "nós gostamos delas.",
    "meu avô foi trabalhar.",        "você é um grande professor.", "nós vamos seguir o professor.",
};

TEST(Prompts, ExamplePromptMatchesGolden) {
  EXPECT_EQ(build_example_prompt(kCollected), read_text(data_path("example_prompt.golden.txt")));
}

TEST(Prompts, VocabPromptMatchesGolden) {
  EXPECT_EQ(build_vocab_prompt(kTerms, kVocabExamples), read_text(data_path("vocab_prompt.golden.txt")));
}

std::string last_line(const std::string& s) {
  auto lines = text::split(s, '\n');
  while (!lines.empty() && text::trim_view(lines.back()).empty()) lines.pop_back();
  return lines.back();
}

TEST(Prompts, GroupSizesAreEnforced) {
  std::vector<std::string> nine(kCollected.begin(), kCollected.begin() + 9);
  EXPECT_EQ(code_of([&] { build_example_prompt(nine); }), Errc::wrong_group_size);
  std::vector<std::string> two(kVocabExamples.begin(), kVocabExamples.begin() + 2);
  EXPECT_EQ(code_of([&] { build_vocab_prompt(kTerms, two); }), Errc::wrong_example_count);
  std::vector<std::string> seven = kVocabExamples;
  seven.push_back("mais um.");
  EXPECT_EQ(code_of([&] { build_vocab_prompt(kTerms, seven); }), Errc::wrong_example_count);
  EXPECT_EQ(code_of([&] { build_vocab_prompt(nine, kVocabExamples); }), Errc::wrong_group_size);

  std::vector<std::string> three(kVocabExamples.begin(), kVocabExamples.begin() + 3);
  EXPECT_EQ(last_line(build_vocab_prompt(kTerms, three)), "Example 4:");
  std::vector<std::string> other(10, "uma frase qualquer.");
  EXPECT_EQ(last_line(build_example_prompt(other)), "Example 11:");
}

std::vector<NaturalSentence> as_pool(const std::vector<std::string>& v) {
  std::vector<NaturalSentence> out;
  for (const auto& s : v) out.push_back({s, Source::human_train, std::nullopt});
  return out;
}

TEST(SelectExamples, FindsSentencesMentioningPickedTerms) {
  std::vector<std::string> pool_text = kCollected;
  pool_text.push_back("meu avô foi trabalhar.");
  auto pool = as_pool(pool_text);
  // "avô" is the only term with a match; whenever it is among the five picks
  // the sentence must be returned.
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    auto idx = sample_indices(rng, kTerms.size(), 5);
    bool picked = std::any_of(idx.begin(), idx.end(), [](auto i) { return kTerms[i] == "avô"; });
    auto got = select_examples_for_terms(kTerms, pool, seed);
    EXPECT_GE(got.size(), 3u);
    EXPECT_LE(got.size(), 6u);
    bool has = std::find(got.begin(), got.end(), "meu avô foi trabalhar.") != got.end();
    if (picked) {
      EXPECT_TRUE(has) << seed;
      ++hits;
    }
  }
  EXPECT_GT(hits, 0);
}

TEST(SelectExamples, SmallPoolAndDeterminism) {
  auto pool = as_pool({"a casa.", "o gato.", "um dia."});
  auto got = select_examples_for_terms(kTerms, pool, 3);
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, (std::vector<std::string>{"a casa.", "o gato.", "um dia."}));
  auto big = as_pool(kCollected);
  EXPECT_EQ(select_examples_for_terms(kTerms, big, 99), select_examples_for_terms(kTerms, big, 99));
}

TEST(Ingest, CsvDeduplicatesExactRepeats) {
  auto dir = scratch_dir("ingest");
  std::ofstream csv(dir / "collected.csv");
  csv << "text,source,context\n";
  for (int i = 0; i < 667; ++i) csv << "\"frase número " << i << ", com vírgula\",human_train,home\n";
  for (int i = 0; i < 13; ++i) csv << "\"frase número " << i * 7 << ", com vírgula\",human_train,\n";
  csv.close();
  auto got = ingest_collected(dir / "collected.csv");
  EXPECT_EQ(got.size(), 667u);
  EXPECT_EQ(got[3].text, "frase número 3, com vírgula");
  EXPECT_EQ(got[3].context, Context::home);

  std::ofstream rep(dir / "rep.jsonl");
  for (int i = 0; i < 5; ++i) rep << R"({"text": "  eu quero água  "})" << "\n";
  rep.close();
  auto one = ingest_collected(dir / "rep.jsonl");
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].text, "eu quero água");
}

TEST(Ingest, TestFileCarriesItsSource) {
  auto dir = scratch_dir("ingest_test");
  std::ofstream f(dir / "test.jsonl");
  for (int i = 0; i < 203; ++i) f << nlohmann::json{{"text", "teste " + std::to_string(i)}, {"source", "human_test"}, {"context", "school"}}.dump() << "\n";
  f.close();
  auto got = ingest_collected(dir / "test.jsonl");
  EXPECT_EQ(got.size(), 203u);
  EXPECT_TRUE(std::all_of(got.begin(), got.end(), [](auto& s) { return s.source == Source::human_test; }));
  std::ofstream bad(dir / "bad.csv");
  bad << "sentence\nabc\n";
  bad.close();
  EXPECT_EQ(code_of([&] { ingest_collected(dir / "bad.csv"); }), Errc::malformed_input);
}

TEST(Ingest, CorpusFileRoundTrip) {
  auto dir = scratch_dir("corpus_io");
  std::vector<NaturalSentence> v = {{"eu quero", Source::generated, std::nullopt},
                                    {"vamos", Source::human_test, Context::event}};
  write_corpus(v, dir / "c.jsonl");
  EXPECT_EQ(read_corpus(dir / "c.jsonl"), v);
}

TEST(Augment, ParsesCompletionMarkersAndLines) {
  EXPECT_EQ(parse_completion(" eu quero dormir.\n\nExample 12: vamos ao parque.\nexemplo 13 - x\n"),
            (std::vector<std::string>{"eu quero dormir.", "vamos ao parque."}));
  EXPECT_TRUE(parse_completion("\n \nExample 12:\n").empty());
  EXPECT_EQ(parse_completion("Example 12: a casa Example 13: o gato"),
            (std::vector<std::string>{"a casa", "o gato"}));
}

TEST(Augment, ReplayFixtureIsDeterministicAndCountsSentences) {
  auto dir = scratch_dir("replay");
  std::vector<std::string> prompts;
  std::size_t expected = 0;
  for (int p = 0; p < 278; ++p) {
    std::vector<std::string> group;
    for (int i = 0; i < 10; ++i) group.push_back("frase " + std::to_string(p * 10 + i) + ".");
    prompts.push_back(build_example_prompt(group));
    const int lines = p < 276 ? 10 : 6;
    std::string completion;
    for (int i = 0; i < lines; ++i)
      completion += (i ? "\n\nExample " + std::to_string(11 + i) + ": " : " ") + std::string("gerada ") +
                    std::to_string(p) + "-" + std::to_string(i) + ".";
    append_fixture(dir / "fixture.jsonl", prompts.back(), {completion});
    expected += static_cast<std::size_t>(lines);
  }
  ReplayClient replay(dir / "fixture.jsonl");
  auto a = augment(replay, prompts, 1, 4);
  auto b = augment(replay, prompts, 1, 1);
  EXPECT_EQ(expected, 2772u);
  EXPECT_EQ(a.size(), 2772u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0].text, "gerada 0-0.");
  EXPECT_TRUE(std::all_of(a.begin(), a.end(), [](auto& s) { return s.source == Source::generated; }));
  std::vector<std::string> unknown = {"prompt nunca gravado"};
  EXPECT_EQ(code_of([&] { augment(replay, unknown); }), Errc::missing_fixture);
}

class EchoClient : public GeneratorClient {
 public:
  std::vector<std::string> complete(const std::string& prompt, std::size_t) override {
    return {" eco " + std::to_string(prompt.size()) + "."};
  }
  GeneratorMode mode() const override { return GeneratorMode::live; }
};

TEST(Augment, RecordingThenReplayGivesTheSameSentences) {
  auto dir = scratch_dir("record");
  auto rec = RecordingClient(std::make_shared<EchoClient>(), dir / "f.jsonl");
  std::vector<std::string> prompts = {"um", "dois", "três"};
  auto live = augment(rec, prompts, 1, 3);
  ReplayClient replay(dir / "f.jsonl");
  EXPECT_EQ(augment(replay, prompts), live);
}

TEST(Augment, LiveClientReportsUnreachableBackend) {
  LiveSettings s;
  s.base_url = "http://127.0.0.1:9";
  s.timeout_seconds = 2;
  s.requests_per_minute = 0;
  LiveClient live(s);
  EXPECT_EQ(code_of([&] { live.complete("x", 1); }), Errc::backend_unavailable);
}

std::vector<NaturalSentence> numbered_sentences(std::size_t n, std::size_t words) {
  std::vector<NaturalSentence> v;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s = "s" + std::to_string(i);
    for (std::size_t w = 1; w < words; ++w) s += " w";
    v.push_back({s, Source::generated, std::nullopt});
  }
  return v;
}

TEST(Clean, RemovesTheUpperQuartileOfEightScores) {
  auto in = numbered_sentences(8, 5);
  auto score = [](std::string_view s) { return std::stod(std::string(s.substr(1, s.find(' ') - 1))) + 1.0; };
  CleanReport rep;
  auto out = clean(in, score, allow_all, {}, &rep);
  ASSERT_EQ(out.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(out[i].text, in[i].text);
  EXPECT_DOUBLE_EQ(rep.threshold, 6.25);
  EXPECT_EQ(rep.perplexity, 2u);
}

TEST(Clean, LengthToxicityAndDuplicates) {
  std::vector<NaturalSentence> in = {{"eu quero", Source::generated, std::nullopt},
                                     {"um dois três quatro cinco seis sete oito nove dez onze doze", Source::generated, std::nullopt},
                                     {"eu quero água", Source::generated, std::nullopt},
                                     {" Eu quero água ", Source::generated, std::nullopt},
                                     {"palavra feia aqui", Source::generated, std::nullopt},
                                     {"um dois três quatro cinco seis sete oito nove dez onze", Source::generated, std::nullopt}};
  auto toxic = [](std::string_view s) { return s.find("feia") != std::string_view::npos; };
  CleanReport rep;
  auto out = clean(in, [](std::string_view) { return 1.0; }, toxic, {}, &rep);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].text, "eu quero água");
  EXPECT_EQ(rep.toxic, 1u);
  EXPECT_EQ(rep.length, 2u);
  EXPECT_EQ(rep.duplicate, 1u);
}

TEST(Clean, ScorerErrorsBecomeScorerFailure) {
  auto in = numbered_sentences(3, 4);
  EXPECT_EQ(code_of([&] { clean(in, [](std::string_view) -> double { throw std::runtime_error("x"); }); }),
            Errc::scorer_failure);
  EXPECT_EQ(code_of([&] { clean(in, [](std::string_view) { return std::nan(""); }); }), Errc::scorer_failure);
}

TEST(Clean, QuartileRuleRemovalBoundsOnDistinctScores) {
  Rng rng(17);
  for (std::size_t n = 1; n <= 60; ++n) {
    auto in = numbered_sentences(n, 4);
    std::vector<double> scores(n);
    for (auto& s : scores) s = uniform01(rng) * 100.0 + 1.0;
    auto score = [&](std::string_view s) { return scores[std::stoul(std::string(s.substr(1, s.find(' ') - 1)))]; };
    CleanReport rep;
    auto out = clean(in, score, allow_all, {}, &rep);
    const auto q = (n + 3) / 4;
    EXPECT_GE(rep.perplexity + 1, q) << n;
    EXPECT_LE(rep.perplexity, q + 1) << n;
    for (const auto& s : out) {
      const auto len = whitespace_tokens(s.text);
      EXPECT_TRUE(len >= 3 && len <= 11);
    }
  }
}

TEST(Stats, HandCountedSentence) {
  auto st = corpus_stats({"a b a"}, {});
  EXPECT_EQ(st.total_words, 3u);
  EXPECT_EQ(st.unique_words, 2u);
  EXPECT_EQ(st.bigram_freq.size(), 2u);
  EXPECT_EQ((st.bigram_freq.at({"a", "b"})), 1u);
  EXPECT_EQ((st.bigram_freq.at({"b", "a"})), 1u);
  EXPECT_EQ(st.trigram_freq.size(), 1u);
}

TEST(Stats, InvariantsAndTopItems) {
  auto stop = load_stopwords(std::filesystem::path(AACPRED_SOURCE_DIR) / "data" / "stopwords_pt.txt");
  std::vector<std::string> s = {"Eu quero água.", "eu quero comer bolo", "você quer brincar?", "eu quero ir embora agora",
                                "ele dorme"};
  auto st = corpus_stats(s, stop);
  std::size_t sum = 0;
  for (auto& [w, c] : st.word_freq) sum += c;
  for (auto& [w, c] : st.stopword_freq) sum += c;
  EXPECT_EQ(sum, st.total_words);
  EXPECT_LE(st.length_min, st.length_mean);
  EXPECT_LE(st.length_mean, st.length_max);
  EXPECT_DOUBLE_EQ(st.length_mean, static_cast<double>(st.total_words) / 5.0);
  EXPECT_EQ(top_n(st.word_freq, 1).front().first, "quero");
  EXPECT_EQ(ngram_label(top_n(st.bigram_freq, 1).front().first), "eu quero");
  EXPECT_EQ(st.length_mode, 3u);
  EXPECT_EQ(st.length_mode_count, 2u);
  auto dir = scratch_dir("charts");
  auto files = write_frequency_charts(st, dir);
  EXPECT_EQ(files.size(), 4u);
  EXPECT_NE(read_text(dir / "bigrams.svg").find("eu quero"), std::string::npos);
}

TEST(Coverage, SingleClusterCoversEverything) {
  Rng rng(4);
  std::vector<Vec> t, r;
  for (int i = 0; i < 30; ++i) {
    Vec v(3);
    for (int j = 0; j < 3; ++j) v(j) = static_cast<float>(standard_normal(rng));
    (i % 3 ? t : r).push_back(v);
  }
  EXPECT_EQ(coverage(t, r, 1, 5), 1.0);
}

TEST(Coverage, SeparatedCloudsDoNotCoverEachOther) {
  Rng rng(8);
  std::vector<Vec> t, r;
  for (int i = 0; i < 25; ++i) {
    t.push_back(aacpred::testing::vec({static_cast<float>(standard_normal(rng) * 0.1), static_cast<float>(standard_normal(rng) * 0.1)}));
    r.push_back(aacpred::testing::vec({static_cast<float>(50 + standard_normal(rng) * 0.1), static_cast<float>(50 + standard_normal(rng) * 0.1)}));
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_EQ(coverage(t, r, 2, seed), 0.0);
  EXPECT_EQ(coverage(t, r, 7, 3), coverage(t, r, 7, 3));
  EXPECT_EQ(code_of([&] { coverage(t, r, 51, 1); }), Errc::invalid_k);
  EXPECT_EQ(code_of([&] { coverage(t, r, 0, 1); }), Errc::invalid_k);
}

TEST(Split, ExactProportionsAndRemainderToTrain) {
  EXPECT_EQ(split_sizes(100, kDefaultProportions), (std::array<std::size_t, 3>{68, 16, 16}));
  // floor(13796 * 0.68) = 9381, floor(13796 * 0.16) = 2207 twice, one left over.
  EXPECT_EQ(split_sizes(13796, kDefaultProportions), (std::array<std::size_t, 3>{9382, 2207, 2207}));
  EXPECT_EQ(code_of([] { split_sizes(10, {0.5, 0.5, 0.1}); }), Errc::invalid_proportions);
  auto a = split(13796, kDefaultProportions, 42);
  EXPECT_EQ(a, split(13796, kDefaultProportions, 42));
  EXPECT_NE(a, split(13796, kDefaultProportions, 43));
  std::array<std::size_t, 3> counts{};
  for (auto p : a) ++counts[static_cast<std::size_t>(p)];
  EXPECT_EQ(counts, split_sizes(13796, kDefaultProportions));
}

}  // namespace
}  // namespace aacpred::corpus
