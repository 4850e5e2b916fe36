// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when a
// criterion fails, unless the failure is listed in kKnownDeviations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "aacpred/corpus/clean.hpp"
#include "aacpred/corpus/coverage.hpp"
#include "aacpred/corpus/prompts.hpp"
#include "aacpred/corpus/split.hpp"
#include "aacpred/evaluation.hpp"
#include "aacpred/model/finetune.hpp"
#include "aacpred/model/masking.hpp"
#include "aacpred/picto_embeddings.hpp"
#include "aacpred/text_to_pictogram.hpp"
#include "aacpred/service.hpp"
#include "support/desk_fixture.hpp"
#include "support/fixtures.hpp"
#include "support/stub_encoder.hpp"
#include "support/stub_scorers.hpp"
#include "support/tiny_checkpoint.hpp"

namespace aacpred {
namespace {

using eval::Sentence;
using nlohmann::json;

// Collects failed sub-checks for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

struct Criterion {
  std::string name;
  std::function<void(Check&)> run;
};

// Criteria whose stated figures cannot all hold; the analysis is kept with
// the project notes. They still print FAIL.
const std::set<std::string> kKnownDeviations = {"split"};

std::string fmt(double x, int digits = 6) {
  std::ostringstream o;
  o.precision(digits);
  o << x;
  return o.str();
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<Sentence> random_sentences(std::size_t count, std::size_t v, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < count; ++i) {
    Sentence s;
    const auto len = 1 + uniform_index(rng, 11);
    for (std::size_t t = 0; t < len; ++t) s.push_back(static_cast<std::int32_t>(uniform_index(rng, v)));
    out.push_back(std::move(s));
  }
  return out;
}

Vec random_vec(Rng& rng, std::size_t h) {
  Vec v(static_cast<Eigen::Index>(h));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<float>(standard_normal(rng));
  return v;
}

void masking(Check& c) {
  std::vector<std::string> toks = model::reserved_tokens();
  for (int i = 0; i < 295; ++i) toks.push_back("t" + std::to_string(i));
  TokenTable table(std::move(toks));
  model::TrainingConfig cfg;
  cfg.sequence_length = 42;
  Rng data(101), rng(202);
  std::size_t maskable = 0, selected = 0, masked = 0, random = 0, same = 0;
  while (maskable < 100000) {
    std::vector<std::vector<std::int32_t>> batch;
    for (int s = 0; s < 64; ++s) {
      std::vector<std::int32_t> content;
      for (int i = 0; i < 40; ++i) content.push_back(static_cast<std::int32_t>(5 + uniform_index(data, 295)));
      batch.push_back(model::frame_sequence(table, content, 42));
      maskable += 40;
    }
    auto mb = model::mask_collate(batch, table, cfg, rng);
    for (std::size_t i = 0; i < mb.selected.size(); ++i) {
      if (!mb.selected[i]) continue;
      ++selected;
      if (mb.input.ids[i] == table.mask()) ++masked;
      else if (mb.input.ids[i] == mb.labels[i]) ++same;
      else ++random;
    }
  }
  const double sel = static_cast<double>(selected);
  const double f = sel / static_cast<double>(maskable), fm = masked / sel, fr = random / sel, fs = same / sel;
  c.expect(std::fabs(f - 0.15) <= 0.01, "selected fraction " + fmt(f));
  c.expect(std::fabs(fm - 0.80) <= 0.02, "mask share " + fmt(fm));
  c.expect(std::fabs(fr - 0.10) <= 0.02, "random share " + fmt(fr));
  c.expect(std::fabs(fs - 0.10) <= 0.02, "unchanged share " + fmt(fs));
  c.note(std::to_string(maskable) + " tokens, selected " + fmt(f, 4) + ", " + fmt(fm, 4) + "/" + fmt(fr, 4) + "/" + fmt(fs, 4));
}

void perplexity_identities(Check& c) {
  for (std::size_t v : {10u, 100u, 12785u}) {
    const double p = eval::pseudo_perplexity(testing::UniformScorer(v), random_sentences(30, v, v));
    c.expect(std::fabs(p - static_cast<double>(v)) <= 1e-6 * static_cast<double>(v), "uniform V=" + std::to_string(v) + " gave " + fmt(p, 12));
  }
  const double perfect = eval::pseudo_perplexity(testing::PerfectScorer(50), random_sentences(20, 50, 1));
  c.expect(perfect == 1.0, "perfect scorer gave " + fmt(perfect, 17));
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::map<Sentence, std::vector<double>> probs;
    std::vector<Sentence> sents;
    double sum_log2 = 0.0;
    std::size_t n = 0;
    for (std::int32_t i = 0; i < 5; ++i) {
      Sentence s = {trial, i};
      std::vector<double> p = {std::min(1.0, 0.001 + uniform01(rng)), std::min(1.0, 0.001 + uniform01(rng))};
      for (auto x : p) sum_log2 += std::log2(x), ++n;
      probs[s] = p;
      sents.push_back(s);
    }
    const double base2 = std::pow(2.0, -sum_log2 / static_cast<double>(n));
    const double got = eval::pseudo_perplexity(testing::FixtureScorer(10, probs), sents);
    worst = std::max(worst, std::fabs(got / base2 - 1.0));
  }
  c.expect(worst <= 1e-9, "base-2 vs natural log relative gap " + fmt(worst));
  c.note("max log-base gap " + fmt(worst, 3));
}

void hand_perplexity(Check& c) {
  Sentence a = {1, 2, 3}, b = {4, 5};
  testing::FixtureScorer scorer(10, {{a, {0.5, 0.25, 0.5}}, {b, {0.1, 0.2}}});
  const double got = eval::pseudo_perplexity(scorer, {a, b});
  const double hand = 3.8073078774317564;  // (1/0.5 * 1/0.25 * 1/0.5 * 1/0.1 * 1/0.2)^(1/5) = 800^(1/5)
  c.expect(std::fabs(got - hand) <= 1e-9, "got " + fmt(got, 17));
  c.note("PPL " + fmt(got, 17));
}

void topn(Check& c) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    testing::RandomScorer scorer(40, seed, seed % 2 ? 4 : 0);
    std::vector<int> ns;
    for (int n = 1; n <= 40; ++n) ns.push_back(n);
    auto acc = eval::topn_accuracy(scorer, random_sentences(6, 40, seed + 100), ns);
    for (int n = 2; n <= 40; ++n)
      if (acc[n] < acc[n - 1]) c.expect(false, "seed " + std::to_string(seed) + " decreases at n=" + std::to_string(n));
    c.expect(acc[40] == 1.0, "seed " + std::to_string(seed) + " acc@40 = " + fmt(acc[40]));
  }
  Sentence s = {3, 7, 1, 0, 9, 4, 2, 8, 5, 6};
  testing::RankScorer ranks(50, s, {1, 3, 12, 40, 9, 18, 19, 25, 36, 2});
  auto acc = eval::topn_accuracy(ranks, {s});
  const std::map<int, double> want = {{1, 0.1}, {9, 0.4}, {18, 0.6}, {25, 0.8}, {36, 0.9}};
  for (auto [n, v] : want) c.expect(acc[n] == v, "rank oracle acc@" + std::to_string(n) + " = " + fmt(acc[n]));
}

PictogramId argmin_oracle(const Vec& ctx, const std::vector<std::pair<PictogramId, Vec>>& cands) {
  long double best = std::numeric_limits<long double>::infinity();
  PictogramId best_id;
  for (const auto& [id, v] : cands) {
    long double dot = 0, na = 0, nb = 0;
    for (Eigen::Index i = 0; i < ctx.size(); ++i) {
      dot += static_cast<long double>(ctx(i)) * v(i);
      na += static_cast<long double>(ctx(i)) * ctx(i);
      nb += static_cast<long double>(v(i)) * v(i);
    }
    const long double d = 1 - dot / std::sqrt(na * nb);
    if (d < best - 1e-12L || (std::fabs(static_cast<double>(d - best)) <= 1e-12 && id < best_id)) {
      best = d;
      best_id = id;
    }
  }
  return best_id;
}

void wsd(Check& c) {
  Rng rng(2025);
  for (int trial = 0; trial < 50; ++trial) {
    const auto h = 2 + uniform_index(rng, 7);
    const auto n = 2 + uniform_index(rng, 9);
    const Vec ctx = random_vec(rng, h);
    std::vector<std::pair<PictogramId, Vec>> cands;
    for (std::size_t k = 0; k < n; ++k) cands.emplace_back(PictogramId(static_cast<std::int64_t>(500 + 13 * k)), random_vec(rng, h));
    if (trial % 4 == 0) cands.front().second = cands.back().second;  // tie resolved by id
    const auto got = disambiguate(ctx, cands), want = argmin_oracle(ctx, cands);
    c.expect(got == want, "trial " + std::to_string(trial) + ": " + std::to_string(got.value) + " vs " + std::to_string(want.value));
  }
  auto vocab = testing::fixture_vocab();
  const auto toks = tokenize_mwe("ele quer fazer xixi", vocab.mwe_lexicon(), vocabulary_lemmatizer(vocab));
  c.expect(toks == std::vector<std::string>{"ele", "querer", "fazer xixi"}, "figure sentence tokenized differently");
}

void embeddings(Check& c) {
  auto base = std::make_shared<BaseEncoder>(
      make_random_base_encoder({"café", "da", "manhã", "bola", "casa"}, EncoderShape{16, 4, 2, 32, 16}, 11));
  TextEncoder enc(base);
  const auto& table = base->model.word_embeddings().value;
  for (const std::string w : {"bola", "casa"}) {
    auto pieces = base->tokenizer.tokenize(w);
    if (pieces.size() != 1) {
      c.expect(false, w + " is not a single subtoken");
      continue;
    }
    const Vec row = table.row(pieces[0].id).transpose();
    c.expect(caption_embedding(enc, w) == row, "caption row for " + w + " differs from the table row");
    PictogramEntry e{PictogramId(1), {{w, std::nullopt, w}}, std::nullopt};
    c.expect(synonyms_embedding(enc, e) == caption_embedding(enc, w), "single-keyword synonyms differs from caption for " + w);
  }
  for (const std::string mwe : {"café da manhã", "casa da bola"}) {
    auto pieces = base->tokenizer.tokenize(mwe);
    Eigen::VectorXd oracle = Eigen::VectorXd::Zero(16);
    for (const auto& p : pieces) oracle += table.row(p.id).transpose().cast<double>();
    oracle /= static_cast<double>(pieces.size());
    const double gap = (caption_embedding(enc, mwe).cast<double>() - oracle).cwiseAbs().maxCoeff();
    c.expect(gap <= 1e-6, mwe + " mean gap " + fmt(gap));
  }
  Rng rng(55);
  for (int i = 0; i < 100; ++i) {
    const Vec a = random_vec(rng, 8), b = random_vec(rng, 8);
    if (combine(a, b) != combine(b, a)) c.expect(false, "combine not commutative on pair " + std::to_string(i));
    if (combine(a, a) != a) c.expect(false, "combine not idempotent on pair " + std::to_string(i));
  }
}

void cleaning(Check& c) {
  std::vector<corpus::NaturalSentence> in;
  for (int i = 1; i <= 8; ++i) in.push_back({"nota" + std::to_string(i) + " eu quero água", corpus::Source::generated, std::nullopt});
  auto score = [](std::string_view s) { return std::stod(std::string(s.substr(4, s.find(' ') - 4))); };
  corpus::CleanReport rep;
  auto out = corpus::clean(in, score, corpus::allow_all, {}, &rep);
  std::set<double> kept;
  for (const auto& s : out) kept.insert(score(s.text));
  c.expect(kept == std::set<double>{1, 2, 3, 4, 5, 6}, "survivor scores differ from 1..6");
  for (const auto& s : out) {
    const auto len = corpus::whitespace_tokens(s.text);
    c.expect(len >= 3 && len <= 11, "survivor length " + std::to_string(len));
  }
  std::vector<corpus::NaturalSentence> lengths;
  for (std::size_t n = 1; n <= 14; ++n) {
    std::string s = "w0";
    for (std::size_t w = 1; w < n; ++w) s += " w" + std::to_string(w);
    lengths.push_back({s, corpus::Source::generated, std::nullopt});
  }
  for (const auto& s : corpus::clean(lengths, [](std::string_view) { return 1.0; }, corpus::allow_all)) {
    const auto len = corpus::whitespace_tokens(s.text);
    c.expect(len >= 3 && len <= 11, "length filter kept " + std::to_string(len));
  }

  const std::vector<std::string> collected = {
      "eu brinquei de esconde-esconde com meus coleguinhas.", "eu quero comer cuscuz.", "eu gosto de ler muito.",
      "o menino me bateu.", "eu quero comer carne.", "minha mãe fez comigo.", "vamos voltar pra casa?",
      "trocar a bombona de água.", "eu brinquei com Maria ontem.", "eu sou joão."};
  const std::vector<std::string> terms = {"delas", "vizinho", "avó", "médico", "bebê", "pai", "professor",
                                          "policial", "garota", "profissões", "primas", "irmã", "crianças", "rapaz",
                                          "avô", "de vocês", "motorista", "filho", "dentista", "adulto"};
  const std::vector<std::string> examples = {"eu tenho um filho e uma filha.", "eu vi meu filho feliz.", "nós gostamos delas.",
                                             "meu avô foi trabalhar.", "você é um grande professor.", "nós vamos seguir o professor."};
  c.expect(corpus::build_example_prompt(collected) == read_text(testing::data_path("example_prompt.golden.txt")),
           "example prompt differs from golden");
  c.expect(corpus::build_vocab_prompt(terms, examples) == read_text(testing::data_path("vocab_prompt.golden.txt")),
           "vocabulary prompt differs from golden");
}

void coverage(Check& c) {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec> t, r;
    for (int i = 0; i < 20 + trial; ++i) t.push_back(random_vec(rng, 3) * static_cast<float>(1 + trial));
    for (int i = 0; i < 7; ++i) r.push_back(random_vec(rng, 3) + Vec::Constant(3, 10.0f * trial));
    const double cov = corpus::coverage(t, r, 1, static_cast<std::uint64_t>(trial));
    c.expect(cov == 1.0, "k=1 gave " + fmt(cov));
  }
  std::vector<Vec> t, r;
  for (int i = 0; i < 25; ++i) {
    t.push_back(testing::vec({static_cast<float>(standard_normal(rng) * 0.1), static_cast<float>(standard_normal(rng) * 0.1)}));
    r.push_back(testing::vec({static_cast<float>(50 + standard_normal(rng) * 0.1), static_cast<float>(50 + standard_normal(rng) * 0.1)}));
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const double cov = corpus::coverage(t, r, 2, seed);
    c.expect(cov == 0.0, "disjoint clouds seed " + std::to_string(seed) + " gave " + fmt(cov));
  }
  std::vector<Vec> mixed = t;
  mixed.insert(mixed.end(), r.begin(), r.begin() + 10);
  c.expect(corpus::coverage(mixed, r, 6, 9) == corpus::coverage(mixed, r, 6, 9), "same seed gave different coverage");
}

void split(Check& c) {
  const auto small = corpus::split_sizes(100, corpus::kDefaultProportions);
  c.expect(small == std::array<std::size_t, 3>{68, 16, 16}, "100 gave " + std::to_string(small[0]) + "/" + std::to_string(small[1]) + "/" + std::to_string(small[2]));
  const auto big = corpus::split_sizes(13796, corpus::kDefaultProportions);
  const std::string got = std::to_string(big[0]) + "/" + std::to_string(big[1]) + "/" + std::to_string(big[2]);
  c.note("13796 -> " + got + " (floor 9381/2207/2207, remainder 1 to train)");
  c.expect(big == std::array<std::size_t, 3>{9383, 2207, 2206}, "13796 gave " + got + ", expected 9383/2207/2206");
  const auto a = corpus::split(13796, corpus::kDefaultProportions, 42);
  c.expect(a == corpus::split(13796, corpus::kDefaultProportions, 42), "same seed gave a different assignment");
}

void desk_end_to_end(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  auto vocab = testing::desk_vocabulary(295);
  auto base = testing::desk_base_encoder(vocab, 7);
  testing::BigramChain chain(vocab, 11);
  auto all = chain.sample(500, 12);
  auto parts = corpus::split(all.size(), {0.8, 0.1, 0.1}, 3);
  auto train = corpus::select(all, parts, corpus::Part::train);
  auto val = corpus::select(all, parts, corpus::Part::validation);
  auto test = corpus::select(all, parts, corpus::Part::test);
  TextEncoder te(base);
  auto matrix = build_embedding_matrix(vocab, EmbeddingStrategy::caption, &te, nullptr, {}, nullptr);
  auto table = model::build_token_table(all, vocab);
  c.expect(table.size() == 300, "table size " + std::to_string(table.size()));
  auto m = model::swap_vocabulary(*base, table, matrix, vocab.id_hash());
  c.expect(m.encoder.config().layers == 2 && m.encoder.config().hidden == 64, "encoder shape");
  std::vector<Sentence> held_out;
  for (const auto& s : test) held_out.push_back(m.indices(s));

  double ppl0 = 0.0;
  {
    eval::MlmScorer sc(m.encoder, m.table);
    ppl0 = eval::pseudo_perplexity(sc, held_out);
  }
  model::TrainingConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 50;
  cfg.batch_sequences = 32;
  cfg.rng_seed = 5;
  model::finetune(m, train, val, cfg);
  eval::MlmScorer sc(m.encoder, m.table);
  const double ppl = eval::pseudo_perplexity(sc, held_out);
  const double acc9 = eval::topn_accuracy(sc, held_out)[9];
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(ppl0 / ppl >= 5.0, "PPL improved only " + fmt(ppl0 / ppl, 4) + "x");
  c.expect(acc9 >= 0.30, "acc@9 " + fmt(acc9, 4));
  c.note("PPL " + fmt(ppl0, 5) + " -> " + fmt(ppl, 5) + " (" + fmt(ppl0 / ppl, 3) + "x), acc@9 " + fmt(acc9, 3) + ", " +
         fmt(secs, 3) + " s");
}

void full_scale_reference(Check& c) {
  const auto cap = eval::reference_for(EmbeddingStrategy::caption);
  const auto syn = eval::reference_for(EmbeddingStrategy::synonyms);
  c.expect(cap && cap->ppl == 15.433 && cap->acc.at(1) == 0.237 && cap->acc.at(36) == 0.702, "caption reference row");
  c.expect(syn && syn->ppl == 14.282, "synonyms reference row");
  std::size_t full = 0;
  for (const auto& f : std::filesystem::directory_iterator(std::filesystem::path(AACPRED_SOURCE_DIR) / "configs")) {
    const auto& path = f.path();
    if (path.extension() != ".json" || path.stem() == "tiny") continue;
    ++full;
    auto cfg = model::TrainingConfig::from_json(json::parse(read_text(path)));
    c.expect(cfg.learning_rate == 1e-5 && cfg.batch_sequences == 768, path.filename().string() + " is not the full-scale recipe");
  }
  c.expect(full >= 2, "no full-scale configs shipped");
  c.note(std::to_string(full) + " full-scale configs; reference values recorded, not asserted at desk scale");
}

std::string predict(httplib::Client& cl, const std::vector<std::string>& prefix, int n, int* status = nullptr) {
  auto res = cl.Post("/predict", json{{"prefix", prefix}, {"n", n}}.dump(), "application/json");
  if (!res) return {};
  if (status) *status = res->status;
  return res->body;
}

void service_contract(Check& c) {
  const auto t = testing::make_tiny_checkpoint("acceptance_service");
  service::ServiceOptions o;
  o.checkpoint = t.checkpoint;
  o.vocab = t.vocab;
  o.port = 0;
  service::PredictionService svc(o);
  svc.load();
  svc.bind();
  std::thread th([&] { svc.serve(); });
  svc.server().wait_until_ready();
  {
    httplib::Client cl("127.0.0.1", svc.port());
    const auto body = predict(cl, {"6481", "2275"}, 9);
    for (int i = 0; i < 3; ++i) c.expect(predict(cl, {"6481", "2275"}, 9) == body, "repeated /predict differed");
    int status = 0;
    predict(cl, {"6481", "999999999"}, 9, &status);
    c.expect(status == 422, "unknown token gave " + std::to_string(status));
    auto top9 = json::parse(body)["items"];
    auto top36 = json::parse(predict(cl, {"6481", "2275"}, 36))["items"];
    c.expect(top9.size() == 9 && top36.size() == 36, "wrong item counts");
    for (std::size_t i = 0; i < std::min<std::size_t>(9, top36.size()); ++i)
      c.expect(top9[i] == top36[i], "top-9 is not a prefix of top-36 at " + std::to_string(i));
  }
  svc.stop();
  th.join();

  const auto other = testing::scratch_dir("acceptance_mismatch") / "other.jsonl";
  save_vocabulary(testing::desk_vocabulary(12), other);
  const std::string cmd = std::string("timeout 120 \"") + AACPRED_CLI + "\" serve --checkpoint \"" + t.checkpoint.string() +
                          "\" --vocab \"" + other.string() + "\" --port 0 > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  const int code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  c.expect(code != 0 && code != 124, "serve with a mismatched vocabulary exited " + std::to_string(code));
  c.note("mismatched vocabulary: serve exited " + std::to_string(code));
}

}  // namespace
}  // namespace aacpred

int main() {
  using namespace aacpred;
  const std::vector<Criterion> criteria = {
      {"masking", masking},
      {"perplexity-identities", perplexity_identities},
      {"perplexity-hand-fixture", hand_perplexity},
      {"topn-properties", topn},
      {"wsd-oracle", wsd},
      {"embedding-construction", embeddings},
      {"cleaning", cleaning},
      {"coverage", coverage},
      {"split", split},
      {"desk-end-to-end", desk_end_to_end},
      {"full-scale-reference", full_scale_reference},
      {"service-contract", service_contract},
  };
  int pass = 0, fail = 0, blocking = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = c.failures.empty();
    std::printf("%s %-24s %7.2fs", ok ? "PASS" : "FAIL", cr.name.c_str(), secs);
    for (const auto& n : c.notes) std::printf("  [%s]", n.c_str());
    for (const auto& f : c.failures) std::printf("  {%s}", f.c_str());
    if (!ok && kKnownDeviations.count(cr.name)) std::printf("  (known deviation)");
    std::printf("\n");
    std::fflush(stdout);
    ok ? ++pass : ++fail;
    if (!ok && !kKnownDeviations.count(cr.name)) ++blocking;
  }
  std::printf("%d passed, %d failed, %d blocking\n", pass, fail, blocking);
  return blocking == 0 ? 0 : 1;
}
