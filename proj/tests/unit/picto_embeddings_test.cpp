#include <fstream>

#include <gtest/gtest.h>

#include "aacpred/image.hpp"
#include "aacpred/picto_embeddings.hpp"
#include "aacpred/text_encoder.hpp"
#include "support/fixtures.hpp"
#include "support/stub_encoder.hpp"

namespace aacpred {
namespace {

using testing::constant_states;
using testing::fixture_vocab;
using testing::HashImageEncoder;
using testing::StubEncoder;
using testing::vec;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::invalid_config;
}

PictogramEntry entry(std::int64_t id, std::vector<std::pair<std::string, std::optional<std::string>>> kws,
                     std::optional<std::string> image = std::nullopt) {
  PictogramEntry e{PictogramId(id), {}, std::move(image)};
  for (auto& [t, d] : kws) e.keywords.push_back({t, d, t});
  return e;
}

TEST(CaptionEmbedding, SingleSubtokenIsTheRow) {
  StubEncoder enc(2);
  enc.add_piece("bola", vec({0.3f, -1.7f}));
  EXPECT_EQ(caption_embedding(enc, "bola"), vec({0.3f, -1.7f}));
}

TEST(CaptionEmbedding, MeanOfThreeSubtokens) {
  StubEncoder enc(2);
  enc.add_piece("a", vec({1, 0}));
  enc.add_piece("b", vec({0, 1}));
  enc.add_piece("c", vec({1, 1}));
  Vec got = caption_embedding(enc, "a b c");
  EXPECT_FLOAT_EQ(got(0), 2.0f / 3.0f);
  EXPECT_FLOAT_EQ(got(1), 2.0f / 3.0f);
}

TEST(CaptionEmbedding, ExpressionMatchesIndependentMeanOverRealTable) {
  auto base = std::make_shared<BaseEncoder>(
      make_random_base_encoder({"café", "da", "manhã", "bola"}, EncoderShape{16, 4, 2, 32, 16}, 11));
  TextEncoder enc(base);
  const std::string caption = "café da manhã";
  auto pieces = base->tokenizer.tokenize(caption);
  ASSERT_GE(pieces.size(), 3u);
  Eigen::VectorXd oracle = Eigen::VectorXd::Zero(16);
  const auto& table = base->model.word_embeddings().value;
  for (auto& p : pieces) oracle += table.row(p.id).transpose().cast<double>();
  oracle /= static_cast<double>(pieces.size());
  EXPECT_LE((caption_embedding(enc, caption).cast<double>() - oracle).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CaptionEmbedding, UnknownPiecesUseTheUnknownRowAndAreCounted) {
  StubEncoder enc(2);
  enc.add_piece("bola", vec({2, 2}));
  std::size_t unknown = 0;
  EXPECT_EQ(caption_embedding(enc, "bola xyzzy", &unknown), vec({1, 1}));
  EXPECT_EQ(unknown, 1u);
  EXPECT_EQ(code_of([&] { caption_embedding(enc, "  "); }), Errc::unknown_subtoken);
  EXPECT_EQ(code_of([&] { caption_embedding(enc, "?!"); }), Errc::unknown_subtoken);
}

TEST(SynonymsEmbedding, ReducesToCaptionAndAverages) {
  StubEncoder enc(2);
  enc.add_piece("x", vec({2, 0}));
  enc.add_piece("y", vec({0, 2}));
  EXPECT_EQ(synonyms_embedding(enc, entry(1, {{"x", std::nullopt}})), caption_embedding(enc, "x"));
  EXPECT_EQ(synonyms_embedding(enc, entry(1, {{"x", std::nullopt}, {"y", std::nullopt}})), vec({1, 1}));
}

TEST(SynonymsEmbedding, FourKeywordsMatchBruteForceMean) {
  StubEncoder enc(3);
  Rng rng(9);
  for (auto w : {"casa", "lar", "moradia", "residência", "de"}) {
    Vec v(3);
    for (int i = 0; i < 3; ++i) v(i) = static_cast<float>(standard_normal(rng));
    enc.add_piece(w, v);
  }
  auto e = entry(1, {{"casa", std::nullopt}, {"lar", std::nullopt}, {"moradia", std::nullopt}, {"casa de residência", std::nullopt}});
  Eigen::VectorXd oracle = Eigen::VectorXd::Zero(3);
  for (auto& k : e.keywords) oracle += caption_embedding(enc, k.term).cast<double>();
  oracle /= 4.0;
  EXPECT_LE((synonyms_embedding(enc, e).cast<double>() - oracle).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DefinitionText, JoinsKeywordsAndDefinitionsWithSpaces) {
  EXPECT_EQ(definition_text(entry(1, {{"pessoa", "um ser humano"}})), "pessoa um ser humano");
  EXPECT_EQ(definition_text(entry(1, {{"k1", "d1"}, {"k2", "d2"}})), "k1 d1 k2 d2");
  EXPECT_EQ(definition_text(entry(1, {{"k1", std::nullopt}})), "k1");
}

TEST(DefinitionEmbedding, Variants) {
  StubEncoder enc(2);
  enc.add_piece("urinar", vec({0.5f, 4}));
  auto single = entry(1, {{"urinar", std::nullopt}});
  EXPECT_EQ(definition_embedding(enc, single, DefinitionVariant::input_mean), vec({0.5f, 4}));

  LayerStates st = constant_states(5, 2, 2, 0.0f);
  st.layers.back().row(0) << 7, -3;
  enc.script("urinar", st);
  EXPECT_EQ(definition_embedding(enc, single, DefinitionVariant::cls_last), vec({7, -3}));

  LayerStates two = constant_states(5, 2, 2, 9.0f);
  two.layers.back() << 2, 0, 0, 2;
  enc.script("urinar", two);
  EXPECT_EQ(definition_embedding(enc, single, DefinitionVariant::mean_last), vec({1, 1}));
}

TEST(ImageEmbedding, StubVectorsAndErrors) {
  HashImageEncoder img(4);
  auto v = fixture_vocab();
  const auto& with_image = v.at(PictogramId(6481));
  const auto& other_image = v.at(PictogramId(2472));
  Vec a = image_embedding(img, with_image, 4);
  std::ifstream in(*with_image.image_ref, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(a, img.encode_image(bytes));
  EXPECT_NE(a, image_embedding(img, other_image, 4));
  EXPECT_EQ(code_of([&] { image_embedding(img, v.at(PictogramId(31141)), 4); }), Errc::missing_image);
  EXPECT_EQ(code_of([&] { image_embedding(img, with_image, 8); }), Errc::dimension_mismatch);
}

TEST(Combine, MeanSymmetryAndIdempotence) {
  EXPECT_EQ(combine(vec({2, 0}), vec({0, 2})), vec({1, 1}));
  EXPECT_EQ(code_of([] { combine(vec({1}), vec({1, 2})); }), Errc::dimension_mismatch);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    Vec a(6), b(6);
    for (int j = 0; j < 6; ++j) {
      a(j) = static_cast<float>(standard_normal(rng));
      b(j) = static_cast<float>(standard_normal(rng));
    }
    EXPECT_EQ(combine(a, b), combine(b, a));
    EXPECT_EQ(combine(a, a), a);
    Vec par = a * static_cast<float>(uniform01(rng) * 3.0);
    EXPECT_LE(combine(a, par).norm(), std::max(a.norm(), par.norm()) * (1 + 1e-6f));
  }
}

class MatrixBuild : public ::testing::Test {
 protected:
  void SetUp() override {
    for (const auto& t : vocab.unique_terms())
      for (const auto& w : text::split_whitespace(t))
        if (!seen.count(w)) {
          seen.insert(w);
          Vec v(4);
          for (int i = 0; i < 4; ++i) v(i) = static_cast<float>(standard_normal(rng));
          enc.add_piece(w, v);
        }
  }
  Vocabulary vocab = fixture_vocab();
  StubEncoder enc{4};
  Rng rng{77};
  std::set<std::string> seen;
};

TEST_F(MatrixBuild, SynonymsRowsMatchKeywordMeanOracle) {
  auto m = build_embedding_matrix(vocab, EmbeddingStrategy::synonyms, &enc, nullptr);
  ASSERT_EQ(m.vectors.size(), vocab.size());
  EXPECT_EQ(m.h, 4u);
  EXPECT_EQ(m.encoder_id, "stub");
  for (const auto& [id, e] : vocab.entries()) {
    Eigen::VectorXd oracle = Eigen::VectorXd::Zero(4);
    for (const auto& k : e.keywords) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(4);
      auto words = text::split_whitespace(k.term);
      for (const auto& w : words) c += enc.input_embedding(enc.subtokenize(w).front().id).cast<double>();
      oracle += c / static_cast<double>(words.size());
    }
    oracle /= static_cast<double>(e.keywords.size());
    EXPECT_LE((m.vectors.at(id).cast<double>() - oracle).cwiseAbs().maxCoeff(), 1e-6) << id.str();
  }
}

TEST_F(MatrixBuild, MissingImageFallsBackToCaption) {
  HashImageEncoder img(4);
  BuildReport report;
  auto m = build_embedding_matrix(vocab, EmbeddingStrategy::image, &enc, &img, {}, &report);
  EXPECT_EQ(m.vectors.size(), vocab.size());
  EXPECT_EQ(report.failures, 0u);
  EXPECT_EQ(report.fallbacks.size(), vocab.size() - 2);
  const auto& e = vocab.at(PictogramId(31141));
  EXPECT_EQ(m.vectors.at(e.id), caption_embedding(enc, e.caption()));
  EXPECT_TRUE(std::any_of(report.fallbacks.begin(), report.fallbacks.end(),
                          [&](auto& r) { return r.id == e.id && !r.degenerate; }));
  EXPECT_TRUE(m.degenerate.empty());
}

TEST_F(MatrixBuild, ZeroFallbackFlagsDegenerateRows) {
  HashImageEncoder img(4);
  BuildOptions opt;
  opt.fallback = Fallback::zero;
  auto m = build_embedding_matrix(vocab, EmbeddingStrategy::image_plus_caption, &enc, &img, opt);
  EXPECT_EQ(m.degenerate.size(), vocab.size() - 2);
  for (const auto& [id, v] : m.vectors) EXPECT_EQ(v.isZero(), m.degenerate.count(id) == 1) << id.str();
}

TEST_F(MatrixBuild, EncoderFailuresAboveThresholdAbort) {
  enc.fallback_states = [](std::string_view) { return constant_states(2, 3, 4, 1.0f); };
  BuildOptions opt;
  opt.fallback = Fallback::zero;
  StubEncoder bad(4);
  bad.fallback_states = [](std::string_view) -> LayerStates { throw Error(Errc::encoder_failure, "boom"); };
  EXPECT_EQ(code_of([&] { build_embedding_matrix(vocab, EmbeddingStrategy::definition_cls_last, &bad, nullptr, opt); }),
            Errc::build_failed);
  opt.max_failure_fraction = 1.0;
  BuildReport rep;
  auto m = build_embedding_matrix(vocab, EmbeddingStrategy::definition_cls_last, &bad, nullptr, opt, &rep);
  EXPECT_EQ(rep.failures, vocab.size());
  EXPECT_EQ(m.degenerate.size(), vocab.size());
}

TEST_F(MatrixBuild, ParallelBuildIsIdenticalAndSerializationIsBitExact) {
  auto serial = build_embedding_matrix(vocab, EmbeddingStrategy::definition_mean_last, &enc, nullptr);
  BuildOptions opt;
  opt.workers = 4;
  auto parallel = build_embedding_matrix(vocab, EmbeddingStrategy::definition_mean_last, &enc, nullptr, opt);
  EXPECT_EQ(serial.vectors, parallel.vectors);

  auto dir = testing::scratch_dir("matrix");
  save_matrix(serial, dir / "m.bin");
  auto back = load_matrix(dir / "m.bin");
  EXPECT_EQ(back.strategy, serial.strategy);
  EXPECT_EQ(back.h, serial.h);
  EXPECT_EQ(back.encoder_id, serial.encoder_id);
  ASSERT_EQ(back.vectors.size(), serial.vectors.size());
  for (const auto& [id, v] : serial.vectors)
    EXPECT_EQ(std::memcmp(back.vectors.at(id).data(), v.data(), sizeof(float) * 4), 0);
  EXPECT_NE(matrix_to_jsonl(back).find("\"id\":2418"), std::string::npos);
}

TEST_F(MatrixBuild, MissingBackendIsAConfigError) {
  EXPECT_EQ(code_of([&] { build_embedding_matrix(vocab, EmbeddingStrategy::image, &enc, nullptr); }),
            Errc::invalid_config);
  EXPECT_EQ(code_of([&] { build_embedding_matrix(vocab, EmbeddingStrategy::caption, nullptr, nullptr); }),
            Errc::invalid_config);
}

TEST(Strategy, NamesRoundTrip) {
  for (auto s : kAllStrategies) EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_EQ(code_of([] { parse_strategy("bogus"); }), Errc::invalid_config);
}

TEST(PngImages, TransparencyBecomesWhiteAndResizeKeepsFlatAreas) {
  const auto bytes = aacpred::detail::read_file(testing::data_path("images") / "6481.png", Errc::missing_image);
  auto img = decode_png_on_white(bytes);
  ASSERT_EQ(img.width, 48);
  ASSERT_EQ(img.height, 32);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(img.at(0, 0, c), 255);
  EXPECT_EQ(img.at(24, 16, 0), 200);
  EXPECT_EQ(img.at(24, 16, 1), 30);

  auto big = resize_bilinear(img, 224, 224);
  EXPECT_EQ(big.pixels.size(), 224u * 224u * 3u);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(big.at(0, 0, c), 255);
  EXPECT_EQ(big.at(112, 112, 2), 30);

  EXPECT_EQ(code_of([] { decode_png_on_white("not a png"); }), Errc::missing_image);
}

TEST(PngImages, PatchEncoderIsSeededAndSeparatesImages) {
  const auto a = aacpred::detail::read_file(testing::data_path("images") / "6481.png", Errc::missing_image);
  const auto b = aacpred::detail::read_file(testing::data_path("images") / "2472.png", Errc::missing_image);
  PatchImageEncoder enc(32, 7), same(32, 7);
  EXPECT_EQ(enc.dimension(), 32u);
  const Vec va = enc.encode_image(a);
  EXPECT_EQ(va.size(), 32);
  EXPECT_TRUE(va.isApprox(same.encode_image(a), 0.0f));
  EXPECT_GT((va - enc.encode_image(b)).norm(), 1e-3f);
}

}  // namespace
}  // namespace aacpred
