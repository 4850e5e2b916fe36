// aacpred: corpus, embedding, training, evaluation and serving commands.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "aacpred/corpus/clean.hpp"
#include "aacpred/corpus/coverage.hpp"
#include "aacpred/corpus/generator.hpp"
#include "aacpred/corpus/prompts.hpp"
#include "aacpred/corpus/sentence.hpp"
#include "aacpred/corpus/split.hpp"
#include "aacpred/corpus/stats.hpp"
#include "aacpred/evaluation.hpp"
#include "aacpred/image.hpp"
#include "aacpred/model/adapted_model.hpp"
#include "aacpred/model/finetune.hpp"
#include "aacpred/model/training_config.hpp"
#include "aacpred/picto_embeddings.hpp"
#include "aacpred/service.hpp"
#include "aacpred/text_encoder.hpp"
#include "aacpred/text_to_pictogram.hpp"
#include "aacpred/vocabulary.hpp"

#include <CLI11.hpp>

namespace fs = std::filesystem;
using namespace aacpred;

namespace {

constexpr int kExitError = 1;
constexpr int kExitMismatch = 3;

ImageSource image_source(const std::string& dir, const std::string& base_url) {
  if (!dir.empty() && !base_url.empty()) throw Error(Errc::invalid_config, "use either --images or --image-base-url");
  if (!dir.empty()) return {ImageSource::Kind::local_dir, dir};
  if (!base_url.empty()) return {ImageSource::Kind::base_url, base_url};
  return {};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::malformed_input, "cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!text::trim_view(line).empty()) out.push_back(line);
  return out;
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::malformed_input, "cannot write " + path.string());
  out << content;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : text::split(s, ',')) {
    auto t = text::trim(part);
    if (t.empty()) continue;
    try {
      out.push_back(std::stoi(t));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_config, "not an integer: '" + t + "'");
    }
  }
  return out;
}

// "from:to:step", inclusive.
std::vector<std::size_t> parse_range(const std::string& s) {
  auto parts = parse_int_list(text::join(text::split(s, ':'), ","));
  if (parts.size() != 3 || parts[0] < 1 || parts[2] < 1 || parts[1] < parts[0])
    throw Error(Errc::invalid_config, "range must look like 10:200:10");
  std::vector<std::size_t> out;
  for (int k = parts[0]; k <= parts[1]; k += parts[2]) out.push_back(static_cast<std::size_t>(k));
  return out;
}

EncoderShape tiny_shape() {
  EncoderShape s;
  s.hidden = 64;
  s.layers = 2;
  s.heads = 4;
  s.intermediate = 256;
  s.max_positions = 64;
  return s;
}

// Subword inventory for a fresh encoder: vocabulary terms plus, when given,
// every word of a natural-language corpus.
std::vector<std::string> encoder_words(const Vocabulary& vocab, const std::string& corpus_path) {
  auto words = vocab.unique_terms();
  if (!corpus_path.empty())
    for (const auto& s : corpus::read_corpus(corpus_path))
      for (auto& w : text::split_whitespace(text::to_lower(s.text))) words.push_back(std::move(w));
  return words;
}

std::shared_ptr<BaseEncoder> tiny_encoder(const Vocabulary& vocab, std::uint64_t seed) {
  return std::make_shared<BaseEncoder>(
      make_random_base_encoder(vocab.unique_terms(), tiny_shape(), seed, "tiny-h64-l2-seed" + std::to_string(seed)));
}

std::shared_ptr<BaseEncoder> open_encoder(const std::string& dir) {
  if (dir.empty()) throw Error(Errc::invalid_config, "--encoder DIR is required");
  return std::make_shared<BaseEncoder>(load_base_encoder(dir));
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

// --- vocabulary ---------------------------------------------------------------

void add_import_vocab(CLI::App& app) {
  auto* cmd = app.add_subcommand("import-vocab", "Normalise an ARASAAC dump into vocabulary JSONL");
  static std::string dump, out, images, base_url;
  cmd->add_option("--dump", dump, "ARASAAC pictograms/all JSON or normalised JSONL")->required();
  cmd->add_option("--out", out, "Normalised vocabulary JSONL")->required();
  cmd->add_option("--images", images, "Directory holding <id>.png");
  cmd->add_option("--image-base-url", base_url, "Remote pictogram URL prefix");
  cmd->callback([] {
    auto v = load_vocabulary(dump, VocabFormat::autodetect, image_source(images, base_url));
    save_vocabulary(v, out);
    std::size_t with_image = 0;
    for (const auto& [id, e] : v.entries()) with_image += e.image_ref.has_value();
    print_json({{"entries", v.size()}, {"terms", v.term_index().size()}, {"expressions", v.mwe_lexicon().size()},
                {"with_image", with_image}, {"id_hash", v.id_hash()}});
  });
}

// --- corpus_forge ---------------------------------------------------------------

void add_ingest(CLI::App& app) {
  auto* cmd = app.add_subcommand("ingest", "Read collected sentences (CSV or JSONL) into corpus JSONL");
  static std::string in, out, source = "human_train";
  cmd->add_option("--in", in, "CSV with a text column, or JSONL")->required();
  cmd->add_option("--out", out, "Corpus JSONL")->required();
  cmd->add_option("--default-source", source, "Source for rows without one")
      ->check(CLI::IsMember({"human_train", "human_test", "generated"}));
  cmd->callback([] {
    auto s = corpus::ingest_collected(in, corpus::parse_source(source));
    corpus::write_corpus(s, out);
    print_json({{"sentences", s.size()}});
  });
}

void add_augment(CLI::App& app) {
  auto* cmd = app.add_subcommand("augment", "Generate sentences from example or vocabulary prompts");
  static std::string strategy = "examples", corpus_in, vocab_path, fixture, out, api_key_env = "OPENAI_API_KEY";
  static std::string base_url = "https://api.openai.com", model = "text-davinci-003";
  static std::uint64_t seed = 0;
  static bool live = false;
  static unsigned parallelism = 1;
  static double rpm = 60.0;
  cmd->add_option("--strategy", strategy, "Prompt family")->check(CLI::IsMember({"examples", "vocab"}));
  cmd->add_option("--seed", seed, "Shuffle seed for prompt grouping");
  cmd->add_option("--fixture", fixture, "Recorded completions (read in replay mode, appended in live mode)")->required();
  cmd->add_option("--corpus", corpus_in, "Human sentences (corpus JSONL)")->required();
  cmd->add_option("--vocab", vocab_path, "Vocabulary, required for --strategy vocab");
  cmd->add_option("--out", out, "Generated corpus JSONL")->required();
  cmd->add_flag("--live", live, "Call the completion backend and record answers into --fixture");
  cmd->add_option("--base-url", base_url, "Completion backend");
  cmd->add_option("--model", model, "Completion model name");
  cmd->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
  cmd->add_option("--parallelism", parallelism, "Requests in flight");
  cmd->add_option("--requests-per-minute", rpm, "Rate budget");
  cmd->callback([] {
    auto human = corpus::read_corpus(corpus_in);
    std::vector<std::string> prompts;
    if (strategy == "examples") {
      prompts = corpus::make_example_prompts(corpus::texts(human), seed);
    } else {
      if (vocab_path.empty()) throw Error(Errc::invalid_config, "--strategy vocab needs --vocab");
      prompts = corpus::make_vocab_prompts(load_vocabulary(vocab_path).unique_terms(), human, seed);
    }
    std::shared_ptr<corpus::GeneratorClient> client;
    if (live) {
      corpus::LiveSettings s;
      s.base_url = base_url;
      s.model = model;
      s.requests_per_minute = rpm;
      if (const char* k = std::getenv(api_key_env.c_str())) s.api_key = k;
      client = std::make_shared<corpus::RecordingClient>(std::make_shared<corpus::LiveClient>(s), fixture);
    } else {
      client = std::make_shared<corpus::ReplayClient>(fixture);
    }
    auto generated = corpus::augment(*client, prompts, 1, parallelism);
    corpus::write_corpus(generated, out);
    print_json({{"prompts", prompts.size()}, {"sentences", generated.size()}, {"mode", live ? "live" : "replay"}});
  });
}

void add_clean(CLI::App& app) {
  auto* cmd = app.add_subcommand("clean", "Drop toxic, too short/long, repeated and high-perplexity sentences");
  static std::string in, out, encoder_dir, vocab_path;
  static std::size_t min_len = 3, max_len = 11;
  cmd->add_option("--in", in, "Corpus JSONL")->required();
  cmd->add_option("--out", out, "Cleaned corpus JSONL")->required();
  cmd->add_option("--encoder", encoder_dir, "Base encoder used for pseudo-perplexity")->required();
  cmd->add_option("--vocab", vocab_path, "Count tokens with the expression-aware tokenizer");
  cmd->add_option("--min-len", min_len);
  cmd->add_option("--max-len", max_len);
  cmd->callback([] {
    std::optional<Vocabulary> vocab;
    if (!vocab_path.empty()) vocab = load_vocabulary(vocab_path);
    auto base = open_encoder(encoder_dir);
    corpus::CleanOptions opt;
    opt.min_len = min_len;
    opt.max_len = max_len;
    std::optional<PortugueseLemmatizer> lem;
    if (vocab) {
      lem.emplace(vocabulary_lemmatizer(*vocab));
      opt.count_tokens = [&](std::string_view s) { return tokenize_mwe(s, vocab->mwe_lexicon(), *lem).size(); };
    }
    corpus::CleanReport rep;
    auto kept = corpus::clean(corpus::read_corpus(in), eval::base_perplexity_scorer(*base), corpus::allow_all, opt, &rep);
    corpus::write_corpus(kept, out);
    print_json({{"input", rep.input}, {"toxic", rep.toxic}, {"length", rep.length}, {"duplicate", rep.duplicate},
                {"perplexity", rep.perplexity}, {"threshold", rep.threshold}, {"kept", kept.size()}});
  });
}

void add_stats(CLI::App& app) {
  auto* cmd = app.add_subcommand("stats", "Corpus summary and frequency charts");
  static std::string in, stopwords, plots, out;
  static std::size_t top = 20;
  cmd->add_option("--in", in, "Corpus JSONL")->required();
  cmd->add_option("--stopwords", stopwords, "One stopword per line")->required();
  cmd->add_option("--plots", plots, "Directory for words/stopwords/bigrams/trigrams SVG charts");
  cmd->add_option("--out", out, "Write the JSON summary here instead of stdout");
  cmd->add_option("--top", top, "Entries per chart");
  cmd->callback([] {
    auto st = corpus::corpus_stats(corpus::texts(corpus::read_corpus(in)), corpus::load_stopwords(stopwords));
    auto j = corpus::stats_to_json(st, top);
    if (!plots.empty()) {
      nlohmann::json written = nlohmann::json::array();
      for (const auto& p : corpus::write_frequency_charts(st, plots, top)) written.push_back(p.string());
      j["plots"] = written;
    }
    if (out.empty()) print_json(j);
    else write_text(out, j.dump(2) + "\n");
  });
}

void add_coverage(CLI::App& app) {
  auto* cmd = app.add_subcommand("coverage", "Share of generated sentences clustered with a human one, per k");
  static std::string target, reference, encoder_dir, range = "10:200:10", out;
  static std::uint64_t seed = 0;
  cmd->add_option("--target", target, "Generated corpus JSONL")->required();
  cmd->add_option("--reference", reference, "Human corpus JSONL")->required();
  cmd->add_option("--encoder", encoder_dir, "Base encoder (at least three layers) for sentence embeddings")->required();
  cmd->add_option("--k-range", range, "from:to:step");
  cmd->add_option("--seed", seed, "k-means seed");
  cmd->add_option("--out", out, "JSON output");
  cmd->callback([] {
    TextEncoder enc(open_encoder(encoder_dir));
    std::vector<Vec> t, r;
    for (const auto& s : corpus::read_corpus(target)) t.push_back(corpus::sentence_embedding(enc, s.text));
    for (const auto& s : corpus::read_corpus(reference)) r.push_back(corpus::sentence_embedding(enc, s.text));
    nlohmann::json rows = nlohmann::json::array();
    for (auto k : parse_range(range)) {
      if (k > t.size() + r.size()) break;
      rows.push_back({{"k", k}, {"coverage", corpus::coverage(t, r, k, seed)}});
    }
    nlohmann::json j = {{"target", t.size()}, {"reference", r.size()}, {"seed", seed}, {"curve", rows}};
    if (out.empty()) print_json(j);
    else write_text(out, j.dump(2) + "\n");
  });
}

void add_split(CLI::App& app) {
  auto* cmd = app.add_subcommand("split", "Seeded train/test/validation split of any JSONL corpus");
  static std::string in, out_dir, props = "0.68,0.16,0.16";
  static std::uint64_t seed = 0;
  cmd->add_option("--in", in, "JSONL, one sentence per line")->required();
  cmd->add_option("--out-dir", out_dir, "Receives train.jsonl, test.jsonl, validation.jsonl")->required();
  cmd->add_option("--seed", seed);
  cmd->add_option("--proportions", props, "train,test,validation");
  cmd->callback([] {
    corpus::Proportions p{};
    std::size_t i = 0;
    for (const auto& part : text::split(props, ',')) {
      if (i == 3) throw Error(Errc::invalid_proportions, "three proportions expected");
      p[i++] = std::stod(part);
    }
    if (i != 3) throw Error(Errc::invalid_proportions, "three proportions expected");
    const auto lines = read_lines(in);
    const auto parts = corpus::split(lines.size(), p, seed);
    std::map<corpus::Part, std::string> buf;
    std::map<std::string, std::size_t> counts;
    for (std::size_t k = 0; k < lines.size(); ++k) {
      buf[parts[k]] += lines[k] + "\n";
      ++counts[std::string(corpus::part_name(parts[k]))];
    }
    fs::create_directories(out_dir);
    for (auto part : {corpus::Part::train, corpus::Part::test, corpus::Part::validation})
      write_text(fs::path(out_dir) / (std::string(corpus::part_name(part)) + ".jsonl"), buf[part]);
    print_json({{"train", counts["train"]}, {"test", counts["test"]}, {"validation", counts["validation"]}, {"seed", seed}});
  });
}

// --- text_to_pictogram -------------------------------------------------------------

void add_text2picto(CLI::App& app) {
  auto* cmd = app.add_subcommand("text2picto", "Convert natural sentences to pictogram sentences");
  static std::string vocab_path, cache_path, in, out, encoder_dir, lemmas;
  cmd->add_option("--vocab", vocab_path)->required();
  cmd->add_option("--sense-cache", cache_path, "Sense vectors; created when absent, extended and saved after")->required();
  cmd->add_option("--in", in, "Corpus JSONL")->required();
  cmd->add_option("--out", out, "Picto-corpus JSONL")->required();
  cmd->add_option("--encoder", encoder_dir, "Base encoder (at least three layers) for disambiguation")->required();
  cmd->add_option("--lemmas", lemmas, "Extra form<TAB>lemma table");
  cmd->callback([] {
    auto vocab = load_vocabulary(vocab_path);
    TextEncoder enc(open_encoder(encoder_dir));
    auto lem = vocabulary_lemmatizer(vocab);
    if (!lemmas.empty()) {
      for (const auto& line : read_lines(lemmas)) {
        auto tab = line.find('\t');
        if (line.front() == '#' || tab == std::string::npos) continue;
        lem.add_form(text::to_lower(text::trim(line.substr(0, tab))), text::to_lower(text::trim(line.substr(tab + 1))));
      }
    }
    SenseCache cache = fs::exists(cache_path) ? SenseCache::load(cache_path) : SenseCache(enc.id(), enc.hidden_size());
    std::vector<PictoSentence> picto;
    std::size_t oov = 0, tokens = 0;
    for (const auto& s : corpus::read_corpus(in)) {
      picto.push_back(sentence_to_picto(s.text, vocab, lem, enc, cache));
      for (const auto& t : picto.back().tokens) {
        ++tokens;
        oov += !t.is_pictogram();
      }
    }
    write_picto_corpus(picto, out);
    cache.save(cache_path);
    print_json({{"sentences", picto.size()}, {"tokens", tokens}, {"oov_tokens", oov}, {"sense_vectors", cache.size()}});
  });
}

// --- picto_embeddings --------------------------------------------------------------

void add_init_encoder(CLI::App& app) {
  auto* cmd = app.add_subcommand("init-encoder", "Create a randomly initialised base encoder");
  static std::string vocab_path, corpus_path, out;
  static EncoderShape shape;
  static std::uint64_t seed = 0;
  static bool tiny = false;
  cmd->add_option("--vocab", vocab_path)->required();
  cmd->add_option("--corpus", corpus_path, "Natural corpus whose words join the subword inventory");
  cmd->add_option("--out", out)->required();
  cmd->add_flag("--tiny", tiny, "The 2-layer encoder `finetune --tiny` uses; shape flags are ignored");
  cmd->add_option("--hidden", shape.hidden);
  cmd->add_option("--layers", shape.layers);
  cmd->add_option("--heads", shape.heads);
  cmd->add_option("--intermediate", shape.intermediate);
  cmd->add_option("--max-positions", shape.max_positions);
  cmd->add_option("--seed", seed);
  cmd->callback([] {
    auto vocab = load_vocabulary(vocab_path);
    auto enc = tiny ? *tiny_encoder(vocab, seed) : make_random_base_encoder(encoder_words(vocab, corpus_path), shape, seed);
    save_base_encoder(enc, out);
    print_json({{"encoder_id", enc.name}, {"subwords", enc.tokenizer.vocab().size()}, {"encoder", enc.model.config().to_json()}});
  });
}

void add_build_embeddings(CLI::App& app) {
  auto* cmd = app.add_subcommand("build-embeddings", "Embedding rows for every pictogram under one strategy");
  static std::string strategy, vocab_path, out, images, encoder_dir, fallback = "caption", jsonl;
  static bool tiny = false;
  static unsigned workers = 1;
  static std::uint64_t image_seed = 0;
  static double max_failures = 0.01;
  cmd->add_option("--strategy", strategy)->required();
  cmd->add_option("--vocab", vocab_path)->required();
  cmd->add_option("--out", out, "Matrix file")->required();
  cmd->add_option("--encoder", encoder_dir, "Base encoder directory");
  cmd->add_flag("--tiny", tiny, "Use the desk-scale encoder");
  cmd->add_option("--images", images, "Directory holding <id>.png");
  cmd->add_option("--image-seed", image_seed, "Seed of the patch-projection image encoder");
  cmd->add_option("--fallback", fallback)->check(CLI::IsMember({"caption", "zero"}));
  cmd->add_option("--max-failure-fraction", max_failures);
  cmd->add_option("--workers", workers);
  cmd->add_option("--jsonl", jsonl, "Also write a JSONL debug export");
  cmd->callback([] {
    const auto s = parse_strategy(strategy);
    auto vocab = load_vocabulary(vocab_path, VocabFormat::autodetect, image_source(images, ""));
    auto base = tiny ? tiny_encoder(vocab, 0) : open_encoder(encoder_dir);
    TextEncoder enc(base);
    std::optional<PatchImageEncoder> img;
    if (uses_image(s)) img.emplace(enc.hidden_size(), image_seed);
    BuildOptions opt;
    opt.fallback = fallback == "zero" ? Fallback::zero : Fallback::caption;
    opt.max_failure_fraction = max_failures;
    opt.workers = workers;
    BuildReport rep;
    auto m = build_embedding_matrix(vocab, s, &enc, img ? &*img : nullptr, opt, &rep);
    save_matrix(m, out);
    if (!jsonl.empty()) write_text(jsonl, matrix_to_jsonl(m));
    print_json({{"strategy", strategy_name(s)}, {"rows", m.vectors.size()}, {"h", m.h}, {"encoder_id", m.encoder_id},
                {"fallbacks", rep.fallbacks.size()}, {"failures", rep.failures},
                {"unknown_subtokens", rep.unknown_subtokens}});
  });
}

// --- model_adaptation_training --------------------------------------------------------

void add_finetune(CLI::App& app) {
  auto* cmd = app.add_subcommand("finetune", "Swap the vocabulary in and train with masked-token prediction");
  static std::string config, corpus_path, validation, embeddings, out, encoder_dir, vocab_path, strategy;
  static bool tiny = false;
  static std::uint64_t split_seed = 0;
  cmd->add_option("--config", config, "Training config JSON")->required();
  cmd->add_option("--corpus", corpus_path, "Training picto-corpus JSONL")->required();
  cmd->add_option("--validation", validation, "Validation picto-corpus; default: 10% carved from --corpus");
  cmd->add_option("--embeddings", embeddings, "Matrix file from build-embeddings")->required();
  cmd->add_option("--vocab", vocab_path)->required();
  cmd->add_option("--out", out, "Checkpoint directory")->required();
  cmd->add_option("--encoder", encoder_dir, "Base encoder directory");
  cmd->add_flag("--tiny", tiny, "Use the desk-scale 2-layer encoder instead of --encoder");
  cmd->add_option("--split-seed", split_seed);
  cmd->callback([] {
    auto vocab = load_vocabulary(vocab_path);
    auto matrix = load_matrix(embeddings);
    auto cfg = model::load_training_config(config, model::TrainingConfig::defaults_for(matrix.strategy));
    auto base = tiny ? tiny_encoder(vocab, 0) : open_encoder(encoder_dir);
    if (matrix.encoder_id != base->name)
      throw Error(Errc::version_mismatch,
                  "embeddings were built with encoder '" + matrix.encoder_id + "', not '" + base->name + "'");
    auto train = read_picto_corpus(corpus_path);
    std::vector<PictoSentence> val;
    if (!validation.empty()) {
      val = read_picto_corpus(validation);
    } else {
      auto parts = corpus::split(train.size(), {0.9, 0.0, 0.1}, split_seed);
      std::vector<PictoSentence> kept;
      for (std::size_t i = 0; i < train.size(); ++i)
        (parts[i] == corpus::Part::validation ? val : kept).push_back(std::move(train[i]));
      train = std::move(kept);
    }
    std::vector<PictoSentence> all = train;
    all.insert(all.end(), val.begin(), val.end());
    auto m = model::swap_vocabulary(*base, model::build_token_table(all, vocab), matrix, vocab.id_hash());
    model::FinetuneOptions opt;
    opt.checkpoint_dir = fs::path(out).string() + ".epochs";
    opt.on_epoch = [](const model::EpochRecord& r) {
      std::fprintf(stderr, "epoch %d  train %.4f  validation %.4f  lr %.3g\n", r.epoch, r.train_loss,
                   r.validation_loss, r.last_lr);
    };
    auto history = model::finetune(m, train, val, cfg, opt);
    model::save_checkpoint(m, out, {{"training", cfg.to_json()}, {"config_hash", cfg.hash()},
                                    {"history", model::history_to_json(history)},
                                    {"train_size", train.size()}, {"validation_size", val.size()}});
    print_json({{"checkpoint", out}, {"tokens", m.table.size()}, {"epochs", history.size()},
                {"final_validation_loss", history.empty() ? 0.0 : history.back().validation_loss},
                {"model_id", model::checkpoint_model_id(model::read_checkpoint_manifest(out))}});
  });
}

// --- evaluation ---------------------------------------------------------------------

void add_evaluate(CLI::App& app) {
  auto* cmd = app.add_subcommand("evaluate", "Pseudo-perplexity and top-n accuracy on a test picto-corpus");
  static std::string checkpoint, test, grid = "1,9,18,25,36", out;
  static bool full_context = false, no_reference = false;
  static unsigned workers = 1;
  cmd->add_option("--checkpoint", checkpoint)->required();
  cmd->add_option("--test", test, "Test picto-corpus JSONL")->required();
  cmd->add_option("--grid-sizes", grid, "Comma-separated n values");
  cmd->add_option("--out", out, "Report JSON");
  cmd->add_option("--workers", workers);
  cmd->add_flag("--full-context", full_context, "Score every position with both sides visible");
  cmd->add_flag("--no-reference", no_reference, "Omit the published reference row");
  cmd->callback([] {
    auto m = model::load_checkpoint(checkpoint);
    auto manifest = model::read_checkpoint_manifest(checkpoint);
    eval::EvaluateOptions opt;
    opt.grid_sizes = parse_int_list(grid);
    opt.full_context = full_context;
    opt.attach_reference = !no_reference;
    opt.workers = workers;
    if (manifest.contains("extra")) opt.config_hash = manifest["extra"].value("config_hash", "");
    auto r = eval::evaluate(m, read_picto_corpus(test), opt);
    std::cout << eval::format_report(r);
    if (!out.empty()) write_text(out, r.to_json().dump(2) + "\n");
  });
}

void add_demo(CLI::App& app) {
  auto* cmd = app.add_subcommand("demo", "Ranked next pictograms for a prefix");
  static std::string checkpoint, prefix, vocab_path, images;
  static std::size_t k = 6;
  cmd->add_option("--checkpoint", checkpoint)->required();
  cmd->add_option("--prefix", prefix, "Space-separated tokens, e.g. \"6481 31141\"");
  cmd->add_option("--k", k);
  cmd->add_option("--vocab", vocab_path, "For captions and image references");
  cmd->add_option("--images", images);
  cmd->callback([] {
    Vocabulary vocab;
    if (!vocab_path.empty()) vocab = load_vocabulary(vocab_path, VocabFormat::autodetect, image_source(images, ""));
    auto m = model::load_checkpoint(checkpoint, vocab_path.empty() ? nullptr : &vocab);
    auto preds = eval::render_predictions(m, text::split_whitespace(prefix), k, vocab);
    std::printf("%-4s %-12s %-24s %-10s %s\n", "rank", "token", "caption", "prob", "image");
    int rank = 1;
    for (const auto& p : preds)
      std::printf("%-4d %-12s %-24s %-10.5f %s\n", rank++, p.token.c_str(), p.caption.c_str(), p.probability,
                  p.image_ref.value_or("-").c_str());
  });
}

// --- prediction_service ----------------------------------------------------------------

void add_serve(CLI::App& app) {
  auto* cmd = app.add_subcommand("serve", "HTTP prediction service");
  static service::ServiceOptions opt;
  static std::string checkpoint, vocab, images, base_url;
  cmd->add_option("--checkpoint", checkpoint)->envname("AACPRED_CHECKPOINT")->required();
  cmd->add_option("--vocab", vocab)->envname("AACPRED_VOCAB")->required();
  cmd->add_option("--images", images, "Local pictogram directory")->envname("AACPRED_IMAGES");
  cmd->add_option("--image-base-url", base_url, "Redirect image requests here")->envname("AACPRED_IMAGE_BASE_URL");
  cmd->add_option("--host", opt.host)->envname("AACPRED_HOST");
  cmd->add_option("--port", opt.port)->envname("AACPRED_PORT");
  cmd->add_option("--max-concurrency", opt.max_concurrency, "Simultaneous forward passes")
      ->envname("AACPRED_MAX_CONCURRENCY")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--cors-origin", opt.cors_origin, "Allowed browser origin")->envname("AACPRED_CORS_ORIGIN");
  cmd->add_option("--sequence-length", opt.sequence_length, "Override the checkpoint's sequence length");
  cmd->callback([] {
    opt.checkpoint = checkpoint;
    opt.vocab = vocab;
    opt.images = image_source(images, base_url);

    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGINT);
    sigaddset(&sigs, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

    service::PredictionService svc(opt);
    if (svc.bind() < 0) throw Error(Errc::invalid_config, "cannot bind " + opt.host + ":" + std::to_string(opt.port));
    std::thread http([&] { svc.serve(); });
    std::fprintf(stderr, "listening on %s:%d, loading %s\n", opt.host.c_str(), svc.port(), checkpoint.c_str());
    try {
      svc.load();
    } catch (...) {
      svc.stop();
      http.join();
      throw;
    }
    std::fprintf(stderr, "ready: %s\n", svc.health().body.dump().c_str());
    std::thread waiter([&] {
      int sig = 0;
      sigwait(&sigs, &sig);
      svc.stop();
    });
    http.join();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pictogram prediction toolkit"};
  app.require_subcommand(1);
  add_import_vocab(app);
  add_ingest(app);
  add_augment(app);
  add_clean(app);
  add_stats(app);
  add_coverage(app);
  add_split(app);
  add_text2picto(app);
  add_init_encoder(app);
  add_build_embeddings(app);
  add_finetune(app);
  add_evaluate(app);
  add_demo(app);
  add_serve(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == Errc::version_mismatch ? kExitMismatch : kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return 0;
}
