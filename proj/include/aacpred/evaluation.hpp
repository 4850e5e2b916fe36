#ifndef AACPRED_EVALUATION_HPP
#define AACPRED_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/model/adapted_model.hpp"
#include "aacpred/nn/transformer.hpp"
#include "aacpred/picto_embeddings.hpp"
#include "aacpred/text_encoder.hpp"
#include "aacpred/vocabulary.hpp"
#include "aacpred/wordpiece.hpp"

namespace aacpred::eval {

using Dist = Eigen::VectorXd;
using Sentence = std::vector<std::int32_t>;

inline const std::vector<int>& default_grid_sizes() {
  static const std::vector<int> n = {1, 9, 18, 25, 36};
  return n;
}

/// One masked query: predict `position` of `context`. A position equal to
/// the context length means "the next token after the context".
struct Query {
  Sentence context;
  std::size_t position = 0;
};

class ScorerHandle {
 public:
  virtual ~ScorerHandle() = default;

  virtual std::size_t table_size() const = 0;
  virtual Dist token_distribution(const Sentence& context, std::size_t position) const = 0;
  /// Gold-token probability at every position of an unmasked pass.
  virtual std::vector<double> sentence_token_probs(const Sentence& sentence) const = 0;

  virtual std::vector<Dist> token_distributions(const std::vector<Query>& queries) const {
    std::vector<Dist> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(token_distribution(q.context, q.position));
    return out;
  }
};

namespace detail {

// Runs fn(i) for i in [0, n) over `workers` threads with contiguous chunks.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// exp of the mean natural-log cross-entropy over every gold token of every
// sentence; equal to 2^(-(1/N) sum log2 p). Per-sentence sums are reduced in
// sentence order, so the result does not depend on `workers`.
inline double pseudo_perplexity(const ScorerHandle& scorer, const std::vector<Sentence>& sentences,
                                unsigned workers = 1) {
  if (sentences.empty()) throw Error(Errc::malformed_input, "perplexity needs at least one sentence");
  std::vector<double> sums(sentences.size(), 0.0);
  std::vector<std::size_t> counts(sentences.size(), 0);
  detail::parallel_for(sentences.size(), workers, [&](std::size_t i) {
    if (sentences[i].empty()) return;
    const auto probs = scorer.sentence_token_probs(sentences[i]);
    if (probs.size() != sentences[i].size())
      throw Error(Errc::scorer_failure, "scorer returned " + std::to_string(probs.size()) + " probabilities for " +
                                            std::to_string(sentences[i].size()) + " tokens");
    for (std::size_t t = 0; t < probs.size(); ++t) {
      if (!(probs[t] > 0.0))
        throw Error(Errc::zero_probability,
                    "sentence " + std::to_string(i) + " token " + std::to_string(t) + " has probability 0");
      sums[i] += std::log(probs[t]);
    }
    counts[i] = probs.size();
  });
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    total += sums[i];
    n += counts[i];
  }
  if (n == 0) throw Error(Errc::malformed_input, "no tokens to score");
  return std::exp(-total / static_cast<double>(n));
}

/// 1-based rank of `gold`; equal scores rank the lower index first.
inline std::size_t gold_rank(const Dist& d, std::int32_t gold) {
  const double g = d(gold);
  std::size_t rank = 1;
  for (Eigen::Index j = 0; j < d.size(); ++j)
    if (d(j) > g || (d(j) == g && j < gold)) ++rank;
  return rank;
}

struct TopNOptions {
  bool full_context = false;  // mask in place instead of left context only
  unsigned workers = 1;
};

// Every position of every sentence is queried, the first one with only the
// start marker as context.
inline std::map<int, double> topn_accuracy(const ScorerHandle& scorer, const std::vector<Sentence>& sentences,
                                           const std::vector<int>& ns = default_grid_sizes(),
                                           const TopNOptions& opt = {}) {
  if (sentences.empty()) throw Error(Errc::malformed_input, "accuracy needs at least one sentence");
  for (int n : ns)
    if (n < 1) throw Error(Errc::invalid_config, "grid size must be >= 1");
  std::vector<std::vector<std::size_t>> ranks(sentences.size());
  detail::parallel_for(sentences.size(), opt.workers, [&](std::size_t i) {
    const auto& s = sentences[i];
    std::vector<Query> qs;
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (opt.full_context) qs.push_back({s, t});
      else qs.push_back({Sentence(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(t)), t});
    }
    const auto dists = scorer.token_distributions(qs);
    for (std::size_t t = 0; t < s.size(); ++t) ranks[i].push_back(gold_rank(dists[t], s[t]));
  });
  std::map<int, double> acc;
  std::size_t total = 0;
  for (const auto& r : ranks) total += r.size();
  if (total == 0) throw Error(Errc::malformed_input, "no positions to query");
  for (int n : ns) {
    std::size_t hits = 0;
    for (const auto& r : ranks)
      for (auto x : r) hits += x <= static_cast<std::size_t>(n);
    acc[n] = static_cast<double>(hits) / static_cast<double>(total);
  }
  return acc;
}

struct MlmScorerOptions {
  bool content_only = true;  // renormalize masked distributions over non-reserved tokens
  bool end_marker = false;   // close masked queries with the end marker
};

// Scorer over a masked-LM encoder and its token table. Inputs are framed
// with the start marker; unmasked passes also carry the end marker.
class MlmScorer : public ScorerHandle {
 public:
  MlmScorer(const nn::Transformer& model, const TokenTable& table, MlmScorerOptions opt = {})
      : model_(&model), table_(&table), opt_(opt), reserved_(table.size(), 0) {
    for (const char* r : {TokenTable::kPad, TokenTable::kUnk, TokenTable::kStart, TokenTable::kEnd, TokenTable::kMask})
      if (auto i = table.find(r); i >= 0) reserved_[static_cast<std::size_t>(i)] = 1;
  }

  std::size_t table_size() const override { return table_->size(); }

  Dist token_distribution(const Sentence& context, std::size_t position) const override {
    return token_distributions({Query{context, position}}).front();
  }

  std::vector<Dist> token_distributions(const std::vector<Query>& queries) const override {
    std::vector<Dist> out;
    if (queries.empty()) return out;
    std::vector<Sentence> framed;
    std::size_t len = 0;
    for (const auto& q : queries) {
      if (q.position > q.context.size()) throw Error(Errc::malformed_input, "query position beyond context");
      Sentence ids;
      ids.push_back(table_->start());
      ids.insert(ids.end(), q.context.begin(), q.context.end());
      if (q.position == q.context.size()) ids.push_back(table_->mask());
      else ids[q.position + 1] = table_->mask();
      if (opt_.end_marker) ids.push_back(table_->end());
      len = std::max(len, ids.size());
      framed.push_back(std::move(ids));
    }
    nn::Batch b = pack(framed, len);
    std::vector<int> rows;
    for (std::size_t i = 0; i < queries.size(); ++i)
      rows.push_back(static_cast<int>(i * len + queries[i].position + 1));
    const RowMat logits = model_->logits(b, rows);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      Dist d = softmax(logits.row(r));
      if (opt_.content_only) {
        for (std::size_t j = 0; j < reserved_.size(); ++j)
          if (reserved_[j]) d(static_cast<Eigen::Index>(j)) = 0.0;
        d /= d.sum();
      }
      out.push_back(std::move(d));
    }
    return out;
  }

  std::vector<double> sentence_token_probs(const Sentence& sentence) const override {
    Sentence ids;
    ids.push_back(table_->start());
    ids.insert(ids.end(), sentence.begin(), sentence.end());
    ids.push_back(table_->end());
    nn::Batch b = pack({ids}, ids.size());
    std::vector<int> rows;
    for (std::size_t t = 0; t < sentence.size(); ++t) rows.push_back(static_cast<int>(t + 1));
    const RowMat logits = model_->logits(b, rows);
    std::vector<double> p;
    for (std::size_t t = 0; t < sentence.size(); ++t) p.push_back(softmax(logits.row(static_cast<Eigen::Index>(t)))(sentence[t]));
    return p;
  }

  const TokenTable& table() const { return *table_; }
  bool is_reserved(std::int32_t i) const { return reserved_.at(static_cast<std::size_t>(i)) != 0; }

 private:
  static Dist softmax(const Eigen::Ref<const Eigen::RowVectorXf>& row) {
    Dist z = row.transpose().cast<double>();
    z.array() -= z.maxCoeff();
    z = z.array().exp();
    return z / z.sum();
  }

  nn::Batch pack(const std::vector<Sentence>& seqs, std::size_t len) const {
    if (len > static_cast<std::size_t>(model_->config().max_positions))
      throw Error(Errc::malformed_input, "input of " + std::to_string(len) + " positions exceeds the model's " +
                                             std::to_string(model_->config().max_positions));
    nn::Batch b;
    b.batch = static_cast<int>(seqs.size());
    b.length = static_cast<int>(len);
    for (const auto& s : seqs) {
      for (std::size_t i = 0; i < len; ++i) {
        const bool real = i < s.size();
        b.ids.push_back(real ? s[i] : table_->pad());
        b.attend.push_back(real ? 1 : 0);
      }
    }
    return b;
  }

  const nn::Transformer* model_;
  const TokenTable* table_;
  MlmScorerOptions opt_;
  std::vector<char> reserved_;
};

/// Top-n table indices for the next token after `prefix`, reserved tokens excluded.
inline std::vector<std::pair<std::int32_t, double>> rank_next(const MlmScorer& scorer, const Sentence& prefix,
                                                              std::size_t n) {
  const Dist d = scorer.token_distribution(prefix, prefix.size());
  std::vector<std::int32_t> idx;
  for (Eigen::Index j = 0; j < d.size(); ++j)
    if (!scorer.is_reserved(static_cast<std::int32_t>(j))) idx.push_back(static_cast<std::int32_t>(j));
  n = std::min(n, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::int32_t a, std::int32_t b) { return d(a) > d(b) || (d(a) == d(b) && a < b); });
  std::vector<std::pair<std::int32_t, double>> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(idx[i], d(idx[i]));
  return out;
}

struct Prediction {
  std::string token;
  std::optional<PictogramId> id;
  std::string caption;
  double probability = 0.0;
  std::optional<std::string> image_ref;
};

inline std::vector<Prediction> render_predictions(const model::AdaptedModel& m, const std::vector<std::string>& prefix,
                                                  std::size_t k, const Vocabulary& vocab,
                                                  const ImageSource& images = {}) {
  if (k < 1) throw Error(Errc::invalid_config, "k must be >= 1");
  MlmScorer scorer(m.encoder, m.table);
  std::vector<Prediction> out;
  for (const auto& [idx, p] : rank_next(scorer, m.indices(prefix), k)) {
    Prediction pr;
    pr.token = m.table.token(idx);
    pr.probability = p;
    pr.caption = pr.token;
    if (auto id = model::parse_id_token(pr.token)) {
      pr.id = *id;
      if (const auto* e = vocab.find(*id)) {
        pr.caption = e->caption();
        pr.image_ref = e->image_ref ? e->image_ref : images.resolve(*id);
      }
    }
    out.push_back(std::move(pr));
  }
  return out;
}

/// Published reference figures per strategy, for side-by-side display only.
struct ReferenceRow {
  double ppl;
  std::map<int, double> acc;
};

inline std::optional<ReferenceRow> reference_for(EmbeddingStrategy s) {
  using E = EmbeddingStrategy;
  auto row = [](double ppl, double a1, double a9, double a18, double a25, double a36) {
    return ReferenceRow{ppl, {{1, a1}, {9, a9}, {18, a18}, {25, a25}, {36, a36}}};
  };
  switch (s) {
    case E::caption: return row(15.433, 0.237, 0.530, 0.620, 0.657, 0.702);
    case E::synonyms: return row(14.282, 0.225, 0.511, 0.604, 0.647, 0.698);
    case E::definition_input_mean: return row(23.368, 0.209, 0.492, 0.580, 0.627, 0.673);
    case E::image_plus_synonyms: return row(122.407, 0.042, 0.169, 0.220, 0.255, 0.293);
    case E::definition_mean_last: return row(22.496, 0.019, 0.122, 0.206, 0.246, 0.295);
    case E::image: return row(106.130, 0.007, 0.037, 0.078, 0.112, 0.146);
    case E::image_plus_caption: return row(89.685, 0.007, 0.038, 0.076, 0.111, 0.146);
    case E::definition_cls_last: return row(89.107, 0.003, 0.062, 0.117, 0.153, 0.203);
  }
  return std::nullopt;
}

struct EvalReport {
  EmbeddingStrategy strategy = EmbeddingStrategy::caption;
  double ppl = 0.0;
  std::map<int, double> acc;
  std::size_t test_size = 0;
  std::string config_hash;
  std::optional<ReferenceRow> reference;

  nlohmann::json to_json() const {
    auto acc_json = [](const std::map<int, double>& m) {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& [n, v] : m) j[std::to_string(n)] = v;
      return j;
    };
    nlohmann::json j = {{"strategy", strategy_name(strategy)},
                        {"ppl", ppl},
                        {"acc", acc_json(acc)},
                        {"test_size", test_size},
                        {"config_hash", config_hash}};
    if (reference) j["reference"] = {{"ppl", reference->ppl}, {"acc", acc_json(reference->acc)}};
    return j;
  }
};

struct EvaluateOptions {
  std::vector<int> grid_sizes = default_grid_sizes();
  bool full_context = false;
  bool attach_reference = true;
  unsigned workers = 1;
  std::string config_hash;
};

inline EvalReport evaluate(const model::AdaptedModel& m, const std::vector<PictoSentence>& test,
                           const EvaluateOptions& opt = {}) {
  std::vector<Sentence> sentences;
  for (const auto& s : test) sentences.push_back(m.indices(s));
  MlmScorer scorer(m.encoder, m.table);
  EvalReport r;
  r.strategy = m.strategy;
  r.test_size = test.size();
  r.config_hash = opt.config_hash;
  r.ppl = pseudo_perplexity(scorer, sentences, opt.workers);
  r.acc = topn_accuracy(scorer, sentences, opt.grid_sizes, {opt.full_context, opt.workers});
  if (opt.attach_reference) r.reference = reference_for(m.strategy);
  return r;
}

/// Plain-text table of a report next to its reference row.
inline std::string format_report(const EvalReport& r) {
  std::string out = "strategy " + std::string(strategy_name(r.strategy)) + ", " + std::to_string(r.test_size) +
                    " test sentences\n";
  char buf[64];
  out += "            PPL";
  for (const auto& [n, v] : r.acc) {
    std::snprintf(buf, sizeof buf, "   ACC@%-3d", n);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "\nmeasured %9.3f", r.ppl);
  out += buf;
  for (const auto& [n, v] : r.acc) {
    std::snprintf(buf, sizeof buf, "   %7.3f", v);
    out += buf;
  }
  if (r.reference) {
    std::snprintf(buf, sizeof buf, "\nreference %8.3f", r.reference->ppl);
    out += buf;
    for (const auto& [n, v] : r.acc) {
      auto it = r.reference->acc.find(n);
      if (it == r.reference->acc.end()) out += "         -";
      else {
        std::snprintf(buf, sizeof buf, "   %7.3f", it->second);
        out += buf;
      }
    }
  }
  return out + "\n";
}

// Subword pseudo-perplexity of raw text under a base encoder; the cleaning
// stage uses it to drop unnatural sentences.
inline std::function<double(std::string_view)> base_perplexity_scorer(const BaseEncoder& base) {
  return [&base](std::string_view text) {
    auto pieces = base.tokenizer.tokenize(text);
    const auto budget = static_cast<std::size_t>(base.model.config().max_positions - 2);
    if (pieces.size() > budget) pieces.resize(budget);
    if (pieces.empty()) throw Error(Errc::malformed_input, "nothing to score");
    Sentence ids;
    for (const auto& p : pieces) ids.push_back(p.id);
    MlmScorer scorer(base.model, base.tokenizer.vocab());
    return pseudo_perplexity(scorer, {ids});
  };
}

}  // namespace aacpred::eval

#endif  // AACPRED_EVALUATION_HPP
