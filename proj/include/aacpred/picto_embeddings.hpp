#ifndef AACPRED_PICTO_EMBEDDINGS_HPP
#define AACPRED_PICTO_EMBEDDINGS_HPP

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/encoder.hpp"
#include "aacpred/error.hpp"
#include "aacpred/vocabulary.hpp"

namespace aacpred {

enum class EmbeddingStrategy {
  caption,
  synonyms,
  definition_input_mean,
  definition_cls_last,
  definition_mean_last,
  image,
  image_plus_caption,
  image_plus_synonyms,
};

inline constexpr EmbeddingStrategy kAllStrategies[] = {
    EmbeddingStrategy::caption,           EmbeddingStrategy::synonyms,
    EmbeddingStrategy::definition_input_mean, EmbeddingStrategy::definition_cls_last,
    EmbeddingStrategy::definition_mean_last,  EmbeddingStrategy::image,
    EmbeddingStrategy::image_plus_caption,    EmbeddingStrategy::image_plus_synonyms,
};

inline std::string_view strategy_name(EmbeddingStrategy s) {
  switch (s) {
    case EmbeddingStrategy::caption: return "caption";
    case EmbeddingStrategy::synonyms: return "synonyms";
    case EmbeddingStrategy::definition_input_mean: return "definition_input_mean";
    case EmbeddingStrategy::definition_cls_last: return "definition_cls_last";
    case EmbeddingStrategy::definition_mean_last: return "definition_mean_last";
    case EmbeddingStrategy::image: return "image";
    case EmbeddingStrategy::image_plus_caption: return "image_plus_caption";
    case EmbeddingStrategy::image_plus_synonyms: return "image_plus_synonyms";
  }
  return "unknown";
}

inline EmbeddingStrategy parse_strategy(std::string_view name) {
  for (auto s : kAllStrategies)
    if (strategy_name(s) == name) return s;
  throw Error(Errc::invalid_config, "unknown embedding strategy '" + std::string(name) + "'");
}

inline bool uses_image(EmbeddingStrategy s) {
  return s == EmbeddingStrategy::image || s == EmbeddingStrategy::image_plus_caption ||
         s == EmbeddingStrategy::image_plus_synonyms;
}

inline bool uses_text(EmbeddingStrategy s) { return s != EmbeddingStrategy::image; }

// Mean of the input embeddings of the caption's subtokens. Pieces the
// subtokenizer maps to UNK contribute the UNK row and are counted in `unknown`.
inline Vec caption_embedding(const EncoderHandle& encoder, std::string_view caption, std::size_t* unknown = nullptr) {
  if (text::trim_view(caption).empty()) throw Error(Errc::unknown_subtoken, "empty caption");
  auto pieces = encoder.subtokenize(caption);
  if (pieces.empty()) throw Error(Errc::unknown_subtoken, "no subtokens cover '" + std::string(caption) + "'");
  Vec acc = Vec::Zero(static_cast<Eigen::Index>(encoder.hidden_size()));
  for (const auto& p : pieces) {
    if (unknown && p.id == encoder.unknown_subtoken()) ++*unknown;
    acc += encoder.input_embedding(p.id);
  }
  return acc / static_cast<float>(pieces.size());
}

inline Vec synonyms_embedding(const EncoderHandle& encoder, const PictogramEntry& entry,
                              std::size_t* unknown = nullptr) {
  if (entry.keywords.empty()) throw Error(Errc::malformed_input, "entry " + entry.id.str() + " has no keywords");
  Vec acc = Vec::Zero(static_cast<Eigen::Index>(encoder.hidden_size()));
  for (const auto& k : entry.keywords) acc += caption_embedding(encoder, k.term, unknown);
  return acc / static_cast<float>(entry.keywords.size());
}

/// "k1 d1 k2 d2 ..."; a keyword without a definition contributes itself only.
inline std::string definition_text(const PictogramEntry& entry) {
  std::string out;
  for (const auto& k : entry.keywords) {
    if (!out.empty()) out += ' ';
    out += k.term;
    if (k.definition && !k.definition->empty()) {
      out += ' ';
      out += *k.definition;
    }
  }
  return out;
}

enum class DefinitionVariant { input_mean, cls_last, mean_last };

inline Vec definition_embedding(const EncoderHandle& encoder, const PictogramEntry& entry, DefinitionVariant variant,
                                std::size_t* unknown = nullptr) {
  const std::string def = definition_text(entry);
  if (def.empty()) throw Error(Errc::encoder_failure, "empty definition for " + entry.id.str());
  if (variant == DefinitionVariant::input_mean) return caption_embedding(encoder, def, unknown);
  auto states = encoder.encode(def);
  if (states.layers.empty() || states.positions() == 0)
    throw Error(Errc::encoder_failure, "encoder returned no states for " + entry.id.str());
  const auto& last = states.layers.back();
  if (static_cast<std::size_t>(last.cols()) != encoder.hidden_size())
    throw Error(Errc::encoder_failure, "hidden state width differs from hidden size");
  if (variant == DefinitionVariant::cls_last) return last.row(EncoderHandle::marker_position()).transpose();
  return last.colwise().mean().transpose();
}

/// Reads an entry's bitmap; nullopt when it is not available locally.
using ImageLoader = std::function<std::optional<std::string>(const PictogramEntry&)>;

inline std::optional<std::string> load_local_image(const PictogramEntry& entry) {
  if (!entry.image_ref) return std::nullopt;
  std::ifstream in(*entry.image_ref, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Vec image_embedding(const ImageEncoderHandle& images, const PictogramEntry& entry, std::size_t h,
                           const ImageLoader& loader = load_local_image) {
  if (!entry.image_ref) throw Error(Errc::missing_image, "pictogram " + entry.id.str() + " has no image");
  if (images.dimension() != h)
    throw Error(Errc::dimension_mismatch, "image encoder outputs " + std::to_string(images.dimension()) +
                                              " dims, matrix needs " + std::to_string(h));
  auto bytes = loader(entry);
  if (!bytes) throw Error(Errc::missing_image, "cannot read image for pictogram " + entry.id.str());
  Vec v = images.encode_image(*bytes);
  if (static_cast<std::size_t>(v.size()) != h) throw Error(Errc::dimension_mismatch, "image vector width");
  return v;
}

/// Elementwise mean of a text and an image vector.
inline Vec combine(const Vec& text_vec, const Vec& img_vec) {
  if (text_vec.size() != img_vec.size())
    throw Error(Errc::dimension_mismatch, "combine needs equal widths, got " + std::to_string(text_vec.size()) +
                                              " and " + std::to_string(img_vec.size()));
  return (text_vec + img_vec) / 2.0f;
}

/// Replacement input embeddings for the pictogram vocabulary.
struct EmbeddingMatrix {
  EmbeddingStrategy strategy = EmbeddingStrategy::caption;
  std::size_t h = 0;
  std::string encoder_id;
  std::map<PictogramId, Vec> vectors;
  std::set<PictogramId> degenerate;

  const Vec* find(PictogramId id) const {
    auto it = vectors.find(id);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

enum class Fallback { caption, zero };

struct BuildOptions {
  Fallback fallback = Fallback::caption;
  double max_failure_fraction = 0.01;
  unsigned workers = 1;
  ImageLoader image_loader = load_local_image;
};

struct BuildReport {
  struct Row {
    PictogramId id;
    std::string reason;
    bool degenerate = false;
  };
  std::vector<Row> fallbacks;
  std::size_t failures = 0;
  std::size_t unknown_subtokens = 0;
};

namespace detail {

inline Vec strategy_vector(EmbeddingStrategy s, const PictogramEntry& e, const EncoderHandle* enc,
                           const ImageEncoderHandle* img, std::size_t h, const ImageLoader& loader,
                           std::size_t* unknown) {
  switch (s) {
    case EmbeddingStrategy::caption: return caption_embedding(*enc, e.caption(), unknown);
    case EmbeddingStrategy::synonyms: return synonyms_embedding(*enc, e, unknown);
    case EmbeddingStrategy::definition_input_mean:
      return definition_embedding(*enc, e, DefinitionVariant::input_mean, unknown);
    case EmbeddingStrategy::definition_cls_last: return definition_embedding(*enc, e, DefinitionVariant::cls_last);
    case EmbeddingStrategy::definition_mean_last:
      return definition_embedding(*enc, e, DefinitionVariant::mean_last);
    case EmbeddingStrategy::image: return image_embedding(*img, e, h, loader);
    case EmbeddingStrategy::image_plus_caption:
      return combine(caption_embedding(*enc, e.caption(), unknown), image_embedding(*img, e, h, loader));
    case EmbeddingStrategy::image_plus_synonyms:
      return combine(synonyms_embedding(*enc, e, unknown), image_embedding(*img, e, h, loader));
  }
  throw Error(Errc::invalid_config, "unhandled strategy");
}

}  // namespace detail

// One row per vocabulary id. A missing image falls back silently (recorded in
// the report); any other per-entry error also falls back but counts as a
// failure, and the build aborts when failures exceed max_failure_fraction.
inline EmbeddingMatrix build_embedding_matrix(const Vocabulary& vocab, EmbeddingStrategy strategy,
                                              const EncoderHandle* encoder, const ImageEncoderHandle* images,
                                              const BuildOptions& options = {}, BuildReport* report = nullptr) {
  if (uses_text(strategy) && !encoder)
    throw Error(Errc::invalid_config, std::string(strategy_name(strategy)) + " needs a text encoder");
  if (uses_image(strategy) && !images)
    throw Error(Errc::invalid_config, std::string(strategy_name(strategy)) + " needs an image encoder");
  if (options.fallback == Fallback::caption && !encoder)
    throw Error(Errc::invalid_config, "caption fallback needs a text encoder");
  const std::size_t h = encoder ? encoder->hidden_size() : images->dimension();

  EmbeddingMatrix m;
  m.strategy = strategy;
  m.h = h;
  m.encoder_id = encoder ? encoder->id() : "image-only";

  std::vector<const PictogramEntry*> entries;
  for (const auto& [id, e] : vocab.entries()) entries.push_back(&e);
  std::vector<Vec> rows(entries.size());
  std::vector<std::optional<BuildReport::Row>> notes(entries.size());
  std::vector<char> failed(entries.size(), 0);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> unknown_total{0};

  auto work = [&] {
    std::size_t unknown = 0;
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      const auto& e = *entries[i];
      try {
        rows[i] = detail::strategy_vector(strategy, e, encoder, images, h, options.image_loader, &unknown);
        if (static_cast<std::size_t>(rows[i].size()) != h)
          throw Error(Errc::dimension_mismatch, "row width " + std::to_string(rows[i].size()));
        continue;
      } catch (const Error& ex) {
        if (ex.code() != Errc::missing_image) failed[i] = 1;
        BuildReport::Row note{e.id, ex.what(), false};
        if (options.fallback == Fallback::caption) {
          try {
            rows[i] = caption_embedding(*encoder, e.caption(), &unknown);
          } catch (const Error&) {
            rows[i] = Vec::Zero(static_cast<Eigen::Index>(h));
            note.degenerate = true;
          }
        } else {
          rows[i] = Vec::Zero(static_cast<Eigen::Index>(h));
          note.degenerate = true;
        }
        notes[i] = std::move(note);
      }
    }
    unknown_total += unknown;
  };

  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  BuildReport local;
  BuildReport& rep = report ? *report : local;
  rep.unknown_subtokens += unknown_total;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    m.vectors.emplace(entries[i]->id, std::move(rows[i]));
    if (failed[i]) ++rep.failures;
    if (notes[i]) {
      if (notes[i]->degenerate) m.degenerate.insert(entries[i]->id);
      rep.fallbacks.push_back(*notes[i]);
    }
  }
  const double fraction = entries.empty() ? 0.0 : static_cast<double>(rep.failures) / entries.size();
  if (fraction > options.max_failure_fraction)
    throw Error(Errc::build_failed, std::to_string(rep.failures) + " of " + std::to_string(entries.size()) +
                                        " entries failed to embed");
  return m;
}

// Matrix file: one JSON header line
//   {"strategy", "h", "encoder_id", "count", "degenerate": [ids]}
// followed by `count` records of (int64 id, float32[h]), little-endian.
inline void save_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::checkpoint_io, "cannot write " + path.string());
  nlohmann::json header = {{"strategy", strategy_name(m.strategy)},
                           {"h", m.h},
                           {"encoder_id", m.encoder_id},
                           {"count", m.vectors.size()}};
  std::vector<std::int64_t> degenerate;
  for (auto id : m.degenerate) degenerate.push_back(id.value);
  header["degenerate"] = degenerate;
  out << header.dump() << '\n';
  for (const auto& [id, v] : m.vectors) {
    if (static_cast<std::size_t>(v.size()) != m.h) throw Error(Errc::dimension_mismatch, "row " + id.str());
    const std::int64_t raw = id.value;
    out.write(reinterpret_cast<const char*>(&raw), sizeof raw);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(sizeof(float) * m.h));
  }
  if (!out) throw Error(Errc::checkpoint_io, "write failed for " + path.string());
}

inline EmbeddingMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::checkpoint_io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::checkpoint_io, "bad matrix header: " + std::string(ex.what()));
  }
  EmbeddingMatrix m;
  m.strategy = parse_strategy(header.at("strategy").get<std::string>());
  m.h = header.at("h").get<std::size_t>();
  m.encoder_id = header.at("encoder_id").get<std::string>();
  const auto count = header.at("count").get<std::size_t>();
  for (auto id : header.value("degenerate", std::vector<std::int64_t>{})) m.degenerate.insert(PictogramId(id));
  for (std::size_t i = 0; i < count; ++i) {
    std::int64_t raw = 0;
    in.read(reinterpret_cast<char*>(&raw), sizeof raw);
    Vec v(static_cast<Eigen::Index>(m.h));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(float) * m.h));
    if (!in) throw Error(Errc::checkpoint_io, "matrix file truncated at row " + std::to_string(i));
    m.vectors.emplace(PictogramId(raw), std::move(v));
  }
  return m;
}

/// Human-readable export: one {"id", "vector"} object per line.
inline std::string matrix_to_jsonl(const EmbeddingMatrix& m) {
  std::string out;
  for (const auto& [id, v] : m.vectors) {
    nlohmann::json j = {{"id", id.value}, {"vector", std::vector<float>(v.data(), v.data() + v.size())}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace aacpred

#endif  // AACPRED_PICTO_EMBEDDINGS_HPP
