#ifndef AACPRED_CORPUS_SENTENCE_HPP
#define AACPRED_CORPUS_SENTENCE_HPP

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/text.hpp"

namespace aacpred::corpus {

enum class Source { human_train, human_test, generated };
enum class Context { home, school, kitchen, leisure, event, essential };

inline std::string_view source_name(Source s) {
  switch (s) {
    case Source::human_train: return "human_train";
    case Source::human_test: return "human_test";
    case Source::generated: return "generated";
  }
  return "generated";
}

inline Source parse_source(std::string_view s) {
  for (auto v : {Source::human_train, Source::human_test, Source::generated})
    if (source_name(v) == s) return v;
  throw Error(Errc::malformed_input, "unknown source '" + std::string(s) + "'");
}

inline std::string_view context_name(Context c) {
  switch (c) {
    case Context::home: return "home";
    case Context::school: return "school";
    case Context::kitchen: return "kitchen";
    case Context::leisure: return "leisure";
    case Context::event: return "event";
    case Context::essential: return "essential";
  }
  return "home";
}

inline Context parse_context(std::string_view s) {
  for (auto v : {Context::home, Context::school, Context::kitchen, Context::leisure, Context::event,
                 Context::essential})
    if (context_name(v) == s) return v;
  throw Error(Errc::malformed_input, "unknown context '" + std::string(s) + "'");
}

struct NaturalSentence {
  std::string text;
  Source source = Source::human_train;
  std::optional<Context> context;

  bool operator==(const NaturalSentence&) const = default;
};

inline std::vector<std::string> texts(const std::vector<NaturalSentence>& v) {
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(s.text);
  return out;
}

inline nlohmann::json to_json(const NaturalSentence& s) {
  nlohmann::json j = {{"text", s.text}, {"source", source_name(s.source)}, {"context", nullptr}};
  if (s.context) j["context"] = context_name(*s.context);
  return j;
}

inline NaturalSentence sentence_from_json(const nlohmann::json& j, Source fallback) {
  NaturalSentence s;
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
    throw Error(Errc::malformed_input, "record without a text field");
  s.text = text::trim(j["text"].get<std::string>());
  s.source = fallback;
  if (j.contains("source") && j["source"].is_string() && !j["source"].get<std::string>().empty())
    s.source = parse_source(j["source"].get<std::string>());
  if (j.contains("context") && j["context"].is_string() && !j["context"].get<std::string>().empty())
    s.context = parse_context(j["context"].get<std::string>());
  return s;
}

namespace detail {

// RFC 4180 records: quoted fields may hold commas, doubled quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view data) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error(Errc::malformed_input, "unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::malformed_input, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace detail

// Reads practitioner sentences from CSV (header with a `text` column and
// optional `source`, `context`) or JSONL. Rows without a source take
// `default_source`. Sentences are trimmed; blank rows and exact repeats are dropped.
inline std::vector<NaturalSentence> ingest_collected(const std::filesystem::path& path,
                                                     Source default_source = Source::human_train) {
  const std::string data = detail::slurp(path);
  std::vector<NaturalSentence> raw;
  const auto first = text::trim_view(data);
  const bool jsonl = path.extension() == ".jsonl" || path.extension() == ".json" ||
                     (!first.empty() && first.front() == '{');
  if (jsonl) {
    std::size_t n = 0;
    for (const auto& line : text::split(data, '\n')) {
      ++n;
      if (text::trim_view(line).empty()) continue;
      try {
        raw.push_back(sentence_from_json(nlohmann::json::parse(line), default_source));
      } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::malformed_input, path.string() + ":" + std::to_string(n) + ": " + ex.what());
      }
    }
  } else {
    auto rows = detail::parse_csv(data);
    if (rows.empty()) return {};
    const auto& header = rows.front();
    int col_text = -1, col_source = -1, col_context = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
      auto h = text::to_lower(text::trim(header[i]));
      if (h == "text") col_text = static_cast<int>(i);
      if (h == "source") col_source = static_cast<int>(i);
      if (h == "context") col_context = static_cast<int>(i);
    }
    if (col_text < 0) throw Error(Errc::malformed_input, path.string() + ": CSV header lacks a text column");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      auto cell = [&](int c) { return c >= 0 && c < static_cast<int>(row.size()) ? text::trim(row[c]) : std::string(); };
      nlohmann::json j = {{"text", cell(col_text)}, {"source", cell(col_source)}, {"context", cell(col_context)}};
      raw.push_back(sentence_from_json(j, default_source));
    }
  }
  std::vector<NaturalSentence> out;
  std::set<std::string> seen;
  for (auto& s : raw) {
    if (s.text.empty()) continue;
    if (!seen.insert(s.text).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<NaturalSentence> read_corpus(const std::filesystem::path& path) {
  std::vector<NaturalSentence> out;
  std::size_t n = 0;
  for (const auto& line : text::split(detail::slurp(path), '\n')) {
    ++n;
    if (text::trim_view(line).empty()) continue;
    try {
      out.push_back(sentence_from_json(nlohmann::json::parse(line), Source::generated));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::malformed_input, path.string() + ":" + std::to_string(n) + ": " + ex.what());
    }
  }
  return out;
}

inline void write_corpus(const std::vector<NaturalSentence>& sentences, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::malformed_input, "cannot write " + path.string());
  for (const auto& s : sentences) out << to_json(s).dump() << '\n';
}

}  // namespace aacpred::corpus

#endif  // AACPRED_CORPUS_SENTENCE_HPP
