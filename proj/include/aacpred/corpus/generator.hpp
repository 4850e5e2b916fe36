#ifndef AACPRED_CORPUS_GENERATOR_HPP
#define AACPRED_CORPUS_GENERATOR_HPP

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "aacpred/corpus/sentence.hpp"
#include "aacpred/error.hpp"
#include "aacpred/hash.hpp"
#include "aacpred/text.hpp"

namespace aacpred::corpus {

enum class GeneratorMode { live, replay };

/// Text-completion backend used for augmentation.
class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual std::vector<std::string> complete(const std::string& prompt, std::size_t max_items) = 0;
  virtual GeneratorMode mode() const = 0;
};

/// Serves completions recorded in a fixture file keyed by the prompt's SHA-256.
class ReplayClient final : public GeneratorClient {
 public:
  explicit ReplayClient(const std::filesystem::path& fixture) {
    std::ifstream in(fixture);
    if (!in) throw Error(Errc::missing_fixture, "cannot open fixture " + fixture.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (text::trim_view(line).empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        auto& slot = records_[j.at("prompt_sha256").get<std::string>()];
        for (auto& c : j.at("completions")) slot.push_back(c.get<std::string>());
      } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::missing_fixture, fixture.string() + ":" + std::to_string(n) + ": " + ex.what());
      }
    }
  }

  std::vector<std::string> complete(const std::string& prompt, std::size_t max_items) override {
    auto it = records_.find(sha256_hex(prompt));
    if (it == records_.end())
      throw Error(Errc::missing_fixture, "no recorded completion for prompt " + sha256_hex(prompt).substr(0, 12));
    std::vector<std::string> out = it->second;
    if (out.size() > max_items) out.resize(max_items);
    return out;
  }

  GeneratorMode mode() const override { return GeneratorMode::replay; }
  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> records_;
};

struct LiveSettings {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/completions";
  std::string api_key;
  std::string model = "text-davinci-003";
  double temperature = 0.7;
  int max_tokens = 256;
  double requests_per_minute = 60.0;
  int timeout_seconds = 60;
};

// OpenAI-compatible completions endpoint. Requests are spaced to respect the
// configured rate budget across all threads using this client.
class LiveClient final : public GeneratorClient {
 public:
  explicit LiveClient(LiveSettings s) : settings_(std::move(s)) {}

  std::vector<std::string> complete(const std::string& prompt, std::size_t max_items) override {
    wait_for_budget();
    httplib::Client cli(settings_.base_url);
    cli.set_read_timeout(settings_.timeout_seconds, 0);
    cli.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);
    nlohmann::json body = {{"model", settings_.model},
                           {"prompt", prompt},
                           {"temperature", settings_.temperature},
                           {"max_tokens", settings_.max_tokens},
                           {"n", std::max<std::size_t>(1, max_items)}};
    auto res = cli.Post(settings_.path, headers, body.dump(), "application/json");
    if (!res) throw Error(Errc::backend_unavailable, "completion request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(Errc::backend_unavailable, "completion backend answered " + std::to_string(res->status));
    std::vector<std::string> out;
    try {
      for (const auto& c : nlohmann::json::parse(res->body).at("choices")) out.push_back(c.at("text").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::backend_unavailable, std::string("unexpected completion payload: ") + ex.what());
    }
    if (out.size() > max_items) out.resize(max_items);
    return out;
  }

  GeneratorMode mode() const override { return GeneratorMode::live; }

 private:
  void wait_for_budget() {
    if (settings_.requests_per_minute <= 0) return;
    const auto gap = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(60.0 / settings_.requests_per_minute));
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mutex_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_slot_);
      next_slot_ = slot + gap;
    }
    std::this_thread::sleep_until(slot);
  }

  LiveSettings settings_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

/// Appends one fixture record under an exclusive file lock.
inline void append_fixture(const std::filesystem::path& fixture, const std::string& prompt,
                           const std::vector<std::string>& completions) {
  const std::string line =
      nlohmann::json{{"prompt_sha256", sha256_hex(prompt)}, {"completions", completions}}.dump() + "\n";
  int fd = ::open(fixture.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw Error(Errc::missing_fixture, "cannot open fixture " + fixture.string() + " for append");
  ::flock(fd, LOCK_EX);
  std::size_t written = 0;
  while (written < line.size()) {
    auto n = ::write(fd, line.data() + written, line.size() - written);
    if (n <= 0) break;
    written += static_cast<std::size_t>(n);
  }
  ::flock(fd, LOCK_UN);
  ::close(fd);
  if (written != line.size()) throw Error(Errc::missing_fixture, "short write to " + fixture.string());
}

/// Forwards to another client and records every answer for later replay.
class RecordingClient final : public GeneratorClient {
 public:
  RecordingClient(std::shared_ptr<GeneratorClient> inner, std::filesystem::path fixture)
      : inner_(std::move(inner)), fixture_(std::move(fixture)) {}

  std::vector<std::string> complete(const std::string& prompt, std::size_t max_items) override {
    auto out = inner_->complete(prompt, max_items);
    append_fixture(fixture_, prompt, out);
    return out;
  }

  GeneratorMode mode() const override { return inner_->mode(); }

 private:
  std::shared_ptr<GeneratorClient> inner_;
  std::filesystem::path fixture_;
};

// Splits a completion into sentences: "Example N:" markers (English or
// Portuguese, any case) and line breaks separate items; items shorter than
// two characters are dropped.
inline std::vector<std::string> parse_completion(std::string_view completion) {
  static const std::regex marker(R"((?:example|exemplo)\s*\d+\s*[:.)\-])", std::regex::icase);
  std::string flat = std::regex_replace(std::string(completion), marker, "\n");
  std::vector<std::string> out;
  for (auto& line : text::split(flat, '\n')) {
    auto t = text::trim(line);
    if (t.size() < 2) continue;
    out.push_back(std::move(t));
  }
  return out;
}

// Runs every prompt through the client with at most `parallelism` requests in
// flight. Output follows prompt order; repeats are kept.
inline std::vector<NaturalSentence> augment(GeneratorClient& client, const std::vector<std::string>& prompts,
                                            std::size_t max_items = 1, unsigned parallelism = 1) {
  std::vector<std::vector<std::string>> answers(prompts.size());
  std::vector<std::exception_ptr> errors(prompts.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      try {
        answers[i] = client.complete(prompts[i], max_items);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(prompts.size())));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<NaturalSentence> out;
  for (const auto& completions : answers)
    for (const auto& c : completions)
      for (auto& s : parse_completion(c)) out.push_back({std::move(s), Source::generated, std::nullopt});
  return out;
}

}  // namespace aacpred::corpus

#endif  // AACPRED_CORPUS_GENERATOR_HPP
