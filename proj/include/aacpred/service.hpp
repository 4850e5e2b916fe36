#ifndef AACPRED_SERVICE_HPP
#define AACPRED_SERVICE_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "aacpred/error.hpp"
#include "aacpred/evaluation.hpp"
#include "aacpred/model/adapted_model.hpp"
#include "aacpred/vocabulary.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen's products.
#include <httplib.h>

namespace aacpred::service {

struct ServiceOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;
  ImageSource images;
  std::string host = "127.0.0.1";
  int port = 8080;
  int max_concurrency = 2;     // simultaneous forward passes
  int connection_threads = 8;  // HTTP workers; at least max_concurrency
  std::string cors_origin;     // empty: no CORS headers
  int sequence_length = 0;     // 0: read from the checkpoint's training record, else 13
  std::size_t max_page_size = 1000;
};

/// Everything a request reads. Built once, never mutated.
struct LoadedModel {
  model::AdaptedModel model;
  Vocabulary vocab;
  std::string model_id;
  int sequence_length = 13;
  std::size_t content_tokens = 0;  // table size minus reserved
};

struct PredictionItem {
  std::string token;
  std::optional<PictogramId> id;
  std::string caption;
  double probability = 0.0;
  std::optional<std::string> image_url;
};

struct PredictionResult {
  std::vector<PredictionItem> items;
  std::string model_id;
  double latency_ms = 0.0;

  // latency_ms travels in the X-Latency-Ms header so bodies stay byte-identical.
  nlohmann::json body_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& it : items) {
      nlohmann::json j = {{"token", it.token}, {"caption", it.caption}, {"probability", it.probability}};
      j["id"] = it.id ? nlohmann::json(it.id->value) : nlohmann::json(nullptr);
      j["image_url"] = it.image_url ? nlohmann::json(*it.image_url) : nlohmann::json(nullptr);
      arr.push_back(std::move(j));
    }
    return {{"items", std::move(arr)}, {"model_id", model_id}};
  }
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

inline Reply error_reply(int status, std::string_view kind, const std::string& message) {
  return {status, {{"error", kind}, {"message", message}}};
}

inline int sequence_length_from(const nlohmann::json& manifest) {
  if (manifest.contains("extra") && manifest["extra"].contains("training")) {
    const auto& t = manifest["extra"]["training"];
    if (t.contains("sequence_length") && t["sequence_length"].is_number_integer()) return t["sequence_length"].get<int>();
  }
  return 13;
}

// Throws VersionMismatch when the checkpoint was built for another vocabulary.
inline std::shared_ptr<const LoadedModel> load_model(const ServiceOptions& opt) {
  auto out = std::make_shared<LoadedModel>();
  out->vocab = load_vocabulary(opt.vocab);
  const auto manifest = model::read_checkpoint_manifest(opt.checkpoint);
  out->model = model::load_checkpoint(opt.checkpoint, &out->vocab);
  out->model_id = model::checkpoint_model_id(manifest);
  out->sequence_length = opt.sequence_length > 0 ? opt.sequence_length : sequence_length_from(manifest);
  out->content_tokens = out->model.table.size() - model::reserved_tokens().size();
  return out;
}

inline nlohmann::json openapi_document();

class PredictionService {
 public:
  explicit PredictionService(ServiceOptions opt)
      : opt_(std::move(opt)),
        inference_slots_(std::max(1, opt_.max_concurrency)),
        started_(std::chrono::steady_clock::now()) {
    const auto threads = static_cast<std::size_t>(std::max(opt_.connection_threads, std::max(1, opt_.max_concurrency)));
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    routes();
  }

  PredictionService(const PredictionService&) = delete;
  PredictionService& operator=(const PredictionService&) = delete;

  void load() { attach(load_model(opt_)); }

  void attach(std::shared_ptr<const LoadedModel> m) {
    std::lock_guard lock(mu_);
    loaded_ = std::move(m);
  }

  std::shared_ptr<const LoadedModel> loaded() const {
    std::lock_guard lock(mu_);
    return loaded_;
  }

  bool ready() const { return loaded() != nullptr; }

  /// Binds the configured host/port (port 0 picks a free one). Returns the port or -1.
  int bind() {
    if (opt_.port == 0) return port_ = server_.bind_to_any_port(opt_.host);
    return port_ = server_.bind_to_port(opt_.host, opt_.port) ? opt_.port : -1;
  }

  // stop() before serve() has entered its accept loop still ends it.
  bool serve() {
    serving_ = true;
    const bool ok = !stopping_ && server_.listen_after_bind();
    serving_ = false;
    return ok;
  }
  void stop() {
    stopping_ = true;
    while (serving_ && !server_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    server_.stop();
  }
  int port() const { return port_; }
  httplib::Server& server() { return server_; }
  const ServiceOptions& options() const { return opt_; }

  Reply health() const {
    auto m = loaded();
    if (!m) return error_reply(503, "Loading", "model not loaded yet");
    const double uptime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    return {200, {{"status", "ok"},
                  {"model_id", m->model_id},
                  {"vocab_size", m->model.table.size()},
                  {"strategy", strategy_name(m->model.strategy)},
                  {"uptime", uptime}}};
  }

  Reply vocabulary_page(const std::string& page_s, const std::string& size_s) const {
    auto m = loaded();
    if (!m) return error_reply(503, "Loading", "model not loaded yet");
    auto page = parse_count(page_s.empty() ? "0" : page_s);
    auto size = parse_count(size_s.empty() ? "36" : size_s);
    if (!page || !size || *size == 0 || *size > opt_.max_page_size)
      return error_reply(400, "InvalidPaging",
                         "page must be >= 0 and size in [1, " + std::to_string(opt_.max_page_size) + "]");
    const auto& entries = m->vocab.entries();
    nlohmann::json items = nlohmann::json::array();
    const std::size_t total = entries.size();
    if (*page < (total + *size - 1) / *size) {
      auto it = entries.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(*page * *size));
      for (std::size_t n = 0; n < *size && it != entries.end(); ++n, ++it) {
        nlohmann::json caps = nlohmann::json::array();
        for (const auto& k : it->second.keywords) caps.push_back(k.term);
        items.push_back({{"id", it->first.value}, {"captions", caps}, {"has_image", image_for(*m, it->first).has_value()}});
      }
    }
    return {200, {{"page", *page}, {"size", *size}, {"total", total}, {"items", std::move(items)}}};
  }

  // Scores the position right after `prefix`. Validation order: n, length, tokens.
  Reply predict(const std::string& body, PredictionResult* out = nullptr) const {
    const auto t0 = std::chrono::steady_clock::now();
    auto m = loaded();
    if (!m) return error_reply(503, "Loading", "model not loaded yet");
    nlohmann::json q;
    try {
      q = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& ex) {
      return error_reply(400, "MalformedInput", ex.what());
    }
    if (!q.is_object()) return error_reply(400, "MalformedInput", "body must be a JSON object");
    std::vector<std::string> prefix;
    if (q.contains("prefix")) {
      if (!q["prefix"].is_array()) return error_reply(400, "MalformedInput", "prefix must be a list of token strings");
      for (const auto& t : q["prefix"]) {
        if (!t.is_string()) return error_reply(400, "MalformedInput", "prefix must be a list of token strings");
        prefix.push_back(t.get<std::string>());
      }
    }
    if (!q.contains("n") || !q["n"].is_number_integer())
      return error_reply(400, "InvalidN", "n must be an integer in [1, table size]");
    const auto n = q["n"].get<std::int64_t>();
    if (n < 1 || static_cast<std::size_t>(n) > m->model.table.size())
      return error_reply(400, "InvalidN", "n must lie in [1, " + std::to_string(m->model.table.size()) + "]");
    const auto max_len = static_cast<std::size_t>(std::max(0, m->sequence_length - 2));
    if (prefix.size() > max_len)
      return error_reply(413, "PrefixTooLong",
                         "prefix has " + std::to_string(prefix.size()) + " tokens; at most " + std::to_string(max_len));

    eval::Sentence ids;
    const auto& table = m->model.table;
    for (const auto& tok : prefix) {
      const auto i = table.find(tok);
      if (i < 0 || is_reserved_token(tok)) {
        auto r = error_reply(422, "UnknownToken", "token '" + tok + "' is not in the model's token table");
        r.body["token"] = tok;
        return r;
      }
      ids.push_back(i);
    }

    PredictionResult res;
    res.model_id = m->model_id;
    {
      inference_slots_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{inference_slots_};
      eval::MlmScorer scorer(m->model.encoder, table);
      for (const auto& [idx, p] : eval::rank_next(scorer, ids, static_cast<std::size_t>(n))) {
        PredictionItem item;
        item.token = table.token(idx);
        item.caption = item.token;
        item.probability = p;
        if (auto id = model::parse_id_token(item.token)) {
          item.id = *id;
          if (const auto* e = m->vocab.find(*id)) item.caption = e->caption();
          if (image_for(*m, *id)) item.image_url = "/pictograms/" + id->str() + "/image";
        }
        res.items.push_back(std::move(item));
      }
    }
    res.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    Reply r{200, res.body_json()};
    if (out) *out = std::move(res);
    return r;
  }

  /// Local file path or remote URL for a pictogram, if any.
  std::optional<std::string> image_for(const LoadedModel& m, PictogramId id) const {
    if (opt_.images.kind != ImageSource::Kind::none) return opt_.images.resolve(id);
    if (const auto* e = m.vocab.find(id)) return e->image_ref;
    return std::nullopt;
  }

 private:
  static bool is_reserved_token(const std::string& tok) {
    const auto r = model::reserved_tokens();
    return std::find(r.begin(), r.end(), tok) != r.end();
  }

  static std::optional<std::size_t> parse_count(const std::string& s) {
    if (s.empty() || s.size() > 9) return std::nullopt;
    std::size_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return v;
  }

  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void routes() {
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, health()); });

    server_.Get("/vocabulary", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, vocabulary_page(req.get_param_value("page"), req.get_param_value("size")));
    });

    server_.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      PredictionResult out;
      auto r = predict(req.body, &out);
      if (r.status == 200) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", out.latency_ms);
        res.set_header("X-Latency-Ms", buf);
      }
      send(res, r);
    });

    server_.Get(R"(/pictograms/(\d+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      auto m = loaded();
      if (!m) return send(res, error_reply(503, "Loading", "model not loaded yet"));
      const auto raw = req.matches[1].str();
      const PictogramId id{raw.size() <= 15 ? std::stoll(raw) : -1};
      if (id.value <= 0 || !m->vocab.contains(id))
        return send(res, error_reply(404, "UnknownId", "pictogram " + raw + " is not in the vocabulary"));
      const auto ref = image_for(*m, id);
      if (!ref) return send(res, error_reply(404, "MissingImage", "pictogram " + raw + " has no image"));
      if (ref->rfind("http://", 0) == 0 || ref->rfind("https://", 0) == 0) return res.set_redirect(*ref, 302);
      std::string bytes;
      try {
        bytes = aacpred::detail::read_file(*ref, Errc::missing_image);
      } catch (const Error& ex) {
        return send(res, error_reply(404, "MissingImage", ex.what()));
      }
      res.set_content(bytes, "image/png");
    });

    server_.Get("/spec", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(openapi_document().dump(2), "application/json");
    });

    if (!opt_.cors_origin.empty()) {
      server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Max-Age", "600");
      });
      server_.set_post_routing_handler([origin = opt_.cors_origin](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Expose-Headers", "X-Latency-Ms");
        res.set_header("Vary", "Origin");
      });
    }

    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& ex) {
        send(res, error_reply(500, errc_name(ex.code()), ex.what()));
      } catch (const std::exception& ex) {
        send(res, error_reply(500, "Internal", ex.what()));
      }
    });
  }

  ServiceOptions opt_;
  httplib::Server server_;
  mutable std::mutex mu_;
  std::shared_ptr<const LoadedModel> loaded_;
  mutable std::counting_semaphore<> inference_slots_;
  std::chrono::steady_clock::time_point started_;
  int port_ = -1;
  std::atomic<bool> serving_{false};
  std::atomic<bool> stopping_{false};
};

inline nlohmann::json openapi_document() {
  using nlohmann::json;
  const json err = {{"type", "object"},
                    {"properties", {{"error", {{"type", "string"}}}, {"message", {{"type", "string"}}},
                                    {"token", {{"type", "string"}}}}}};
  const json item = {{"type", "object"},
                     {"properties",
                      {{"token", {{"type", "string"}}},
                       {"id", {{"type", "integer"}, {"nullable", true}}},
                       {"caption", {{"type", "string"}}},
                       {"probability", {{"type", "number"}}},
                       {"image_url", {{"type", "string"}, {"nullable", true}}}}}};
  auto error_resp = [&](const char* d) {
    return json{{"description", d}, {"content", {{"application/json", {{"schema", err}}}}}};
  };
  json paths;
  paths["/health"]["get"] = {
      {"summary", "Liveness and loaded model"},
      {"responses",
       {{"200", {{"description", "model loaded"},
                 {"content", {{"application/json", {{"schema", {{"type", "object"},
                                                                {"properties", {{"model_id", {{"type", "string"}}},
                                                                                {"vocab_size", {{"type", "integer"}}},
                                                                                {"uptime", {{"type", "number"}}}}}}}}}}}}},
        {"503", error_resp("model still loading")}}}};
  paths["/vocabulary"]["get"] = {
      {"summary", "Pictogram metadata, ordered by id"},
      {"parameters", json::array({{{"name", "page"}, {"in", "query"}, {"schema", {{"type", "integer"}, {"minimum", 0}}}},
                                  {{"name", "size"}, {"in", "query"}, {"schema", {{"type", "integer"}, {"minimum", 1}}}}})},
      {"responses", {{"200", {{"description", "one page"}}}, {"400", error_resp("invalid paging")}}}};
  paths["/predict"]["post"] = {
      {"summary", "Ranked next-pictogram suggestions for a prefix"},
      {"requestBody",
       {{"required", true},
        {"content", {{"application/json", {{"schema", {{"type", "object"},
                                                       {"required", json::array({"n"})},
                                                       {"properties", {{"prefix", {{"type", "array"}, {"items", {{"type", "string"}}}}},
                                                                       {"n", {{"type", "integer"}, {"minimum", 1}}}}}}}}}}}}},
      {"responses",
       {{"200", {{"description", "ranked items; latency in the X-Latency-Ms header"},
                 {"headers", {{"X-Latency-Ms", {{"schema", {{"type", "number"}}}}}}},
                 {"content", {{"application/json", {{"schema", {{"type", "object"},
                                                                {"properties", {{"items", {{"type", "array"}, {"items", item}}},
                                                                                {"model_id", {{"type", "string"}}}}}}}}}}}}},
        {"400", error_resp("invalid n or body")},
        {"413", error_resp("prefix too long")},
        {"422", error_resp("UnknownToken")}}}};
  paths["/pictograms/{id}/image"]["get"] = {
      {"summary", "Pictogram bitmap"},
      {"parameters", json::array({{{"name", "id"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "integer"}}}}})},
      {"responses", {{"200", {{"description", "PNG bytes"}, {"content", {{"image/png", json::object()}}}}},
                     {"302", {{"description", "remote image location"}}},
                     {"404", error_resp("unknown id or no image")}}}};
  paths["/spec"]["get"] = {{"summary", "This document"}, {"responses", {{"200", {{"description", "OpenAPI JSON"}}}}}};
  return {{"openapi", "3.0.3"},
          {"info", {{"title", "aacpred prediction service"}, {"version", "0.1.0"}}},
          {"paths", paths}};
}

}  // namespace aacpred::service

#endif  // AACPRED_SERVICE_HPP
