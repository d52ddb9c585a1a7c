#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/evalkit.hpp"
#include "forge/model.hpp"

namespace forge {

struct HttpRequest {
  std::string method;  // "GET" or "POST"
  std::string path;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Transport failures that never produced a status (refused, timed out).
class TransportError : public Error {
 public:
  using Error::Error;
};

// One HTTP exchange at a time; implementations must be thread-safe.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
  virtual std::string endpoint() const = 0;
};

struct RemoteConfig {
  std::string base_url;
  std::chrono::milliseconds timeout{120000};
  // Total attempts per request (first try included).
  std::size_t max_attempts = 3;
  std::chrono::milliseconds backoff_base{1000};
  std::optional<std::size_t> max_concurrency;
  // Bearer token; defaults to MAIN_FORGE_TOKEN when empty.
  std::string auth_token;

  void validate() const;
  static std::string token_from_environment();
};

// cpp-httplib client. A fresh connection per request keeps it thread-safe.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(RemoteConfig cfg);
  HttpResponse send(const HttpRequest& request) override;
  std::string endpoint() const override { return cfg_.base_url; }

 private:
  RemoteConfig cfg_;
};

// Records every exchange of an inner transport.
class RecordingTransport final : public Transport {
 public:
  explicit RecordingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}
  HttpResponse send(const HttpRequest& request) override;
  std::string endpoint() const override { return inner_->endpoint(); }
  // One JSON object per exchange: method, path, request, status, response.
  std::vector<nlohmann::json> transcript() const;

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> log_;
};

// Serves a frozen transcript in order and fails on any byte difference in
// the request.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(std::vector<nlohmann::json> transcript);
  HttpResponse send(const HttpRequest& request) override;
  std::string endpoint() const override { return "replay"; }
  bool exhausted() const;

 private:
  std::vector<nlohmann::json> transcript_;
  mutable std::mutex mu_;
  std::size_t next_ = 0;
};

// Retry classification: transport errors, 408, 429 and 5xx are retryable.
bool retryable_status(int status);

// Sends with the retry policy. 2xx bodies are parsed as JSON objects; 422
// becomes InvalidArgument (the in-process error for the same input); other
// failures become BackendError naming the endpoint.
nlohmann::json call_with_retries(Transport& transport, const HttpRequest& request,
                                 const RemoteConfig& cfg,
                                 const std::function<void(std::chrono::milliseconds)>& sleep = {});

Capabilities handshake(Transport& transport, const RemoteConfig& cfg);
Capabilities parse_capabilities(const nlohmann::json& j);

// LanguageModel over the /v1 wire protocol. Text crosses the wire: sources
// and targets are decoded with the engine tokenizer, generated text is
// re-encoded with it. The server owns the model state; fit advances it and
// returns a handle carrying the new model_version.
class RemoteModel final : public LanguageModel {
 public:
  RemoteModel(std::shared_ptr<Transport> transport, std::shared_ptr<const Tokenizer> tokenizer,
              RemoteConfig cfg);

  static std::shared_ptr<const RemoteModel> connect(std::shared_ptr<const Tokenizer> tokenizer,
                                                    RemoteConfig cfg);

  Capabilities capabilities() const override { return caps_; }
  std::string backend_id() const override { return "remote:" + transport_->endpoint(); }
  ModelHandle fit(std::span<const WeightedExample> examples,
                  const FitOptions& options) const override;
  TokenSeq generate(const TokenSeq& source, const DecodeParams& params) const override;
  NllScore score(const TokenSeq& source, const TokenSeq& target) const override;
  nlohmann::json to_json() const override;

  const std::string& model_version() const noexcept { return model_version_; }
  // Replaces the sleep between attempts (tests use a no-op).
  void set_sleep(std::function<void(std::chrono::milliseconds)> sleep) { sleep_ = std::move(sleep); }

  static std::string fit_idempotency_key(const std::string& model_version,
                                         const nlohmann::json& body_without_key);

 private:
  struct Advanced {};
  RemoteModel(Advanced, const RemoteModel& from, std::string version);

  std::shared_ptr<Transport> transport_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  RemoteConfig cfg_;
  Capabilities caps_;
  std::string model_version_;
  std::function<void(std::chrono::milliseconds)> sleep_;
};

// Judge over the same generate verb: the rendered prompt is the source, the
// returned text is the raw verdict.
class RemoteJudge final : public JudgeClient {
 public:
  RemoteJudge(std::shared_ptr<Transport> transport, RemoteConfig cfg, DecodeParams decode);
  std::string judge(const JudgeRequest& request) override;
  std::size_t max_concurrency() const override;

 private:
  std::shared_ptr<Transport> transport_;
  RemoteConfig cfg_;
  DecodeParams decode_;
  Capabilities caps_;
};

}  // namespace forge
