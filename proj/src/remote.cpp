#include "forge/remote.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "forge/digest.hpp"
#include "forge/error.hpp"

namespace forge {

namespace {

nlohmann::json parse_object(const std::string& body, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(where + ": malformed response body: " + e.what());
  }
  if (!j.is_object()) throw ProtocolError(where + ": response body is not an object");
  return j;
}

std::string server_message(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    if (j.is_object() && j.contains("error") && j["error"].is_string())
      return j["error"].get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  return body;
}

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ProtocolError(where + ": missing field \"" + key + "\"");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(where + ": field \"" + key + "\" has the wrong type");
  }
}

}  // namespace

void RemoteConfig::validate() const {
  if (base_url.empty()) throw InvalidArgument("remote base_url is empty");
  if (timeout.count() <= 0) throw InvalidArgument("remote timeout must be positive");
  if (max_attempts == 0) throw InvalidArgument("remote max_attempts must be at least 1");
  if (backoff_base.count() < 0) throw InvalidArgument("remote backoff must be non-negative");
  if (max_concurrency && *max_concurrency == 0)
    throw InvalidArgument("remote max_concurrency must be positive");
}

std::string RemoteConfig::token_from_environment() {
  const char* v = std::getenv("MAIN_FORGE_TOKEN");
  return v ? std::string(v) : std::string();
}

HttpTransport::HttpTransport(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.auth_token.empty()) cfg_.auth_token = RemoteConfig::token_from_environment();
}

HttpResponse HttpTransport::send(const HttpRequest& request) {
  httplib::Client client(cfg_.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!cfg_.auth_token.empty())
    headers.emplace("Authorization", "Bearer " + cfg_.auth_token);

  httplib::Result res = request.method == "GET"
                            ? client.Get(request.path, headers)
                            : client.Post(request.path, headers, request.body,
                                          "application/json");
  if (!res)
    throw TransportError(request.method + " " + cfg_.base_url + request.path + ": " +
                         httplib::to_string(res.error()));
  return {res->status, res->body};
}

HttpResponse RecordingTransport::send(const HttpRequest& request) {
  auto resp = inner_->send(request);
  std::lock_guard lock(mu_);
  log_.push_back({{"method", request.method},
                  {"path", request.path},
                  {"request", request.body},
                  {"status", resp.status},
                  {"response", resp.body}});
  return resp;
}

std::vector<nlohmann::json> RecordingTransport::transcript() const {
  std::lock_guard lock(mu_);
  return log_;
}

ReplayTransport::ReplayTransport(std::vector<nlohmann::json> transcript)
    : transcript_(std::move(transcript)) {}

HttpResponse ReplayTransport::send(const HttpRequest& request) {
  std::lock_guard lock(mu_);
  if (next_ >= transcript_.size())
    throw ProtocolError("replay: unexpected request " + request.method + " " + request.path);
  const auto& rec = transcript_[next_++];
  if (rec.at("method").get<std::string>() != request.method ||
      rec.at("path").get<std::string>() != request.path ||
      rec.at("request").get<std::string>() != request.body)
    throw ProtocolError("replay: request " + std::to_string(next_) +
                        " differs from the transcript (" + request.method + " " +
                        request.path + ")");
  return {rec.at("status").get<int>(), rec.at("response").get<std::string>()};
}

bool ReplayTransport::exhausted() const {
  std::lock_guard lock(mu_);
  return next_ == transcript_.size();
}

bool retryable_status(int status) {
  return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

nlohmann::json call_with_retries(Transport& transport, const HttpRequest& request,
                                 const RemoteConfig& cfg,
                                 const std::function<void(std::chrono::milliseconds)>& sleep) {
  const std::string where = request.method + " " + transport.endpoint() + request.path;
  std::string last;
  for (std::size_t attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    if (attempt > 1) {
      const auto wait = cfg.backoff_base * (1LL << (attempt - 2));
      if (sleep)
        sleep(wait);
      else
        std::this_thread::sleep_for(wait);
    }
    HttpResponse resp;
    try {
      resp = transport.send(request);
    } catch (const TransportError& e) {
      last = e.what();
      continue;
    }
    if (resp.status >= 200 && resp.status < 300) return parse_object(resp.body, where);
    if (resp.status == 422) throw InvalidArgument(server_message(resp.body));
    last = "HTTP " + std::to_string(resp.status) + ": " + server_message(resp.body);
    if (!retryable_status(resp.status))
      throw BackendError(where + " failed: " + last, false);
  }
  throw BackendError(where + " failed after " + std::to_string(cfg.max_attempts) +
                         " attempt(s): " + last,
                     true);
}

Capabilities parse_capabilities(const nlohmann::json& j) {
  const std::string where = "/v1/capabilities";
  Capabilities caps;
  auto flag = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return false;
    if (!it->is_boolean()) throw ProtocolError(where + ": \"" + key + "\" is not a boolean");
    return it->get<bool>();
  };
  caps.supports_fit = flag("supports_fit");
  caps.supports_score = flag("supports_score");
  caps.supports_generate = flag("supports_generate");
  if (auto it = j.find("max_concurrency"); it != j.end()) {
    if (!it->is_number_integer() || it->get<long long>() < 1)
      throw ProtocolError(where + ": \"max_concurrency\" must be a positive integer");
    caps.max_concurrency = it->get<std::size_t>();
  }
  if (auto it = j.find("model_id"); it != j.end() && it->is_string())
    caps.model_id = it->get<std::string>();
  return caps;
}

Capabilities handshake(Transport& transport, const RemoteConfig& cfg) {
  const auto j = call_with_retries(transport, {"GET", "/v1/capabilities", ""}, cfg);
  auto caps = parse_capabilities(j);
  if (cfg.max_concurrency) caps.max_concurrency = *cfg.max_concurrency;
  return caps;
}

RemoteModel::RemoteModel(std::shared_ptr<Transport> transport,
                         std::shared_ptr<const Tokenizer> tokenizer, RemoteConfig cfg)
    : transport_(std::move(transport)), tokenizer_(std::move(tokenizer)), cfg_(std::move(cfg)) {
  if (!transport_ || !tokenizer_) throw InvalidArgument("remote model needs a transport and tokenizer");
  caps_ = handshake(*transport_, cfg_);
}

RemoteModel::RemoteModel(Advanced, const RemoteModel& from, std::string version)
    : transport_(from.transport_), tokenizer_(from.tokenizer_), cfg_(from.cfg_),
      caps_(from.caps_), model_version_(std::move(version)), sleep_(from.sleep_) {}

std::shared_ptr<const RemoteModel> RemoteModel::connect(std::shared_ptr<const Tokenizer> tokenizer,
                                                        RemoteConfig cfg) {
  auto transport = std::make_shared<HttpTransport>(cfg);
  return std::make_shared<const RemoteModel>(std::move(transport), std::move(tokenizer),
                                             std::move(cfg));
}

std::string RemoteModel::fit_idempotency_key(const std::string& model_version,
                                             const nlohmann::json& body_without_key) {
  return sha256_hex(model_version + "\n" + body_without_key.dump());
}

ModelHandle RemoteModel::fit(std::span<const WeightedExample> examples,
                             const FitOptions& options) const {
  if (!caps_.supports_fit)
    throw CapabilityError("backend '" + backend_id() + "' does not support fit");
  nlohmann::json list = nlohmann::json::array();
  for (const auto& ex : examples)
    list.push_back({{"source", tokenizer_->decode(ex.source)},
                    {"target", tokenizer_->decode(ex.target)},
                    {"weight", ex.weight}});
  nlohmann::json body = {{"examples", std::move(list)},
                         {"epochs", options.epochs},
                         {"lr", options.learning_rate}};
  body["idempotency_key"] = fit_idempotency_key(model_version_, body);
  const auto j = call_with_retries(*transport_, {"POST", "/v1/fit", body.dump()}, cfg_, sleep_);
  auto version = field<std::string>(j, "model_version", "/v1/fit");
  return std::shared_ptr<const RemoteModel>(new RemoteModel(Advanced{}, *this, std::move(version)));
}

TokenSeq RemoteModel::generate(const TokenSeq& source, const DecodeParams& params) const {
  if (!caps_.supports_generate)
    throw CapabilityError("backend '" + backend_id() + "' does not support generate");
  nlohmann::json body = {{"source", tokenizer_->decode(source)},
                         {"temperature", params.temperature},
                         {"top_p", params.top_p},
                         {"max_new_tokens", params.max_new_tokens},
                         {"seed", params.rng_stream}};
  if (params.greedy) body["greedy"] = true;
  const auto j = call_with_retries(*transport_, {"POST", "/v1/generate", body.dump()}, cfg_, sleep_);
  field<std::vector<long long>>(j, "tokens", "/v1/generate");
  return tokenizer_->encode(field<std::string>(j, "text", "/v1/generate"));
}

NllScore RemoteModel::score(const TokenSeq& source, const TokenSeq& target) const {
  if (!caps_.supports_score)
    throw CapabilityError("backend '" + backend_id() + "' does not support score");
  const nlohmann::json body = {{"source", tokenizer_->decode(source)},
                               {"target", tokenizer_->decode(target)}};
  const auto j = call_with_retries(*transport_, {"POST", "/v1/score", body.dump()}, cfg_, sleep_);
  NllScore s;
  s.per_token = field<std::vector<double>>(j, "nll_per_token", "/v1/score");
  s.mean = field<double>(j, "mean", "/v1/score");
  s.sum = field<double>(j, "sum", "/v1/score");
  if (s.per_token.empty()) throw ProtocolError("/v1/score: empty nll_per_token");
  for (double v : s.per_token)
    if (!std::isfinite(v)) throw ProtocolError("/v1/score: non-finite token NLL");
  return s;
}

nlohmann::json RemoteModel::to_json() const {
  return {{"backend", "remote"},
          {"endpoint", transport_->endpoint()},
          {"model_id", caps_.model_id},
          {"model_version", model_version_}};
}

RemoteJudge::RemoteJudge(std::shared_ptr<Transport> transport, RemoteConfig cfg,
                         DecodeParams decode)
    : transport_(std::move(transport)), cfg_(std::move(cfg)), decode_(decode) {
  caps_ = handshake(*transport_, cfg_);
  if (!caps_.supports_generate)
    throw CapabilityError("judge endpoint does not support generate");
}

std::string RemoteJudge::judge(const JudgeRequest& request) {
  const nlohmann::json body = {{"source", request.prompt},
                               {"temperature", decode_.temperature},
                               {"top_p", decode_.top_p},
                               {"max_new_tokens", decode_.max_new_tokens},
                               {"seed", request.seed}};
  const auto j = call_with_retries(*transport_, {"POST", "/v1/generate", body.dump()}, cfg_);
  return field<std::string>(j, "text", "/v1/generate");
}

std::size_t RemoteJudge::max_concurrency() const { return caps_.max_concurrency; }

}  // namespace forge
