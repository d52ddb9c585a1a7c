#include "forge/reference_server.hpp"

#include <httplib.h>

#include "forge/error.hpp"

namespace forge {

namespace {

std::pair<int, std::string> error_reply(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", message}}.dump()};
}

}  // namespace

ReferenceServer::ReferenceServer(std::shared_ptr<const Tokenizer> tokenizer, NgramConfig model,
                                 Options options)
    : tokenizer_(std::move(tokenizer)), options_(std::move(options)),
      model_(NgramModel::create(tokenizer_->size(), model)) {}

ReferenceServer::ReferenceServer(std::shared_ptr<const Tokenizer> tokenizer, NgramConfig model)
    : ReferenceServer(std::move(tokenizer), model, Options{}) {}

ReferenceServer::~ReferenceServer() { stop(); }

std::string ReferenceServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

std::shared_ptr<const NgramModel> ReferenceServer::model() const {
  std::shared_lock lock(model_mu_);
  return model_;
}

void ReferenceServer::start() {
  server_ = std::make_unique<httplib::Server>();
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    if (!options_.auth_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + options_.auth_token) {
      auto [status, body] = error_reply(401, "missing or wrong bearer token");
      res.status = status;
      res.set_content(body, "application/json");
      return;
    }
    auto [status, body] = handle(req.method, req.path, req.body);
    res.status = status;
    res.set_content(body, "application/json");
  };
  server_->Get("/v1/capabilities", route);
  server_->Post(R"(/v1/(fit|generate|score))", route);
  port_ = server_->bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw Error("reference server could not bind a port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ReferenceServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

std::pair<int, std::string> ReferenceServer::handle(const std::string& method,
                                                    const std::string& path,
                                                    const std::string& body) {
  if (options_.delay.count() > 0) std::this_thread::sleep_for(options_.delay);
  if (options_.fault)
    if (auto status = options_.fault(path)) return error_reply(*status, "injected fault");

  if (method == "GET" && path == "/v1/capabilities") {
    return {200, nlohmann::json{{"supports_fit", options_.supports_fit},
                                {"supports_score", options_.supports_score},
                                {"supports_generate", options_.supports_generate},
                                {"max_concurrency", options_.max_concurrency},
                                {"model_id", "reference-ngram"}}
                     .dump()};
  }
  if (method != "POST") return error_reply(405, "method not allowed");
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_reply(400, std::string("malformed body: ") + e.what());
  }
  if (!req.is_object()) return error_reply(400, "body is not an object");
  try {
    if (path == "/v1/fit" && options_.supports_fit) return do_fit(req);
    if (path == "/v1/generate" && options_.supports_generate) return do_generate(req);
    if (path == "/v1/score" && options_.supports_score) return do_score(req);
    return error_reply(404, "unknown endpoint " + path);
  } catch (const nlohmann::json::exception& e) {
    return error_reply(400, std::string("bad request: ") + e.what());
  } catch (const InvalidArgument& e) {
    return error_reply(422, e.what());
  } catch (const TokenizeError& e) {
    return error_reply(422, e.what());
  }
}

std::pair<int, std::string> ReferenceServer::do_fit(const nlohmann::json& req) {
  const auto key = req.value("idempotency_key", std::string{});
  std::vector<WeightedExample> examples;
  for (const auto& ex : req.at("examples"))
    examples.push_back({tokenizer_->encode(ex.at("source").get<std::string>()),
                        tokenizer_->encode(ex.at("target").get<std::string>()),
                        ex.at("weight").get<double>()});
  FitOptions opts;
  opts.epochs = req.at("epochs").get<std::size_t>();
  if (opts.epochs == 0) throw InvalidArgument("epochs must be positive");
  opts.learning_rate = req.value("lr", opts.learning_rate);

  std::unique_lock lock(model_mu_);
  if (!key.empty())
    if (auto it = fit_responses_.find(key); it != fit_responses_.end()) return {200, it->second};
  auto fitted = std::static_pointer_cast<const NgramModel>(model_->fit(examples, opts));
  model_ = std::move(fitted);
  ++version_;
  ++fits_applied_;
  std::string reply = nlohmann::json{{"model_version", "v" + std::to_string(version_)}}.dump();
  if (!key.empty()) fit_responses_.emplace(key, reply);
  return {200, reply};
}

std::pair<int, std::string> ReferenceServer::do_generate(const nlohmann::json& req) {
  DecodeParams p;
  p.temperature = req.at("temperature").get<double>();
  p.top_p = req.at("top_p").get<double>();
  p.max_new_tokens = req.at("max_new_tokens").get<std::size_t>();
  p.rng_stream = req.at("seed").get<std::uint64_t>();
  p.greedy = req.value("greedy", false);
  p.validate();
  const auto source = tokenizer_->encode(req.at("source").get<std::string>());
  const auto model = this->model();
  const auto tokens = model->generate(source, p);
  return {200, nlohmann::json{{"tokens", tokens}, {"text", tokenizer_->decode(tokens)}}.dump()};
}

std::pair<int, std::string> ReferenceServer::do_score(const nlohmann::json& req) {
  const auto source = tokenizer_->encode(req.at("source").get<std::string>());
  const auto target = tokenizer_->encode(req.at("target").get<std::string>());
  if (target.empty()) throw InvalidArgument("score target is empty");
  const auto s = model()->score(source, target);
  return {200, nlohmann::json{{"nll_per_token", s.per_token}, {"mean", s.mean}, {"sum", s.sum}}
                   .dump()};
}

}  // namespace forge
