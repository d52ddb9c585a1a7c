#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "forge/ngram_model.hpp"

namespace httplib {
class Server;
}

namespace forge {

// In-process /v1 server around the reference backend. Used as the loopback
// peer for protocol tests and for capturing golden transcripts.
class ReferenceServer {
 public:
  struct Options {
    // Advertised flags; a false flag also makes the verb answer 404.
    bool supports_fit = true;
    bool supports_score = true;
    bool supports_generate = true;
    std::size_t max_concurrency = 4;
    // Required bearer token when non-empty.
    std::string auth_token;
    // Called before each request is handled. A returned status short-cuts
    // the handler; a delay runs first (useful for timeouts).
    std::function<std::optional<int>(const std::string& path)> fault;
    std::chrono::milliseconds delay{0};
  };

  ReferenceServer(std::shared_ptr<const Tokenizer> tokenizer, NgramConfig model,
                  Options options);
  ReferenceServer(std::shared_ptr<const Tokenizer> tokenizer, NgramConfig model);
  ~ReferenceServer();

  ReferenceServer(const ReferenceServer&) = delete;
  ReferenceServer& operator=(const ReferenceServer&) = delete;

  // Binds 127.0.0.1 on an ephemeral port and serves on a background thread.
  void start();
  void stop();
  int port() const noexcept { return port_; }
  std::string base_url() const;

  // Current model (after all applied fits).
  std::shared_ptr<const NgramModel> model() const;
  std::size_t fits_applied() const noexcept { return fits_applied_.load(); }

  // Pure request handler shared by the HTTP layer; handy for direct tests.
  // Returns (status, body).
  std::pair<int, std::string> handle(const std::string& method, const std::string& path,
                                     const std::string& body);

 private:
  std::pair<int, std::string> do_fit(const nlohmann::json& req);
  std::pair<int, std::string> do_generate(const nlohmann::json& req);
  std::pair<int, std::string> do_score(const nlohmann::json& req);

  std::shared_ptr<const Tokenizer> tokenizer_;
  Options options_;
  mutable std::shared_mutex model_mu_;
  std::shared_ptr<const NgramModel> model_;
  std::size_t version_ = 0;
  std::map<std::string, std::string> fit_responses_;
  std::atomic<std::size_t> fits_applied_{0};

  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace forge
