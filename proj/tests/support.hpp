#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/model.hpp"
#include "forge/ngram_model.hpp"
#include "forge/tokenizer.hpp"

namespace testing {

inline std::shared_ptr<const forge::Tokenizer> words(std::vector<std::string> w,
                                                     std::size_t max_len = 1024) {
  forge::TokenizerSpec spec;
  spec.max_sequence_length = max_len;
  return std::make_shared<const forge::Tokenizer>(spec, std::move(w));
}

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("forge-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Backend whose verbs are plain functions; fit returns the same model.
class ScriptedModel final : public forge::LanguageModel {
 public:
  using GenerateFn = std::function<forge::TokenSeq(const forge::TokenSeq&, const forge::DecodeParams&)>;
  using ScoreFn = std::function<std::vector<double>(const forge::TokenSeq&, const forge::TokenSeq&)>;

  ScriptedModel(GenerateFn gen, ScoreFn score) : gen_(std::move(gen)), score_(std::move(score)) {}

  forge::Capabilities capabilities() const override {
    forge::Capabilities c;
    c.supports_fit = c.supports_generate = c.supports_score = true;
    c.max_concurrency = 8;
    c.model_id = "scripted";
    return c;
  }
  std::string backend_id() const override { return "scripted"; }
  forge::ModelHandle fit(std::span<const forge::WeightedExample> examples,
                         const forge::FitOptions&) const override {
    forge::validate_fit_examples(examples);
    return std::make_shared<ScriptedModel>(gen_, score_);
  }
  forge::TokenSeq generate(const forge::TokenSeq& source,
                           const forge::DecodeParams& params) const override {
    return gen_(source, params);
  }
  forge::NllScore score(const forge::TokenSeq& source,
                        const forge::TokenSeq& target) const override {
    return forge::make_nll_score(score_(source, target));
  }
  nlohmann::json to_json() const override { return {{"backend", "scripted"}}; }

 private:
  GenerateFn gen_;
  ScoreFn score_;
};

// Model that puts probability 1 on whatever target it is asked about.
inline forge::ModelHandle certain_model() {
  return std::make_shared<ScriptedModel>(
      [](const forge::TokenSeq& s, const forge::DecodeParams&) { return s; },
      [](const forge::TokenSeq&, const forge::TokenSeq& t) { return std::vector<double>(t.size(), 0.0); });
}

// Order-2 count model with no end outcome and no data: uniform over content.
inline std::shared_ptr<const forge::NgramModel> uniform_model(std::size_t content_tokens) {
  forge::NgramConfig cfg;
  cfg.predict_end = false;
  return forge::NgramModel::create(content_tokens + forge::Tokenizer::kFirstContent, cfg);
}

}  // namespace testing
