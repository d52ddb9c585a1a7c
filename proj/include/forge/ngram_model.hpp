#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "forge/model.hpp"

namespace forge {

struct NgramConfig {
  // Context length in tokens.
  std::size_t order = 2;
  // Additive (add-k) smoothing mass per outcome.
  double smoothing = 0.5;
  // When false the end marker is neither trained nor predictable, and
  // generation always runs to max_new_tokens.
  bool predict_end = true;
};

// Reference backend: order-n conditional count model over the concatenation
// [begin, source, separator, target, end]. Only target positions are counted.
//
// fit() adds weight * epochs to the counts of every target event, starting
// from the receiver's counts. From a fresh model this is exactly the weighted
// add-k estimate
//
//   p(t | ctx) = (W(ctx, t) + k) / (W(ctx) + k * |outcomes|),
//
// the global minimizer of the weighted cross-entropy augmented with k pseudo
// observations per outcome. Fitting an already-fitted model continues from
// its sufficient statistics, which is what "update M^k to obtain M^(k+1)"
// means for a count model.
class NgramModel final : public LanguageModel {
 public:
  NgramModel(std::size_t vocab_size, NgramConfig config = {});

  static std::shared_ptr<const NgramModel> create(std::size_t vocab_size,
                                                  NgramConfig config = {});
  static std::shared_ptr<const NgramModel> from_json(const nlohmann::json& j);

  Capabilities capabilities() const override;
  std::string backend_id() const override { return "reference-ngram"; }
  ModelHandle fit(std::span<const WeightedExample> examples,
                  const FitOptions& options) const override;
  TokenSeq generate(const TokenSeq& source,
                    const DecodeParams& params) const override;
  NllScore score(const TokenSeq& source, const TokenSeq& target) const override;
  nlohmann::json to_json() const override;

  const NgramConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t outcome_count() const noexcept;
  TokenId outcome_token(std::size_t index) const noexcept;

  // `context` holds exactly `order` token ids.
  double probability(std::span<const TokenId> context, TokenId next) const;
  std::vector<double> distribution(std::span<const TokenId> context) const;
  // Raw accumulated weight of (context, next).
  double count(std::span<const TokenId> context, TokenId next) const;
  std::size_t context_count() const noexcept { return table_.size(); }

  // Exact parameter equality (bitwise on the accumulated weights).
  bool same_parameters(const NgramModel& other) const;

 private:
  struct Row {
    double total = 0.0;
    // Sorted by token id; no zero-weight entries.
    std::vector<std::pair<TokenId, double>> counts;
  };
  using Key = std::u32string;

  Key context_key(std::span<const TokenId> context) const;
  void check_token(TokenId id) const;
  const Row* find(std::span<const TokenId> context) const;

  std::size_t vocab_size_;
  NgramConfig config_;
  std::unordered_map<Key, Row> table_;
};

}  // namespace forge
