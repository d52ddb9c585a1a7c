#include "forge/ngram_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

namespace {

// Left-pads with begin markers so that every position has `order` context
// tokens.
std::vector<TokenId> padded_sequence(std::size_t order, const TokenSeq& source,
                                     const TokenSeq& target, bool with_end) {
  std::vector<TokenId> seq(order, Tokenizer::kBegin);
  seq.insert(seq.end(), source.begin(), source.end());
  seq.push_back(Tokenizer::kSeparator);
  seq.insert(seq.end(), target.begin(), target.end());
  if (with_end) seq.push_back(Tokenizer::kEnd);
  return seq;
}

}  // namespace

NgramModel::NgramModel(std::size_t vocab_size, NgramConfig config)
    : vocab_size_(vocab_size), config_(config) {
  if (config_.order == 0) throw InvalidArgument("n-gram order must be positive");
  if (!(config_.smoothing > 0.0) || !std::isfinite(config_.smoothing))
    throw InvalidArgument("smoothing must be positive and finite");
  if (vocab_size_ <= Tokenizer::kFirstContent)
    throw InvalidArgument("vocabulary has no content tokens");
}

std::shared_ptr<const NgramModel> NgramModel::create(std::size_t vocab_size,
                                                     NgramConfig config) {
  return std::make_shared<const NgramModel>(vocab_size, config);
}

Capabilities NgramModel::capabilities() const {
  Capabilities caps;
  caps.supports_fit = caps.supports_score = caps.supports_generate = true;
  caps.max_concurrency = std::max(1u, std::thread::hardware_concurrency());
  caps.model_id = backend_id();
  return caps;
}

std::size_t NgramModel::outcome_count() const noexcept {
  return (vocab_size_ - Tokenizer::kFirstContent) + (config_.predict_end ? 1 : 0);
}

TokenId NgramModel::outcome_token(std::size_t index) const noexcept {
  // Outcomes are [end] + content tokens, or content tokens only.
  if (config_.predict_end)
    return index == 0 ? Tokenizer::kEnd
                      : static_cast<TokenId>(Tokenizer::kFirstContent + index - 1);
  return static_cast<TokenId>(Tokenizer::kFirstContent + index);
}

NgramModel::Key NgramModel::context_key(std::span<const TokenId> context) const {
  if (context.size() != config_.order)
    throw InvalidArgument("context length must equal the model order");
  return Key(context.begin(), context.end());
}

void NgramModel::check_token(TokenId id) const {
  if (id >= vocab_size_) throw InvalidArgument("token id outside the vocabulary");
}

const NgramModel::Row* NgramModel::find(std::span<const TokenId> context) const {
  auto it = table_.find(context_key(context));
  return it == table_.end() ? nullptr : &it->second;
}

double NgramModel::count(std::span<const TokenId> context, TokenId next) const {
  const Row* row = find(context);
  if (!row) return 0.0;
  auto it = std::lower_bound(row->counts.begin(), row->counts.end(), next,
                             [](const auto& entry, TokenId t) { return entry.first < t; });
  return (it != row->counts.end() && it->first == next) ? it->second : 0.0;
}

double NgramModel::probability(std::span<const TokenId> context, TokenId next) const {
  const bool predictable =
      next >= Tokenizer::kFirstContent || (config_.predict_end && next == Tokenizer::kEnd);
  if (!predictable || next >= vocab_size_) return 0.0;
  const Row* row = find(context);
  const double k = config_.smoothing;
  const double denom =
      (row ? row->total : 0.0) + k * static_cast<double>(outcome_count());
  return (count(context, next) + k) / denom;
}

std::vector<double> NgramModel::distribution(std::span<const TokenId> context) const {
  const Row* row = find(context);
  const double k = config_.smoothing;
  const double denom =
      (row ? row->total : 0.0) + k * static_cast<double>(outcome_count());
  std::vector<double> dist(outcome_count(), k / denom);
  if (row) {
    const std::size_t shift = config_.predict_end ? 1 : 0;
    for (const auto& [tok, w] : row->counts) {
      const std::size_t idx =
          tok == Tokenizer::kEnd ? 0 : tok - Tokenizer::kFirstContent + shift;
      dist[idx] = (w + k) / denom;
    }
  }
  return dist;
}

ModelHandle NgramModel::fit(std::span<const WeightedExample> examples,
                            const FitOptions& options) const {
  validate_fit_examples(examples);
  const double epochs = static_cast<double>(options.epochs);

  // Aggregate per context first so that the per-row update order is fixed
  // (example order) regardless of hash-map layout.
  std::map<Key, std::map<TokenId, double>> delta;
  for (const auto& ex : examples) {
    if (ex.weight == 0.0) continue;
    for (TokenId t : ex.source) check_token(t);
    for (TokenId t : ex.target) check_token(t);
    const auto seq = padded_sequence(config_.order, ex.source, ex.target,
                                     config_.predict_end);
    const std::size_t first = config_.order + ex.source.size() + 1;
    const double w = ex.weight * epochs;
    for (std::size_t p = first; p < seq.size(); ++p) {
      Key key(seq.begin() + static_cast<std::ptrdiff_t>(p - config_.order),
              seq.begin() + static_cast<std::ptrdiff_t>(p));
      delta[key][seq[p]] += w;
    }
  }

  auto next = std::make_shared<NgramModel>(*this);
  for (auto& [key, adds] : delta) {
    Row& row = next->table_[key];
    std::map<TokenId, double> merged(row.counts.begin(), row.counts.end());
    for (const auto& [tok, w] : adds) merged[tok] += w;
    row.counts.assign(merged.begin(), merged.end());
    row.total = 0.0;
    for (const auto& [tok, w] : row.counts) row.total += w;
  }
  return next;
}

TokenSeq NgramModel::generate(const TokenSeq& source,
                              const DecodeParams& params) const {
  for (TokenId t : source) check_token(t);
  std::mt19937_64 gen(params.rng_stream);
  std::vector<TokenId> seq = padded_sequence(config_.order, source, {}, false);
  TokenSeq out;
  while (out.size() < params.max_new_tokens) {
    std::span<const TokenId> ctx(seq.data() + seq.size() - config_.order, config_.order);
    const auto dist = distribution(ctx);
    const TokenId tok = outcome_token(sample_next(dist, params, gen));
    if (tok == Tokenizer::kEnd) break;
    out.push_back(tok);
    seq.push_back(tok);
  }
  return out;
}

NllScore NgramModel::score(const TokenSeq& source, const TokenSeq& target) const {
  for (TokenId t : source) check_token(t);
  for (TokenId t : target) check_token(t);
  const auto seq = padded_sequence(config_.order, source, target, false);
  const std::size_t first = config_.order + source.size() + 1;
  std::vector<double> nll;
  nll.reserve(target.size());
  for (std::size_t p = first; p < seq.size(); ++p) {
    std::span<const TokenId> ctx(seq.data() + p - config_.order, config_.order);
    nll.push_back(-std::log(probability(ctx, seq[p])));
  }
  return make_nll_score(std::move(nll));
}

bool NgramModel::same_parameters(const NgramModel& other) const {
  if (vocab_size_ != other.vocab_size_ || config_.order != other.config_.order ||
      config_.smoothing != other.config_.smoothing ||
      config_.predict_end != other.config_.predict_end ||
      table_.size() != other.table_.size())
    return false;
  for (const auto& [key, row] : table_) {
    auto it = other.table_.find(key);
    if (it == other.table_.end() || it->second.total != row.total ||
        it->second.counts != row.counts)
      return false;
  }
  return true;
}

nlohmann::json NgramModel::to_json() const {
  std::vector<const std::pair<const Key, Row>*> rows;
  rows.reserve(table_.size());
  for (const auto& entry : table_) rows.push_back(&entry);
  std::sort(rows.begin(), rows.end(),
            [](auto* a, auto* b) { return a->first < b->first; });

  nlohmann::json contexts = nlohmann::json::array();
  for (const auto* entry : rows) {
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& [tok, w] : entry->second.counts) counts.push_back({tok, w});
    contexts.push_back({{"context", std::vector<TokenId>(entry->first.begin(),
                                                         entry->first.end())},
                        {"counts", counts}});
  }
  return {{"backend", backend_id()},
          {"order", config_.order},
          {"smoothing", config_.smoothing},
          {"predict_end", config_.predict_end},
          {"vocab_size", vocab_size_},
          {"contexts", contexts}};
}

std::shared_ptr<const NgramModel> NgramModel::from_json(const nlohmann::json& j) {
  if (j.at("backend").get<std::string>() != "reference-ngram")
    throw DataError("model file is not a reference-ngram model");
  NgramConfig cfg;
  cfg.order = j.at("order").get<std::size_t>();
  cfg.smoothing = j.at("smoothing").get<double>();
  cfg.predict_end = j.at("predict_end").get<bool>();
  auto model = std::make_shared<NgramModel>(j.at("vocab_size").get<std::size_t>(), cfg);
  for (const auto& c : j.at("contexts")) {
    const auto ctx = c.at("context").get<std::vector<TokenId>>();
    Row row;
    for (const auto& pair : c.at("counts")) {
      const TokenId tok = pair.at(0).get<TokenId>();
      const double w = pair.at(1).get<double>();
      row.counts.emplace_back(tok, w);
    }
    std::sort(row.counts.begin(), row.counts.end());
    // The total is always the sum of the sorted counts, so it round-trips.
    for (const auto& [tok, w] : row.counts) row.total += w;
    model->table_.emplace(model->context_key(ctx), std::move(row));
  }
  return model;
}

}  // namespace forge
