#include "forge/model.hpp"

#include <algorithm>
#include <cmath>

#include "forge/error.hpp"

namespace forge {

namespace {

void require(bool flag, const ModelHandle& model, const char* verb) {
  if (!flag)
    throw CapabilityError("backend '" + model->backend_id() +
                          "' does not support " + verb);
}

void require_model(const ModelHandle& model) {
  if (!model) throw InvalidArgument("null model handle");
}

}  // namespace

void validate_fit_examples(std::span<const WeightedExample> examples) {
  if (examples.empty()) throw InvalidArgument("fit requires at least one example");
  double total = 0.0;
  for (const auto& ex : examples) {
    if (!std::isfinite(ex.weight))
      throw InvalidArgument("example weight must be finite");
    if (ex.weight < 0.0) throw InvalidArgument("example weight must be >= 0");
    if (ex.target.empty()) throw InvalidArgument("example target is empty");
    total += ex.weight;
  }
  if (!(total > 0.0))
    throw InvalidArgument("degenerate objective: all example weights are zero");
}

double mean_order_independent(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("mean of an empty list");
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

NllScore make_nll_score(std::vector<double> per_token) {
  NllScore s;
  s.per_token = std::move(per_token);
  for (double v : s.per_token) s.sum += v;
  s.mean = s.per_token.empty() ? 0.0 : s.sum / static_cast<double>(s.per_token.size());
  return s;
}

ModelHandle fit_weighted(const ModelHandle& model,
                         std::span<const WeightedExample> examples,
                         const FitOptions& options) {
  require_model(model);
  require(model->capabilities().supports_fit, model, "fit");
  if (options.epochs == 0) throw InvalidArgument("epochs must be positive");
  return model->fit(examples, options);
}

TokenSeq generate(const ModelHandle& model, const TokenSeq& source,
                  const DecodeParams& params) {
  require_model(model);
  require(model->capabilities().supports_generate, model, "generate");
  params.validate();
  return model->generate(source, params);
}

NllScore score_nll(const ModelHandle& model, const TokenSeq& source,
                   const TokenSeq& target) {
  require_model(model);
  require(model->capabilities().supports_score, model, "score");
  if (target.empty()) throw InvalidArgument("score target is empty");
  return model->score(source, target);
}

double eval_loss(const ModelHandle& model, std::span<const SourceTarget> examples) {
  if (examples.empty()) throw InvalidArgument("eval_loss over an empty example list");
  std::vector<double> means;
  means.reserve(examples.size());
  for (const auto& ex : examples) means.push_back(score_nll(model, ex.source, ex.target).mean);
  return mean_order_independent(std::move(means));
}

}  // namespace forge
