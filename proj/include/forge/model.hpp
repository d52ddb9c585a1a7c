#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/sampling.hpp"
#include "forge/tokenizer.hpp"

namespace forge {

// One training example for a conditional model. The weight multiplies the
// example's token cross-entropy; synthetic pairs carry alpha, seed pairs
// carry 1 - alpha.
struct WeightedExample {
  TokenSeq source;
  TokenSeq target;
  double weight = 1.0;
};

struct SourceTarget {
  TokenSeq source;
  TokenSeq target;
};

struct NllScore {
  std::vector<double> per_token;
  double mean = 0.0;
  double sum = 0.0;
};

struct Capabilities {
  bool supports_fit = false;
  bool supports_score = false;
  bool supports_generate = false;
  std::size_t max_concurrency = 1;
  std::string model_id;
};

// Directives forwarded to trainable backends. The reference backend only
// honors `epochs`; the rest matter to neural servers.
struct FitOptions {
  std::size_t epochs = 1;
  double learning_rate = 1e-5;
  std::string lr_schedule = "linear";
  std::size_t batch_size = 32;
};

class LanguageModel;
using ModelHandle = std::shared_ptr<const LanguageModel>;

// Conditional sequence model p(target | source). Instances are immutable:
// fitting returns a new model and leaves the receiver untouched, so a handle
// can be shared by concurrent generate/score callers.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual Capabilities capabilities() const = 0;
  virtual std::string backend_id() const = 0;

  virtual ModelHandle fit(std::span<const WeightedExample> examples,
                          const FitOptions& options) const = 0;
  virtual TokenSeq generate(const TokenSeq& source,
                            const DecodeParams& params) const = 0;
  // Teacher-forced NLL of every target token. The end marker is not scored.
  virtual NllScore score(const TokenSeq& source, const TokenSeq& target) const = 0;

  // Serializable state for artifact files.
  virtual nlohmann::json to_json() const = 0;
};

// Contract entry points. Each checks the capability flags first and throws
// CapabilityError for a verb the backend does not advertise.
ModelHandle fit_weighted(const ModelHandle& model,
                         std::span<const WeightedExample> examples,
                         const FitOptions& options = {});
TokenSeq generate(const ModelHandle& model, const TokenSeq& source,
                  const DecodeParams& params);
NllScore score_nll(const ModelHandle& model, const TokenSeq& source,
                   const TokenSeq& target);
// Arithmetic mean of per-example mean NLLs.
double eval_loss(const ModelHandle& model, std::span<const SourceTarget> examples);

// Shared precondition checks for fit: non-empty, finite non-negative
// weights, positive total weight, non-empty targets.
void validate_fit_examples(std::span<const WeightedExample> examples);

NllScore make_nll_score(std::vector<double> per_token);

// Mean that is bit-identical under any permutation of `values` (summed in
// sorted order).
double mean_order_independent(std::vector<double> values);

}  // namespace forge
