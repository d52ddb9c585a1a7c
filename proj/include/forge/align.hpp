#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/kernels.hpp"
#include "forge/model.hpp"
#include "forge/prompt.hpp"

namespace forge {

// A seed pair in token space.
struct EncodedPair {
  std::string id;
  TokenSeq instruction;
  TokenSeq response;
};

struct AlphaMode {
  enum class Kind { dynamic, fixed };
  Kind kind = Kind::dynamic;
  double value = 0.0;

  static AlphaMode dynamic() { return {}; }
  static AlphaMode fixed(double v) { return {Kind::fixed, v}; }
  std::string to_string() const;
  // "dynamic" or "fixed(0.7)" / "fixed:0.7".
  static AlphaMode parse(const std::string& s);
};

struct AlignmentConfig {
  std::size_t iterations = 3;
  std::size_t epochs_per_update = 1;
  AlphaMode alpha_mode;
  double alpha_clamp = 0.01;
  bool warm_start = true;
  DecodeParams decode;
  // lr, schedule and batch size are advisory for the reference backend.
  FitOptions fit;
  // Wrap the source side of forward (instruction) and reverse (response)
  // examples.
  PromptWrapper forward_prompt;
  PromptWrapper reverse_prompt;
  std::uint64_t global_seed = 0;
  Exec exec = Exec::parallel;

  void validate() const;
};

enum class StepKind { forward, reverse };
std::string to_string(StepKind kind);

struct StepRecord {
  StepKind kind = StepKind::forward;
  // Iteration index the step belongs to; warm-start records carry k = 0.
  std::size_t k = 0;
  bool warm_start = false;
  std::optional<double> alpha;
  std::optional<double> loss_synthetic;
  double loss_seed = 0.0;
  std::optional<double> combined_loss;
  std::size_t generation_failures = 0;

  bool operator==(const StepRecord&) const = default;
};

nlohmann::json to_json(const StepRecord& record);
StepRecord step_record_from_json(const nlohmann::json& j);

struct AlignmentState {
  // Completed iterations.
  std::size_t k = 0;
  ModelHandle forward;
  ModelHandle reverse;
  std::vector<StepRecord> history;
};

// alpha = L_syn / (L_syn + L_seed), clamped to [eps, 1 - eps]; 0.5 when both
// losses are zero.
double compute_alpha(double loss_synthetic, double loss_seed, double eps);

// alpha * L_syn + (1 - alpha) * L_seed.
double combined_loss(double alpha, double loss_synthetic, double loss_seed);

// Fits both models on the seed pairs (weight 1, one epoch) and appends one
// record per direction. With warm_start disabled the state is returned as is.
AlignmentState warm_start(AlignmentState state, std::span<const EncodedPair> seed,
                          const AlignmentConfig& cfg);

// One half-iteration each. The input state is never modified; an exception
// leaves the caller's state as it was.
AlignmentState forward_step(const AlignmentState& state,
                            std::span<const EncodedPair> seed,
                            const AlignmentConfig& cfg);
AlignmentState reverse_step(const AlignmentState& state,
                            std::span<const EncodedPair> seed,
                            const AlignmentConfig& cfg);

// Called with the state after warm start (k = 0) and after every completed
// iteration.
using IterationObserver = std::function<void(const AlignmentState&)>;

AlignmentState run_alignment(std::span<const EncodedPair> seed, ModelHandle base_forward,
                             ModelHandle base_reverse, const AlignmentConfig& cfg,
                             const IterationObserver& observer = {});

void write_history(const std::filesystem::path& path,
                   std::span<const StepRecord> history,
                   const std::string& config_digest);
std::vector<StepRecord> read_history(const std::filesystem::path& path,
                                     std::string* config_digest = nullptr);

// Seed pairs as (wrapped source, target) for each direction.
std::vector<SourceTarget> forward_examples(std::span<const EncodedPair> seed,
                                           const PromptWrapper& prompt);
std::vector<SourceTarget> reverse_examples(std::span<const EncodedPair> seed,
                                           const PromptWrapper& prompt);

}  // namespace forge
