#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/corpus.hpp"
#include "forge/kernels.hpp"
#include "forge/model.hpp"
#include "forge/prompt.hpp"

namespace forge {

enum class ScoreMode { teacher_forced_nll, diagnostic_with_regeneration };
enum class Normalization { per_token_mean, sequence_sum };

std::string to_string(ScoreMode mode);
std::string to_string(Normalization norm);
ScoreMode score_mode_from_string(const std::string& s);
Normalization normalization_from_string(const std::string& s);

struct CurationConfig {
  std::size_t top_k = 16800;
  ScoreMode score_mode = ScoreMode::teacher_forced_nll;
  Normalization normalization = Normalization::per_token_mean;
  // Wraps the pseudo-instruction before it reaches the forward model.
  PromptWrapper forward_prompt;
  // Only used to regenerate R̂' in diagnostic mode.
  DecodeParams decode;
  std::uint64_t global_seed = 0;
  Exec exec = Exec::parallel;

  void validate() const;
};

// Teacher-forced NLL of R_u given Î' under the forward model, normalized per
// cfg. Lower is better. Diagnostic mode also stores a regenerated response in
// meta["regenerated_response"]; the score is the same either way.
CandidatePair mutual_score(const ModelHandle& forward, const Tokenizer& tokenizer,
                           const CandidatePair& candidate, const CurationConfig& cfg);

// Bounded K-best structure over (score, index). Holds at most K entries, so
// selecting from a stream never materializes the rejected bodies.
class TopK {
 public:
  explicit TopK(std::size_t k);

  // Returns false when the entry was rejected outright.
  bool offer(double score, std::size_t index, CandidatePair body);
  std::size_t size() const noexcept { return heap_.size(); }
  // Ascending by (score, index). Empties the structure.
  std::vector<CandidatePair> take_sorted();

 private:
  struct Entry {
    double score;
    std::size_t index;
    CandidatePair body;
  };
  static bool worse(const Entry& a, const Entry& b);

  std::size_t k_;
  std::vector<Entry> heap_;
};

// Stable ascending order by (score, original index); first min(K, n).
// Every candidate must be scored.
std::vector<CandidatePair> rank_and_select(std::span<const CandidatePair> candidates,
                                           std::size_t k);

struct ScoreSummary {
  std::size_t count = 0;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};
ScoreSummary summarize_scores(std::vector<double> scores);
nlohmann::json to_json(const ScoreSummary& s);

struct CurationResult {
  DatasetManifest manifest;
  std::size_t scored = 0;
  std::size_t failed = 0;
  ScoreSummary summary;
  std::vector<std::string> warnings;
};

// Scores batches as they arrive and keeps the K best. Peak memory is K
// candidate bodies plus one score per candidate for the summary.
class StreamingCurator {
 public:
  StreamingCurator(ModelHandle forward, const Tokenizer& tokenizer, CurationConfig cfg);

  void add_batch(std::span<const CandidatePair> batch);
  CurationResult finish(std::span<const InstructionResponsePair> seed,
                        const ManifestInfo& info);

 private:
  ModelHandle forward_;
  const Tokenizer& tokenizer_;
  CurationConfig cfg_;
  TopK top_;
  std::vector<double> scores_;
  std::size_t seen_ = 0;
  std::size_t failed_ = 0;
};

// mutual_score over all candidates, rank_and_select, then assemble_final with
// the seed. Manifest meta carries the score summary.
CurationResult curate_dataset(const ModelHandle& forward, const Tokenizer& tokenizer,
                              std::span<const CandidatePair> candidates,
                              std::span<const InstructionResponsePair> seed,
                              const CurationConfig& cfg, const ManifestInfo& info = {});

}  // namespace forge
