#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/kernels.hpp"
#include "forge/model.hpp"
#include "forge/prompt.hpp"

namespace forge {

struct AugmentOptions {
  DecodeParams decode;
  std::uint64_t global_seed = 0;
  // Wraps R_u before it reaches the reverse model.
  PromptWrapper reverse_prompt;
  Exec exec = Exec::parallel;
};

struct AugmentResult {
  std::vector<CandidatePair> candidates;
  // Drop counts by reason: "empty", "echo", "length".
  std::map<std::string, std::size_t> dropped;

  std::size_t dropped_total() const;
};

// One candidate per response, in input order. Empty generations are dropped
// and counted under "empty". Each candidate records the RNG stream it was
// decoded with.
AugmentResult generate_instructions(const ModelHandle& reverse, const Tokenizer& tokenizer,
                                    std::span<const UnlabeledResponse> unlabeled,
                                    const AugmentOptions& options);

// Trims both texts, then drops echoes (instruction == response) and
// instructions longer than the tokenizer's max_sequence_length. Counts merge
// into `dropped`.
std::vector<CandidatePair> clean_candidates(std::vector<CandidatePair> candidates,
                                            const Tokenizer& tokenizer,
                                            std::map<std::string, std::size_t>& dropped);

}  // namespace forge
