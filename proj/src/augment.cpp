#include "forge/augment.hpp"

#include "forge/rng.hpp"

namespace forge {

std::size_t AugmentResult::dropped_total() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : dropped) n += count;
  return n;
}

AugmentResult generate_instructions(const ModelHandle& reverse, const Tokenizer& tokenizer,
                                    std::span<const UnlabeledResponse> unlabeled,
                                    const AugmentOptions& options) {
  std::vector<GenerateJob> jobs(unlabeled.size());
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    jobs[i].source = options.reverse_prompt.apply(tokenizer.encode(unlabeled[i].response));
    jobs[i].rng_stream = derive_stream(options.global_seed, "augment", unlabeled[i].id);
  }
  const auto generated = generate_batch(reverse, jobs, options.decode, options.exec);

  AugmentResult result;
  result.candidates.reserve(unlabeled.size());
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    std::string text(trim(tokenizer.decode(generated[i])));
    if (text.empty()) {
      ++result.dropped["empty"];
      continue;
    }
    CandidatePair c;
    c.id = unlabeled[i].id;
    c.response = unlabeled[i].response;
    c.pseudo_instruction = std::move(text);
    c.rng_stream = jobs[i].rng_stream;
    if (!unlabeled[i].source.empty()) c.meta["source"] = unlabeled[i].source;
    result.candidates.push_back(std::move(c));
  }
  return result;
}

std::vector<CandidatePair> clean_candidates(std::vector<CandidatePair> candidates,
                                            const Tokenizer& tokenizer,
                                            std::map<std::string, std::size_t>& dropped) {
  std::vector<CandidatePair> out;
  out.reserve(candidates.size());
  const std::size_t limit = tokenizer.spec().max_sequence_length;
  for (auto& c : candidates) {
    c.pseudo_instruction = std::string(trim(c.pseudo_instruction));
    c.response = std::string(trim(c.response));
    if (c.pseudo_instruction.empty()) {
      ++dropped["empty"];
      continue;
    }
    if (c.pseudo_instruction == c.response) {
      ++dropped["echo"];
      continue;
    }
    if (tokenizer.count_tokens(c.pseudo_instruction) > limit) {
      ++dropped["length"];
      continue;
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace forge
