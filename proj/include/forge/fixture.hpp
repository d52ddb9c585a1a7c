#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "forge/corpus.hpp"

namespace forge {

// Desk-scale instruction family. Class c has instruction words q<c> (common)
// and Q<c> (variant) and response words a<c> / A<c>; every pair is one
// instruction word and one response word of the same class, so the family is
// invertible at the class level. Seed pairs cover only the first
// `covered_classes`; held-out pairs and unlabeled responses range over all
// classes.
struct FixtureSpec {
  std::size_t covered_classes = 5;
  std::size_t uncovered_classes = 2;
  // Probability of the variant word on either side.
  double variant_rate = 0.25;
  std::size_t seed_pairs = 200;
  std::size_t heldout_pairs = 200;
  std::size_t unlabeled = 2000;
  std::uint64_t seed = 42;

  std::size_t classes() const { return covered_classes + uncovered_classes; }
};

struct Fixture {
  std::vector<InstructionResponsePair> seed;
  std::vector<InstructionResponsePair> heldout;
  std::vector<UnlabeledResponse> unlabeled;
};

Fixture make_fixture(const FixtureSpec& spec);

// All content words of the family (4 per class).
std::vector<std::string> fixture_vocabulary(const FixtureSpec& spec);

// `aligned` same-class candidates and `mismatched` candidates whose
// instruction comes from a different covered class, interleaved in a seeded
// order. meta["aligned"] records ground truth.
std::vector<CandidatePair> make_discrimination_candidates(const FixtureSpec& spec,
                                                          std::size_t aligned,
                                                          std::size_t mismatched,
                                                          std::uint64_t seed);

// seed.jsonl, heldout.jsonl, unlabeled.jsonl under `dir`.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

}  // namespace forge
