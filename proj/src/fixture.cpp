#include "forge/fixture.hpp"

#include <fstream>
#include <random>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

namespace {

std::size_t draw_below(std::mt19937_64& gen, std::size_t n) {
  return static_cast<std::size_t>(uniform01(gen) * static_cast<double>(n));
}

std::string word(char prefix, std::size_t cls) { return prefix + std::to_string(cls); }

std::string instruction_word(std::size_t cls, double variant_rate, std::mt19937_64& gen) {
  return word(uniform01(gen) < variant_rate ? 'Q' : 'q', cls);
}

std::string response_word(std::size_t cls, double variant_rate, std::mt19937_64& gen) {
  return word(uniform01(gen) < variant_rate ? 'A' : 'a', cls);
}

InstructionResponsePair make_pair(std::string id, std::size_t cls, const FixtureSpec& spec,
                                  std::mt19937_64& gen) {
  InstructionResponsePair p;
  p.id = std::move(id);
  p.instruction = instruction_word(cls, spec.variant_rate, gen);
  p.response = response_word(cls, spec.variant_rate, gen);
  p.meta["class"] = cls;
  return p;
}

void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  write_file_atomic(path, [&](std::ostream& out) {
    for (const auto& r : rows) out << r.dump() << '\n';
  });
}

}  // namespace

Fixture make_fixture(const FixtureSpec& spec) {
  if (spec.covered_classes == 0) throw InvalidArgument("fixture needs a covered class");
  if (!(spec.variant_rate >= 0.0 && spec.variant_rate < 1.0))
    throw InvalidArgument("variant_rate must lie in [0, 1)");
  std::mt19937_64 gen(splitmix64(spec.seed));
  Fixture f;
  for (std::size_t i = 0; i < spec.seed_pairs; ++i)
    f.seed.push_back(make_pair("seed-" + std::to_string(i),
                               draw_below(gen, spec.covered_classes), spec, gen));
  for (std::size_t i = 0; i < spec.heldout_pairs; ++i)
    f.heldout.push_back(make_pair("heldout-" + std::to_string(i),
                                  draw_below(gen, spec.classes()), spec, gen));
  for (std::size_t i = 0; i < spec.unlabeled; ++i) {
    const std::size_t cls = draw_below(gen, spec.classes());
    f.unlabeled.push_back({"u-" + std::to_string(i),
                           response_word(cls, spec.variant_rate, gen), "fixture"});
  }
  return f;
}

std::vector<std::string> fixture_vocabulary(const FixtureSpec& spec) {
  std::vector<std::string> words;
  for (char prefix : {'q', 'Q', 'a', 'A'})
    for (std::size_t c = 0; c < spec.classes(); ++c) words.push_back(word(prefix, c));
  return words;
}

std::vector<CandidatePair> make_discrimination_candidates(const FixtureSpec& spec,
                                                          std::size_t aligned,
                                                          std::size_t mismatched,
                                                          std::uint64_t seed) {
  if (spec.covered_classes < 2 && mismatched > 0)
    throw InvalidArgument("mismatched candidates need two covered classes");
  std::mt19937_64 gen(splitmix64(seed ^ 0x5eedULL));
  std::vector<CandidatePair> out;
  out.reserve(aligned + mismatched);
  auto add = [&](bool is_aligned) {
    const std::size_t cls = draw_below(gen, spec.covered_classes);
    std::size_t other = cls;
    if (!is_aligned) {
      other = draw_below(gen, spec.covered_classes - 1);
      if (other >= cls) ++other;
    }
    CandidatePair c;
    c.id = "cand-" + std::to_string(out.size());
    c.response = response_word(cls, spec.variant_rate, gen);
    c.pseudo_instruction = instruction_word(other, spec.variant_rate, gen);
    c.meta["aligned"] = is_aligned;
    out.push_back(std::move(c));
  };
  for (std::size_t i = 0; i < aligned; ++i) add(true);
  for (std::size_t i = 0; i < mismatched; ++i) add(false);
  // Fisher-Yates with the same portable draws, then renumber ids in order.
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[draw_below(gen, i)]);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = "cand-" + std::to_string(i);
  return out;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
  std::vector<nlohmann::json> rows;
  for (const auto& p : fixture.seed)
    rows.push_back({{"id", p.id}, {"instruction", p.instruction}, {"response", p.response},
                    {"meta", p.meta}});
  write_lines(dir / "seed.jsonl", rows);
  rows.clear();
  for (const auto& p : fixture.heldout)
    rows.push_back({{"id", p.id}, {"instruction", p.instruction}, {"response", p.response},
                    {"meta", p.meta}});
  write_lines(dir / "heldout.jsonl", rows);
  rows.clear();
  for (const auto& u : fixture.unlabeled)
    rows.push_back({{"id", u.id}, {"response", u.response}, {"source", u.source}});
  write_lines(dir / "unlabeled.jsonl", rows);
}

}  // namespace forge
