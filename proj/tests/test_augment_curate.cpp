#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "forge/augment.hpp"
#include "forge/curate.hpp"
#include "forge/error.hpp"
#include "forge/fixture.hpp"
#include "forge/rng.hpp"
#include "forge/ngram_model.hpp"
#include "support.hpp"

using namespace forge;

namespace {

std::vector<UnlabeledResponse> responses(std::size_t n, const std::string& text) {
  std::vector<UnlabeledResponse> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"u" + std::to_string(i), text, "web"});
  return out;
}

CandidatePair cand(std::string id, std::string instr, std::string resp,
                   std::optional<double> score = std::nullopt) {
  CandidatePair c;
  c.id = std::move(id);
  c.pseudo_instruction = std::move(instr);
  c.response = std::move(resp);
  c.score = score;
  return c;
}

std::vector<std::string> ids(const std::vector<CandidatePair>& v) {
  std::vector<std::string> out;
  for (const auto& c : v) out.push_back(c.id);
  return out;
}

// Forward model memorizing ("rev b b" -> "b b").
struct Memorized {
  std::shared_ptr<const Tokenizer> tok = testing::words({"rev", "b", "c"});
  ModelHandle forward = fit_weighted(
      NgramModel::create(tok->size()),
      std::vector<WeightedExample>{{tok->encode("rev b b"), tok->encode("b b"), 1.0}});
  ModelHandle reverse = fit_weighted(
      NgramModel::create(tok->size()),
      std::vector<WeightedExample>{{tok->encode("b b"), tok->encode("rev b b"), 1.0}});
};

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("three empty generations out of 100 are dropped and counted") {
  auto tok = testing::words({"x", "y"});
  auto u = responses(100, "y");
  // Empty output for three chosen responses, keyed by their streams.
  AugmentOptions opts;
  opts.global_seed = 9;
  std::set<std::uint64_t> empty_streams;
  for (int i : {4, 50, 97}) empty_streams.insert(derive_stream(9, "augment", u[i].id));
  auto scripted = std::make_shared<testing::ScriptedModel>(
      [&](const TokenSeq&, const DecodeParams& p) {
        return empty_streams.count(p.rng_stream) ? TokenSeq{} : TokenSeq{3};
      },
      [](const TokenSeq&, const TokenSeq& t) { return std::vector<double>(t.size(), 1.0); });
  const auto r = generate_instructions(scripted, *tok, u, opts);
  CHECK(r.candidates.size() == 97);
  CHECK(r.dropped.at("empty") == 3);
  CHECK(r.dropped_total() == 3);
  CHECK(r.candidates[4].id == "u5");
  for (const auto& c : r.candidates) CHECK(c.pseudo_instruction == "x");
}

TEST_CASE("same global seed gives the same candidates, in input order") {
  auto tok = testing::words({"p", "q", "r"});
  auto rev = fit_weighted(NgramModel::create(tok->size()),
                          std::vector<WeightedExample>{{tok->encode("q"), tok->encode("p r p"), 1.0},
                                                       {tok->encode("q"), tok->encode("r"), 1.0}});
  auto u = responses(300, "q");
  AugmentOptions opts;
  opts.global_seed = 1;
  const auto a = generate_instructions(rev, *tok, u, opts);
  opts.exec = Exec::serial;
  const auto b = generate_instructions(rev, *tok, u, opts);
  CHECK(a.candidates == b.candidates);
  for (std::size_t i = 1; i < a.candidates.size(); ++i)
    CHECK(std::stoi(a.candidates[i - 1].id.substr(1)) < std::stoi(a.candidates[i].id.substr(1)));
  opts.global_seed = 2;
  CHECK(generate_instructions(rev, *tok, u, opts).candidates != a.candidates);
}

TEST_CASE("memorized reverse model recovers the instruction") {
  Memorized m;
  AugmentOptions opts;
  opts.decode.greedy = true;
  const auto r = generate_instructions(m.reverse, *m.tok,
                                       std::vector<UnlabeledResponse>{{"u1", "b b", ""}}, opts);
  REQUIRE(r.candidates.size() == 1);
  CHECK(r.candidates[0].pseudo_instruction == "rev b b");
  CHECK(r.candidates[0].response == "b b");
  CHECK(r.candidates[0].rng_stream == derive_stream(0, "augment", "u1"));
}

TEST_CASE("clean drops echoes and overlong instructions") {
  auto tok = testing::words({"a", "b"}, 1024);
  std::string long_instr;
  for (int i = 0; i < 2000; ++i) long_instr += "a ";
  std::map<std::string, std::size_t> dropped;
  auto out = clean_candidates({cand("c1", "a b", "a b"), cand("c2", long_instr, "b"),
                               cand("c3", "  a ", " b "), cand("c4", "b", "a")},
                              *tok, dropped);
  CHECK(ids(out) == std::vector<std::string>{"c3", "c4"});
  CHECK(out[0].pseudo_instruction == "a");
  CHECK(out[0].response == "b");
  CHECK(dropped["echo"] == 1);
  CHECK(dropped["length"] == 1);
}

TEST_CASE("clean input passes through unchanged") {
  auto tok = testing::words({"a", "b"});
  std::map<std::string, std::size_t> dropped;
  const std::vector<CandidatePair> in = {cand("c1", "a", "b"), cand("c2", "b a", "a")};
  CHECK(clean_candidates(in, *tok, dropped) == in);
  CHECK(dropped.empty());
}

TEST_CASE("output plus drops equals usable input") {
  auto tok = testing::words({"x", "y", "z"}, 6);
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + gen() % 60;
    auto u = responses(n, "x y");
    auto model = std::make_shared<testing::ScriptedModel>(
        [&](const TokenSeq&, const DecodeParams& p) {
          switch (p.rng_stream % 4) {
            case 0: return TokenSeq{};
            case 1: return TokenSeq{3, 4};
            case 2: return TokenSeq(8, 5);
            default: return TokenSeq{5};
          }
        },
        [](const TokenSeq&, const TokenSeq& t) { return std::vector<double>(t.size(), 1.0); });
    AugmentOptions opts;
    opts.global_seed = gen();
    auto r = generate_instructions(model, *tok, u, opts);
    auto kept = clean_candidates(r.candidates, *tok, r.dropped);
    std::size_t dropped = 0;
    for (const auto& [_, k] : r.dropped) dropped += k;
    CHECK(kept.size() + dropped == n);
  }
}

}  // TEST_SUITE

TEST_SUITE("curate") {

TEST_CASE("certain forward model scores zero, uniform scores ln 4") {
  auto tok = testing::words({"a", "b", "c", "d"});
  CurationConfig cfg;
  const auto c = cand("c1", "a b", "c d a");
  CHECK(mutual_score(testing::certain_model(), *tok, c, cfg).score == 0.0);
  const auto u = mutual_score(testing::uniform_model(4), *tok, c, cfg);
  CHECK(std::abs(*u.score - std::log(4.0)) < 1e-12);
  cfg.normalization = Normalization::sequence_sum;
  CHECK(std::abs(*mutual_score(testing::uniform_model(4), *tok, c, cfg).score - 3 * std::log(4.0)) <
        1e-12);
}

TEST_CASE("aligned candidate beats the mismatched one") {
  Memorized m;
  CurationConfig cfg;
  const auto good = mutual_score(m.forward, *m.tok, cand("g", "rev b b", "b b"), cfg);
  const auto bad = mutual_score(m.forward, *m.tok, cand("m", "rev c c", "b b"), cfg);
  CHECK(*good.score < *bad.score);
}

TEST_CASE("ties are broken by input order") {
  const std::vector<CandidatePair> c = {cand("a", "", "", 0.9), cand("b", "", "", 0.2),
                                        cand("c", "", "", 0.2), cand("d", "", "", 1.5)};
  CHECK(ids(rank_and_select(c, 2)) == std::vector<std::string>{"b", "c"});
  CHECK(ids(rank_and_select(c, 10)) == std::vector<std::string>{"b", "c", "a", "d"});
  CHECK_THROWS_AS(rank_and_select(c, 0), InvalidArgument);
  CHECK_THROWS_AS(rank_and_select(std::vector<CandidatePair>{cand("x", "", "")}, 1), InvalidArgument);
}

TEST_CASE("bounded selection equals a stable sort") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen() % 300;
    std::vector<CandidatePair> c;
    for (std::size_t i = 0; i < n; ++i)
      c.push_back(cand("c" + std::to_string(i), "", "", static_cast<double>(gen() % 20) / 4.0));
    const std::size_t k = 1 + gen() % 320;
    auto sorted = c;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return *a.score < *b.score; });
    sorted.resize(std::min(k, n));
    const auto got = rank_and_select(c, k);
    CHECK(ids(got) == ids(sorted));
    // Every selected score is at most every rejected score.
    if (!got.empty() && got.size() < n) {
      double worst_kept = *got.back().score;
      const auto kept_ids = ids(got);
      std::set<std::string> kept(kept_ids.begin(), kept_ids.end());
      for (const auto& x : c)
        if (!kept.count(x.id)) CHECK(*x.score >= worst_kept);
    }
    // Growing K keeps the earlier selection as a prefix.
    const auto more = rank_and_select(c, k + 5);
    CHECK(std::equal(got.begin(), got.end(), more.begin()));
  }
}

TEST_CASE("TopK never holds more than K") {
  TopK top(3);
  for (int i = 0; i < 100; ++i) {
    top.offer(100 - i, i, cand("c" + std::to_string(i), "", "", 100.0 - i));
    CHECK(top.size() <= 3);
  }
  CHECK(ids(top.take_sorted()) == std::vector<std::string>{"c99", "c98", "c97"});
}

TEST_CASE("curate_dataset: 10 candidates, K=4, 3 seed") {
  auto tok = testing::words({"a", "b", "c"});
  std::vector<CandidatePair> c;
  for (int i = 0; i < 10; ++i) c.push_back(cand("c" + std::to_string(i), i % 2 ? "a" : "a b", "c b"));
  std::vector<InstructionResponsePair> seed(3);
  for (int i = 0; i < 3; ++i) seed[i] = {"s" + std::to_string(i), "a", "b", Origin::seed, {}};
  CurationConfig cfg;
  cfg.top_k = 4;
  auto fwd = fit_weighted(NgramModel::create(tok->size()),
                          std::vector<WeightedExample>{{tok->encode("a"), tok->encode("c b"), 1.0}});
  const auto r = curate_dataset(fwd, *tok, c, seed, cfg);
  CHECK(r.manifest.pairs.size() == 7);
  CHECK(r.manifest.selected_count == 4);
  CHECK(r.scored == 10);
  CHECK(r.manifest.meta["score_summary"]["count"] == 10);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.manifest.pairs[i].instruction == "a");
}

TEST_CASE("all scoring failures leave the seed and a warning") {
  auto tok = testing::words({"a", "b"});
  auto broken = std::make_shared<testing::ScriptedModel>(
      [](const TokenSeq& s, const DecodeParams&) { return s; },
      [](const TokenSeq&, const TokenSeq&) -> std::vector<double> { throw BackendError("no", false); });
  std::vector<InstructionResponsePair> seed = {{"s0", "a", "b", Origin::seed, {}}};
  const auto r = curate_dataset(broken, *tok, std::vector<CandidatePair>{cand("c0", "a", "b"),
                                                                          cand("c1", "b", "a")},
                                seed, CurationConfig{});
  CHECK(r.manifest.pairs.size() == 1);
  CHECK(r.failed == 2);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("diagnostic mode selects the same set") {
  FixtureSpec spec;
  auto cands = make_discrimination_candidates(spec, 60, 60, 3);
  auto fx = make_fixture(spec);
  auto tok = std::make_shared<const Tokenizer>(TokenizerSpec{}, fixture_vocabulary(spec));
  std::vector<WeightedExample> ex;
  for (const auto& p : fx.seed) ex.push_back({tok->encode(p.instruction), tok->encode(p.response), 1.0});
  auto fwd = fit_weighted(NgramModel::create(tok->size()), ex);
  std::vector<InstructionResponsePair> seed = {{"s", "q0", "a0", Origin::seed, {}}};
  CurationConfig cfg;
  cfg.top_k = 50;
  const auto plain = curate_dataset(fwd, *tok, cands, seed, cfg);
  cfg.score_mode = ScoreMode::diagnostic_with_regeneration;
  const auto diag = curate_dataset(fwd, *tok, cands, seed, cfg);
  REQUIRE(plain.manifest.pairs.size() == diag.manifest.pairs.size());
  for (std::size_t i = 0; i < plain.manifest.pairs.size(); ++i)
    CHECK(plain.manifest.pairs[i].id == diag.manifest.pairs[i].id);
  CHECK(diag.manifest.pairs[0].meta.contains("regenerated_response"));
}

TEST_CASE("sequence_sum penalizes longer responses at equal mean") {
  auto tok = testing::words({"a", "b"});
  auto u = testing::uniform_model(2);
  CurationConfig cfg;
  cfg.normalization = Normalization::sequence_sum;
  const auto short_r = mutual_score(u, *tok, cand("s", "a", "b"), cfg);
  const auto long_r = mutual_score(u, *tok, cand("l", "a", "b b b b"), cfg);
  CHECK(*long_r.score > *short_r.score);
  cfg.normalization = Normalization::per_token_mean;
  CHECK(*mutual_score(u, *tok, cand("s", "a", "b"), cfg).score ==
        *mutual_score(u, *tok, cand("l", "a", "b b b b"), cfg).score);
}

TEST_CASE("streaming curator matches the in-memory path") {
  FixtureSpec spec;
  auto cands = make_discrimination_candidates(spec, 300, 300, 21);
  auto fx = make_fixture(spec);
  auto tok = std::make_shared<const Tokenizer>(TokenizerSpec{}, fixture_vocabulary(spec));
  std::vector<WeightedExample> ex;
  for (const auto& p : fx.seed) ex.push_back({tok->encode(p.instruction), tok->encode(p.response), 1.0});
  auto fwd = fit_weighted(NgramModel::create(tok->size()), ex);
  CurationConfig cfg;
  cfg.top_k = 250;
  const auto whole = curate_dataset(fwd, *tok, cands, fx.seed, cfg);
  StreamingCurator sc(fwd, *tok, cfg);
  for (std::size_t i = 0; i < cands.size(); i += 37)
    sc.add_batch(std::span(cands).subspan(i, std::min<std::size_t>(37, cands.size() - i)));
  const auto streamed = sc.finish(fx.seed, {});
  CHECK(streamed.manifest.pairs == whole.manifest.pairs);
  CHECK(streamed.summary.median == whole.summary.median);
}

TEST_CASE("score summary") {
  const auto s = summarize_scores({3.0, 1.0, 2.0, 10.0});
  CHECK(s.count == 4);
  CHECK(s.min == 1.0);
  CHECK(s.max == 10.0);
  CHECK(s.median == 2.5);
}

}  // TEST_SUITE
