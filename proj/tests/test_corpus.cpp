#include <doctest.h>

#include <random>
#include <sstream>

#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "support.hpp"

using namespace forge;
using testing::TempDir;
using testing::write_text;

namespace {

InstructionResponsePair pair(std::string id, std::string i, std::string r) {
  InstructionResponsePair p;
  p.id = std::move(id);
  p.instruction = std::move(i);
  p.response = std::move(r);
  return p;
}

CandidatePair scored(std::string id, double score) {
  CandidatePair c;
  c.id = std::move(id);
  c.response = "resp " + c.id;
  c.pseudo_instruction = "instr " + c.id;
  c.score = score;
  return c;
}

std::string random_text(std::mt19937_64& gen) {
  static const std::vector<std::string> pieces = {
      "a", "Zz", " ", "\n", "\t", "\"", "\\", "{x}", "\xe2\x80\x94", "\xc3\xa9", "0", "\r\n", "\x01"};
  std::string s;
  const int n = 1 + gen() % 12;
  for (int i = 0; i < n; ++i) s += pieces[gen() % pieces.size()];
  return s;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("seed file with three lines loads in order") {
  TempDir dir("corpus");
  write_text(dir / "seed.jsonl",
             R"({"id":"s1","instruction":"i1","response":"r1"})"
             "\n"
             R"({"id":"s2","instruction":"i2","response":"r2","meta":{"k":1}})"
             "\n\n"
             R"({"id":"s3","instruction":"i3","response":"r3"})"
             "\n");
  const auto seed = load_seed(dir / "seed.jsonl");
  REQUIRE(seed.size() == 3);
  CHECK(seed[0].id == "s1");
  CHECK(seed[2].response == "r3");
  CHECK(seed[1].meta["k"] == 1);
  for (const auto& p : seed) CHECK(p.origin == Origin::seed);
}

TEST_CASE("missing response cites its line") {
  TempDir dir("corpus");
  write_text(dir / "seed.jsonl",
             R"({"id":"s1","instruction":"i1","response":"r1"})"
             "\n"
             R"({"id":"s2","instruction":"i2"})"
             "\n");
  try {
    load_seed(dir / "seed.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("response") != std::string::npos);
  }
}

TEST_CASE("duplicate ids are named") {
  TempDir dir("corpus");
  write_text(dir / "seed.jsonl",
             R"({"id":"a1","instruction":"i","response":"r"})"
             "\n"
             R"({"id":"a1","instruction":"j","response":"s"})"
             "\n");
  try {
    load_seed(dir / "seed.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("a1") != std::string::npos);
  }
}

TEST_CASE("missing ids become stem:line") {
  TempDir dir("corpus");
  write_text(dir / "oasst.jsonl",
             R"({"instruction":"i","response":"r"})"
             "\n"
             R"({"instruction":"j","response":"s"})"
             "\n");
  const auto seed = load_seed(dir / "oasst.jsonl");
  CHECK(seed[0].id == "oasst:1");
  CHECK(seed[1].id == "oasst:2");
}

TEST_CASE("unlabeled drops empty responses and counts them") {
  TempDir dir("corpus");
  write_text(dir / "u.jsonl",
             R"({"id":"u1","response":"one"})"
             "\n"
             R"({"id":"u2","response":"   "})"
             "\n"
             R"({"id":"u3","response":"three","source":"web"})"
             "\n"
             R"({"id":"u4","response":"four"})"
             "\n"
             R"({"id":"u5","response":"five"})"
             "\n");
  const auto u = load_unlabeled(dir / "u.jsonl");
  CHECK(u.records.size() == 4);
  CHECK(u.stats.dropped_empty == 1);
  CHECK(u.records[1].id == "u3");
  CHECK(u.records[1].source == "web");
}

TEST_CASE("no usable responses is an error") {
  TempDir dir("corpus");
  write_text(dir / "u.jsonl", R"({"id":"u1","response":" "})" "\n");
  CHECK_THROWS_WITH_AS(load_unlabeled(dir / "u.jsonl"), doctest::Contains("no usable responses"),
                       DataError);
  write_text(dir / "empty.jsonl", "");
  CHECK_THROWS_AS(load_unlabeled(dir / "empty.jsonl"), DataError);
}

TEST_CASE("502k-line file streams with bounded residency") {
  TempDir dir("corpus");
  {
    std::ofstream out(dir / "big.jsonl");
    for (int i = 0; i < 502000; ++i) out << "{\"id\":\"u" << i << "\",\"response\":\"w" << i % 97 << "\"}\n";
  }
  std::size_t seen = 0, max_batch = 0;
  std::string last;
  const auto stats = for_each_unlabeled_batch(dir / "big.jsonl", 4096,
                                              [&](std::span<const UnlabeledResponse> b) {
                                                seen += b.size();
                                                max_batch = std::max(max_batch, b.size());
                                                last = b.back().id;
                                              });
  CHECK(seen == 502000);
  CHECK(stats.records == 502000);
  CHECK(stats.peak_batch <= 4096);
  CHECK(max_batch <= 4096);
  CHECK(last == "u501999");
}

TEST_CASE("assemble_final cardinalities") {
  const std::vector<InstructionResponsePair> seed3 = {pair("s1", "i", "r"), pair("s2", "i", "r"),
                                                      pair("s3", "i", "r")};
  const std::vector<CandidatePair> two = {scored("c1", 0.1), scored("c2", 0.2)};
  auto m = assemble_final(two, seed3, {});
  CHECK(m.pairs.size() == 5);
  CHECK(m.selected_count == 2);
  CHECK(m.seed_count == 3);
  CHECK(m.pairs[0].origin == Origin::synthetic);
  CHECK(m.pairs[0].instruction == "instr c1");
  CHECK(m.pairs[0].meta["mutual_score"] == 0.1);
  CHECK(m.pairs[4].origin == Origin::seed);

  auto pure = assemble_final(std::vector<CandidatePair>{}, seed3, {});
  CHECK(pure.pairs.size() == 3);
  CHECK(pure.selected_count == 0);

  std::vector<CandidatePair> big;
  for (int i = 0; i < 16800; ++i) big.push_back(scored("c" + std::to_string(i), i));
  std::vector<InstructionResponsePair> seed_big;
  for (int i = 0; i < 3200; ++i) seed_big.push_back(pair("s" + std::to_string(i), "i", "r"));
  CHECK(assemble_final(big, seed_big, {}).pairs.size() == 20000);
}

TEST_CASE("assemble_final rejects overlapping ids and unscored candidates") {
  const std::vector<InstructionResponsePair> seed = {pair("x", "i", "r")};
  CHECK_THROWS_AS(assemble_final(std::vector<CandidatePair>{scored("x", 1)}, seed, {}), Error);
  CandidatePair c = scored("y", 1);
  c.score.reset();
  CHECK_THROWS_AS(assemble_final(std::vector<CandidatePair>{c}, seed, {}), Error);
}

TEST_CASE("export then load is the identity and export is byte-stable") {
  TempDir dir("corpus");
  const std::vector<InstructionResponsePair> seed = {pair("s1", "Say hi", "line one\nline two")};
  ManifestInfo info;
  info.rng_seed = 42;
  info.config_digest = "abc";
  info.meta["trainer_hints"] = {{"learning_rate", 2e-5}};
  auto m = assemble_final(std::vector<CandidatePair>{scored("c1", 0.5)}, seed, info);
  export_manifest(m, dir / "a.jsonl");
  export_manifest(m, dir / "b.jsonl");
  CHECK(testing::read_text(dir / "a.jsonl") == testing::read_text(dir / "b.jsonl"));
  const auto back = load_manifest(dir / "a.jsonl");
  CHECK(back.pairs == m.pairs);
  CHECK(back.pairs[1].response == "line one\nline two");
  CHECK(back.rng_seed == 42);
  CHECK(back.config_digest == "abc");
  CHECK(back.meta == m.meta);
  CHECK(back.engine_version == kEngineVersion);
  // Escaped newline keeps one record per line.
  std::istringstream lines(testing::read_text(dir / "a.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 3);
}

TEST_CASE("manifest round-trip holds for generated manifests") {
  TempDir dir("corpus");
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<InstructionResponsePair> seed;
    std::vector<CandidatePair> sel;
    const int ns = gen() % 5, nc = gen() % 5;
    for (int i = 0; i < ns; ++i) {
      auto p = pair("s" + std::to_string(i), random_text(gen), random_text(gen));
      if (gen() % 2) p.meta["note"] = random_text(gen);
      seed.push_back(p);
    }
    for (int i = 0; i < nc; ++i) {
      auto c = scored("c" + std::to_string(i), static_cast<double>(gen() % 100000) / 7.0);
      c.response = random_text(gen);
      c.pseudo_instruction = random_text(gen);
      sel.push_back(c);
    }
    ManifestInfo info;
    info.rng_seed = gen();
    info.config_digest = random_text(gen);
    const auto m = assemble_final(sel, seed, info);
    export_manifest(m, dir / "m.jsonl");
    const auto back = load_manifest(dir / "m.jsonl");
    CHECK(back.pairs == m.pairs);
    CHECK(back.seed_count == m.seed_count);
    CHECK(back.selected_count == m.selected_count);
    CHECK(back.rng_seed == m.rng_seed);
    CHECK(back.config_digest == m.config_digest);
  }
}

TEST_CASE("candidate json round-trips") {
  CandidatePair c = scored("c9", 1.25);
  c.rng_stream = 0xfeedfacecafebeefULL;
  c.meta["source"] = "web";
  CHECK(candidate_from_json(to_json(c)) == c);
  c.score.reset();
  CHECK(candidate_from_json(to_json(c)) == c);
}

TEST_CASE("failed atomic write leaves only the partial file") {
  TempDir dir("corpus");
  CHECK_THROWS(write_file_atomic(dir / "x.json", [](std::ostream& out) {
    out << "half";
    throw std::runtime_error("boom");
  }));
  CHECK_FALSE(std::filesystem::exists(dir / "x.json"));
  CHECK(std::filesystem::exists(dir / "x.json.partial"));
}

}  // TEST_SUITE
