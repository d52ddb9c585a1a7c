// Serial reference vs OpenMP kernels on the fixture-sized model.
#include <benchmark/benchmark.h>

#include "forge/fixture.hpp"
#include "forge/kernels.hpp"
#include "forge/ngram_model.hpp"
#include "forge/rng.hpp"

using namespace forge;

namespace {

struct Setup {
  std::shared_ptr<const Tokenizer> tok;
  ModelHandle model;
  std::vector<GenerateJob> jobs;
  std::vector<SourceTarget> items;

  explicit Setup(std::size_t n) {
    FixtureSpec spec;
    const auto fx = make_fixture(spec);
    tok = std::make_shared<const Tokenizer>(TokenizerSpec{}, fixture_vocabulary(spec));
    std::vector<WeightedExample> ex;
    for (const auto& p : fx.seed) ex.push_back({tok->encode(p.instruction), tok->encode(p.response), 1.0});
    model = fit_weighted(NgramModel::create(tok->size()), ex);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& u = fx.unlabeled[i % fx.unlabeled.size()];
      const auto& p = fx.seed[i % fx.seed.size()];
      jobs.push_back({tok->encode(u.response), derive_stream(42, "bench", u.id)});
      items.push_back({tok->encode(p.instruction), tok->encode(u.response + " " + p.response)});
    }
  }
};

const Setup& setup() {
  static const Setup s(20000);
  return s;
}

void BM_generate(benchmark::State& state) {
  const auto exec = state.range(0) ? Exec::parallel : Exec::serial;
  const auto& s = setup();
  DecodeParams p;
  p.max_new_tokens = 16;
  for (auto _ : state) benchmark::DoNotOptimize(generate_batch(s.model, s.jobs, p, exec));
  state.SetItemsProcessed(state.iterations() * s.jobs.size());
}

void BM_score(benchmark::State& state) {
  const auto exec = state.range(0) ? Exec::parallel : Exec::serial;
  const auto& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(score_batch(s.model, s.items, exec));
  state.SetItemsProcessed(state.iterations() * s.items.size());
}

}  // namespace

BENCHMARK(BM_generate)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
