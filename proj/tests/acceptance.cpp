// Acceptance run: one PASS/FAIL line per criterion, pinned tolerances.
// Exit status is non-zero when any hard criterion fails.
#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "forge/align.hpp"
#include "forge/curate.hpp"
#include "forge/evalkit.hpp"
#include "forge/fixture.hpp"
#include "forge/ngram_model.hpp"
#include "forge/pipeline.hpp"
#include "forge/sampling.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

const fs::path kSource(FORGE_SOURCE_DIR);

// Frozen from the oracle run on the fixture (seed 42, K = 1000).
constexpr double kDiscriminationFloor = 0.95;
constexpr std::size_t kScaleCandidates = 500000;
constexpr std::size_t kScaleK = 16800;
// Peak RSS growth allowed for the scale run. Materializing every candidate
// body would exceed it several times over.
constexpr long kScaleRssBudgetKb = 96 * 1024;

struct Verdict {
  bool pass = false;
  std::string detail;
  bool soft_flag = false;
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = v.pass && in_time;
  if (!ok) ++failures;
  std::ostringstream line;
  line << (ok ? "PASS" : "FAIL") << "  " << name << "  " << v.detail;
  if (v.soft_flag) line << "  [FLAG]";
  line << "  (" << secs << " s, budget " << budget_s << " s)";
  if (!in_time) line << "  over budget";
  std::cout << line.str() << std::endl;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<EncodedPair> encode(const Tokenizer& tok, const std::vector<InstructionResponsePair>& v) {
  std::vector<EncodedPair> out;
  for (const auto& p : v) out.push_back({p.id, tok.encode(p.instruction), tok.encode(p.response)});
  return out;
}

SweepTask fixture_task() {
  FixtureSpec spec;
  const auto fx = make_fixture(spec);
  SweepTask t;
  t.tokenizer = std::make_shared<const Tokenizer>(TokenizerSpec{}, fixture_vocabulary(spec));
  t.seed = encode(*t.tokenizer, fx.seed);
  t.heldout = encode(*t.tokenizer, fx.heldout);
  t.align.global_seed = 42;
  return t;
}

ModelHandle aligned_forward(const SweepTask& t) {
  return run_alignment(t.seed, NgramModel::create(t.tokenizer->size(), t.model),
                       NgramModel::create(t.tokenizer->size(), t.model), t.align)
      .forward;
}

long peak_rss_kb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss;
}

Verdict arithmetic() {
  double worst = 0.0;
  auto near = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  near(compute_alpha(2.0, 6.0, 0.01), 0.25);
  near(compute_alpha(1.0, 1.0, 0.01), 0.5);
  near(compute_alpha(0.0, 5.0, 0.01), 0.01);
  near(compute_alpha(0.0, 0.0, 0.01), 0.5);
  near(combined_loss(0.25, 2.0, 4.0), 3.5);
  const std::vector<double> d = {0.5, 0.3, 0.15, 0.05};
  const auto f = nucleus_filter(d, 0.9);
  near(f[0], 0.5 / 0.95);
  near(f[1], 0.3 / 0.95);
  near(f[2], 0.15 / 0.95);
  near(f[3], 0.0);
  const auto id = nucleus_filter(d, 1.0);
  for (std::size_t i = 0; i < d.size(); ++i) near(id[i], d[i]);
  const std::vector<double> tie = {0.5, 0.5};
  const auto t = nucleus_filter(tie, 0.5);
  near(t[0], 1.0);
  near(t[1], 0.0);
  return {worst <= 1e-12, "max abs error " + fmt(worst) + " (tol 1e-12)"};
}

Verdict weighted_mle() {
  std::mt19937_64 gen(2024);
  NgramConfig smoothed;
  smoothed.predict_end = false;
  NgramConfig nearly_raw = smoothed;
  nearly_raw.smoothing = 1e-12;
  double worst = -1e300, worst_raw = -1e300;
  for (int i = 0; i < 200; ++i) {
    const auto c = oracle::random_case(gen);
    worst = std::max(worst, oracle::mle_gap(c, smoothed, true));
    worst_raw = std::max(worst_raw, oracle::mle_gap(c, nearly_raw, false));
  }
  return {worst <= 1e-6 && worst_raw <= 1e-6,
          "200 sets, worst excess over grid " + fmt(worst) + " smoothed, " + fmt(worst_raw) +
              " near-raw (tol 1e-6)"};
}

Verdict sampler() {
  const std::vector<double> dist = {0.05, 0.3, 0.02, 0.25, 0.18, 0.2};
  DecodeParams p;
  p.temperature = 0.7;
  p.top_p = 0.9;
  std::vector<double> tempered(dist.size());
  double z = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) z += tempered[i] = std::pow(dist[i], 1.0 / 0.7);
  for (auto& v : tempered) v /= z;
  const auto truth = oracle::nucleus(tempered, p.top_p);
  std::mt19937_64 gen(42);
  constexpr int draws = 100000;
  std::vector<int> counts(dist.size(), 0);
  int outside = 0;
  for (int i = 0; i < draws; ++i) {
    const auto j = sample_next(dist, p, gen);
    ++counts[j];
    outside += truth[j] == 0.0;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i)
    worst = std::max(worst, std::abs(counts[i] / double(draws) - truth[i]));
  return {outside == 0 && worst <= 0.01,
          "100000 draws, " + std::to_string(outside) + " outside nucleus, max freq error " +
              fmt(worst) + " (tol 0.01)"};
}

Verdict discrimination() {
  const auto task = fixture_task();
  const auto fwd = aligned_forward(task);
  FixtureSpec spec;
  const auto cands = make_discrimination_candidates(spec, 1000, 1000, 7);
  CurationConfig cfg;
  cfg.top_k = 1000;
  const auto r = curate_dataset(fwd, *task.tokenizer, cands, {}, cfg);
  std::size_t aligned = 0;
  for (const auto& p : r.manifest.pairs) aligned += p.meta.value("aligned", false);
  const double frac = aligned / 1000.0;
  return {r.manifest.pairs.size() == 1000 && frac >= kDiscriminationFloor,
          "K=1000 keeps " + std::to_string(aligned) + " aligned, recovery " + fmt(frac) +
              " (floor " + fmt(kDiscriminationFloor) + ")"};
}

Verdict end_to_end() {
  testing::TempDir tmp("acceptance");
  std::ostringstream sink;
  std::vector<std::string> manifests;
  nlohmann::json report;
  for (const char* run : {"a", "b"}) {
    ConfigDiagnostics diag;
    const auto cfg = load_config(kSource / "fixtures" / "desk" / "config.json", {"alignment.iterations=3"},
                                 std::nullopt, tmp / run, diag);
    if (!cfg) return {false, "config: " + diag.render()};
    stage_align(*cfg, sink);
    stage_augment(*cfg, sink);
    stage_curate(*cfg, sink);
    manifests.push_back(testing::read_text(tmp / run / "manifest.jsonl"));
    report = nlohmann::json::parse(testing::read_text(tmp / run / "alignment_report.json"));
  }
  double k0 = NAN, k3 = NAN;
  for (const auto& row : report["roundtrip"]) {
    if (row["k"] == 0) k0 = row["metric"];
    if (row["k"] == 3) k3 = row["metric"];
  }
  const bool same = manifests[0] == manifests[1] && !manifests[0].empty();
  return {k3 < k0 && same, "round-trip NLL k=0 " + fmt(k0) + ", k=3 " + fmt(k3) +
                               (same ? ", manifests byte-identical" : ", manifests differ")};
}

Verdict ablation_shape() {
  const auto task = fixture_task();
  const std::vector<std::size_t> ns = {1, 2, 3, 4, 5, 10, 20};
  const auto rows = sweep_iterations(task, ns);
  const auto shape = check_iteration_shape(rows);
  std::string curve;
  for (const auto& r : rows) curve += " N=" + std::to_string(r.n) + ":" + fmt(r.metric);
  Verdict v;
  // Hard part: the peak at N <= 5 on this frozen fixture seed.
  v.pass = shape.peak_within_5;
  v.soft_flag = !shape.ok();
  v.detail = "best N=" + std::to_string(shape.best_n) + (shape.last_worse ? ", N=20 worse" : ", N=20 not worse") + ";" + curve;
  return v;
}

Verdict zero_influence() {
  auto task = fixture_task();
  task.align.alpha_mode = AlphaMode::fixed(0.0);
  const auto base = NgramModel::create(task.tokenizer->size());
  const auto st = run_alignment(task.seed, base, base, task.align);
  std::vector<WeightedExample> fwd_ex, rev_ex;
  for (const auto& p : task.seed) {
    fwd_ex.push_back({p.instruction, p.response, 1.0});
    rev_ex.push_back({p.response, p.instruction, 1.0});
  }
  ModelHandle f = fit_weighted(base, fwd_ex), r = fit_weighted(base, rev_ex);
  for (std::size_t k = 0; k < task.align.iterations; ++k) {
    f = fit_weighted(f, fwd_ex);
    r = fit_weighted(r, rev_ex);
  }
  auto same = [](const ModelHandle& a, const ModelHandle& b) {
    return std::static_pointer_cast<const NgramModel>(a)->same_parameters(
        *std::static_pointer_cast<const NgramModel>(b));
  };
  const bool fs_ = same(st.forward, f), rs = same(st.reverse, r);
  return {fs_ && rs, std::string("N=3 fixed(0): forward ") + (fs_ ? "identical" : "differs") +
                         ", reverse " + (rs ? "identical" : "differs") + " to seed-only fits"};
}

Verdict judge_golden() {
  const auto golden = kSource / "tests" / "golden";
  const bool tmpl = judge_template() == testing::read_text(golden / "judge_template.txt");
  const bool rendered =
      render_judge_prompt("Paris is the capital. Literal {instruction_B} stays.",
                          "What is the capital of France?", "Name a city.\n{response}") ==
      testing::read_text(golden / "judge_rendered.txt");
  // Partition: a judge answering by case number.
  struct Cycle final : JudgeClient {
    std::string judge(const JudgeRequest& r) override {
      static const char* answers[] = {"A win", "B win", "Tie", "A wins!", "", " Tie\n"};
      return answers[std::stoul(r.case_id.substr(2)) % 6];
    }
    std::size_t max_concurrency() const override { return 8; }
  } cycle;
  std::vector<JudgeCase> cases;
  for (int i = 0; i < 1000; ++i)
    cases.push_back({"c-" + std::to_string(i), "r", "main", "base"});
  const auto t = tally(judge_pairwise(cycle, cases, 3));
  const bool partition = t.win + t.tie + t.loss + t.invalid == 1000 && t.invalid == 333 && t.tie == 333;
  std::string rows_detail;
  bool rows_ok = true;
  for (const auto& row : published_alignment_rows()) {
    const auto c = check_published_row(row);
    const double want = row.win - row.loss;
    rows_ok = rows_ok && std::abs(c.computed_delta - want) < 1e-9;
    if (!c.delta_matches || !c.sums_to_100)
      rows_detail += " " + row.label + ": printed delta " + fmt(row.printed_delta) + " vs win-loss " +
                     fmt(c.computed_delta) + ", rates sum " + fmt(c.rate_sum) + ";";
  }
  return {tmpl && rendered && partition && rows_ok,
          std::string("template ") + (tmpl ? "ok" : "DIFFERS") + ", rendered " +
              (rendered ? "ok" : "DIFFERS") + ", partition " + (partition ? "exact" : "BROKEN") +
              "; surfaced:" + rows_detail};
}

Verdict scale_smoke() {
  FixtureSpec spec;
  const auto fx = make_fixture(spec);
  auto tok = std::make_shared<const Tokenizer>(TokenizerSpec{}, fixture_vocabulary(spec));
  std::vector<WeightedExample> ex;
  for (const auto& p : fx.seed) ex.push_back({tok->encode(p.instruction), tok->encode(p.response), 1.0});
  const auto fwd = fit_weighted(NgramModel::create(tok->size()), ex);
  CurationConfig cfg;
  cfg.top_k = kScaleK;
  const long rss0 = peak_rss_kb();
  StreamingCurator curator(fwd, *tok, cfg);
  constexpr std::size_t batch = 10000;
  for (std::size_t b = 0; b < kScaleCandidates / batch; ++b) {
    auto cands = make_discrimination_candidates(spec, batch / 2, batch / 2, 1000 + b);
    for (auto& c : cands) c.id = "b" + std::to_string(b) + "-" + c.id;
    curator.add_batch(cands);
  }
  const auto r = curator.finish(fx.seed, {});
  const long growth = peak_rss_kb() - rss0;
  std::size_t aligned = 0;
  for (const auto& p : r.manifest.pairs) aligned += p.meta.value("aligned", false);
  const std::size_t selected = r.manifest.pairs.size() - fx.seed.size();
  const bool ok = r.scored == kScaleCandidates && selected == kScaleK && aligned == kScaleK &&
                  growth < kScaleRssBudgetKb;
  return {ok, std::to_string(r.scored) + " scored, " + std::to_string(selected) + " selected (" +
                  std::to_string(aligned) + " aligned), peak RSS growth " +
                  std::to_string(growth / 1024) + " MiB (budget " +
                  std::to_string(kScaleRssBudgetKb / 1024) + " MiB)"};
}

}  // namespace

int main() {
  std::cout.setf(std::ios::fixed);
  std::cout.precision(3);
  criterion("arithmetic: alpha, combined loss, nucleus", 1.0, arithmetic);
  criterion("weighted MLE beats simplex grid", 10.0, weighted_mle);
  criterion("sampler soundness", 5.0, sampler);
  criterion("filter discrimination", 60.0, discrimination);
  criterion("end-to-end alignment gain", 120.0, end_to_end);
  criterion("ablation shape (soft; N<=5 peak required)", 120.0, ablation_shape);
  criterion("zero-influence fixed(0)", 10.0, zero_influence);
  criterion("judge prompt golden and tallies", 5.0, judge_golden);
  criterion("scale smoke 500k candidates", 600.0, scale_smoke);
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " failed" : "acceptance: all passed")
            << std::endl;
  return failures ? 1 : 0;
}
