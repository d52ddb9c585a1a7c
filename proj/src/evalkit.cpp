#include "forge/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

RoundTrip roundtrip_metric(const ModelHandle& forward, const ModelHandle& reverse,
                           std::span<const EncodedPair> pairs,
                           const RoundTripOptions& options) {
  if (pairs.empty()) throw InvalidArgument("round-trip metric over an empty pair set");
  const std::size_t n = pairs.size();
  std::vector<GenerateJob> to_instr(n), to_resp(n);
  for (std::size_t i = 0; i < n; ++i) {
    to_instr[i] = {options.reverse_prompt.apply(pairs[i].response),
                   derive_stream(options.global_seed, "roundtrip.forward", pairs[i].id)};
    to_resp[i] = {options.forward_prompt.apply(pairs[i].instruction),
                  derive_stream(options.global_seed, "roundtrip.reverse", pairs[i].id)};
  }
  const auto instr_hat = generate_batch(reverse, to_instr, options.decode, options.exec);
  const auto resp_hat = generate_batch(forward, to_resp, options.decode, options.exec);

  std::vector<SourceTarget> fwd(n), rev(n);
  for (std::size_t i = 0; i < n; ++i) {
    fwd[i] = {options.forward_prompt.apply(instr_hat[i]), pairs[i].response};
    rev[i] = {options.reverse_prompt.apply(resp_hat[i]), pairs[i].instruction};
  }
  RoundTrip rt;
  rt.forward = mean_order_independent(score_means(forward, fwd, options.exec));
  rt.reverse = mean_order_independent(score_means(reverse, rev, options.exec));
  return rt;
}

const std::string& judge_template() {
  static const std::string text =
      "Please act as an expert evaluator of instruction-response alignment.\n"
      "You are given a Response and two candidate instructions: Instruction A and "
      "Instruction B.\n"
      "Your task is to decide which instruction is better aligned with the response.\n"
      "\n"
      "Evaluate based on the following aspects:\n"
      "\n"
      "- Alignment between instruction and response\n"
      "- logical consistency\n"
      "- natural language fluency\n"
      "\n"
      "Response:\n"
      "{response}\n"
      "\n"
      "Instruction A:\n"
      "{instruction_A}\n"
      "\n"
      "Instruction B:\n"
      "{instruction_B}\n"
      "\n"
      "Please output only one of the following:\n"
      "A win \u2014 if Instruction A is clearly better aligned with the response.\n"
      "B win \u2014 if Instruction B is clearly better aligned with the response.\n"
      "Tie \u2014 if both instructions are equally good or equally poor.\n";
  return text;
}

std::string render_judge_prompt(std::string_view response, std::string_view instruction_a,
                                std::string_view instruction_b) {
  if (trim(response).empty()) throw InvalidArgument("judge prompt: empty response");
  if (trim(instruction_a).empty()) throw InvalidArgument("judge prompt: empty instruction_a");
  if (trim(instruction_b).empty()) throw InvalidArgument("judge prompt: empty instruction_b");

  const std::pair<std::string_view, std::string_view> markers[] = {
      {"{response}", response},
      {"{instruction_A}", instruction_a},
      {"{instruction_B}", instruction_b}};
  const std::string& tmpl = judge_template();
  std::string out;
  out.reserve(tmpl.size() + response.size() + instruction_a.size() + instruction_b.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    bool replaced = false;
    if (tmpl[pos] == '{') {
      for (const auto& [marker, value] : markers) {
        if (tmpl.compare(pos, marker.size(), marker) == 0) {
          out += value;
          pos += marker.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += tmpl[pos++];
  }
  return out;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::a_win: return "A win";
    case Verdict::b_win: return "B win";
    case Verdict::tie: return "Tie";
    case Verdict::invalid: break;
  }
  return "invalid";
}

Verdict parse_verdict(std::string_view raw) {
  const auto t = trim(raw);
  if (t == "A win") return Verdict::a_win;
  if (t == "B win") return Verdict::b_win;
  if (t == "Tie") return Verdict::tie;
  return Verdict::invalid;
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::win: return "win";
    case Outcome::tie: return "tie";
    case Outcome::loss: return "loss";
    case Outcome::invalid: break;
  }
  return "invalid";
}

ForwardNllJudge::ForwardNllJudge(ModelHandle forward, const Tokenizer& tokenizer,
                                 PromptWrapper prompt)
    : forward_(std::move(forward)), tokenizer_(tokenizer), prompt_(std::move(prompt)) {}

std::size_t ForwardNllJudge::max_concurrency() const {
  return forward_->capabilities().max_concurrency;
}

std::string ForwardNllJudge::judge(const JudgeRequest& req) {
  const auto target = tokenizer_.encode(req.response);
  const double a =
      score_nll(forward_, prompt_.apply(tokenizer_.encode(req.instruction_a)), target).mean;
  const double b =
      score_nll(forward_, prompt_.apply(tokenizer_.encode(req.instruction_b)), target).mean;
  if (std::abs(a - b) <= 1e-12) return "Tie";
  return a < b ? "A win" : "B win";
}

bool main_shown_as_a(std::uint64_t global_seed, std::string_view case_id) {
  return (derive_stream(global_seed, "judge.order", case_id) & 1u) == 0;
}

Outcome depermute(Verdict v, bool main_is_a) {
  switch (v) {
    case Verdict::a_win: return main_is_a ? Outcome::win : Outcome::loss;
    case Verdict::b_win: return main_is_a ? Outcome::loss : Outcome::win;
    case Verdict::tie: return Outcome::tie;
    case Verdict::invalid: break;
  }
  return Outcome::invalid;
}

std::vector<JudgeVerdict> judge_pairwise(JudgeClient& judge, std::span<const JudgeCase> cases,
                                         std::uint64_t global_seed,
                                         std::size_t max_concurrency) {
  std::vector<JudgeVerdict> out(cases.size());
  const std::size_t limit = std::max<std::size_t>(
      1, std::min({max_concurrency, judge.max_concurrency(),
                   static_cast<std::size_t>(omp_get_max_threads())}));
  for_each_index(cases.size(), Exec::parallel, static_cast<int>(limit), [&](std::size_t i) {
    const auto& c = cases[i];
    JudgeVerdict v;
    v.case_id = c.id;
    v.main_is_a = main_shown_as_a(global_seed, c.id);
    JudgeRequest req;
    req.case_id = c.id;
    req.response = c.response;
    req.instruction_a = v.main_is_a ? c.main_instruction : c.baseline_instruction;
    req.instruction_b = v.main_is_a ? c.baseline_instruction : c.main_instruction;
    req.seed = derive_stream(global_seed, "judge.call", c.id);
    try {
      req.prompt = render_judge_prompt(req.response, req.instruction_a, req.instruction_b);
      v.raw = judge.judge(req);
      v.verdict = parse_verdict(v.raw);
    } catch (const Error& e) {
      v.raw = std::string("error: ") + e.what();
      v.verdict = Verdict::invalid;
    }
    v.outcome = depermute(v.verdict, v.main_is_a);
    out[i] = std::move(v);
  });
  return out;
}

namespace {

double percent(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

// Rounds to the published 0.1 precision.
double tenth(double x) { return std::round(x * 10.0) / 10.0; }

}  // namespace

double Tally::win_rate() const { return percent(win, valid()); }
double Tally::tie_rate() const { return percent(tie, valid()); }
double Tally::loss_rate() const { return percent(loss, valid()); }
double Tally::delta() const { return win_rate() - loss_rate(); }

Tally tally(std::span<const JudgeVerdict> verdicts) {
  Tally t;
  for (const auto& v : verdicts) {
    switch (v.outcome) {
      case Outcome::win: ++t.win; break;
      case Outcome::tie: ++t.tie; break;
      case Outcome::loss: ++t.loss; break;
      case Outcome::invalid: ++t.invalid; break;
    }
  }
  return t;
}

RowCheck check_published_row(const PublishedRow& row) {
  RowCheck c;
  c.row = row;
  c.computed_delta = tenth(row.win - row.loss);
  c.rate_sum = tenth(row.win + row.tie + row.loss);
  c.delta_matches = std::abs(c.computed_delta - row.printed_delta) < 0.05;
  c.sums_to_100 = std::abs(c.rate_sum - 100.0) < 0.05;
  return c;
}

std::vector<PublishedRow> published_alignment_rows() {
  return {{"Humpback", 69.3, 18.6, 12.1, 56.2},
          {"Longform", 81.6, 8.6, 8.8, 72.8},
          {"Dog Instruct", 61.7, 15.1, 23.2, 38.5},
          {"Better Alignment", 64.7, 12.4, 22.9, 41.8}};
}

namespace {

ModelHandle fresh_model(const SweepTask& task) {
  return NgramModel::create(task.tokenizer->size(), task.model);
}

RoundTripOptions roundtrip_options(const AlignmentConfig& cfg) {
  RoundTripOptions o;
  o.decode = cfg.decode;
  o.global_seed = cfg.global_seed;
  o.forward_prompt = cfg.forward_prompt;
  o.reverse_prompt = cfg.reverse_prompt;
  o.exec = cfg.exec;
  return o;
}

}  // namespace

std::vector<IterationRow> sweep_iterations(const SweepTask& task,
                                           std::span<const std::size_t> ns) {
  if (ns.empty()) return {};
  AlignmentConfig cfg = task.align;
  cfg.iterations = *std::max_element(ns.begin(), ns.end());
  const auto rt_opts = roundtrip_options(cfg);

  std::vector<std::optional<RoundTrip>> at(cfg.iterations + 1);
  std::vector<bool> wanted(cfg.iterations + 1, false);
  for (auto n : ns) wanted[n] = true;
  run_alignment(task.seed, fresh_model(task), fresh_model(task), cfg,
                [&](const AlignmentState& s) {
                  if (wanted[s.k])
                    at[s.k] = roundtrip_metric(s.forward, s.reverse, task.heldout, rt_opts);
                });
  std::vector<IterationRow> rows;
  for (auto n : ns) rows.push_back({n, *at[n], at[n]->mean()});
  return rows;
}

std::vector<AlphaRow> sweep_alpha(const SweepTask& task, std::span<const AlphaMode> modes) {
  std::vector<AlphaRow> rows;
  for (const auto& mode : modes) {
    AlignmentConfig cfg = task.align;
    cfg.alpha_mode = mode;
    const auto state = run_alignment(task.seed, fresh_model(task), fresh_model(task), cfg);
    AlphaRow row;
    row.mode = mode.to_string();
    row.roundtrip = roundtrip_metric(state.forward, state.reverse, task.heldout,
                                     roundtrip_options(cfg));
    row.metric = row.roundtrip.mean();
    for (const auto& r : state.history)
      if (r.alpha) row.alphas.push_back(*r.alpha);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AlphaMode> default_alpha_modes() {
  return {AlphaMode::fixed(0.3), AlphaMode::fixed(0.5), AlphaMode::fixed(0.7),
          AlphaMode::fixed(0.8), AlphaMode::fixed(1.0), AlphaMode::dynamic()};
}

std::vector<std::size_t> default_iteration_counts() { return {1, 2, 3, 4, 5, 10, 20}; }

ShapeCheck check_iteration_shape(std::span<const IterationRow> rows) {
  ShapeCheck c;
  if (rows.empty()) return c;
  const IterationRow* best = &rows.front();
  const IterationRow* last = &rows.front();
  for (const auto& r : rows) {
    if (r.metric < best->metric || (r.metric == best->metric && r.n < best->n)) best = &r;
    if (r.n > last->n) last = &r;
  }
  c.best_n = best->n;
  c.best_metric = best->metric;
  c.last_n = last->n;
  c.last_metric = last->metric;
  c.peak_within_5 = best->n <= 5;
  c.last_worse = last->metric > best->metric;
  return c;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

std::string iteration_csv(std::span<const IterationRow> rows) {
  std::ostringstream os;
  os << "n,forward_nll,reverse_nll,metric\n";
  for (const auto& r : rows)
    os << r.n << ',' << fmt(r.roundtrip.forward) << ',' << fmt(r.roundtrip.reverse) << ','
       << fmt(r.metric) << '\n';
  return os.str();
}

std::string alpha_csv(std::span<const AlphaRow> rows) {
  std::ostringstream os;
  os << "mode,forward_nll,reverse_nll,metric,alpha_min,alpha_max\n";
  for (const auto& r : rows) {
    const auto [lo, hi] = r.alphas.empty()
                              ? std::pair<double, double>{0.0, 0.0}
                              : std::pair<double, double>{
                                    *std::min_element(r.alphas.begin(), r.alphas.end()),
                                    *std::max_element(r.alphas.begin(), r.alphas.end())};
    os << '"' << r.mode << "\"," << fmt(r.roundtrip.forward) << ','
       << fmt(r.roundtrip.reverse) << ',' << fmt(r.metric) << ',' << fmt(lo) << ','
       << fmt(hi) << '\n';
  }
  return os.str();
}

std::string sweep_summary(std::span<const IterationRow> iterations,
                          std::span<const AlphaRow> alphas) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  if (!iterations.empty()) {
    os << "iteration sweep (held-out round-trip NLL, lower is better)\n";
    for (const auto& r : iterations) os << "  N=" << r.n << "  " << r.metric << '\n';
    const auto shape = check_iteration_shape(iterations);
    os << "  best N=" << shape.best_n << "; N=" << shape.last_n
       << (shape.last_worse ? " is worse" : " is not worse") << " than best";
    if (!shape.ok()) os << "  [FLAG: no peak-then-degrade shape]";
    os << '\n';
  }
  if (!alphas.empty()) {
    os << "alpha sweep\n";
    for (const auto& r : alphas) os << "  " << r.mode << "  " << r.metric << '\n';
  }
  return os.str();
}

}  // namespace forge
