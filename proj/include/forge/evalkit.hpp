#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forge/align.hpp"
#include "forge/ngram_model.hpp"

namespace forge {

// ---- round-trip metric ----------------------------------------------------

struct RoundTrip {
  // Mean NLL of R given the reverse-generated Î.
  double forward = 0.0;
  // Mean NLL of I given the forward-generated R̂.
  double reverse = 0.0;
  double mean() const { return 0.5 * (forward + reverse); }
};

struct RoundTripOptions {
  DecodeParams decode;
  std::uint64_t global_seed = 0;
  PromptWrapper forward_prompt;
  PromptWrapper reverse_prompt;
  Exec exec = Exec::parallel;
};

RoundTrip roundtrip_metric(const ModelHandle& forward, const ModelHandle& reverse,
                           std::span<const EncodedPair> pairs,
                           const RoundTripOptions& options);

// ---- judge harness --------------------------------------------------------

// The pairwise evaluation prompt, verbatim.
const std::string& judge_template();

// Single-pass substitution of {response}, {instruction_A}, {instruction_B}:
// text inserted for one marker is never rescanned.
std::string render_judge_prompt(std::string_view response, std::string_view instruction_a,
                                std::string_view instruction_b);

enum class Verdict { a_win, b_win, tie, invalid };
std::string to_string(Verdict v);

// Exact vocabulary only ("A win", "B win", "Tie") after trimming surrounding
// whitespace; anything else is invalid.
Verdict parse_verdict(std::string_view raw);

struct JudgeRequest {
  std::string case_id;
  std::string prompt;
  std::string response;
  std::string instruction_a;
  std::string instruction_b;
  std::uint64_t seed = 0;
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  // Raw judge text.
  virtual std::string judge(const JudgeRequest& request) = 0;
  virtual std::size_t max_concurrency() const { return 1; }
};

// Always returns the same text.
class ConstantJudge final : public JudgeClient {
 public:
  explicit ConstantJudge(std::string answer) : answer_(std::move(answer)) {}
  std::string judge(const JudgeRequest&) override { return answer_; }
  std::size_t max_concurrency() const override { return 64; }

 private:
  std::string answer_;
};

// Deterministic stand-in for an LLM judge: prefers the instruction under
// which the forward model assigns the response the lower mean NLL.
class ForwardNllJudge final : public JudgeClient {
 public:
  ForwardNllJudge(ModelHandle forward, const Tokenizer& tokenizer, PromptWrapper prompt = {});
  std::string judge(const JudgeRequest& request) override;
  std::size_t max_concurrency() const override;

 private:
  ModelHandle forward_;
  const Tokenizer& tokenizer_;
  PromptWrapper prompt_;
};

struct JudgeCase {
  std::string id;
  std::string response;
  std::string main_instruction;
  std::string baseline_instruction;
};

enum class Outcome { win, tie, loss, invalid };
std::string to_string(Outcome o);

struct JudgeVerdict {
  std::string case_id;
  Verdict verdict = Verdict::invalid;
  std::string raw;
  // Recorded permutation: true when MAIN's instruction was shown as A.
  bool main_is_a = true;
  // Verdict attributed back to (MAIN, baseline).
  Outcome outcome = Outcome::invalid;
};

// The position of MAIN for a case, drawn from (global seed, case id).
bool main_shown_as_a(std::uint64_t global_seed, std::string_view case_id);
Outcome depermute(Verdict v, bool main_is_a);

std::vector<JudgeVerdict> judge_pairwise(JudgeClient& judge, std::span<const JudgeCase> cases,
                                         std::uint64_t global_seed,
                                         std::size_t max_concurrency = 8);

struct Tally {
  std::size_t win = 0, tie = 0, loss = 0, invalid = 0;

  std::size_t total() const { return win + tie + loss + invalid; }
  std::size_t valid() const { return win + tie + loss; }
  // Rates in percent of valid verdicts.
  double win_rate() const;
  double tie_rate() const;
  double loss_rate() const;
  // Win - Loss in percentage points.
  double delta() const;
};

Tally tally(std::span<const JudgeVerdict> verdicts);

// A published Win/Tie/Loss row with its printed margin.
struct PublishedRow {
  std::string label;
  double win = 0.0, tie = 0.0, loss = 0.0;
  double printed_delta = 0.0;
};

struct RowCheck {
  PublishedRow row;
  double computed_delta = 0.0;
  double rate_sum = 0.0;
  bool delta_matches = true;
  bool sums_to_100 = true;
};

// Recomputes Win - Loss and the rate sum at the table's 0.1 precision; any
// disagreement is reported, never reconciled.
RowCheck check_published_row(const PublishedRow& row);

// The pairwise alignment-quality table (Qwen2.5-14B, 1000 cases per row).
std::vector<PublishedRow> published_alignment_rows();

// ---- sweeps ---------------------------------------------------------------

// Everything a sweep needs to rerun alignment from scratch.
struct SweepTask {
  std::shared_ptr<const Tokenizer> tokenizer;
  std::vector<EncodedPair> seed;
  std::vector<EncodedPair> heldout;
  NgramConfig model;
  AlignmentConfig align;
};

struct IterationRow {
  std::size_t n = 0;
  RoundTrip roundtrip;
  double metric = 0.0;
};

struct AlphaRow {
  std::string mode;
  RoundTrip roundtrip;
  double metric = 0.0;
  std::vector<double> alphas;
};

// One alignment run to max(N) with the metric snapshotted at each requested
// N; alignment is deterministic, so this equals separate runs per N.
std::vector<IterationRow> sweep_iterations(const SweepTask& task,
                                           std::span<const std::size_t> ns);

std::vector<AlphaRow> sweep_alpha(const SweepTask& task, std::span<const AlphaMode> modes);

std::vector<AlphaMode> default_alpha_modes();
std::vector<std::size_t> default_iteration_counts();

struct ShapeCheck {
  std::size_t best_n = 0;
  double best_metric = 0.0;
  std::optional<double> last_metric;
  std::size_t last_n = 0;
  bool peak_within_5 = false;
  bool last_worse = false;
  bool ok() const { return peak_within_5 && last_worse; }
};
ShapeCheck check_iteration_shape(std::span<const IterationRow> rows);

std::string iteration_csv(std::span<const IterationRow> rows);
std::string alpha_csv(std::span<const AlphaRow> rows);
std::string sweep_summary(std::span<const IterationRow> iterations,
                          std::span<const AlphaRow> alphas);

}  // namespace forge
