#include "forge/curate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

std::string to_string(ScoreMode mode) {
  return mode == ScoreMode::teacher_forced_nll ? "teacher_forced_nll"
                                               : "diagnostic_with_regeneration";
}

std::string to_string(Normalization norm) {
  return norm == Normalization::per_token_mean ? "per_token_mean" : "sequence_sum";
}

ScoreMode score_mode_from_string(const std::string& s) {
  if (s == "teacher_forced_nll") return ScoreMode::teacher_forced_nll;
  if (s == "diagnostic_with_regeneration") return ScoreMode::diagnostic_with_regeneration;
  throw InvalidArgument("unknown score mode '" + s + "'");
}

Normalization normalization_from_string(const std::string& s) {
  if (s == "per_token_mean") return Normalization::per_token_mean;
  if (s == "sequence_sum") return Normalization::sequence_sum;
  throw InvalidArgument("unknown normalization '" + s + "'");
}

void CurationConfig::validate() const {
  if (top_k == 0) throw InvalidArgument("top_k must be at least 1");
  if (score_mode == ScoreMode::diagnostic_with_regeneration) decode.validate();
}

CandidatePair mutual_score(const ModelHandle& forward, const Tokenizer& tokenizer,
                           const CandidatePair& candidate, const CurationConfig& cfg) {
  CandidatePair out = candidate;
  const TokenSeq source = cfg.forward_prompt.apply(tokenizer.encode(candidate.pseudo_instruction));
  const TokenSeq target = tokenizer.encode(candidate.response);
  const NllScore nll = score_nll(forward, source, target);
  const double score =
      cfg.normalization == Normalization::per_token_mean ? nll.mean : nll.sum;
  if (!std::isfinite(score)) throw BackendError("non-finite mutual score", false);
  out.score = score;
  if (cfg.score_mode == ScoreMode::diagnostic_with_regeneration) {
    DecodeParams p = cfg.decode;
    p.rng_stream = derive_stream(cfg.global_seed, "curate.regenerate", candidate.id);
    out.meta["regenerated_response"] = tokenizer.decode(generate(forward, source, p));
  }
  return out;
}

TopK::TopK(std::size_t k) : k_(k) {
  if (k_ == 0) throw InvalidArgument("top_k must be at least 1");
}

bool TopK::worse(const Entry& a, const Entry& b) {
  return a.score < b.score || (a.score == b.score && a.index < b.index);
}

bool TopK::offer(double score, std::size_t index, CandidatePair body) {
  if (heap_.size() < k_) {
    heap_.push_back({score, index, std::move(body)});
    std::push_heap(heap_.begin(), heap_.end(), worse);
    return true;
  }
  // heap_.front() is the worst kept entry.
  const Entry& top = heap_.front();
  if (!(score < top.score || (score == top.score && index < top.index))) return false;
  std::pop_heap(heap_.begin(), heap_.end(), worse);
  heap_.back() = {score, index, std::move(body)};
  std::push_heap(heap_.begin(), heap_.end(), worse);
  return true;
}

std::vector<CandidatePair> TopK::take_sorted() {
  std::sort_heap(heap_.begin(), heap_.end(), worse);
  std::vector<CandidatePair> out;
  out.reserve(heap_.size());
  for (auto& e : heap_) out.push_back(std::move(e.body));
  heap_.clear();
  return out;
}

std::vector<CandidatePair> rank_and_select(std::span<const CandidatePair> candidates,
                                           std::size_t k) {
  if (k == 0) throw InvalidArgument("top_k must be at least 1");
  if (candidates.empty()) return {};
  TopK top(std::min(k, candidates.size()));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!candidates[i].score)
      throw InvalidArgument("candidate '" + candidates[i].id + "' is unscored");
    top.offer(*candidates[i].score, i, candidates[i]);
  }
  return top.take_sorted();
}

ScoreSummary summarize_scores(std::vector<double> scores) {
  ScoreSummary s;
  s.count = scores.size();
  if (scores.empty()) return s;
  std::sort(scores.begin(), scores.end());
  s.min = scores.front();
  s.max = scores.back();
  const std::size_t mid = scores.size() / 2;
  s.median = scores.size() % 2 ? scores[mid] : 0.5 * (scores[mid - 1] + scores[mid]);
  return s;
}

nlohmann::json to_json(const ScoreSummary& s) {
  if (s.count == 0) return {{"count", 0}, {"min", nullptr}, {"median", nullptr}, {"max", nullptr}};
  return {{"count", s.count}, {"min", s.min}, {"median", s.median}, {"max", s.max}};
}

StreamingCurator::StreamingCurator(ModelHandle forward, const Tokenizer& tokenizer,
                                   CurationConfig cfg)
    : forward_(std::move(forward)), tokenizer_(tokenizer), cfg_(std::move(cfg)),
      top_((cfg_.validate(), cfg_.top_k)) {}

void StreamingCurator::add_batch(std::span<const CandidatePair> batch) {
  std::vector<std::optional<CandidatePair>> scored(batch.size());
  for_each_index(batch.size(), cfg_.exec, fanout(forward_, batch.size()), [&](std::size_t i) {
    try {
      scored[i] = mutual_score(forward_, tokenizer_, batch[i], cfg_);
    } catch (const Error&) {
      // Counted as failed; excluded from ranking.
    }
  });
  for (std::size_t i = 0; i < batch.size(); ++i, ++seen_) {
    if (!scored[i]) {
      ++failed_;
      continue;
    }
    const double s = *scored[i]->score;
    scores_.push_back(s);
    top_.offer(s, seen_, std::move(*scored[i]));
  }
}

CurationResult StreamingCurator::finish(std::span<const InstructionResponsePair> seed,
                                        const ManifestInfo& info) {
  CurationResult r;
  r.scored = scores_.size();
  r.failed = failed_;
  r.summary = summarize_scores(std::move(scores_));
  scores_.clear();
  if (failed_ > 0)
    r.warnings.push_back(std::to_string(failed_) + " candidate(s) failed scoring");
  if (r.scored == 0) r.warnings.push_back("no scored candidates; manifest holds seed pairs only");
  const auto selected = top_.take_sorted();
  ManifestInfo mi = info;
  if (!mi.meta.is_object()) mi.meta = nlohmann::json::object();
  mi.meta["score_summary"] = to_json(r.summary);
  mi.meta["scoring_failures"] = r.failed;
  mi.meta["score_mode"] = to_string(cfg_.score_mode);
  mi.meta["normalization"] = to_string(cfg_.normalization);
  r.manifest = assemble_final(selected, seed, mi);
  return r;
}

CurationResult curate_dataset(const ModelHandle& forward, const Tokenizer& tokenizer,
                              std::span<const CandidatePair> candidates,
                              std::span<const InstructionResponsePair> seed,
                              const CurationConfig& cfg, const ManifestInfo& info) {
  StreamingCurator curator(forward, tokenizer, cfg);
  curator.add_batch(candidates);
  return curator.finish(seed, info);
}

}  // namespace forge
