#include "forge/align.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "forge/corpus.hpp"
#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge {

namespace {

// Which model plays which role in a half-iteration.
struct Direction {
  StepKind kind;
  // Generates synthetic sources from seed targets.
  const ModelHandle& generator;
  // Model being refit.
  const ModelHandle& learner;
  const PromptWrapper& generator_prompt;
  const PromptWrapper& learner_prompt;
  // Seed source/target for the learner.
  const TokenSeq& (*source)(const EncodedPair&);
  const TokenSeq& (*target)(const EncodedPair&);
};

const TokenSeq& instruction_of(const EncodedPair& p) { return p.instruction; }
const TokenSeq& response_of(const EncodedPair& p) { return p.response; }

double mean_loss(const ModelHandle& model, std::span<const SourceTarget> items, Exec exec) {
  return mean_order_independent(score_means(model, items, exec));
}

AlignmentState half_step(const AlignmentState& state, std::span<const EncodedPair> seed,
                         const AlignmentConfig& cfg, const Direction& dir) {
  if (seed.empty()) throw InvalidArgument("alignment step over an empty seed set");
  const std::string purpose =
      "align." + to_string(dir.kind) + "." + std::to_string(state.k);

  // Synthetic learner sources: generated from the seed targets.
  std::vector<GenerateJob> jobs(seed.size());
  for (std::size_t i = 0; i < seed.size(); ++i) {
    jobs[i].source = dir.generator_prompt.apply(dir.target(seed[i]));
    jobs[i].rng_stream = derive_stream(cfg.global_seed, purpose, seed[i].id);
  }
  auto generated = generate_batch(dir.generator, jobs, cfg.decode, cfg.exec);

  std::vector<SourceTarget> synthetic, seed_items;
  std::vector<bool> failed(seed.size(), false);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < seed.size(); ++i) {
    const auto& tgt = dir.target(seed[i]);
    seed_items.push_back({dir.learner_prompt.apply(dir.source(seed[i])), tgt});
    if (generated[i].empty()) {
      failed[i] = true;
      ++failures;
      continue;
    }
    synthetic.push_back({dir.learner_prompt.apply(generated[i]), tgt});
  }

  const double l_seed = mean_loss(dir.learner, seed_items, cfg.exec);
  const double l_syn = synthetic.empty() ? 0.0 : mean_loss(dir.learner, synthetic, cfg.exec);
  const double alpha = cfg.alpha_mode.kind == AlphaMode::Kind::dynamic
                           ? compute_alpha(l_syn, l_seed, cfg.alpha_clamp)
                           : cfg.alpha_mode.value;

  std::vector<WeightedExample> examples;
  examples.reserve(2 * seed.size());
  std::size_t s = 0;
  for (std::size_t i = 0; i < seed.size(); ++i) {
    if (failed[i]) {
      // Keeps the pairing aligned without contributing to the fit.
      examples.push_back({seed_items[i].source, seed_items[i].target, 0.0});
    } else {
      examples.push_back({synthetic[s].source, synthetic[s].target, alpha});
      ++s;
    }
  }
  for (const auto& item : seed_items)
    examples.push_back({item.source, item.target, 1.0 - alpha});

  FitOptions fit = cfg.fit;
  fit.epochs = cfg.epochs_per_update;
  ModelHandle updated = fit_weighted(dir.learner, examples, fit);

  AlignmentState next = state;
  if (dir.kind == StepKind::forward) {
    next.forward = std::move(updated);
  } else {
    next.reverse = std::move(updated);
    next.k = state.k + 1;
  }
  StepRecord rec;
  rec.kind = dir.kind;
  rec.k = state.k + 1;
  rec.alpha = alpha;
  rec.loss_synthetic = l_syn;
  rec.loss_seed = l_seed;
  rec.combined_loss = combined_loss(alpha, l_syn, l_seed);
  rec.generation_failures = failures;
  next.history.push_back(rec);
  return next;
}

std::optional<double> optional_number(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

std::string AlphaMode::to_string() const {
  if (kind == Kind::dynamic) return "dynamic";
  std::ostringstream os;
  os << "fixed(" << value << ")";
  return os.str();
}

AlphaMode AlphaMode::parse(const std::string& s) {
  if (s == "dynamic") return dynamic();
  std::string body;
  if (s.rfind("fixed(", 0) == 0 && s.back() == ')')
    body = s.substr(6, s.size() - 7);
  else if (s.rfind("fixed:", 0) == 0)
    body = s.substr(6);
  else
    throw InvalidArgument("alpha mode must be 'dynamic' or 'fixed(<value>)', got '" + s + "'");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(body, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != body.size() || !(v >= 0.0 && v <= 1.0))
    throw InvalidArgument("fixed alpha must be a number in [0, 1], got '" + body + "'");
  return fixed(v);
}

void AlignmentConfig::validate() const {
  if (epochs_per_update == 0) throw InvalidArgument("epochs_per_update must be positive");
  if (!(alpha_clamp > 0.0 && alpha_clamp < 0.5))
    throw InvalidArgument("alpha_clamp must lie in (0, 0.5)");
  if (alpha_mode.kind == AlphaMode::Kind::fixed &&
      !(alpha_mode.value >= 0.0 && alpha_mode.value <= 1.0))
    throw InvalidArgument("fixed alpha must lie in [0, 1]");
  decode.validate();
}

std::string to_string(StepKind kind) {
  return kind == StepKind::forward ? "forward" : "reverse";
}

double compute_alpha(double loss_synthetic, double loss_seed, double eps) {
  if (!std::isfinite(loss_synthetic) || !std::isfinite(loss_seed) ||
      loss_synthetic < 0.0 || loss_seed < 0.0)
    throw InvalidArgument("losses must be finite and non-negative");
  if (!(eps > 0.0 && eps < 0.5)) throw InvalidArgument("alpha clamp must lie in (0, 0.5)");
  const double total = loss_synthetic + loss_seed;
  const double alpha = total == 0.0 ? 0.5 : loss_synthetic / total;
  return std::clamp(alpha, eps, 1.0 - eps);
}

double combined_loss(double alpha, double loss_synthetic, double loss_seed) {
  return alpha * loss_synthetic + (1.0 - alpha) * loss_seed;
}

std::vector<SourceTarget> forward_examples(std::span<const EncodedPair> seed,
                                           const PromptWrapper& prompt) {
  std::vector<SourceTarget> out;
  out.reserve(seed.size());
  for (const auto& p : seed) out.push_back({prompt.apply(p.instruction), p.response});
  return out;
}

std::vector<SourceTarget> reverse_examples(std::span<const EncodedPair> seed,
                                           const PromptWrapper& prompt) {
  std::vector<SourceTarget> out;
  out.reserve(seed.size());
  for (const auto& p : seed) out.push_back({prompt.apply(p.response), p.instruction});
  return out;
}

AlignmentState warm_start(AlignmentState state, std::span<const EncodedPair> seed,
                          const AlignmentConfig& cfg) {
  if (!cfg.warm_start) return state;
  if (seed.empty()) throw InvalidArgument("warm start needs a non-empty seed set");
  FitOptions fit = cfg.fit;
  fit.epochs = 1;

  auto fit_direction = [&](const ModelHandle& model, std::vector<SourceTarget> items,
                           StepKind kind) {
    std::vector<WeightedExample> examples;
    examples.reserve(items.size());
    for (auto& it : items) examples.push_back({it.source, it.target, 1.0});
    auto fitted = fit_weighted(model, examples, fit);
    StepRecord rec;
    rec.kind = kind;
    rec.k = 0;
    rec.warm_start = true;
    rec.loss_seed = mean_loss(fitted, items, cfg.exec);
    state.history.push_back(rec);
    return fitted;
  };
  auto fwd = fit_direction(state.forward, forward_examples(seed, cfg.forward_prompt),
                           StepKind::forward);
  auto rev = fit_direction(state.reverse, reverse_examples(seed, cfg.reverse_prompt),
                           StepKind::reverse);
  state.forward = std::move(fwd);
  state.reverse = std::move(rev);
  return state;
}

AlignmentState forward_step(const AlignmentState& state, std::span<const EncodedPair> seed,
                            const AlignmentConfig& cfg) {
  // Î from every seed R via the reverse model; refit forward on (Î, R) and (I, R).
  return half_step(state, seed, cfg,
                   {StepKind::forward, state.reverse, state.forward, cfg.reverse_prompt,
                    cfg.forward_prompt, &instruction_of, &response_of});
}

AlignmentState reverse_step(const AlignmentState& state, std::span<const EncodedPair> seed,
                            const AlignmentConfig& cfg) {
  // R̂ from every seed I via the (already updated) forward model.
  return half_step(state, seed, cfg,
                   {StepKind::reverse, state.forward, state.reverse, cfg.forward_prompt,
                    cfg.reverse_prompt, &response_of, &instruction_of});
}

AlignmentState run_alignment(std::span<const EncodedPair> seed, ModelHandle base_forward,
                             ModelHandle base_reverse, const AlignmentConfig& cfg,
                             const IterationObserver& observer) {
  cfg.validate();
  if (seed.empty()) throw InvalidArgument("alignment needs a non-empty seed set");
  AlignmentState state;
  state.forward = std::move(base_forward);
  state.reverse = std::move(base_reverse);
  state = warm_start(std::move(state), seed, cfg);
  if (observer) observer(state);
  for (std::size_t n = 0; n < cfg.iterations; ++n) {
    auto half = forward_step(state, seed, cfg);
    state = reverse_step(half, seed, cfg);
    if (observer) observer(state);
  }
  return state;
}

nlohmann::json to_json(const StepRecord& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"kind", to_string(r.kind)},
          {"k", r.k},
          {"warm_start", r.warm_start},
          {"alpha", opt(r.alpha)},
          {"loss_synthetic", opt(r.loss_synthetic)},
          {"loss_seed", r.loss_seed},
          {"combined_loss", opt(r.combined_loss)},
          {"generation_failures", r.generation_failures}};
}

StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord r;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "forward")
    r.kind = StepKind::forward;
  else if (kind == "reverse")
    r.kind = StepKind::reverse;
  else
    throw DataError("unknown step kind '" + kind + "'");
  r.k = j.at("k").get<std::size_t>();
  r.warm_start = j.value("warm_start", false);
  r.alpha = optional_number(j, "alpha");
  r.loss_synthetic = optional_number(j, "loss_synthetic");
  r.loss_seed = j.at("loss_seed").get<double>();
  r.combined_loss = optional_number(j, "combined_loss");
  r.generation_failures = j.value("generation_failures", std::size_t{0});
  return r;
}

void write_history(const std::filesystem::path& path, std::span<const StepRecord> history,
                   const std::string& config_digest) {
  write_file_atomic(path, [&](std::ostream& out) {
    out << nlohmann::json{{"record", "header"}, {"config_digest", config_digest},
                          {"steps", history.size()}}
               .dump()
        << '\n';
    for (const auto& r : history) out << to_json(r).dump() << '\n';
  });
}

std::vector<StepRecord> read_history(const std::filesystem::path& path,
                                     std::string* config_digest) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read history '" + path.string() + "'");
  std::vector<StepRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.value("record", std::string{}) == "header") {
        if (config_digest) *config_digest = j.at("config_digest").get<std::string>();
        continue;
      }
      out.push_back(step_record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("bad history record: ") + e.what(), line_no);
    }
  }
  return out;
}

}  // namespace forge
