#include "forge/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "forge/augment.hpp"
#include "forge/corpus.hpp"
#include "forge/digest.hpp"
#include "forge/error.hpp"
#include "forge/evalkit.hpp"

namespace forge {

namespace fs = std::filesystem;
using nlohmann::json;

json default_config() {
  const json backend = {{"kind", "reference"}, {"url", nullptr},       {"timeout_ms", 120000},
                        {"max_attempts", 3},   {"backoff_ms", 1000},   {"max_concurrency", nullptr}};
  json modes = json::array();
  for (const auto& m : default_alpha_modes()) modes.push_back(m.to_string());
  return {
      {"paths", {{"seed", nullptr}, {"unlabeled", nullptr}, {"heldout", nullptr},
                 {"output_dir", "out"}}},
      {"seed", 0},
      {"tokenizer", {{"mode", "whitespace"}, {"max_sequence_length", 1024}}},
      {"model", {{"order", 2}, {"smoothing", 0.5}}},
      {"backends", {{"forward", backend}, {"reverse", backend}}},
      {"alignment", {{"iterations", 3}, {"epochs_per_update", 1}, {"alpha_mode", "dynamic"},
                     {"alpha_clamp", 0.01}, {"warm_start", true}, {"learning_rate", 1e-5},
                     {"lr_schedule", "linear"}, {"batch_size", 32}}},
      {"decode", {{"temperature", 0.7}, {"top_p", 0.9}, {"max_new_tokens", 64}}},
      {"curation", {{"top_k", 16800}, {"score_mode", "teacher_forced_nll"},
                    {"normalization", "per_token_mean"}}},
      {"prompts", {{"reverse", "{response}"}, {"forward", "{instruction}"}}},
      {"ingest", {{"batch_size", 4096}}},
      {"report", {{"iterations", default_iteration_counts()}, {"alpha_modes", modes}}},
      {"trainer_hints", {{"learning_rate", 2e-5}, {"weight_decay", 0.1}, {"warmup_steps", 100}}},
  };
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "override must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path segment");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

std::string ConfigDiagnostics::render() const {
  std::ostringstream os;
  for (const auto& e : errors) os << "config error: " << e.what() << '\n';
  return os.str();
}

namespace {

void merge(json& base, const json& over, const std::string& prefix, ConfigDiagnostics& diag) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      diag.errors.emplace_back(path, "unknown field");
      continue;
    }
    json& slot = base[it.key()];
    if (slot.is_object()) {
      if (!it->is_object()) {
        diag.errors.emplace_back(path, "expected an object");
        continue;
      }
      merge(slot, *it, path, diag);
    } else {
      slot = *it;
    }
  }
}

// Typed access to the merged document with per-field diagnostics.
class Fields {
 public:
  Fields(const json& doc, ConfigDiagnostics& diag) : doc_(doc), diag_(diag) {}

  const json& at(const std::string& path) const {
    const json* node = &doc_;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      node = &node->at(path.substr(start, dot == std::string::npos ? dot : dot - start));
      if (dot == std::string::npos) return *node;
      start = dot + 1;
    }
  }

  void fail(const std::string& path, const std::string& what) {
    diag_.errors.emplace_back(path, what);
  }

  std::uint64_t unsigned_int(const std::string& path, std::uint64_t min = 0) {
    const auto& v = at(path);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 &&
                                   !v.is_number_unsigned())) {
      fail(path, "expected a non-negative integer");
      return min;
    }
    const auto x = v.get<std::uint64_t>();
    if (x < min) fail(path, "must be at least " + std::to_string(min));
    return x;
  }

  double real(const std::string& path) {
    const auto& v = at(path);
    if (!v.is_number()) {
      fail(path, "expected a number");
      return 0.0;
    }
    return v.get<double>();
  }

  bool boolean(const std::string& path) {
    const auto& v = at(path);
    if (!v.is_boolean()) {
      fail(path, "expected true or false");
      return false;
    }
    return v.get<bool>();
  }

  std::string text(const std::string& path) {
    const auto& v = at(path);
    if (!v.is_string()) {
      fail(path, "expected a string");
      return {};
    }
    return v.get<std::string>();
  }

 private:
  const json& doc_;
  ConfigDiagnostics& diag_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void read_backend(Fields& f, const std::string& role, BackendSpec& out) {
  const std::string base = "backends." + role;
  const auto kind = f.text(base + ".kind");
  if (kind == "reference") {
    out.kind = BackendSpec::Kind::reference;
    return;
  }
  if (kind != "remote") {
    f.fail(base + ".kind", "must be \"reference\" or \"remote\"");
    return;
  }
  out.kind = BackendSpec::Kind::remote;
  if (!f.at(base + ".url").is_string() || f.at(base + ".url").get<std::string>().empty())
    f.fail(base + ".url", "remote backend needs a url");
  else
    out.remote.base_url = f.text(base + ".url");
  out.remote.timeout = std::chrono::milliseconds(f.unsigned_int(base + ".timeout_ms", 1));
  out.remote.max_attempts = f.unsigned_int(base + ".max_attempts", 1);
  out.remote.backoff_base = std::chrono::milliseconds(f.unsigned_int(base + ".backoff_ms"));
  if (!f.at(base + ".max_concurrency").is_null())
    out.remote.max_concurrency = f.unsigned_int(base + ".max_concurrency", 1);
  out.remote.auth_token = RemoteConfig::token_from_environment();
}

void check_template(Fields& f, const std::string& path, const std::string& tmpl,
                    const std::string& placeholder) {
  const auto pos = tmpl.find(placeholder);
  if (pos == std::string::npos)
    f.fail(path, "template must contain " + placeholder);
  else if (tmpl.find(placeholder, pos + 1) != std::string::npos)
    f.fail(path, "template must contain " + placeholder + " exactly once");
}

}  // namespace

std::optional<PipelineConfig> build_config(const json& doc, const fs::path& base_dir,
                                           ConfigDiagnostics& diag) {
  if (!doc.is_object()) {
    diag.errors.emplace_back("<root>", "config must be a JSON object");
    return std::nullopt;
  }
  json eff = default_config();
  merge(eff, doc, "", diag);
  Fields f(eff, diag);
  PipelineConfig cfg;

  // Paths.
  auto required_path = [&](const std::string& key, bool must_exist) -> fs::path {
    const auto& v = f.at(key);
    if (!v.is_string() || v.get<std::string>().empty()) {
      f.fail(key, "required path is missing");
      return {};
    }
    auto p = resolve(base_dir, v.get<std::string>());
    if (must_exist && !fs::is_regular_file(p)) f.fail(key, "file not found: " + p.string());
    return p;
  };
  cfg.seed_path = required_path("paths.seed", true);
  cfg.unlabeled_path = required_path("paths.unlabeled", true);
  if (!f.at("paths.heldout").is_null()) cfg.heldout_path = required_path("paths.heldout", true);
  cfg.output_dir = required_path("paths.output_dir", false);

  cfg.global_seed = f.unsigned_int("seed");

  const auto mode = f.text("tokenizer.mode");
  if (mode == "whitespace" || mode == "byte")
    cfg.tokenizer.mode = tokenizer_mode_from_string(mode);
  else
    f.fail("tokenizer.mode", "must be \"whitespace\" or \"byte\"");
  cfg.tokenizer.max_sequence_length = f.unsigned_int("tokenizer.max_sequence_length", 1);

  cfg.model.order = f.unsigned_int("model.order", 1);
  cfg.model.smoothing = f.real("model.smoothing");
  if (!(cfg.model.smoothing > 0.0)) f.fail("model.smoothing", "must be positive");

  read_backend(f, "forward", cfg.forward_backend);
  read_backend(f, "reverse", cfg.reverse_backend);

  cfg.iterations = f.unsigned_int("alignment.iterations");
  cfg.epochs_per_update = f.unsigned_int("alignment.epochs_per_update", 1);
  try {
    cfg.alpha_mode = AlphaMode::parse(f.text("alignment.alpha_mode"));
  } catch (const InvalidArgument& e) {
    f.fail("alignment.alpha_mode", e.what());
  }
  cfg.alpha_clamp = f.real("alignment.alpha_clamp");
  if (!(cfg.alpha_clamp > 0.0 && cfg.alpha_clamp < 0.5))
    f.fail("alignment.alpha_clamp", "must lie in (0, 0.5)");
  cfg.warm_start = f.boolean("alignment.warm_start");
  cfg.fit.learning_rate = f.real("alignment.learning_rate");
  if (!(cfg.fit.learning_rate > 0.0)) f.fail("alignment.learning_rate", "must be positive");
  cfg.fit.lr_schedule = f.text("alignment.lr_schedule");
  cfg.fit.batch_size = f.unsigned_int("alignment.batch_size", 1);

  cfg.decode.temperature = f.real("decode.temperature");
  if (!(cfg.decode.temperature > 0.0)) f.fail("decode.temperature", "must be positive");
  cfg.decode.top_p = f.real("decode.top_p");
  if (!(cfg.decode.top_p > 0.0 && cfg.decode.top_p <= 1.0))
    f.fail("decode.top_p", "must lie in (0, 1]");
  cfg.decode.max_new_tokens = f.unsigned_int("decode.max_new_tokens", 1);

  cfg.top_k = f.unsigned_int("curation.top_k", 1);
  try {
    cfg.score_mode = score_mode_from_string(f.text("curation.score_mode"));
  } catch (const InvalidArgument& e) {
    f.fail("curation.score_mode", e.what());
  }
  try {
    cfg.normalization = normalization_from_string(f.text("curation.normalization"));
  } catch (const InvalidArgument& e) {
    f.fail("curation.normalization", e.what());
  }

  cfg.reverse_template = f.text("prompts.reverse");
  cfg.forward_template = f.text("prompts.forward");
  check_template(f, "prompts.reverse", cfg.reverse_template, "{response}");
  check_template(f, "prompts.forward", cfg.forward_template, "{instruction}");

  cfg.ingest_batch = f.unsigned_int("ingest.batch_size", 1);

  const auto& iters = f.at("report.iterations");
  if (!iters.is_array() || iters.empty()) {
    f.fail("report.iterations", "expected a non-empty list of iteration counts");
  } else {
    for (const auto& n : iters) {
      if (!n.is_number_unsigned() && !(n.is_number_integer() && n.get<long long>() >= 0)) {
        f.fail("report.iterations", "entries must be non-negative integers");
        break;
      }
      cfg.report_iterations.push_back(n.get<std::size_t>());
    }
  }
  const auto& modes = f.at("report.alpha_modes");
  if (!modes.is_array()) {
    f.fail("report.alpha_modes", "expected a list of alpha modes");
  } else {
    for (const auto& m : modes) {
      try {
        cfg.report_alpha_modes.push_back(AlphaMode::parse(m.get<std::string>()));
      } catch (const std::exception& e) {
        f.fail("report.alpha_modes", e.what());
        break;
      }
    }
  }
  for (const char* hint : {"trainer_hints.learning_rate", "trainer_hints.weight_decay"})
    if (f.real(hint) < 0.0) f.fail(hint, "must be non-negative");
  f.unsigned_int("trainer_hints.warmup_steps");

  if (!diag.ok()) return std::nullopt;

  cfg.effective = eff;
  json canonical = eff;
  canonical.erase("paths");
  json inputs = {{"seed", sha256_file(cfg.seed_path)},
                 {"unlabeled", sha256_file(cfg.unlabeled_path)}};
  if (cfg.heldout_path) inputs["heldout"] = sha256_file(*cfg.heldout_path);
  canonical["inputs"] = inputs;
  canonical["engine_version"] = kEngineVersion;
  cfg.digest = json_digest(canonical);
  return cfg;
}

std::optional<PipelineConfig> load_config(const fs::path& path,
                                          const std::vector<std::string>& overrides,
                                          std::optional<std::uint64_t> seed,
                                          std::optional<fs::path> output,
                                          ConfigDiagnostics& diag) {
  std::ifstream in(path);
  if (!in) {
    diag.errors.emplace_back("--config", "cannot read '" + path.string() + "'");
    return std::nullopt;
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    diag.errors.emplace_back("--config", std::string("not valid JSON: ") + e.what());
    return std::nullopt;
  }
  for (const auto& o : overrides) {
    try {
      apply_override(doc, o);
    } catch (const ConfigError& e) {
      diag.errors.push_back(e);
    }
  }
  if (seed) doc["seed"] = *seed;
  if (output) doc["paths"]["output_dir"] = fs::absolute(*output).string();
  if (!diag.ok()) return std::nullopt;
  const auto base = fs::absolute(path).parent_path();
  return build_config(doc, base, diag);
}

// ---- stages ----------------------------------------------------------------

namespace {

struct Context {
  std::shared_ptr<const Tokenizer> tokenizer;
  PromptWrapper forward_prompt;
  PromptWrapper reverse_prompt;
};

std::string template_words(const std::string& tmpl, const std::string& placeholder) {
  return PromptWrapper::render(tmpl, placeholder, " ");
}

std::shared_ptr<const Tokenizer> induce_vocabulary(const PipelineConfig& cfg,
                                                   const SeedDataset& seed) {
  if (cfg.tokenizer.mode == TokenizerMode::byte)
    return std::make_shared<const Tokenizer>(cfg.tokenizer);
  VocabularyBuilder vb(cfg.tokenizer);
  for (const auto& p : seed) {
    vb.add_text(p.instruction);
    vb.add_text(p.response);
  }
  for_each_unlabeled_batch(cfg.unlabeled_path, cfg.ingest_batch,
                           [&](std::span<const UnlabeledResponse> batch) {
                             for (const auto& u : batch) vb.add_text(u.response);
                           });
  if (cfg.heldout_path) {
    for (const auto& p : load_seed(*cfg.heldout_path)) {
      vb.add_text(p.instruction);
      vb.add_text(p.response);
    }
  }
  vb.add_text(template_words(cfg.reverse_template, "{response}"));
  vb.add_text(template_words(cfg.forward_template, "{instruction}"));
  return std::make_shared<const Tokenizer>(vb.freeze());
}

Context make_context(const PipelineConfig& cfg, std::shared_ptr<const Tokenizer> tok) {
  Context ctx;
  ctx.tokenizer = std::move(tok);
  ctx.forward_prompt = PromptWrapper(*ctx.tokenizer, cfg.forward_template, "{instruction}");
  ctx.reverse_prompt = PromptWrapper(*ctx.tokenizer, cfg.reverse_template, "{response}");
  return ctx;
}

std::vector<EncodedPair> encode_pairs(const Tokenizer& tok,
                                      const std::vector<InstructionResponsePair>& pairs) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.id, tok.encode(p.instruction), tok.encode(p.response)});
  return out;
}

ModelHandle base_model(const BackendSpec& spec, const PipelineConfig& cfg,
                       const std::shared_ptr<const Tokenizer>& tok) {
  if (spec.kind == BackendSpec::Kind::remote) return RemoteModel::connect(tok, spec.remote);
  return NgramModel::create(tok->size(), cfg.model);
}

ModelHandle load_model(const json& envelope, const BackendSpec& spec,
                       const std::shared_ptr<const Tokenizer>& tok) {
  const auto& m = envelope.at("model");
  if (spec.kind == BackendSpec::Kind::remote) return RemoteModel::connect(tok, spec.remote);
  auto model = NgramModel::from_json(m);
  if (model->vocab_size() != tok->size())
    throw StageError("model artifact does not match the vocabulary artifact");
  return model;
}

AlignmentConfig alignment_config(const PipelineConfig& cfg, const Context& ctx) {
  AlignmentConfig a;
  a.iterations = cfg.iterations;
  a.epochs_per_update = cfg.epochs_per_update;
  a.alpha_mode = cfg.alpha_mode;
  a.alpha_clamp = cfg.alpha_clamp;
  a.warm_start = cfg.warm_start;
  a.decode = cfg.decode;
  a.fit = cfg.fit;
  a.forward_prompt = ctx.forward_prompt;
  a.reverse_prompt = ctx.reverse_prompt;
  a.global_seed = cfg.global_seed;
  return a;
}

void write_json(const fs::path& path, const json& j) {
  write_file_atomic(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StageError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw StageError("corrupt artifact '" + path.string() + "': " + e.what());
  }
}

// Loads a digest-stamped artifact, rejecting any from another config.
json require_artifact(const PipelineConfig& cfg, const char* name, const std::string& missing) {
  const auto path = cfg.output_dir / name;
  if (!fs::exists(path)) throw StageError(missing + " (" + path.string() + ")");
  auto j = read_json(path);
  const auto digest = j.value("config_digest", std::string{});
  if (digest != cfg.digest)
    throw StageError(std::string("artifact ") + name + " was produced by config digest " +
                     digest + ", current config digest is " + cfg.digest);
  return j;
}

std::shared_ptr<const Tokenizer> load_tokenizer(const PipelineConfig& cfg) {
  const auto j = require_artifact(cfg, artifact::kVocabulary, "missing vocabulary artifact");
  return std::make_shared<const Tokenizer>(Tokenizer::from_json(j.at("tokenizer")));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void stage_align(const PipelineConfig& cfg, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(cfg.output_dir);
  const auto seed = load_seed(cfg.seed_path);
  const auto ctx = make_context(cfg, induce_vocabulary(cfg, seed));
  const auto encoded = encode_pairs(*ctx.tokenizer, seed);
  std::vector<EncodedPair> heldout;
  if (cfg.heldout_path) heldout = encode_pairs(*ctx.tokenizer, load_seed(*cfg.heldout_path));
  log << "align: " << seed.size() << " seed pairs, vocabulary " << ctx.tokenizer->size()
      << " tokens, N=" << cfg.iterations << ", alpha " << cfg.alpha_mode.to_string() << '\n';

  const auto acfg = alignment_config(cfg, ctx);
  RoundTripOptions rt;
  rt.decode = cfg.decode;
  rt.global_seed = cfg.global_seed;
  rt.forward_prompt = ctx.forward_prompt;
  rt.reverse_prompt = ctx.reverse_prompt;
  json per_iteration = json::array();
  const auto state = run_alignment(
      encoded, base_model(cfg.forward_backend, cfg, ctx.tokenizer),
      base_model(cfg.reverse_backend, cfg, ctx.tokenizer), acfg,
      [&](const AlignmentState& s) {
        if (heldout.empty()) return;
        const auto m = roundtrip_metric(s.forward, s.reverse, heldout, rt);
        per_iteration.push_back(
            {{"k", s.k}, {"forward_nll", m.forward}, {"reverse_nll", m.reverse}, {"metric", m.mean()}});
        log << "  k=" << s.k << " held-out round-trip NLL " << std::fixed << std::setprecision(4)
            << m.mean() << std::defaultfloat << '\n';
      });

  json alphas = json::array();
  for (const auto& r : state.history)
    if (r.alpha) alphas.push_back({{"kind", to_string(r.kind)}, {"k", r.k}, {"alpha", *r.alpha}});

  write_json(cfg.output_dir / artifact::kVocabulary,
             {{"config_digest", cfg.digest}, {"tokenizer", ctx.tokenizer->to_json()}});
  write_json(cfg.output_dir / artifact::kForward,
             {{"config_digest", cfg.digest}, {"model", state.forward->to_json()}});
  write_json(cfg.output_dir / artifact::kReverse,
             {{"config_digest", cfg.digest}, {"model", state.reverse->to_json()}});
  write_history(cfg.output_dir / artifact::kHistory, state.history, cfg.digest);
  write_json(cfg.output_dir / artifact::kAlignReport,
             {{"config_digest", cfg.digest},
              {"roundtrip", per_iteration},
              {"alpha_trajectory", alphas},
              {"rng_seed", cfg.global_seed}});
  write_json(cfg.output_dir / artifact::kAlignRecord,
             {{"config_digest", cfg.digest},
              {"stage", "align"},
              {"engine_version", kEngineVersion},
              {"seed_count", seed.size()},
              {"vocab_size", ctx.tokenizer->size()},
              {"iterations", state.k},
              {"history_records", state.history.size()},
              {"truncations", ctx.tokenizer->truncation_count()}});
  log << "align: done in " << seconds_since(t0) << " s\n";
}

void stage_augment(const PipelineConfig& cfg, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  require_artifact(cfg, artifact::kAlignRecord, "missing alignment artifact");
  const auto ctx = make_context(cfg, load_tokenizer(cfg));
  const auto reverse =
      load_model(require_artifact(cfg, artifact::kReverse, "missing reverse model artifact"),
                 cfg.reverse_backend, ctx.tokenizer);

  AugmentOptions opts;
  opts.decode = cfg.decode;
  opts.global_seed = cfg.global_seed;
  opts.reverse_prompt = ctx.reverse_prompt;

  std::map<std::string, std::size_t> dropped;
  std::size_t kept = 0;
  UnlabeledStats stats;
  write_file_atomic(cfg.output_dir / artifact::kCandidates, [&](std::ostream& out) {
    out << json{{"record", "candidates_header"}, {"config_digest", cfg.digest}}.dump() << '\n';
    stats = for_each_unlabeled_batch(
        cfg.unlabeled_path, cfg.ingest_batch, [&](std::span<const UnlabeledResponse> batch) {
          auto result = generate_instructions(reverse, *ctx.tokenizer, batch, opts);
          for (const auto& [reason, n] : result.dropped) dropped[reason] += n;
          auto clean = clean_candidates(std::move(result.candidates), *ctx.tokenizer, dropped);
          for (const auto& c : clean) out << to_json(c).dump() << '\n';
          kept += clean.size();
        });
  });
  write_json(cfg.output_dir / artifact::kAugmentRecord,
             {{"config_digest", cfg.digest},
              {"stage", "augment"},
              {"unlabeled_records", stats.records},
              {"unlabeled_dropped_empty", stats.dropped_empty},
              {"peak_batch", stats.peak_batch},
              {"candidates", kept},
              {"dropped", dropped}});
  log << "augment: " << stats.records << " responses -> " << kept << " candidates";
  for (const auto& [reason, n] : dropped) log << ", dropped " << n << " (" << reason << ")";
  log << "; " << seconds_since(t0) << " s\n";
}

void stage_curate(const PipelineConfig& cfg, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto candidates_path = cfg.output_dir / artifact::kCandidates;
  if (!fs::exists(candidates_path) || !fs::exists(cfg.output_dir / artifact::kAugmentRecord))
    throw StageError("missing candidates artifact (" + candidates_path.string() +
                     "); run augment first");
  require_artifact(cfg, artifact::kAugmentRecord, "missing candidates artifact");
  const auto ctx = make_context(cfg, load_tokenizer(cfg));
  const auto forward =
      load_model(require_artifact(cfg, artifact::kForward, "missing forward model artifact"),
                 cfg.forward_backend, ctx.tokenizer);

  CurationConfig cc;
  cc.top_k = cfg.top_k;
  cc.score_mode = cfg.score_mode;
  cc.normalization = cfg.normalization;
  cc.forward_prompt = ctx.forward_prompt;
  cc.decode = cfg.decode;
  cc.global_seed = cfg.global_seed;
  StreamingCurator curator(forward, *ctx.tokenizer, cc);

  std::ifstream in(candidates_path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<CandidatePair> batch;
  batch.reserve(cfg.ingest_batch);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(std::string("corrupt candidates artifact: ") + e.what(), line_no);
    }
    if (line_no == 1) {
      if (j.value("record", std::string{}) != "candidates_header" ||
          j.value("config_digest", std::string{}) != cfg.digest)
        throw StageError("candidates artifact was produced by another config digest");
      continue;
    }
    batch.push_back(candidate_from_json(j));
    if (batch.size() == cfg.ingest_batch) {
      curator.add_batch(batch);
      batch.clear();
    }
  }
  curator.add_batch(batch);

  const auto seed = load_seed(cfg.seed_path);
  ManifestInfo info;
  info.rng_seed = cfg.global_seed;
  info.config_digest = cfg.digest;
  info.meta["trainer_hints"] = cfg.effective.at("trainer_hints");
  auto result = curator.finish(seed, info);
  for (const auto& w : result.warnings) log << "curate: warning: " << w << '\n';
  export_manifest(result.manifest, cfg.output_dir / artifact::kManifest);
  write_json(cfg.output_dir / artifact::kCurateRecord,
             {{"config_digest", cfg.digest},
              {"stage", "curate"},
              {"scored", result.scored},
              {"failed", result.failed},
              {"selected_count", result.manifest.selected_count},
              {"seed_count", result.manifest.seed_count},
              {"score_summary", to_json(result.summary)}});
  log << "curate: " << result.scored << " scored, " << result.manifest.selected_count
      << " selected + " << result.manifest.seed_count << " seed -> " << artifact::kManifest
      << "; " << seconds_since(t0) << " s\n";
}

void stage_report(const PipelineConfig& cfg, std::ostream& log) {
  if (!cfg.heldout_path)
    throw StageError("report needs paths.heldout (held-out pairs for the round-trip metric)");
  if (cfg.forward_backend.kind != BackendSpec::Kind::reference ||
      cfg.reverse_backend.kind != BackendSpec::Kind::reference)
    throw StageError("report sweeps rerun alignment from scratch and need reference backends");
  const auto seed = load_seed(cfg.seed_path);
  const auto ctx = make_context(cfg, induce_vocabulary(cfg, seed));

  SweepTask task;
  task.tokenizer = ctx.tokenizer;
  task.seed = encode_pairs(*ctx.tokenizer, seed);
  task.heldout = encode_pairs(*ctx.tokenizer, load_seed(*cfg.heldout_path));
  task.model = cfg.model;
  task.align = alignment_config(cfg, ctx);

  const auto iters = sweep_iterations(task, cfg.report_iterations);
  const auto alphas = sweep_alpha(task, cfg.report_alpha_modes);
  const auto shape = check_iteration_shape(iters);

  const auto dir = cfg.output_dir / artifact::kReportDir;
  fs::create_directories(dir);
  write_file_atomic(dir / "iterations.csv", [&](std::ostream& out) { out << iteration_csv(iters); });
  write_file_atomic(dir / "alpha.csv", [&](std::ostream& out) { out << alpha_csv(alphas); });
  std::string summary = sweep_summary(iters, alphas);

  // Alpha trajectory of the configured run, when its history is on disk.
  const auto history_path = cfg.output_dir / artifact::kHistory;
  if (fs::exists(history_path)) {
    std::string digest;
    const auto history = read_history(history_path, &digest);
    if (digest == cfg.digest) {
      std::ostringstream os;
      os << "alignment history (" << history.size() << " records)\n";
      for (const auto& r : history) {
        os << "  " << to_string(r.kind) << " k=" << r.k;
        if (r.alpha) os << " alpha=" << std::fixed << std::setprecision(4) << *r.alpha;
        if (r.warm_start) os << " warm-start";
        os << std::defaultfloat << '\n';
      }
      summary += os.str();
    }
  }
  write_file_atomic(dir / "summary.txt", [&](std::ostream& out) { out << summary; });

  json rows = json::array();
  for (const auto& r : iters)
    rows.push_back({{"n", r.n}, {"forward_nll", r.roundtrip.forward},
                    {"reverse_nll", r.roundtrip.reverse}, {"metric", r.metric}});
  json arows = json::array();
  for (const auto& r : alphas)
    arows.push_back({{"mode", r.mode}, {"forward_nll", r.roundtrip.forward},
                     {"reverse_nll", r.roundtrip.reverse}, {"metric", r.metric},
                     {"alphas", r.alphas}});
  write_json(dir / "report.json",
             {{"config_digest", cfg.digest},
              {"iterations", rows},
              {"alpha", arows},
              {"shape", {{"best_n", shape.best_n},
                         {"peak_within_5", shape.peak_within_5},
                         {"last_worse", shape.last_worse},
                         {"flagged", !shape.ok()}}}});
  log << summary;
}

}  // namespace forge
