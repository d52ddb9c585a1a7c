#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/align.hpp"
#include "forge/curate.hpp"
#include "forge/ngram_model.hpp"
#include "forge/remote.hpp"
#include "forge/tokenizer.hpp"

namespace forge {

struct BackendSpec {
  enum class Kind { reference, remote };
  Kind kind = Kind::reference;
  RemoteConfig remote;
};

struct PipelineConfig {
  // Paths are absolute after loading (relative ones resolve against the
  // config file's directory).
  std::filesystem::path seed_path;
  std::filesystem::path unlabeled_path;
  std::optional<std::filesystem::path> heldout_path;
  std::filesystem::path output_dir;

  std::uint64_t global_seed = 0;
  TokenizerSpec tokenizer;
  NgramConfig model;
  BackendSpec forward_backend;
  BackendSpec reverse_backend;

  std::size_t iterations = 3;
  std::size_t epochs_per_update = 1;
  AlphaMode alpha_mode;
  double alpha_clamp = 0.01;
  bool warm_start = true;
  FitOptions fit;
  DecodeParams decode;

  std::size_t top_k = 16800;
  ScoreMode score_mode = ScoreMode::teacher_forced_nll;
  Normalization normalization = Normalization::per_token_mean;

  std::string reverse_template = "{response}";
  std::string forward_template = "{instruction}";

  std::size_t ingest_batch = 4096;
  std::vector<std::size_t> report_iterations;
  std::vector<AlphaMode> report_alpha_modes;

  // The effective configuration after defaults and overrides.
  nlohmann::json effective;
  // SHA-256 over the canonical effective config (minus paths) and the
  // contents of the input files.
  std::string digest;
};

// Built-in defaults as a config document.
nlohmann::json default_config();

// Sets a dotted leaf ("alignment.iterations") from a command-line string.
// The value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct ConfigDiagnostics {
  std::vector<ConfigError> errors;
  bool ok() const { return errors.empty(); }
  std::string render() const;
};

// Merges `doc` over the defaults and validates every field. Diagnostics are
// collected rather than thrown so all problems surface at once.
std::optional<PipelineConfig> build_config(const nlohmann::json& doc,
                                           const std::filesystem::path& base_dir,
                                           ConfigDiagnostics& diagnostics);

// Reads the file, applies overrides (then --seed / --output), builds.
std::optional<PipelineConfig> load_config(const std::filesystem::path& path,
                                          const std::vector<std::string>& overrides,
                                          std::optional<std::uint64_t> seed,
                                          std::optional<std::filesystem::path> output,
                                          ConfigDiagnostics& diagnostics);

// A stage failed; artifacts it managed to write stay marked as partial.
class StageError : public Error {
 public:
  using Error::Error;
};

// Stage entry points. Each writes its artifacts under output_dir, stamps them
// with the config digest and refuses upstream artifacts from another digest.
void stage_align(const PipelineConfig& cfg, std::ostream& log);
void stage_augment(const PipelineConfig& cfg, std::ostream& log);
void stage_curate(const PipelineConfig& cfg, std::ostream& log);
void stage_report(const PipelineConfig& cfg, std::ostream& log);

// Artifact names under the output directory.
namespace artifact {
inline constexpr const char* kVocabulary = "vocab.json";
inline constexpr const char* kForward = "forward_model.json";
inline constexpr const char* kReverse = "reverse_model.json";
inline constexpr const char* kHistory = "history.jsonl";
inline constexpr const char* kAlignReport = "alignment_report.json";
inline constexpr const char* kAlignRecord = "align.json";
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kAugmentRecord = "augment.json";
inline constexpr const char* kManifest = "manifest.jsonl";
inline constexpr const char* kCurateRecord = "curate.json";
inline constexpr const char* kReportDir = "report";
}  // namespace artifact

}  // namespace forge
