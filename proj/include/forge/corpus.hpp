#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace forge {

inline constexpr const char* kEngineVersion = "0.1.0";

enum class Origin { seed, synthetic };

std::string to_string(Origin origin);
Origin origin_from_string(const std::string& s);

struct InstructionResponsePair {
  std::string id;
  std::string instruction;
  std::string response;
  Origin origin = Origin::seed;
  nlohmann::json meta = nlohmann::json::object();

  bool operator==(const InstructionResponsePair&) const = default;
};

struct UnlabeledResponse {
  std::string id;
  std::string response;
  std::string source;

  bool operator==(const UnlabeledResponse&) const = default;
};

// (R_u, pseudo-instruction) produced by augmentation, scored by curation.
struct CandidatePair {
  std::string id;
  std::string response;
  std::string pseudo_instruction;
  std::optional<double> score;
  std::uint64_t rng_stream = 0;
  nlohmann::json meta = nlohmann::json::object();

  bool operator==(const CandidatePair&) const = default;
};

struct DatasetManifest {
  std::vector<InstructionResponsePair> pairs;
  std::size_t seed_count = 0;
  std::size_t selected_count = 0;
  std::uint64_t rng_seed = 0;
  std::string engine_version = kEngineVersion;
  std::string config_digest;
  // Header annotations: score summary, downstream-trainer hints.
  nlohmann::json meta = nlohmann::json::object();

  bool operator==(const DatasetManifest&) const = default;
};

using SeedDataset = std::vector<InstructionResponsePair>;

// Reads a line-delimited seed file. Records need "instruction" and
// "response"; a missing "id" becomes "<file-stem>:<line-number>". Blank lines
// are skipped. Throws DataError on malformed lines, duplicate ids, empty text,
// or an empty file.
SeedDataset load_seed(const std::filesystem::path& path);

struct UnlabeledStats {
  std::size_t records = 0;
  std::size_t dropped_empty = 0;
  // Largest number of records held at once by the reader.
  std::size_t peak_batch = 0;
};

// Streams an unlabeled file in batches of at most `batch_size` records.
// Whitespace-only responses are dropped and counted. Throws DataError when the
// file is unreadable, malformed, has duplicate ids, or yields no records.
UnlabeledStats for_each_unlabeled_batch(
    const std::filesystem::path& path, std::size_t batch_size,
    const std::function<void(std::span<const UnlabeledResponse>)>& sink);

struct UnlabeledDataset {
  std::vector<UnlabeledResponse> records;
  UnlabeledStats stats;
};

UnlabeledDataset load_unlabeled(const std::filesystem::path& path,
                                std::size_t batch_size = 4096);

struct ManifestInfo {
  std::uint64_t rng_seed = 0;
  std::string config_digest;
  nlohmann::json meta = nlohmann::json::object();
};

// D_filter = [selected synthetic pairs, seed pairs]. Every selected candidate
// must carry a score; it lands in meta["mutual_score"].
DatasetManifest assemble_final(std::span<const CandidatePair> selected,
                               std::span<const InstructionResponsePair> seed,
                               const ManifestInfo& info);

// Throws DataError when counts, id uniqueness or score annotations are off.
void validate_manifest(const DatasetManifest& manifest);

// Header record followed by one pair per line. Byte-identical for equal
// manifests.
void export_manifest(const DatasetManifest& manifest,
                     const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

nlohmann::json to_json(const InstructionResponsePair& pair);
nlohmann::json to_json(const CandidatePair& candidate);
CandidatePair candidate_from_json(const nlohmann::json& j);

// Writes `path` atomically: content goes to "<path>.partial" and is renamed on
// success. On failure the partial file stays behind, clearly marked.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

}  // namespace forge
