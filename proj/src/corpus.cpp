#include "forge/corpus.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/tokenizer.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot read '" + path.string() + "': " + std::strerror(errno));
  return in;
}

nlohmann::json parse_line(const std::string& line, std::size_t line_no) {
  try {
    auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw DataError("record is not an object", line_no);
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed record: ") + e.what(), line_no);
  }
}

std::string required_text(const nlohmann::json& j, const char* field,
                          std::size_t line_no) {
  auto it = j.find(field);
  if (it == j.end()) throw DataError(std::string("missing field \"") + field + "\"", line_no);
  if (!it->is_string())
    throw DataError(std::string("field \"") + field + "\" is not a string", line_no);
  return it->get<std::string>();
}

std::string record_id(const nlohmann::json& j, const fs::path& path,
                      std::size_t line_no) {
  auto it = j.find("id");
  if (it == j.end() || it->is_null())
    return path.stem().string() + ":" + std::to_string(line_no);
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw DataError("field \"id\" must be a string", line_no);
}

bool is_blank(std::string_view text) { return trim(text).empty(); }

}  // namespace

std::string to_string(Origin origin) {
  return origin == Origin::seed ? "seed" : "synthetic";
}

Origin origin_from_string(const std::string& s) {
  if (s == "seed") return Origin::seed;
  if (s == "synthetic") return Origin::synthetic;
  throw DataError("unknown origin '" + s + "'");
}

SeedDataset load_seed(const fs::path& path) {
  auto in = open_input(path);
  SeedDataset out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto j = parse_line(line, line_no);
    InstructionResponsePair pair;
    pair.id = record_id(j, path, line_no);
    pair.instruction = required_text(j, "instruction", line_no);
    pair.response = required_text(j, "response", line_no);
    if (is_blank(pair.instruction)) throw DataError("empty instruction", line_no);
    if (is_blank(pair.response)) throw DataError("empty response", line_no);
    if (auto m = j.find("meta"); m != j.end() && !m->is_null()) {
      if (!m->is_object()) throw DataError("field \"meta\" is not an object", line_no);
      pair.meta = *m;
    }
    pair.origin = Origin::seed;
    if (!ids.insert(pair.id).second)
      throw DataError("duplicate id \"" + pair.id + "\"", line_no);
    out.push_back(std::move(pair));
  }
  if (out.empty()) throw DataError("seed file '" + path.string() + "' has no records");
  return out;
}

UnlabeledStats for_each_unlabeled_batch(
    const fs::path& path, std::size_t batch_size,
    const std::function<void(std::span<const UnlabeledResponse>)>& sink) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  auto in = open_input(path);
  UnlabeledStats stats;
  std::unordered_set<std::string> ids;
  std::vector<UnlabeledResponse> batch;
  batch.reserve(batch_size);
  auto flush = [&] {
    if (batch.empty()) return;
    stats.peak_batch = std::max(stats.peak_batch, batch.size());
    sink(batch);
    batch.clear();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto j = parse_line(line, line_no);
    UnlabeledResponse rec;
    rec.id = record_id(j, path, line_no);
    rec.response = required_text(j, "response", line_no);
    if (auto s = j.find("source"); s != j.end() && s->is_string())
      rec.source = s->get<std::string>();
    if (!ids.insert(rec.id).second)
      throw DataError("duplicate id \"" + rec.id + "\"", line_no);
    if (is_blank(rec.response)) {
      ++stats.dropped_empty;
      continue;
    }
    ++stats.records;
    batch.push_back(std::move(rec));
    if (batch.size() == batch_size) flush();
  }
  if (in.bad()) throw DataError("read error on '" + path.string() + "'");
  flush();
  if (stats.records == 0) throw DataError("no usable responses in '" + path.string() + "'");
  return stats;
}

UnlabeledDataset load_unlabeled(const fs::path& path, std::size_t batch_size) {
  UnlabeledDataset out;
  out.stats = for_each_unlabeled_batch(
      path, batch_size, [&](std::span<const UnlabeledResponse> batch) {
        out.records.insert(out.records.end(), batch.begin(), batch.end());
      });
  return out;
}

DatasetManifest assemble_final(std::span<const CandidatePair> selected,
                               std::span<const InstructionResponsePair> seed,
                               const ManifestInfo& info) {
  DatasetManifest m;
  m.rng_seed = info.rng_seed;
  m.config_digest = info.config_digest;
  m.meta = info.meta;
  m.pairs.reserve(selected.size() + seed.size());
  std::unordered_set<std::string> ids;
  for (const auto& c : selected) {
    if (!c.score) throw InvalidArgument("selected candidate '" + c.id + "' is unscored");
    InstructionResponsePair p;
    p.id = c.id;
    p.instruction = c.pseudo_instruction;
    p.response = c.response;
    p.origin = Origin::synthetic;
    p.meta = c.meta.is_object() ? c.meta : nlohmann::json::object();
    p.meta["mutual_score"] = *c.score;
    if (!ids.insert(p.id).second)
      throw DataError("id collision on \"" + p.id + "\"");
    m.pairs.push_back(std::move(p));
  }
  for (const auto& s : seed) {
    if (!ids.insert(s.id).second)
      throw DataError("id collision on \"" + s.id + "\" between selected and seed");
    auto p = s;
    p.origin = Origin::seed;
    m.pairs.push_back(std::move(p));
  }
  m.selected_count = selected.size();
  m.seed_count = seed.size();
  return m;
}

void validate_manifest(const DatasetManifest& m) {
  if (m.pairs.size() != m.seed_count + m.selected_count)
    throw DataError("manifest pair count does not equal seed_count + selected_count");
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    const auto& p = m.pairs[i];
    if (!ids.insert(p.id).second) throw DataError("duplicate id \"" + p.id + "\"");
    const Origin expected = i < m.selected_count ? Origin::synthetic : Origin::seed;
    if (p.origin != expected)
      throw DataError("pair \"" + p.id + "\" is out of place for its origin");
    if (p.origin == Origin::synthetic &&
        (!p.meta.contains("mutual_score") || !p.meta["mutual_score"].is_number()))
      throw DataError("synthetic pair \"" + p.id + "\" lacks its mutual score");
  }
}

nlohmann::json to_json(const InstructionResponsePair& p) {
  return {{"id", p.id},
          {"instruction", p.instruction},
          {"response", p.response},
          {"origin", to_string(p.origin)},
          {"meta", p.meta}};
}

nlohmann::json to_json(const CandidatePair& c) {
  nlohmann::json j = {{"id", c.id},
                      {"response", c.response},
                      {"pseudo_instruction", c.pseudo_instruction},
                      {"rng_stream", c.rng_stream},
                      {"meta", c.meta}};
  if (c.score) j["score"] = *c.score;
  return j;
}

CandidatePair candidate_from_json(const nlohmann::json& j) {
  CandidatePair c;
  c.id = j.at("id").get<std::string>();
  c.response = j.at("response").get<std::string>();
  c.pseudo_instruction = j.at("pseudo_instruction").get<std::string>();
  c.rng_stream = j.value("rng_stream", std::uint64_t{0});
  if (auto s = j.find("score"); s != j.end() && !s->is_null()) c.score = s->get<double>();
  if (auto m = j.find("meta"); m != j.end() && m->is_object()) c.meta = *m;
  return c;
}

void write_file_atomic(const fs::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path partial = path.string() + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out)
      throw DataError("cannot write '" + partial.string() + "': " + std::strerror(errno));
    writer(out);
    out.flush();
    if (!out)
      throw DataError("write failed on '" + partial.string() + "': " + std::strerror(errno));
  }
  fs::rename(partial, path);
}

void export_manifest(const DatasetManifest& m, const fs::path& path) {
  validate_manifest(m);
  write_file_atomic(path, [&](std::ostream& out) {
    nlohmann::json header = {{"record", "header"},
                             {"seed_count", m.seed_count},
                             {"selected_count", m.selected_count},
                             {"rng_seed", m.rng_seed},
                             {"engine_version", m.engine_version},
                             {"config_digest", m.config_digest},
                             {"meta", m.meta}};
    out << header.dump() << '\n';
    for (const auto& p : m.pairs) out << to_json(p).dump() << '\n';
  });
}

DatasetManifest load_manifest(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  DatasetManifest m;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const auto j = parse_line(line, line_no);
    try {
      if (!have_header) {
        if (j.value("record", std::string{}) != "header")
          throw DataError("manifest does not start with a header record", line_no);
        m.seed_count = j.at("seed_count").get<std::size_t>();
        m.selected_count = j.at("selected_count").get<std::size_t>();
        m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        m.engine_version = j.at("engine_version").get<std::string>();
        m.config_digest = j.at("config_digest").get<std::string>();
        m.meta = j.value("meta", nlohmann::json::object());
        have_header = true;
        continue;
      }
      InstructionResponsePair p;
      p.id = j.at("id").get<std::string>();
      p.instruction = j.at("instruction").get<std::string>();
      p.response = j.at("response").get<std::string>();
      p.origin = origin_from_string(j.at("origin").get<std::string>());
      p.meta = j.value("meta", nlohmann::json::object());
      m.pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("bad manifest record: ") + e.what(), line_no);
    }
  }
  if (!have_header) throw DataError("manifest '" + path.string() + "' is empty");
  validate_manifest(m);
  return m;
}

}  // namespace forge
