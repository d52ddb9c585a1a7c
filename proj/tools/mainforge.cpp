// mainforge: stage driver for the back-translation pipeline.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "forge/corpus.hpp"
#include "forge/fixture.hpp"
#include "forge/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kStageFailure = 1;
constexpr int kConfigFailure = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "pipeline config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "global RNG seed (overrides config)");
  cmd->add_option("-o,--output", c.output, "output directory (overrides config)");
  cmd->add_option("--set", c.overrides, "override a config leaf, e.g. --set alignment.iterations=5");
}

void mark_failed(const forge::PipelineConfig& cfg, const std::string& stage,
                 const std::string& what) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  std::ofstream out(cfg.output_dir / (stage + ".failed.json"));
  out << json{{"stage", stage}, {"config_digest", cfg.digest}, {"error", what}}.dump(2) << '\n';
}

using Stage = void (*)(const forge::PipelineConfig&, std::ostream&);

int run_stages(const Common& c, const std::vector<std::pair<std::string, Stage>>& stages) {
  forge::ConfigDiagnostics diag;
  std::optional<fs::path> output;
  if (c.output) output = fs::path(*c.output);
  std::optional<forge::PipelineConfig> cfg;
  try {
    cfg = forge::load_config(c.config, c.overrides, c.seed, output, diag);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  }
  if (!cfg) {
    std::cerr << diag.render();
    return kConfigFailure;
  }
  std::cerr << "config digest " << cfg->digest << '\n';
  for (const auto& [name, fn] : stages) {
    std::error_code ec;
    fs::remove(cfg->output_dir / (name + ".failed.json"), ec);
    try {
      fn(*cfg, std::cerr);
    } catch (const std::exception& e) {
      std::cerr << name << " failed: " << e.what() << '\n';
      mark_failed(*cfg, name, e.what());
      return kStageFailure;
    }
  }
  return 0;
}

int write_bundled_fixture(const std::string& dir, std::uint64_t fixture_seed) {
  forge::FixtureSpec spec;
  spec.seed = fixture_seed;
  const fs::path root(dir);
  fs::create_directories(root);
  forge::write_fixture(forge::make_fixture(spec), root);
  json cfg = {
      {"paths", {{"seed", "seed.jsonl"}, {"unlabeled", "unlabeled.jsonl"},
                 {"heldout", "heldout.jsonl"}, {"output_dir", "out"}}},
      {"seed", 42},
      {"curation", {{"top_k", 1000}}},
  };
  std::ofstream(root / "config.json") << cfg.dump(2) << '\n';
  std::cerr << "fixture written to " << root.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mainforge: instruction back-translation with mutual alignment"};
  app.require_subcommand(1);

  Common common;
  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::pair<std::string, Stage>> stages;
  };
  const std::vector<Sub> subs = {
      {"align", "mutual alignment of forward and reverse models", {{"align", forge::stage_align}}},
      {"augment", "generate pseudo-instructions for unlabeled responses",
       {{"augment", forge::stage_augment}}},
      {"curate", "score candidates and assemble the final manifest",
       {{"curate", forge::stage_curate}}},
      {"run", "align, augment and curate",
       {{"align", forge::stage_align},
        {"augment", forge::stage_augment},
        {"curate", forge::stage_curate}}},
      {"report", "iteration and alpha sweeps on held-out pairs", {{"report", forge::stage_report}}},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, common);
    cmds.push_back(cmd);
  }

  std::string fixture_dir;
  std::uint64_t fixture_seed = 42;
  auto* fixture = app.add_subcommand("fixture", "write the desk-scale fixture and a config");
  fixture->add_option("dir", fixture_dir, "target directory")->required();
  fixture->add_option("--fixture-seed", fixture_seed, "fixture generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigFailure;
  }

  if (fixture->parsed()) {
    try {
      return write_bundled_fixture(fixture_dir, fixture_seed);
    } catch (const std::exception& e) {
      std::cerr << "fixture failed: " << e.what() << '\n';
      return kStageFailure;
    }
  }
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (cmds[i]->parsed()) return run_stages(common, subs[i].stages);
  return kConfigFailure;
}
