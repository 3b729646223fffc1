#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clarifykit/corpus.hpp"
#include "clarifykit/evaluator.hpp"
#include "clarifykit/gateway.hpp"
#include "clarifykit/mixer.hpp"
#include "clarifykit/sandbox.hpp"

namespace clarifykit {

/// Everything a run depends on. Precedence: built-in defaults, then the
/// CLARIFY_* environment, then the YAML file, then command-line flags.
struct RunConfig {
  std::uint64_t seed = 0;

  gateway::EndpointConfig endpoint;
  std::string gen_model;
  std::string judge_model;
  std::string eval_model;
  std::string mock_script;

  struct Paths {
    std::string corpus;
    std::string dataset;
    std::string checkpoint;
    std::string cache;
    std::string tasks;
    std::string transcripts;
    std::string mixed;
    std::string training;
    std::string reports;
    std::string templates;
    std::string exemplars;
  } paths;

  CorpusFormat corpus_format = CorpusFormat::canonical;
  std::vector<Category> categories{kBaseCategories.begin(), kBaseCategories.end()};
  int attempt_cap = 3;
  std::size_t leak_window = 15;
  int synth_max_tokens = 2048;

  mix::MixSpec mix;
  mix::MaskMode mask_mode = mix::MaskMode::answer_only;

  eval::PromptMode prompt;
  int eval_max_tokens = 1024;
  int judge_max_tokens = 512;

  sandbox::SandboxConfig sandbox;

  std::size_t jobs = 1;
  std::optional<std::size_t> limit;

  /// Resolved settings as canonical JSON text. The API key is never included.
  std::string canonical_json() const;
  /// sha256 of canonical_json().
  std::string digest() const;
};

/// Defaults overlaid with the environment.
RunConfig default_config();

/// Applies a YAML document on top of `base`. Unknown keys are errors.
RunConfig apply_yaml(RunConfig base, std::string_view yaml_text);
RunConfig load_config(const std::filesystem::path& path, RunConfig base = default_config());

/// Writes `<artifact>.meta.json` with tool version, config digest, seed and
/// the producing command.
void write_provenance(const std::filesystem::path& artifact, const RunConfig& config,
                      std::string_view command);

std::filesystem::path provenance_path(const std::filesystem::path& artifact);

std::string_view tool_version();

}  // namespace clarifykit
