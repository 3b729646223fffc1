#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clarifykit/analytics.hpp"
#include "clarifykit/corpus.hpp"
#include "clarifykit/evaluator.hpp"
#include "clarifykit/gateway.hpp"

namespace testsupport {

namespace fs = std::filesystem;

fs::path data_dir();
fs::path data_path(const std::string& name);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

bool python_available();

/// Deterministic coding problems "P0000".."P<n-1>" with varied wording,
/// one stdin/stdout test and one reference solution each.
clarifykit::Corpus synthetic_corpus(std::size_t n, std::uint64_t seed = 1);

/// Mock responder for the synthesis stages: derives a mutation or a
/// question list from the prompt text alone, so every run sees the same
/// answers regardless of order.
clarifykit::gateway::MockTransport::Responder synthesis_responder();

struct EvalFixtureRun {
  std::vector<clarifykit::eval::EvalTranscript> transcripts;
  std::string transcripts_text;
  clarifykit::analytics::MetricsReport report;
  std::string report_text;
  std::string table_text;
};

inline constexpr const char* kFixtureModel = "model-under-test";
inline constexpr const char* kFixtureJudge = "judge-model";

/// Runs the 10-task evaluator fixture against its scripted transport.
EvalFixtureRun run_eval_fixture(const fs::path& workdir);

std::string read_text(const fs::path& path);

}  // namespace testsupport
