#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clarifykit/corpus.hpp"

namespace clarifykit::sandbox {

enum class TestResult { pass, wrong_output, runtime_error, timeout, no_code };

std::string_view to_string(TestResult r);
TestResult parse_test_result(std::string_view text);

struct TestOutcome {
  std::vector<TestResult> per_test;
  std::size_t passed = 0;
  std::size_t total = 0;

  /// Recomputes passed/total from per_test.
  static TestOutcome from(std::vector<TestResult> results);
  /// Every test marked no_code.
  static TestOutcome no_code(std::size_t n_tests);
  bool all_passed() const { return total > 0 && passed == total; }

  friend bool operator==(const TestOutcome&, const TestOutcome&) = default;
};

struct SandboxConfig {
  std::vector<std::string> interpreter_command = {"python3"};
  std::chrono::milliseconds wall_timeout{10'000};
  std::uint64_t memory_limit_bytes = 512ULL * 1024 * 1024;
  /// Cap on captured stdout per test; output beyond it fails the test.
  std::size_t max_output_bytes = 16 * 1024 * 1024;
  /// Driver for function-style tasks, with {candidate_code} and {entry_point}.
  std::optional<std::string> driver_template;

  void validate() const;
};

/// exact: byte equality. whitespace_normalized: equal after stripping
/// trailing whitespace on each line and trailing blank lines.
/// numeric_tolerant: whitespace-separated tokens pairwise equal, numeric
/// tokens within epsilon (absolute).
bool compare_output(std::string_view actual, std::string_view expected, const Comparison& rule);

/// Program text that is actually run: the candidate itself for stdin/stdout
/// tasks, or the candidate wrapped by the driver when `entry_point` is set.
std::string program_text(std::string_view code, const std::optional<std::string>& entry_point,
                         const SandboxConfig& cfg);

struct RunResult {
  int exit_code = 0;
  bool signaled = false;
  bool timed_out = false;
  bool output_truncated = false;
  std::string stdout_text;
  std::string stderr_text;
  std::chrono::milliseconds elapsed{0};
};

/// Runs interpreter_command + [program file] in a fresh temporary directory,
/// feeding `stdin_text`. Throws Error when the interpreter cannot be started.
RunResult run_program(std::string_view program, std::string_view stdin_text, const SandboxConfig& cfg);

/// Runs every test in its own process and temp dir. Empty code yields all
/// no_code. Throws PreconditionError on an empty test list and Error when the
/// interpreter is missing.
TestOutcome execute_tests(std::string_view code, const std::vector<TestCase>& tests,
                          const SandboxConfig& cfg,
                          const std::optional<std::string>& entry_point = std::nullopt);

/// Checks the interpreter can be launched.
void check_interpreter(const SandboxConfig& cfg);

}  // namespace clarifykit::sandbox
