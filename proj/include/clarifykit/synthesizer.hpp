#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clarifykit/corpus.hpp"
#include "clarifykit/gateway.hpp"
#include "clarifykit/templates.hpp"

namespace clarifykit::synth {

enum class Stage { modification, question_gen };

struct PromptTemplate {
  Category category = Category::k1a;
  Stage stage = Stage::modification;
  std::string body;

  /// Throws PreconditionError if required placeholders are missing:
  /// {original_problem} for modification, both problems for question_gen.
  void validate() const;
};

/// Reads `modification_<code>.txt` / `question_gen_<code>.txt`.
PromptTemplate load_template(const TemplateStore& store, Category category, Stage stage);

/// Renders the two synthesis prompts. Mutation prompts are the chain-of-thought
/// preamble followed by the category template; question prompts end with the
/// instruction forbidding references to the original.
class PromptBuilder {
 public:
  explicit PromptBuilder(TemplateStore store = TemplateStore::builtin());

  std::string mutation_prompt(const CodingProblem& problem, Category category) const;
  std::string question_prompt(std::string_view modified, std::string_view original,
                              Category category) const;

  const TemplateStore& store() const { return store_; }

 private:
  TemplateStore store_;
};

std::string build_mutation_prompt(const CodingProblem& problem, Category category);
std::string build_question_prompt(std::string_view modified, std::string_view original,
                                  Category category);

/// A job that could not produce usable output within the attempt cap.
class JobFailure : public Error {
 public:
  using Error::Error;
};

struct SynthOptions {
  std::string model;
  double temperature = gateway::kSynthesisTemperature;
  int max_tokens = 2048;
  /// Generation attempts per stage; each may itself retry at transport level.
  int attempt_cap = 3;
  std::size_t parallelism = 1;
  /// Stop claiming new jobs after this many in one run.
  std::optional<std::size_t> max_jobs;
  std::size_t leak_window = 15;
};

struct StageOutput {
  std::string text;
  std::string digest;
  int attempts = 0;
};

/// Throws JobFailure ("mutation identical to original", empty output, or the
/// gateway's last cause) once the attempt cap is spent.
StageOutput mutate_problem(const CodingProblem& problem, Category category, gateway::Gateway& gw,
                           const PromptBuilder& prompts, const SynthOptions& options);

StageOutput generate_questions(std::string_view modified, std::string_view original,
                               Category category, gateway::Gateway& gw,
                               const PromptBuilder& prompts, const SynthOptions& options);

struct LeakFinding {
  std::string span;
  std::size_t words = 0;
};

/// Longest run of at least `window` consecutive words of `questions` that
/// also occurs in `original` but not in `modified`. Words are lowercased
/// alphanumeric runs.
std::optional<LeakFinding> find_original_leak(std::string_view questions, std::string_view original,
                                              std::string_view modified, std::size_t window = 15);

enum class JobStatus { pending, mutated, questioned, done, failed };

std::string_view to_string(JobStatus s);
JobStatus parse_job_status(std::string_view text);

std::string job_key(std::string_view origin_id, Category category);

struct JournalEntry {
  std::string key;
  std::string origin_id;
  Category category = Category::k1a;
  JobStatus status = JobStatus::pending;
  int attempt = 0;
  std::string digest;
  std::string text;
  std::string error;
};

struct JobState {
  std::string origin_id;
  Category category = Category::k1a;
  JobStatus status = JobStatus::pending;
  int attempts = 0;
  std::string mutation;
  std::string questions;
  std::string error;
};

/// Append-only job journal; one JSON record per line. A torn final line from
/// an interrupted write is ignored on replay.
class Checkpoint {
 public:
  explicit Checkpoint(std::filesystem::path path);

  std::map<std::string, JobState> replay() const;
  void append(const JournalEntry& entry);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::once_flag open_once_;
  std::unique_ptr<io::LineAppender> appender_;
};

struct PipelineReport {
  std::size_t jobs_total = 0;
  std::size_t already_done = 0;
  std::size_t attempted = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t gateway_calls = 0;
  std::vector<std::string> failures;
  std::vector<std::string> leak_warnings;
};

enum class RunScope { mutate_only, questions_only, full };

/// Runs the synthesis jobs (problem x category) recorded in `checkpoint_path`.
/// Jobs already `done` are skipped; failures are recorded per job and never
/// abort the batch.
PipelineReport run_jobs(const Corpus& corpus, const std::vector<Category>& categories,
                        const std::filesystem::path& checkpoint_path, gateway::Gateway& gw,
                        const PromptBuilder& prompts, const SynthOptions& options, RunScope scope);

/// Consolidates every `done` job of the journal, ordered by corpus position
/// then category.
ClarifyDataset dataset_from_checkpoint(const Corpus& corpus,
                                       const std::filesystem::path& checkpoint_path);

/// Full pipeline: run_jobs(full) followed by dataset_from_checkpoint.
ClarifyDataset run_pipeline(const Corpus& corpus, const std::vector<Category>& categories,
                            const std::filesystem::path& checkpoint_path, gateway::Gateway& gw,
                            const PromptBuilder& prompts, const SynthOptions& options,
                            PipelineReport* report = nullptr);

}  // namespace clarifykit::synth
