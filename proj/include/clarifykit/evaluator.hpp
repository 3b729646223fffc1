#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clarifykit/corpus.hpp"
#include "clarifykit/gateway.hpp"
#include "clarifykit/sandbox.hpp"
#include "clarifykit/templates.hpp"

namespace clarifykit::eval {

/// One benchmark item. Tasks without a category are well-specified
/// (HumanEval-style); categorized tasks carry the unmutated description,
/// which only the judges see.
struct EvalTask {
  CodingProblem problem;
  std::optional<Category> category;
  std::optional<std::string> original_problem;

  void validate() const;
};

/// Task file: corpus record fields plus `category` and `original_problem`.
std::vector<EvalTask> parse_tasks(std::string_view text);
std::vector<EvalTask> load_tasks(const std::filesystem::path& path);
std::string serialize_task(const EvalTask& task);

struct PromptMode {
  int shots = 0;
  bool cot = false;

  void validate() const;
};

struct Exemplar {
  enum class Kind { question, code };
  Kind kind = Kind::question;
  std::string problem;
  std::string response;
};

std::vector<Exemplar> parse_exemplars(std::string_view jsonl);
/// Exemplars shipped in templates/shot_exemplars.jsonl.
std::vector<Exemplar> builtin_exemplars();

/// Problem text shown to the model: description, then starter code if any.
std::string problem_text(const CodingProblem& problem);

/// Instruction to ask or code, `shots` exemplars alternating question and
/// code responses (question first), the step-by-step directive iff `cot`,
/// then the problem. Throws PreconditionError if too few exemplars exist.
std::string build_round1_prompt(const EvalTask& task, const PromptMode& mode,
                                const TemplateStore& templates, const std::vector<Exemplar>& exemplars);

/// Problem, the model's question, the judge's answer and the code
/// instruction, in that order, with one fixed layout for every model.
std::string build_round2_prompt(const EvalTask& task, std::string_view question, std::string_view answer,
                                const TemplateStore& templates);

/// First fenced block's content; otherwise the longest run of code-like lines
/// containing at least one statement line (def/class/import/control flow);
/// otherwise nullopt.
std::optional<std::string> extract_code(std::string_view response);

/// Reads a 0/1 judge verdict: the whole reply, or a single distinct
/// standalone 0 or 1 inside it.
std::optional<int> parse_binary_label(std::string_view reply);

/// Judge output unusable after the reprompt.
class JudgeError : public Error {
 public:
  using Error::Error;
};

struct JudgeConfig {
  std::string model;
  int max_tokens = 512;
};

struct JudgeLabel {
  int value = 0;
  /// cache_key of the request whose reply produced the label.
  std::string digest;
};

struct JudgedText {
  std::string text;
  std::string digest;
};

JudgeLabel classify_response(std::string_view response, gateway::Gateway& gw,
                             const JudgeConfig& judge, const TemplateStore& templates);

/// Precondition: non-empty question.
JudgeLabel judge_question_quality(const EvalTask& task, std::string_view question,
                                  gateway::Gateway& gw, const JudgeConfig& judge,
                                  const TemplateStore& templates);

/// Precondition: task.original_problem present.
JudgedText synthesize_answer(const EvalTask& task, std::string_view question, gateway::Gateway& gw,
                             const JudgeConfig& judge, const TemplateStore& templates);

struct EvalTranscript {
  std::string task_id;
  std::string model;
  std::optional<Category> category;
  std::string round1_response;
  int comm_label = 0;
  std::string comm_digest;
  std::optional<int> goodq_label;
  std::optional<std::string> goodq_digest;
  std::optional<std::string> judge_answer;
  std::optional<std::string> answer_digest;
  std::optional<std::string> round2_response;
  std::optional<std::string> extracted_code;
  sandbox::TestOutcome test_outcome;
  std::optional<std::string> error;

  const std::string& governing_response() const {
    return round2_response ? *round2_response : round1_response;
  }
};

std::string serialize_transcript(const EvalTranscript& t);
EvalTranscript parse_transcript(std::string_view line);
std::vector<EvalTranscript> load_transcripts(const std::filesystem::path& path,
                                             bool tolerate_torn_tail = false);
std::string serialize_transcripts(const std::vector<EvalTranscript>& transcripts);

/// Field-presence rule violations; empty when the transcript is well-formed.
std::vector<std::string> schema_violations(const EvalTranscript& t);

struct EvalOptions {
  std::string model;
  PromptMode mode;
  JudgeConfig judge;
  sandbox::SandboxConfig sandbox;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::size_t parallelism = 1;
  /// Stop after this many new tasks in one run.
  std::optional<std::size_t> max_tasks;
};

/// Runs one task through both rounds and the sandbox. Gateway and judge
/// failures are recorded in `error`, keeping labels obtained so far; an
/// empty model reply counts as a response without code. Authentication and
/// sandbox setup failures propagate.
EvalTranscript run_task(const EvalTask& task, gateway::Gateway& model_gw, gateway::Gateway& judge_gw,
                        const EvalOptions& options, const TemplateStore& templates,
                        const std::vector<Exemplar>& exemplars);

/// Evaluates every task not already present in `transcript_path`, appending
/// each transcript as it completes; on return the file holds all transcripts
/// in task order. Returns them in task order.
std::vector<EvalTranscript> run_eval(const std::vector<EvalTask>& tasks, gateway::Gateway& model_gw,
                                     gateway::Gateway& judge_gw, const EvalOptions& options,
                                     const TemplateStore& templates,
                                     const std::vector<Exemplar>& exemplars,
                                     const std::optional<std::filesystem::path>& transcript_path);

}  // namespace clarifykit::eval
