#include "clarifykit/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "json.hpp"
#include "json_util.hpp"

namespace clarifykit::eval {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string join(const std::vector<std::string_view>& lines, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out += '\n';
    out += lines[i];
  }
  return out;
}

bool starts_with_fence(std::string_view line) {
  const auto b = line.find_first_not_of(" \t");
  return b != std::string_view::npos && line.substr(b).starts_with("```");
}

std::optional<std::string> first_fenced_block(std::string_view response) {
  const auto lines = split_lines(response);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!starts_with_fence(lines[i])) continue;
    std::vector<std::string_view> body;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (starts_with_fence(lines[j])) return join(body, 0, body.size());
      const auto line = lines[j];
      const auto rt = line.find_last_not_of(" \t");
      if (rt != std::string_view::npos && rt >= 3 && line.substr(0, rt + 1).ends_with("```")) {
        // Closing fence glued to the last code line.
        body.push_back(line.substr(0, rt + 1 - 3));
        return join(body, 0, body.size());
      }
      body.push_back(line);
    }
    return join(body, 0, body.size());
  }
  return std::nullopt;
}

const std::regex& strong_code_line() {
  static const std::regex re(
      R"(^\s*((def|class)\s+\w+.*:\s*(#.*)?$|(if|elif|for|while|with|try|except|else|finally)\b.*:\s*(#.*)?$|import\s+\w|from\s+[\w.]+\s+import\s|return\b|@\w+))");
  return re;
}

const std::regex& weak_code_line() {
  static const std::regex re(
      R"(^(\s{2,}|\t)\S|^\s*[A-Za-z_][\w.]*(\[[^\]]*\])?\s*([+\-*/%]|//)?=[^=]|^\s*(print|assert|raise|pass|break|continue|yield)\b|^\s*#)");
  return re;
}

std::optional<std::string> heuristic_code(std::string_view response) {
  const auto lines = split_lines(response);
  std::size_t best_start = 0, best_len = 0;
  std::size_t i = 0;
  while (i < lines.size()) {
    auto is_code = [&](std::size_t k) {
      const std::string s(lines[k]);
      return std::regex_search(s, strong_code_line()) || std::regex_search(s, weak_code_line());
    };
    if (!is_code(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool strong = false;
    std::size_t last_code = i;
    while (j < lines.size()) {
      const bool blank = trim(lines[j]).empty();
      if (!blank && !is_code(j)) break;
      if (!blank) {
        last_code = j;
        if (std::regex_search(std::string(lines[j]), strong_code_line())) strong = true;
      }
      ++j;
    }
    const std::size_t len = last_code - i + 1;
    if (strong && len > best_len) {
      best_start = i;
      best_len = len;
    }
    i = j;
  }
  if (best_len == 0) return std::nullopt;
  return join(lines, best_start, best_start + best_len);
}

gateway::ChatRequest judge_request(const JudgeConfig& judge, std::string prompt) {
  gateway::ChatRequest req;
  req.model = judge.model;
  req.messages = {{gateway::Role::user, std::move(prompt)}};
  req.temperature = gateway::kJudgeTemperature;
  req.max_tokens = judge.max_tokens;
  return req;
}

JudgeLabel binary_judge(std::string prompt, gateway::Gateway& gw, const JudgeConfig& judge,
                        const TemplateStore& templates, std::string_view what) {
  auto req = judge_request(judge, std::move(prompt));
  auto resp = gw.complete(req);
  if (auto v = parse_binary_label(resp.content)) return {*v, resp.request_digest};
  // One reprompt, then give up.
  req.messages.push_back({gateway::Role::assistant, resp.content});
  req.messages.push_back({gateway::Role::user, templates.text("judge_reprompt.txt")});
  auto retry = gw.complete(req);
  if (auto v = parse_binary_label(retry.content)) return {*v, retry.request_digest};
  throw JudgeError(std::string(what) + " judge output is not 0 or 1: \"" +
                   trim(retry.content).substr(0, 80) + "\"");
}

std::string category_json_text(const std::optional<Category>& c) {
  return c ? std::string(to_code(*c)) : std::string();
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json();
}

}  // namespace

// ---------------------------------------------------------------------------

void EvalTask::validate() const {
  check_problem(problem, 0);
  if (category && !original_problem) {
    throw PreconditionError("task " + problem.id + ": categorized task lacks original_problem");
  }
  if (problem.test_cases.empty()) {
    throw PreconditionError("task " + problem.id + ": no test cases");
  }
}

std::vector<EvalTask> parse_tasks(std::string_view text) {
  std::vector<EvalTask> tasks;
  std::size_t index = 0;
  std::size_t start = 0;
  std::set<std::string> ids;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ++index;
    EvalTask task;
    task.problem = parse_problem_line(line, index);
    const auto j = json::parse(line);
    if (auto c = j.find("category"); c != j.end() && c->is_string()) {
      task.category = parse_category(c->get<std::string>());
    }
    if (auto o = j.find("original_problem"); o != j.end() && o->is_string()) {
      task.original_problem = o->get<std::string>();
    }
    try {
      task.validate();
    } catch (const PreconditionError& e) {
      throw ParseError("record " + std::to_string(index) + ": " + e.what());
    }
    if (!ids.insert(task.problem.id).second) {
      throw ParseError("duplicate ids: " + task.problem.id);
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

std::vector<EvalTask> load_tasks(const std::filesystem::path& path) {
  return parse_tasks(io::read_file(path));
}

std::string serialize_task(const EvalTask& task) {
  auto j = ordered_json::parse(serialize_problem(task.problem));
  j["category"] = task.category ? json(std::string(to_code(*task.category))) : json();
  j["original_problem"] = opt(task.original_problem);
  return detail::dump_line(j);
}

void PromptMode::validate() const {
  if (shots < 0 || shots > 5) throw PreconditionError("shots must be within 0..5");
}

std::vector<Exemplar> parse_exemplars(std::string_view jsonl) {
  std::vector<Exemplar> out;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    auto nl = jsonl.find('\n', start);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const auto line = jsonl.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "question" && kind != "code") throw ParseError("exemplar kind must be question or code");
      out.push_back({kind == "question" ? Exemplar::Kind::question : Exemplar::Kind::code,
                     j.at("problem").get<std::string>(), j.at("response").get<std::string>()});
    } catch (const json::exception& e) {
      throw ParseError(std::string("exemplar: ") + e.what());
    }
  }
  return out;
}

std::vector<Exemplar> builtin_exemplars() {
  return parse_exemplars(TemplateStore::builtin().raw("shot_exemplars.jsonl"));
}

std::string problem_text(const CodingProblem& problem) {
  std::string text = trim(problem.description);
  if (problem.starter_code && !trim(*problem.starter_code).empty() &&
      problem.description.find(trim(*problem.starter_code)) == std::string::npos) {
    text += "\n\n" + trim(*problem.starter_code);
  }
  return text;
}

std::string build_round1_prompt(const EvalTask& task, const PromptMode& mode,
                                const TemplateStore& templates, const std::vector<Exemplar>& exemplars) {
  mode.validate();
  std::string out = templates.text("round1_instruction.txt");
  if (mode.shots > 0) {
    std::vector<const Exemplar*> questions, codes;
    for (const auto& e : exemplars) {
      (e.kind == Exemplar::Kind::question ? questions : codes).push_back(&e);
    }
    std::vector<const Exemplar*> picked;
    std::size_t qi = 0, ci = 0;
    for (int s = 0; s < mode.shots; ++s) {
      const bool want_question = s % 2 == 0;
      auto& pool = want_question ? questions : codes;
      auto& idx = want_question ? qi : ci;
      if (idx >= pool.size()) {
        throw PreconditionError("not enough " + std::string(want_question ? "question" : "code") +
                                " exemplars for " + std::to_string(mode.shots) + " shots");
      }
      picked.push_back(pool[idx++]);
    }
    out += "\n\n### Examples";
    for (std::size_t k = 0; k < picked.size(); ++k) {
      out += "\n\nExample " + std::to_string(k + 1) + "\nProblem:\n" + trim(picked[k]->problem) +
             "\nResponse:\n" + trim(picked[k]->response);
    }
  }
  if (mode.cot) out += "\n\n" + templates.text("round1_cot.txt");
  out += "\n\n### Problem\n" + problem_text(task.problem) + "\n";
  return out;
}

std::string build_round2_prompt(const EvalTask& task, std::string_view question, std::string_view answer,
                                const TemplateStore& templates) {
  if (trim(question).empty() || trim(answer).empty()) {
    throw PreconditionError("round-2 prompt needs a non-empty question and answer");
  }
  return render(templates.text("round2.txt"), {{"problem", problem_text(task.problem)},
                                               {"question", trim(question)},
                                               {"answer", trim(answer)}}) +
         "\n";
}

std::optional<std::string> extract_code(std::string_view response) {
  if (auto block = first_fenced_block(response)) return block;
  return heuristic_code(response);
}

std::optional<int> parse_binary_label(std::string_view reply) {
  std::string t = trim(reply);
  while (!t.empty() && (t.back() == '.' || t.back() == '"' || t.back() == '\'')) t.pop_back();
  while (!t.empty() && (t.front() == '"' || t.front() == '\'')) t.erase(t.begin());
  if (t == "0") return 0;
  if (t == "1") return 1;
  std::set<int> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != '0' && t[i] != '1') continue;
    const bool left_ok = i == 0 || !(std::isalnum(static_cast<unsigned char>(t[i - 1])) || t[i - 1] == '.');
    const bool right_ok = i + 1 == t.size() ||
                          !(std::isalnum(static_cast<unsigned char>(t[i + 1])) ||
                            (t[i + 1] == '.' && i + 2 < t.size() && std::isdigit(static_cast<unsigned char>(t[i + 2]))));
    if (left_ok && right_ok) seen.insert(t[i] - '0');
  }
  if (seen.size() == 1) return *seen.begin();
  return std::nullopt;
}

JudgeLabel classify_response(std::string_view response, gateway::Gateway& gw, const JudgeConfig& judge,
                             const TemplateStore& templates) {
  return binary_judge(render(templates.text("judge_comm.txt"), {{"response", std::string(response)}}) + "\n",
                      gw, judge, templates, "communication");
}

JudgeLabel judge_question_quality(const EvalTask& task, std::string_view question, gateway::Gateway& gw,
                                  const JudgeConfig& judge, const TemplateStore& templates) {
  if (trim(question).empty()) throw PreconditionError("question-quality judge needs a non-empty question");
  const std::string original = task.original_problem.value_or(problem_text(task.problem));
  return binary_judge(render(templates.text("judge_goodq.txt"), {{"problem", problem_text(task.problem)},
                                                                 {"original_problem", original},
                                                                 {"question", trim(question)}}) +
                          "\n",
                      gw, judge, templates, "question-quality");
}

JudgedText synthesize_answer(const EvalTask& task, std::string_view question, gateway::Gateway& gw,
                             const JudgeConfig& judge, const TemplateStore& templates) {
  if (!task.original_problem) {
    throw PreconditionError("answer synthesis needs the task's original problem");
  }
  if (trim(question).empty()) throw PreconditionError("answer synthesis needs a non-empty question");
  auto resp = gw.complete(judge_request(
      judge, render(templates.text("judge_answer.txt"), {{"problem", problem_text(task.problem)},
                                                         {"original_problem", *task.original_problem},
                                                         {"question", trim(question)}}) +
                 "\n"));
  return {trim(resp.content), resp.request_digest};
}

// ---------------------------------------------------------------------------

std::string serialize_transcript(const EvalTranscript& t) {
  ordered_json j;
  j["task_id"] = t.task_id;
  j["model"] = t.model;
  j["category"] = t.category ? json(category_json_text(t.category)) : json();
  j["round1_response"] = t.round1_response;
  j["comm_label"] = t.comm_label;
  j["comm_judge_digest"] = t.comm_digest;
  j["goodq_label"] = opt(t.goodq_label);
  j["goodq_judge_digest"] = opt(t.goodq_digest);
  j["judge_answer"] = opt(t.judge_answer);
  j["answer_judge_digest"] = opt(t.answer_digest);
  j["round2_response"] = opt(t.round2_response);
  j["extracted_code"] = opt(t.extracted_code);
  ordered_json outcome;
  json per = json::array();
  for (auto r : t.test_outcome.per_test) per.push_back(std::string(sandbox::to_string(r)));
  outcome["per_test"] = std::move(per);
  outcome["passed"] = t.test_outcome.passed;
  outcome["total"] = t.test_outcome.total;
  j["test_outcome"] = std::move(outcome);
  j["error"] = opt(t.error);
  return detail::dump_line(j);
}

EvalTranscript parse_transcript(std::string_view line) {
  EvalTranscript t;
  try {
    const auto j = json::parse(line);
    auto opt_str = [&](const char* k) -> std::optional<std::string> {
      const auto it = j.find(k);
      if (it == j.end() || it->is_null()) return std::nullopt;
      return it->get<std::string>();
    };
    t.task_id = j.at("task_id").get<std::string>();
    t.model = j.value("model", "");
    if (auto c = opt_str("category")) t.category = parse_category(*c);
    t.round1_response = j.at("round1_response").get<std::string>();
    t.comm_label = j.at("comm_label").get<int>();
    t.comm_digest = j.value("comm_judge_digest", "");
    if (auto g = j.find("goodq_label"); g != j.end() && !g->is_null()) t.goodq_label = g->get<int>();
    t.goodq_digest = opt_str("goodq_judge_digest");
    t.judge_answer = opt_str("judge_answer");
    t.answer_digest = opt_str("answer_judge_digest");
    t.round2_response = opt_str("round2_response");
    t.extracted_code = opt_str("extracted_code");
    const auto& o = j.at("test_outcome");
    std::vector<sandbox::TestResult> per;
    for (const auto& r : o.at("per_test")) per.push_back(sandbox::parse_test_result(r.get<std::string>()));
    t.test_outcome = sandbox::TestOutcome::from(std::move(per));
    if (o.at("passed").get<std::size_t>() != t.test_outcome.passed ||
        o.at("total").get<std::size_t>() != t.test_outcome.total) {
      throw ParseError("transcript " + t.task_id + ": passed/total disagree with per_test");
    }
    t.error = opt_str("error");
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed transcript: ") + e.what());
  }
  return t;
}

std::vector<EvalTranscript> load_transcripts(const std::filesystem::path& path, bool tolerate_torn_tail) {
  std::vector<EvalTranscript> out;
  for (const auto& line : io::read_lines(path, tolerate_torn_tail)) out.push_back(parse_transcript(line));
  return out;
}

std::string serialize_transcripts(const std::vector<EvalTranscript>& transcripts) {
  std::string out;
  for (const auto& t : transcripts) {
    out += serialize_transcript(t);
    out += '\n';
  }
  return out;
}

std::vector<std::string> schema_violations(const EvalTranscript& t) {
  std::vector<std::string> v;
  const std::string id = "transcript " + t.task_id + ": ";
  if (t.comm_label != 0 && t.comm_label != 1) v.push_back(id + "comm_label must be 0 or 1");
  const bool asked = t.comm_label == 1;
  if (t.error) {
    // A failed step leaves later fields absent; only consistency is checked.
    if (t.goodq_label && !asked) v.push_back(id + "goodq_label requires comm_label = 1");
    if (t.extracted_code || t.test_outcome.passed > 0) v.push_back(id + "failed transcript ran tests");
    if (t.test_outcome.total != t.test_outcome.per_test.size()) v.push_back(id + "total differs from per_test size");
    return v;
  }
  if (t.goodq_label.has_value() != asked) v.push_back(id + "goodq_label present iff comm_label = 1");
  if (t.goodq_label && *t.goodq_label != 0 && *t.goodq_label != 1) v.push_back(id + "goodq_label must be 0 or 1");
  if (t.goodq_label.has_value() != t.goodq_digest.has_value()) v.push_back(id + "goodq label lacks its judge digest");
  if (t.judge_answer.has_value() != asked) v.push_back(id + "judge_answer present iff comm_label = 1");
  if (t.round2_response.has_value() != asked) v.push_back(id + "round2_response present iff comm_label = 1");
  if (t.judge_answer.has_value() != t.answer_digest.has_value()) v.push_back(id + "judge answer lacks its digest");
  const bool found = extract_code(t.governing_response()).has_value();
  if (t.extracted_code.has_value() != found) {
    v.push_back(id + "extracted_code present iff the governing response has code");
  }
  if (!t.extracted_code) {
    const bool all_no_code = std::all_of(t.test_outcome.per_test.begin(), t.test_outcome.per_test.end(),
                                         [](auto r) { return r == sandbox::TestResult::no_code; });
    if (!all_no_code) v.push_back(id + "tests ran without extracted code");
  }
  if (t.test_outcome.passed > t.test_outcome.total) v.push_back(id + "passed exceeds total");
  if (t.test_outcome.total != t.test_outcome.per_test.size()) v.push_back(id + "total differs from per_test size");
  if (t.comm_digest.empty() && !trim(t.round1_response).empty() && !t.error) {
    v.push_back(id + "comm label lacks its judge digest");
  }
  return v;
}

// ---------------------------------------------------------------------------

EvalTranscript run_task(const EvalTask& task, gateway::Gateway& model_gw, gateway::Gateway& judge_gw,
                        const EvalOptions& options, const TemplateStore& templates,
                        const std::vector<Exemplar>& exemplars) {
  EvalTranscript t;
  t.task_id = task.problem.id;
  t.model = options.model;
  t.category = task.category;
  const std::size_t n_tests = task.problem.test_cases.size();
  t.test_outcome = sandbox::TestOutcome::no_code(n_tests);

  auto model_request = [&](std::string prompt) {
    gateway::ChatRequest req;
    req.model = options.model;
    req.messages = {{gateway::Role::user, std::move(prompt)}};
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    return req;
  };

  try {
    t.round1_response = model_gw.complete(model_request(build_round1_prompt(task, options.mode, templates, exemplars))).content;
  } catch (const gateway::AuthError&) {
    throw;
  } catch (const gateway::GatewayError& e) {
    // The gateway retries empty replies; a model that keeps answering with
    // nothing is a degenerate response, not a failed call.
    if (e.last_cause() != "empty content") t.error = std::string("round 1: ") + e.what();
    return t;
  }

  if (trim(t.round1_response).empty()) {
    // Degenerate reply: no question, no code.
    return t;
  }

  try {
    const auto comm = classify_response(t.round1_response, judge_gw, options.judge, templates);
    t.comm_label = comm.value;
    t.comm_digest = comm.digest;
    if (t.comm_label == 1) {
      const auto goodq = judge_question_quality(task, t.round1_response, judge_gw, options.judge, templates);
      t.goodq_label = goodq.value;
      t.goodq_digest = goodq.digest;
      EvalTask with_original = task;
      if (!with_original.original_problem) with_original.original_problem = problem_text(task.problem);
      const auto answer = synthesize_answer(with_original, t.round1_response, judge_gw, options.judge, templates);
      t.judge_answer = answer.text;
      t.answer_digest = answer.digest;
      try {
        t.round2_response =
            model_gw.complete(model_request(build_round2_prompt(task, t.round1_response, answer.text, templates)))
                .content;
      } catch (const gateway::GatewayError& e) {
        if (dynamic_cast<const gateway::AuthError*>(&e) || e.last_cause() != "empty content") throw;
        t.round2_response = "";
      }
    }
  } catch (const gateway::AuthError&) {
    throw;
  } catch (const Error& e) {
    // Labels obtained before the failure are kept; nothing is executed.
    t.error = std::string("judging: ") + e.what();
    return t;
  }

  t.extracted_code = extract_code(t.governing_response());
  if (t.extracted_code) {
    t.test_outcome = sandbox::execute_tests(*t.extracted_code, task.problem.test_cases, options.sandbox,
                                            task.problem.entry_point);
  }
  return t;
}

std::vector<EvalTranscript> run_eval(const std::vector<EvalTask>& tasks, gateway::Gateway& model_gw,
                                     gateway::Gateway& judge_gw, const EvalOptions& options,
                                     const TemplateStore& templates, const std::vector<Exemplar>& exemplars,
                                     const std::optional<std::filesystem::path>& transcript_path) {
  options.mode.validate();
  options.sandbox.validate();
  for (const auto& task : tasks) task.validate();

  std::map<std::string, EvalTranscript> done;
  if (transcript_path && std::filesystem::exists(*transcript_path)) {
    for (auto& t : load_transcripts(*transcript_path, /*tolerate_torn_tail=*/true)) {
      if (t.model == options.model) done.emplace(t.task_id, std::move(t));
    }
  }
  std::vector<const EvalTask*> todo;
  for (const auto& task : tasks) {
    if (!done.contains(task.problem.id)) todo.push_back(&task);
  }
  if (options.max_tasks && todo.size() > *options.max_tasks) todo.resize(*options.max_tasks);

  std::unique_ptr<io::LineAppender> journal;
  if (transcript_path) {
    // Rewrite the surviving transcripts first so a torn tail is dropped.
    std::vector<EvalTranscript> kept;
    for (const auto& task : tasks) {
      if (auto it = done.find(task.problem.id); it != done.end()) kept.push_back(it->second);
    }
    io::write_file_atomic(*transcript_path, serialize_transcripts(kept));
    journal = std::make_unique<io::LineAppender>(*transcript_path);
  }

  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= todo.size()) return;
      try {
        auto t = run_task(*todo[i], model_gw, judge_gw, options, templates, exemplars);
        if (journal) journal->append(serialize_transcript(t));
        std::lock_guard lock(mutex);
        done.emplace(t.task_id, std::move(t));
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!fatal) fatal = std::current_exception();
        next = todo.size();
        return;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.parallelism, todo.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  std::vector<EvalTranscript> ordered;
  for (const auto& task : tasks) {
    if (auto it = done.find(task.problem.id); it != done.end()) ordered.push_back(it->second);
  }
  if (transcript_path) io::write_file_atomic(*transcript_path, serialize_transcripts(ordered));
  return ordered;
}

}  // namespace clarifykit::eval
