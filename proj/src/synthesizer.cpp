#include "clarifykit/synthesizer.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <set>
#include <thread>
#include <unordered_set>

#include "json.hpp"
#include "json_util.hpp"

namespace clarifykit::synth {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string template_name(Category c, Stage stage) {
  return std::string(stage == Stage::modification ? "modification_" : "question_gen_") +
         std::string(to_code(c)) + ".txt";
}

void require_base(Category c) {
  if (!is_base_category(c)) {
    throw PreconditionError("synthesis supports categories 1a, 1c, 1p only, got " +
                            std::string(to_code(c)));
  }
}

gateway::ChatRequest synthesis_request(const SynthOptions& options, std::string prompt, int attempt) {
  gateway::ChatRequest req;
  req.model = options.model;
  req.messages = {{gateway::Role::user, std::move(prompt)}};
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  // Distinct seeds per attempt keep a retry from replaying a cached reject.
  req.seed = attempt;
  return req;
}

template <typename Accept>
StageOutput generate(gateway::Gateway& gw, const SynthOptions& options, const std::string& prompt,
                     Accept&& accept) {
  std::string last_cause = "no attempts";
  const int cap = std::max(1, options.attempt_cap);
  for (int attempt = 1; attempt <= cap; ++attempt) {
    try {
      auto resp = gw.complete(synthesis_request(options, prompt, attempt));
      std::string text = trim(resp.content);
      if (auto reason = accept(text)) {
        last_cause = *reason;
        continue;
      }
      return {std::move(text), resp.request_digest, attempt};
    } catch (const gateway::AuthError&) {
      throw;
    } catch (const gateway::GatewayError& e) {
      last_cause = e.what();
    }
  }
  throw JobFailure(last_cause);
}

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || u >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string join_window(const std::vector<std::string>& words, std::size_t start, std::size_t n) {
  std::string out;
  for (std::size_t i = start; i < start + n; ++i) {
    if (i > start) out += ' ';
    out += words[i];
  }
  return out;
}

std::unordered_set<std::string> windows_of(const std::vector<std::string>& words, std::size_t n) {
  std::unordered_set<std::string> out;
  if (words.size() < n) return out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) out.insert(join_window(words, i, n));
  return out;
}

}  // namespace

void PromptTemplate::validate() const {
  const auto names = placeholders(body);
  auto has = [&](std::string_view n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  if (!has("original_problem")) {
    throw PreconditionError("template " + template_name(category, stage) +
                            " lacks {original_problem}");
  }
  if (stage == Stage::question_gen && !has("modified_problem")) {
    throw PreconditionError("template " + template_name(category, stage) +
                            " lacks {modified_problem}");
  }
}

PromptTemplate load_template(const TemplateStore& store, Category category, Stage stage) {
  require_base(category);
  PromptTemplate t{category, stage, store.text(template_name(category, stage))};
  t.validate();
  return t;
}

PromptBuilder::PromptBuilder(TemplateStore store) : store_(std::move(store)) {
  for (auto c : kBaseCategories) {
    load_template(store_, c, Stage::modification);
    load_template(store_, c, Stage::question_gen);
  }
}

std::string PromptBuilder::mutation_prompt(const CodingProblem& problem, Category category) const {
  const auto tmpl = load_template(store_, category, Stage::modification);
  std::string original = problem.description;
  if (problem.starter_code && !problem.starter_code->empty()) {
    original += "\n\nStarter code:\n" + *problem.starter_code;
  }
  return store_.text("cot_preamble.txt") + "\n\n" +
         render(tmpl.body, {{"original_problem", original}}) + "\n";
}

std::string PromptBuilder::question_prompt(std::string_view modified, std::string_view original,
                                           Category category) const {
  if (trim(modified).empty() || trim(original).empty()) {
    throw PreconditionError("question prompt needs non-empty modified and original problems");
  }
  const auto tmpl = load_template(store_, category, Stage::question_gen);
  return render(tmpl.body, {{"original_problem", std::string(original)},
                            {"modified_problem", std::string(modified)}}) +
         "\n\n" + store_.text("question_tail.txt") + "\n";
}

std::string build_mutation_prompt(const CodingProblem& problem, Category category) {
  static const PromptBuilder builder;
  return builder.mutation_prompt(problem, category);
}

std::string build_question_prompt(std::string_view modified, std::string_view original,
                                  Category category) {
  static const PromptBuilder builder;
  return builder.question_prompt(modified, original, category);
}

StageOutput mutate_problem(const CodingProblem& problem, Category category, gateway::Gateway& gw,
                           const PromptBuilder& prompts, const SynthOptions& options) {
  require_base(category);
  const std::string original = trim(problem.description);
  return generate(gw, options, prompts.mutation_prompt(problem, category),
                  [&](const std::string& text) -> std::optional<std::string> {
                    if (text.empty()) return "empty mutation";
                    if (text == original) return "mutation identical to original";
                    return std::nullopt;
                  });
}

StageOutput generate_questions(std::string_view modified, std::string_view original,
                               Category category, gateway::Gateway& gw,
                               const PromptBuilder& prompts, const SynthOptions& options) {
  require_base(category);
  return generate(gw, options, prompts.question_prompt(modified, original, category),
                  [](const std::string& text) -> std::optional<std::string> {
                    if (text.empty()) return "empty questions";
                    return std::nullopt;
                  });
}

std::optional<LeakFinding> find_original_leak(std::string_view questions, std::string_view original,
                                              std::string_view modified, std::size_t window) {
  if (window == 0) return std::nullopt;
  const auto q = words_of(questions);
  const auto orig = windows_of(words_of(original), window);
  const auto mod = windows_of(words_of(modified), window);
  if (q.size() < window || orig.empty()) return std::nullopt;

  std::optional<LeakFinding> best;
  std::size_t run_start = 0;
  std::size_t run_windows = 0;
  auto close_run = [&] {
    if (run_windows == 0) return;
    const std::size_t len = window + run_windows - 1;
    if (!best || len > best->words) best = LeakFinding{join_window(q, run_start, len), len};
    run_windows = 0;
  };
  for (std::size_t i = 0; i + window <= q.size(); ++i) {
    const auto w = join_window(q, i, window);
    if (orig.contains(w) && !mod.contains(w)) {
      if (run_windows == 0) run_start = i;
      ++run_windows;
    } else {
      close_run();
    }
  }
  close_run();
  return best;
}

std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::pending: return "pending";
    case JobStatus::mutated: return "mutated";
    case JobStatus::questioned: return "questioned";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "pending";
}

JobStatus parse_job_status(std::string_view text) {
  for (auto s : {JobStatus::pending, JobStatus::mutated, JobStatus::questioned, JobStatus::done,
                 JobStatus::failed}) {
    if (text == to_string(s)) return s;
  }
  throw ParseError("unknown job status '" + std::string(text) + "'");
}

std::string job_key(std::string_view origin_id, Category category) {
  return std::string(origin_id) + "#" + std::string(to_code(category));
}

// ---------------------------------------------------------------------------

Checkpoint::Checkpoint(std::filesystem::path path) : path_(std::move(path)) {}

std::map<std::string, JobState> Checkpoint::replay() const {
  std::map<std::string, JobState> jobs;
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec)) return jobs;
  std::size_t line_no = 0;
  for (const auto& line : io::read_lines(path_, /*tolerate_torn_tail=*/true)) {
    ++line_no;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("checkpoint " + path_.string() + " line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    const auto key = j.at("key").get<std::string>();
    auto& st = jobs[key];
    st.origin_id = j.at("origin_id").get<std::string>();
    st.category = parse_category(j.at("category").get<std::string>());
    const auto status = parse_job_status(j.at("status").get<std::string>());
    st.attempts += j.value("attempt", 0);
    if (st.status == JobStatus::done) continue;  // done is terminal
    switch (status) {
      case JobStatus::mutated:
        st.mutation = j.value("text", "");
        st.error.clear();
        break;
      case JobStatus::questioned:
        st.questions = j.value("text", "");
        break;
      case JobStatus::failed:
        st.error = j.value("error", "");
        break;
      default:
        break;
    }
    st.status = status;
  }
  return jobs;
}

void Checkpoint::append(const JournalEntry& e) {
  std::call_once(open_once_, [this] { appender_ = std::make_unique<io::LineAppender>(path_); });
  ordered_json j;
  j["key"] = e.key;
  j["origin_id"] = e.origin_id;
  j["category"] = std::string(to_code(e.category));
  j["status"] = std::string(to_string(e.status));
  j["attempt"] = e.attempt;
  j["digest"] = e.digest;
  if (!e.text.empty()) j["text"] = e.text;
  if (!e.error.empty()) j["error"] = e.error;
  appender_->append(detail::dump_line(j));
}

// ---------------------------------------------------------------------------

PipelineReport run_jobs(const Corpus& corpus, const std::vector<Category>& categories,
                        const std::filesystem::path& checkpoint_path, gateway::Gateway& gw,
                        const PromptBuilder& prompts, const SynthOptions& options, RunScope scope) {
  for (auto c : categories) require_base(c);
  Checkpoint checkpoint(checkpoint_path);
  const auto states = checkpoint.replay();

  struct Work {
    const CodingProblem* problem;
    Category category;
    JobState state;
  };
  PipelineReport report;
  std::vector<Work> work;
  for (const auto& p : corpus) {
    for (auto c : categories) {
      ++report.jobs_total;
      JobState st{p.id, c, JobStatus::pending, 0, {}, {}, {}};
      if (auto it = states.find(job_key(p.id, c)); it != states.end()) st = it->second;
      if (st.status == JobStatus::done) {
        ++report.already_done;
        continue;
      }
      // A failed job restarts from its last good stage.
      if (st.status == JobStatus::failed) {
        st.status = st.mutation.empty() ? JobStatus::pending : JobStatus::mutated;
      }
      if (scope == RunScope::mutate_only && st.status != JobStatus::pending) continue;
      if (scope == RunScope::questions_only && st.status == JobStatus::pending) continue;
      work.push_back({&p, c, std::move(st)});
    }
  }

  const std::size_t calls_before = gw.transport_calls();
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;

  auto run_one = [&](Work& w) {
    const auto key = job_key(w.problem->id, w.category);
    auto record = [&](JobStatus s, int attempt, std::string digest, std::string text,
                      std::string error = {}) {
      checkpoint.append({key, w.problem->id, w.category, s, attempt, std::move(digest),
                         std::move(text), std::move(error)});
    };
    try {
      if (w.state.status == JobStatus::pending) {
        auto out = mutate_problem(*w.problem, w.category, gw, prompts, options);
        w.state.mutation = out.text;
        w.state.status = JobStatus::mutated;
        record(JobStatus::mutated, out.attempts, out.digest, out.text);
      }
      if (scope == RunScope::mutate_only) {
        std::lock_guard lock(report_mutex);
        ++report.completed;
        return;
      }
      if (w.state.status == JobStatus::mutated) {
        auto out = generate_questions(w.state.mutation, w.problem->description, w.category, gw,
                                      prompts, options);
        w.state.questions = out.text;
        w.state.status = JobStatus::questioned;
        record(JobStatus::questioned, out.attempts, out.digest, out.text);
      }
      std::optional<LeakFinding> leak;
      if (w.state.status == JobStatus::questioned) {
        leak = find_original_leak(w.state.questions, w.problem->description, w.state.mutation,
                                  options.leak_window);
        record(JobStatus::done, 0, {}, {});
      }
      std::lock_guard lock(report_mutex);
      ++report.completed;
      if (leak) {
        report.leak_warnings.push_back(key + ": questions quote " + std::to_string(leak->words) +
                                       " words of the original: \"" + leak->span + "\"");
      }
    } catch (const JobFailure& e) {
      record(JobStatus::failed, 0, {}, {}, e.what());
      std::lock_guard lock(report_mutex);
      ++report.failed;
      report.failures.push_back(key + ": " + e.what());
    }
  };

  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= work.size()) return;
      if (options.max_jobs && i >= *options.max_jobs) return;
      {
        std::lock_guard lock(report_mutex);
        ++report.attempted;
      }
      run_one(work[i]);
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.parallelism, work.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  report.gateway_calls = gw.transport_calls() - calls_before;
  std::sort(report.failures.begin(), report.failures.end());
  std::sort(report.leak_warnings.begin(), report.leak_warnings.end());
  return report;
}

ClarifyDataset dataset_from_checkpoint(const Corpus& corpus,
                                       const std::filesystem::path& checkpoint_path) {
  const auto states = Checkpoint(checkpoint_path).replay();
  std::vector<Mutation> mutations;
  std::vector<Question> questions;
  for (const auto& p : corpus) {
    for (auto c : kBaseCategories) {
      const auto it = states.find(job_key(p.id, c));
      if (it == states.end() || it->second.status != JobStatus::done) continue;
      mutations.push_back({p.id, it->second.mutation, c});
      questions.push_back({p.id, c, it->second.questions});
    }
  }
  return consolidate(mutations, questions);
}

ClarifyDataset run_pipeline(const Corpus& corpus, const std::vector<Category>& categories,
                            const std::filesystem::path& checkpoint_path, gateway::Gateway& gw,
                            const PromptBuilder& prompts, const SynthOptions& options,
                            PipelineReport* report) {
  auto r = run_jobs(corpus, categories, checkpoint_path, gw, prompts, options, RunScope::full);
  if (report) *report = std::move(r);
  return dataset_from_checkpoint(corpus, checkpoint_path);
}

}  // namespace clarifykit::synth
