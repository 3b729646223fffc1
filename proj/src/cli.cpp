#include "clarifykit/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "clarifykit/analytics.hpp"
#include "clarifykit/config.hpp"
#include "clarifykit/synthesizer.hpp"
#include "json.hpp"

namespace clarifykit::cli {

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Flags {
  std::optional<std::string> config;
  bool dry_run = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mock_script;
  std::optional<std::string> templates_dir;
  std::optional<std::string> cache;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> limit;

  std::optional<std::string> input;
  std::vector<std::string> inputs;
  std::optional<std::string> output;
  std::optional<std::string> format;
  std::optional<std::string> corpus;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::optional<std::string> mixed;
  std::optional<std::string> tasks;
  std::optional<std::string> transcripts;
  std::optional<std::string> baseline;
  std::optional<std::string> report;
  std::optional<std::string> label;
  std::optional<std::string> model;
  std::optional<std::string> judge_model;
  std::optional<std::string> categories;
  std::optional<std::string> exemplars;
  std::optional<std::string> metric;
  std::optional<std::string> rater;

  std::optional<double> ratio;
  std::optional<std::string> strategy;
  std::optional<std::string> mask_mode;

  std::optional<int> shots;
  bool cot = false;
  std::optional<std::string> interpreter;
  std::optional<double> timeout_secs;
  std::optional<std::uint64_t> mem_mib;
  std::optional<std::string> driver_template;
};

std::vector<Category> parse_category_list(const std::string& text) {
  std::vector<Category> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_category(item));
  }
  if (out.empty()) throw PreconditionError("empty category list");
  return out;
}

RunConfig resolve(const Flags& f) {
  RunConfig c = default_config();
  if (f.config) c = load_config(*f.config, std::move(c));
  if (f.seed) c.seed = *f.seed;
  if (f.mock_script) c.mock_script = *f.mock_script;
  if (f.templates_dir) c.paths.templates = *f.templates_dir;
  if (f.cache) c.paths.cache = *f.cache;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.limit) c.limit = *f.limit;
  if (f.corpus) c.paths.corpus = *f.corpus;
  if (f.dataset) c.paths.dataset = *f.dataset;
  if (f.checkpoint) c.paths.checkpoint = *f.checkpoint;
  if (f.mixed) c.paths.mixed = *f.mixed;
  if (f.tasks) c.paths.tasks = *f.tasks;
  if (f.transcripts) c.paths.transcripts = *f.transcripts;
  if (f.exemplars) c.paths.exemplars = *f.exemplars;
  if (f.categories) c.categories = parse_category_list(*f.categories);
  if (f.judge_model) c.judge_model = *f.judge_model;
  if (f.ratio) c.mix.ratio_r = *f.ratio;
  if (f.strategy) c.mix.strategy = mix::parse_strategy(*f.strategy);
  if (f.mask_mode) c.mask_mode = mix::parse_mask_mode(*f.mask_mode);
  if (f.shots) c.prompt.shots = *f.shots;
  if (f.cot) c.prompt.cot = true;
  if (f.interpreter) {
    std::vector<std::string> words;
    std::stringstream ss(*f.interpreter);
    for (std::string w; ss >> w;) words.push_back(w);
    c.sandbox.interpreter_command = words;
  }
  if (f.timeout_secs) {
    c.sandbox.wall_timeout = std::chrono::milliseconds(static_cast<long long>(*f.timeout_secs * 1000));
  }
  if (f.mem_mib) c.sandbox.memory_limit_bytes = *f.mem_mib * 1024 * 1024;
  if (f.driver_template) c.sandbox.driver_template = io::read_file(*f.driver_template);
  c.mix.seed = c.seed;
  c.mix.validate();
  c.prompt.validate();
  c.sandbox.validate();
  if (c.jobs == 0) throw PreconditionError("--jobs must be at least 1");
  return c;
}

/// What a command reads and writes; printed by --dry-run.
struct Plan {
  std::string command;
  std::vector<std::string> reads;
  std::vector<std::string> writes;
  std::vector<std::string> notes;
};

std::string need(const std::string& value, const char* what) {
  if (value.empty()) throw PreconditionError(std::string("no ") + what + " given (flag or config)");
  return value;
}

void check_inputs(const Plan& plan) {
  for (const auto& p : plan.reads) {
    if (!fs::exists(p)) throw PreconditionError("input not found: " + p);
  }
}

void print_plan(const Plan& plan, const RunConfig& cfg, std::ostream& out) {
  ordered_json j;
  j["command"] = plan.command;
  j["reads"] = plan.reads;
  j["writes"] = plan.writes;
  if (!plan.notes.empty()) j["notes"] = plan.notes;
  j["config_digest"] = cfg.digest();
  j["config"] = ordered_json::parse(cfg.canonical_json());
  out << j.dump(2) << "\n";
}

class Context {
 public:
  Context(RunConfig cfg, std::string command) : cfg_(std::move(cfg)), command_(std::move(command)) {}

  const RunConfig& cfg() const { return cfg_; }

  TemplateStore templates() const {
    return cfg_.paths.templates.empty() ? TemplateStore::builtin() : TemplateStore::with_overrides(cfg_.paths.templates);
  }

  std::shared_ptr<gateway::Transport> transport() {
    if (!transport_) {
      if (!cfg_.mock_script.empty()) {
        transport_ = std::make_shared<gateway::MockTransport>(gateway::scripted_responder_file(cfg_.mock_script));
      } else {
        transport_ = gateway::make_http_transport(cfg_.endpoint);
      }
    }
    return transport_;
  }

  std::unique_ptr<gateway::Gateway> make_gateway() {
    gateway::GatewayOptions opts;
    if (!cfg_.paths.cache.empty()) opts.cache_dir = cfg_.paths.cache;
    opts.max_in_flight = std::max<std::size_t>(4, cfg_.jobs);
    return std::make_unique<gateway::Gateway>(transport(), opts);
  }

  void write(const fs::path& path, std::string_view content) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    io::write_file_atomic(path, content);
    write_provenance(path, cfg_, command_);
  }

  void stamp(const fs::path& path) const { write_provenance(path, cfg_, command_); }

 private:
  RunConfig cfg_;
  std::string command_;
  std::shared_ptr<gateway::Transport> transport_;
};

int finish_plan(const Plan& plan, const RunConfig& cfg, bool dry_run, std::ostream& out) {
  check_inputs(plan);
  if (dry_run) {
    print_plan(plan, cfg, out);
    return kExitOk;
  }
  return -1;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  Plan plan{"ingest", {need(f.input.value_or(""), "--input")}, {need(f.output.value_or(cfg.paths.corpus), "output corpus")}, {}};
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;
  const auto format = f.format ? parse_corpus_format(*f.format) : cfg.corpus_format;
  auto corpus = parse_corpus(*f.input, format);
  if (cfg.limit && corpus.size() > *cfg.limit) corpus.resize(*cfg.limit);
  Context ctx(cfg, "ingest");
  ctx.write(plan.writes[0], serialize_corpus(corpus));
  out << "ingested " << corpus.size() << " problems -> " << plan.writes[0] << "\n";
  return kExitOk;
}

int cmd_synth(const Flags& f, const RunConfig& cfg, synth::RunScope scope, const std::string& name,
              std::ostream& out) {
  Plan plan{name, {need(cfg.paths.corpus, "corpus")}, {need(cfg.paths.checkpoint, "checkpoint")}, {}};
  if (!cfg.paths.cache.empty()) plan.writes.push_back(cfg.paths.cache + "/");
  plan.notes.push_back("categories: " + std::to_string(cfg.categories.size()));
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;

  const auto model = need(f.model.value_or(cfg.gen_model), "generator model");
  Context ctx(cfg, name);
  const auto corpus = parse_corpus(cfg.paths.corpus);
  auto gw = ctx.make_gateway();
  synth::PromptBuilder prompts(ctx.templates());
  synth::SynthOptions opts;
  opts.model = model;
  opts.max_tokens = cfg.synth_max_tokens;
  opts.attempt_cap = cfg.attempt_cap;
  opts.parallelism = cfg.jobs;
  opts.max_jobs = cfg.limit;
  opts.leak_window = cfg.leak_window;
  const fs::path checkpoint = cfg.paths.checkpoint;
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  const auto report = synth::run_jobs(corpus, cfg.categories, checkpoint, *gw, prompts, opts, scope);
  ctx.stamp(checkpoint);
  out << name << ": jobs=" << report.jobs_total << " already_done=" << report.already_done
      << " attempted=" << report.attempted << " completed=" << report.completed << " failed=" << report.failed
      << " gateway_calls=" << report.gateway_calls << "\n";
  for (const auto& w : report.leak_warnings) out << "warning: " << w << "\n";
  for (const auto& e : report.failures) out << "failed: " << e << "\n";
  return report.failed == 0 ? kExitOk : kExitFailure;
}

int cmd_consolidate(const Flags& f, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Plan plan{"consolidate",
            {need(cfg.paths.corpus, "corpus"), need(cfg.paths.checkpoint, "checkpoint")},
            {need(f.output.value_or(cfg.paths.dataset), "output dataset")},
            {}};
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;
  const auto corpus = parse_corpus(cfg.paths.corpus);
  const auto dataset = synth::dataset_from_checkpoint(corpus, cfg.paths.checkpoint);
  const auto validation = validate_dataset(dataset);
  for (const auto& v : validation.violations) {
    err << (v.severity == Violation::Severity::error ? "error: " : "warning: ") << "sample " << v.index << " ("
        << v.origin_id << "): " << v.message << "\n";
  }
  if (validation.error_count() > 0) {
    err << "dataset not written: " << validation.error_count() << " error(s)\n";
    return kExitFailure;
  }
  Context(cfg, "consolidate").write(plan.writes[0], serialize_dataset(dataset));
  out << "consolidated " << dataset.samples.size() << " samples";
  for (auto c : kAllCategories) {
    if (auto it = dataset.category_counts.find(c); it != dataset.category_counts.end()) {
      out << " " << to_code(c) << "=" << it->second;
    }
  }
  out << " -> " << plan.writes[0] << "\n";
  return kExitOk;
}

int cmd_mix(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  Plan plan{"mix",
            {need(cfg.paths.corpus, "corpus"), need(cfg.paths.dataset, "dataset")},
            {need(f.output.value_or(cfg.paths.mixed), "output mixed file")},
            {}};
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;
  Context ctx(cfg, "mix");
  const auto system_prompt = ctx.templates().text("system_prompt.txt");
  const auto og = mix::og_records(parse_corpus(cfg.paths.corpus), system_prompt);
  const auto clarify = mix::clarify_records(load_dataset(cfg.paths.dataset), system_prompt);
  auto spec = cfg.mix;
  const auto mixed = mix::mix(og, clarify, spec);
  ctx.write(plan.writes[0], mix::serialize_records(mixed.records, std::nullopt));
  char ratio[32];
  std::snprintf(ratio, sizeof ratio, "%.6f", mixed.achieved_ratio());
  out << "mixed og=" << mixed.og_count << "/" << mixed.og_input << " clarify=" << mixed.clarify_count << "/"
      << mixed.clarify_input << " total=" << mixed.records.size() << " ratio=" << ratio
      << " strategy=" << mix::to_string(spec.strategy) << " seed=" << spec.seed << " -> " << plan.writes[0] << "\n";
  return kExitOk;
}

int cmd_emit(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  const std::string target = need(f.output.value_or(cfg.paths.training), "output training file");
  Plan plan{"emit-train", {need(cfg.paths.mixed, "mixed file")}, {target, target + ".summary.json"}, {}};
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;
  auto mixed = mix::load_mixed(cfg.paths.mixed);
  mixed.spec = cfg.mix;
  if (fs::path(target).has_parent_path()) fs::create_directories(fs::path(target).parent_path());
  const auto summary = mix::emit_training_file(mixed, cfg.mask_mode, target);
  Context ctx(cfg, "emit-train");
  ctx.stamp(target);
  io::write_file_atomic(target + ".summary.json", summary.to_json());
  out << summary.to_text();
  return kExitOk;
}

std::vector<eval::Exemplar> load_exemplars(const RunConfig& cfg, const TemplateStore& tpl) {
  if (!cfg.paths.exemplars.empty()) return eval::parse_exemplars(io::read_file(cfg.paths.exemplars));
  return eval::parse_exemplars(tpl.raw("shot_exemplars.jsonl"));
}

int cmd_evaluate(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  Plan plan{"evaluate",
            {need(cfg.paths.tasks, "tasks")},
            {need(f.output.value_or(cfg.paths.transcripts), "output transcripts")},
            {}};
  if (f.report) plan.writes.push_back(*f.report);
  if (!cfg.paths.exemplars.empty()) plan.reads.push_back(cfg.paths.exemplars);
  plan.notes.push_back("shots=" + std::to_string(cfg.prompt.shots) + " cot=" + (cfg.prompt.cot ? "true" : "false"));
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;

  Context ctx(cfg, "evaluate");
  const auto tpl = ctx.templates();
  const auto tasks = eval::load_tasks(cfg.paths.tasks);
  eval::EvalOptions opts;
  opts.model = need(f.model.value_or(cfg.eval_model), "evaluated model (--model)");
  opts.mode = cfg.prompt;
  opts.judge = {need(cfg.judge_model, "judge model"), cfg.judge_max_tokens};
  opts.sandbox = cfg.sandbox;
  opts.max_tokens = cfg.eval_max_tokens;
  opts.parallelism = cfg.jobs;
  opts.max_tasks = cfg.limit;
  sandbox::check_interpreter(opts.sandbox);
  auto model_gw = ctx.make_gateway();
  auto judge_gw = ctx.make_gateway();
  const fs::path transcripts = plan.writes[0];
  if (transcripts.has_parent_path()) fs::create_directories(transcripts.parent_path());
  const auto results =
      eval::run_eval(tasks, *model_gw, *judge_gw, opts, tpl, load_exemplars(cfg, tpl), transcripts);
  ctx.stamp(transcripts);
  for (const auto& t : results) {
    for (const auto& v : eval::schema_violations(t)) out << "schema: " << v << "\n";
  }
  out << "evaluated " << results.size() << "/" << tasks.size() << " tasks -> " << transcripts.string() << "\n";
  if (!results.empty()) {
    auto report = analytics::compute_metrics(results, opts.model);
    report.templates_digest = tpl.digest();
    if (f.report) ctx.write(*f.report, analytics::serialize_report(report));
    out << analytics::render_report({report}, analytics::ReportFormat::table_text);
  }
  return kExitOk;
}

int cmd_metrics(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  Plan plan{"metrics", {need(cfg.paths.transcripts, "transcripts")}, {}, {}};
  if (f.baseline) plan.reads.push_back(*f.baseline);
  const std::string target = f.output.value_or(cfg.paths.reports);
  if (!target.empty()) plan.writes.push_back(target);
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;

  Context ctx(cfg, "metrics");
  const auto transcripts = eval::load_transcripts(cfg.paths.transcripts);
  for (const auto& t : transcripts) {
    const auto v = eval::schema_violations(t);
    if (!v.empty()) throw PreconditionError(v.front());
  }
  auto report = analytics::compute_metrics(transcripts, f.label.value_or(transcripts.front().model));
  report.templates_digest = ctx.templates().digest();
  std::vector<analytics::MetricsReport> shown;
  if (f.baseline) {
    const auto base_t = eval::load_transcripts(*f.baseline);
    auto base = analytics::compute_metrics(base_t, base_t.front().model);
    base.templates_digest = report.templates_digest;
    analytics::compare_reports(base, report);
    shown.push_back(base);
  }
  shown.push_back(report);
  if (!target.empty()) ctx.write(target, analytics::serialize_report(report));
  const auto format = f.format ? analytics::parse_report_format(*f.format) : analytics::ReportFormat::table_text;
  out << analytics::render_report(shown, format);
  return kExitOk;
}

int cmd_perplexity(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  Plan plan{"perplexity", {need(cfg.paths.dataset, "dataset")}, {}, {}};
  if (f.output) plan.writes.push_back(*f.output);
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;
  const auto stats = analytics::analyze_dataset(load_dataset(cfg.paths.dataset));
  if (f.output) {
    ordered_json j;
    j["n"] = stats.n;
    j["smoothing_k"] = analytics::kDefaultSmoothing;
    j["problem"] = {{"mean_perplexity", stats.problem.mean_perplexity}, {"mean_entropy_bits", stats.problem.mean_entropy}};
    j["answer"] = {{"mean_perplexity", stats.answer.mean_perplexity}, {"mean_entropy_bits", stats.answer.mean_entropy}};
    Context(cfg, "perplexity").write(*f.output, j.dump(2) + "\n");
  }
  out << analytics::render_dataset_stats(stats);
  return kExitOk;
}

int cmd_kappa(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  Plan plan{"kappa", {need(f.input.value_or(""), "--input annotations")}, {}, {}};
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;
  const auto records = analytics::load_annotations(*f.input);
  for (auto m : {analytics::AnnotatedMetric::comm, analytics::AnnotatedMetric::goodq}) {
    std::vector<analytics::AnnotationRecord> subset;
    std::copy_if(records.begin(), records.end(), std::back_inserter(subset),
                 [m](const auto& r) { return r.metric == m; });
    if (subset.empty()) continue;
    char buf[96];
    if (subset.size() < 2) {
      std::snprintf(buf, sizeof buf, "%-6s kappa=n/a (n=%zu)\n", std::string(to_string(m)).c_str(), subset.size());
    } else {
      std::snprintf(buf, sizeof buf, "%-6s kappa=%.3f (n=%zu)\n", std::string(to_string(m)).c_str(),
                    analytics::cohen_kappa(subset), subset.size());
    }
    out << buf;
  }
  return kExitOk;
}

int cmd_annotate(const Flags& f, const RunConfig& cfg, std::istream& in, std::ostream& out) {
  const std::string target = need(f.output.value_or(""), "--output annotations");
  Plan plan{"annotate", {need(cfg.paths.transcripts, "transcripts")}, {target}, {}};
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;

  const auto metric = analytics::parse_annotated_metric(f.metric.value_or("comm"));
  const std::string rater = f.rater.value_or("human");
  std::vector<analytics::AnnotationRecord> records;
  if (fs::exists(target)) records = analytics::load_annotations(target);
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.metric == metric && r.rater == rater) seen.insert(r.sample_id);
  }
  const auto transcripts = eval::load_transcripts(cfg.paths.transcripts);
  Context ctx(cfg, "annotate");
  std::size_t added = 0;
  for (const auto& t : transcripts) {
    if (seen.contains(t.task_id)) continue;
    if (metric == analytics::AnnotatedMetric::goodq && t.comm_label != 1) continue;
    out << "=== " << t.task_id << (t.category ? " [" + std::string(to_code(*t.category)) + "]" : "") << "\n"
        << t.round1_response << "\n"
        << (metric == analytics::AnnotatedMetric::comm ? "Does this response ask a clarifying question?"
                                                       : "Is this a good clarifying question?")
        << " [0/1, s=skip, q=quit]: " << std::flush;
    std::string answer;
    bool quit = false;
    for (;;) {
      if (!std::getline(in, answer)) {
        quit = true;
        break;
      }
      while (!answer.empty() && std::isspace(static_cast<unsigned char>(answer.back()))) answer.pop_back();
      if (answer == "0" || answer == "1" || answer == "s" || answer == "q") break;
      out << "please answer 0, 1, s or q: " << std::flush;
    }
    if (quit || answer == "q") break;
    if (answer == "s") continue;
    analytics::AnnotationRecord r;
    r.sample_id = t.task_id;
    r.metric = metric;
    r.human_label = answer == "1" ? 1 : 0;
    r.llm_label = metric == analytics::AnnotatedMetric::comm ? t.comm_label : t.goodq_label.value_or(0);
    r.rater = rater;
    records.push_back(std::move(r));
    ++added;
    ctx.write(target, analytics::serialize_annotations(records));
  }
  out << "\nannotated " << added << " new sample(s) -> " << target << "\n";
  return kExitOk;
}

int cmd_report(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  Plan plan{"report", f.inputs, {}, {}};
  if (plan.reads.empty()) throw PreconditionError("report needs at least one --input report file");
  if (f.output) plan.writes.push_back(*f.output);
  if (int rc = finish_plan(plan, cfg, f.dry_run, out); rc >= 0) return rc;
  std::vector<analytics::MetricsReport> reports;
  for (const auto& p : f.inputs) reports.push_back(analytics::parse_report(io::read_file(p)));
  const auto format = f.format ? analytics::parse_report_format(*f.format) : analytics::ReportFormat::table_text;
  const auto doc = analytics::render_report(reports, format);
  if (f.output) {
    Context(cfg, "report").write(*f.output, doc);
  } else {
    out << doc;
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clarification-aware code generation toolkit", "clarify"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(tool_version()));

  Flags f;
  app.add_option("--config", f.config, "YAML run configuration");
  app.add_flag("--dry-run", f.dry_run, "Print the resolved plan and exit without writing");
  app.add_option("--seed", f.seed, "Seed recorded in artifacts and used for mixing");
  app.add_option("--mock-script", f.mock_script, "Serve model calls from a scripted responder file");
  app.add_option("--templates-dir", f.templates_dir, "Directory overriding built-in templates");
  app.add_option("--cache", f.cache, "Response cache directory");
  app.add_option("--jobs", f.jobs, "Parallel workers");
  app.add_option("--limit", f.limit, "Cap on items processed in this run");

  auto* ingest = app.add_subcommand("ingest", "Normalize a raw problem corpus");
  ingest->add_option("--input", f.input, "Raw corpus file")->required();
  ingest->add_option("--format", f.format, "canonical or apps");
  ingest->add_option("-o,--output", f.output, "Canonical corpus output");

  auto* mutate = app.add_subcommand("mutate", "Mutate problems into ambiguous, incomplete or inconsistent ones");
  auto* genq = app.add_subcommand("genq", "Generate clarifying questions for mutated problems");
  for (auto* sub : {mutate, genq}) {
    sub->add_option("--corpus", f.corpus, "Canonical corpus");
    sub->add_option("--checkpoint", f.checkpoint, "Job journal");
    sub->add_option("--categories", f.categories, "Comma-separated categories (1a,1c,1p)");
    sub->add_option("--model", f.model, "Generator model");
  }

  auto* consolidate = app.add_subcommand("consolidate", "Join journal results into the clarify dataset");
  consolidate->add_option("--corpus", f.corpus, "Canonical corpus");
  consolidate->add_option("--checkpoint", f.checkpoint, "Job journal");
  consolidate->add_option("-o,--output", f.output, "Dataset output");

  auto* mixc = app.add_subcommand("mix", "Mix standard and clarify records at a target ratio");
  mixc->add_option("--corpus", f.corpus, "Canonical corpus (standard records)");
  mixc->add_option("--dataset", f.dataset, "Clarify dataset");
  mixc->add_option("--ratio", f.ratio, "Clarify share r in [0,1]");
  mixc->add_option("--strategy", f.strategy, "uniform, oversample or downsample");
  mixc->add_option("-o,--output", f.output, "Mixed output");

  auto* emit = app.add_subcommand("emit-train", "Write the training file with loss-mask mode");
  emit->add_option("--mixed", f.mixed, "Mixed dataset");
  emit->add_option("--mask-mode", f.mask_mode, "answer_only or full_sequence");
  emit->add_option("--ratio", f.ratio, "Ratio recorded in the summary");
  emit->add_option("--strategy", f.strategy, "Strategy recorded in the summary");
  emit->add_option("-o,--output", f.output, "Training file output");

  auto* evaluate = app.add_subcommand("evaluate", "Run the two-round clarification benchmark");
  evaluate->add_option("--tasks", f.tasks, "Task file");
  evaluate->add_option("--model", f.model, "Evaluated model");
  evaluate->add_option("--judge-model", f.judge_model, "Judge model");
  evaluate->add_option("--shots", f.shots, "In-context exemplars (0-5)");
  evaluate->add_flag("--cot", f.cot, "Add the step-by-step directive");
  evaluate->add_option("--exemplars", f.exemplars, "Exemplar file replacing the built-in one");
  evaluate->add_option("--interpreter", f.interpreter, "Interpreter command for candidate code");
  evaluate->add_option("--timeout-secs", f.timeout_secs, "Per-test wall-clock limit");
  evaluate->add_option("--mem-mib", f.mem_mib, "Per-test address-space limit");
  evaluate->add_option("--driver-template", f.driver_template, "Driver for function-style tasks");
  evaluate->add_option("--report", f.report, "Also write the metrics report here");
  evaluate->add_option("-o,--output", f.output, "Transcript output");

  auto* metrics = app.add_subcommand("metrics", "Aggregate transcripts into a metrics report");
  metrics->add_option("--transcripts", f.transcripts, "Transcript file");
  metrics->add_option("--baseline", f.baseline, "Baseline transcripts for significance stars");
  metrics->add_option("--label", f.label, "Report label");
  metrics->add_option("--format", f.format, "table_text or csv for the printed table");
  metrics->add_option("-o,--output", f.output, "Report JSON output");

  auto* ppl = app.add_subcommand("perplexity", "Perplexity and entropy of dataset problems and answers");
  ppl->add_option("--dataset", f.dataset, "Clarify dataset");
  ppl->add_option("-o,--output", f.output, "JSON output");

  auto* kappa = app.add_subcommand("kappa", "Agreement between human and judge labels");
  kappa->add_option("--input", f.input, "Annotation file")->required();

  auto* annotate = app.add_subcommand("annotate", "Label transcripts by hand");
  annotate->add_option("--transcripts", f.transcripts, "Transcript file");
  annotate->add_option("--metric", f.metric, "comm or goodq");
  annotate->add_option("--rater", f.rater, "Rater name");
  annotate->add_option("-o,--output", f.output, "Annotation file (resumed if present)");

  auto* report = app.add_subcommand("report", "Render metrics reports as a table or CSV");
  report->add_option("--input", f.inputs, "Report JSON file(s)")->take_all();
  report->add_option("--format", f.format, "table_text or csv");
  report->add_option("-o,--output", f.output, "Rendered output");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const auto cfg = resolve(f);
    if (ingest->parsed()) return cmd_ingest(f, cfg, out);
    if (mutate->parsed()) return cmd_synth(f, cfg, synth::RunScope::mutate_only, "mutate", out);
    if (genq->parsed()) return cmd_synth(f, cfg, synth::RunScope::questions_only, "genq", out);
    if (consolidate->parsed()) return cmd_consolidate(f, cfg, out, err);
    if (mixc->parsed()) return cmd_mix(f, cfg, out);
    if (emit->parsed()) return cmd_emit(f, cfg, out);
    if (evaluate->parsed()) return cmd_evaluate(f, cfg, out);
    if (metrics->parsed()) return cmd_metrics(f, cfg, out);
    if (ppl->parsed()) return cmd_perplexity(f, cfg, out);
    if (kappa->parsed()) return cmd_kappa(f, cfg, out);
    if (annotate->parsed()) return cmd_annotate(f, cfg, in, out);
    if (report->parsed()) return cmd_report(f, cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cin, std::cout, std::cerr);
}

}  // namespace clarifykit::cli
