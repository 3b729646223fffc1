// One line per acceptance criterion; exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "clarifykit/analytics.hpp"
#include "clarifykit/evaluator.hpp"
#include "clarifykit/io.hpp"
#include "clarifykit/mixer.hpp"
#include "clarifykit/sandbox.hpp"
#include "clarifykit/synthesizer.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace clarifykit;
using namespace std::chrono_literals;

namespace {

struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

gateway::GatewayOptions no_sleep() {
  gateway::GatewayOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  return o;
}

std::vector<mix::TrainingRecord> side(std::size_t n, mix::RecordSource src) {
  std::vector<mix::TrainingRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    mix::TrainingRecord r{"p" + std::to_string(i), "c" + std::to_string(i), src, std::nullopt,
                          mix::MaskMode::answer_only};
    if (src == mix::RecordSource::clarify) r.category = Category::k1a;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------

void mixing(Check& c) {
  c.expect(std::abs(mix::compute_ratio(29896, 10000) - 0.7494) <= 1e-4,
           "compute_ratio(29896, 10000) = " + fmt(mix::compute_ratio(29896, 10000)));
  const auto m = mix::mix(side(100, mix::RecordSource::og), side(100, mix::RecordSource::clarify),
                          {0.2, mix::Strategy::downsample, 0});
  c.expect(m.clarify_count == 25, "downsample to 0.2 kept " + std::to_string(m.clarify_count) + " clarify records");
  std::mt19937_64 rng(42);
  std::size_t bad = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t a = 1 + rng() % 400, b = 1 + rng() % 400;
    const double r = 0.01 + 0.98 * double(rng() % 10000) / 10000.0;
    const auto strategy = rng() % 2 ? mix::Strategy::downsample : mix::Strategy::oversample;
    const auto out = mix::mix(side(a, mix::RecordSource::og), side(b, mix::RecordSource::clarify), {r, strategy, rng()});
    if (std::abs(out.achieved_ratio() - r) > 1.0 / double(out.records.size())) ++bad;
  }
  c.expect(bad == 0, std::to_string(bad) + " of 200 random specs missed the ratio bound");
}

void determinism(Check& c) {
  testsupport::TempDir dir;
  const auto corpus = testsupport::synthetic_corpus(40, 17);
  const std::vector<Category> cats(kBaseCategories.begin(), kBaseCategories.end());
  auto transport = std::make_shared<gateway::MockTransport>(testsupport::synthesis_responder());
  gateway::Gateway gw(transport, no_sleep());
  synth::PromptBuilder prompts;
  synth::SynthOptions opts;
  opts.model = "gen";
  opts.parallelism = 4;

  synth::run_jobs(corpus, cats, dir / "whole.jsonl", gw, prompts, opts, synth::RunScope::mutate_only);
  synth::run_jobs(corpus, cats, dir / "whole.jsonl", gw, prompts, opts, synth::RunScope::questions_only);
  const auto whole = serialize_dataset(synth::dataset_from_checkpoint(corpus, dir / "whole.jsonl"));

  const std::size_t half = corpus.size() * cats.size() / 2;
  opts.max_jobs = half;
  synth::run_jobs(corpus, cats, dir / "split.jsonl", gw, prompts, opts, synth::RunScope::mutate_only);
  {
    // A crash mid-write leaves a torn line behind.
    std::ofstream tail(dir / "split.jsonl", std::ios::app);
    tail << R"({"key":"P0039#1p","origin_id":"P00)";
  }
  opts.max_jobs.reset();
  const auto m = synth::run_jobs(corpus, cats, dir / "split.jsonl", gw, prompts, opts, synth::RunScope::mutate_only);
  const auto q = synth::run_jobs(corpus, cats, dir / "split.jsonl", gw, prompts, opts, synth::RunScope::questions_only);
  c.expect(m.already_done + m.completed + q.completed > 0 && m.failed == 0 && q.failed == 0, "resumed run had failures");
  const auto resumed = serialize_dataset(synth::dataset_from_checkpoint(corpus, dir / "split.jsonl"));
  c.expect(resumed == whole, "resumed dataset differs from the uninterrupted one");

  const auto dataset = parse_dataset_text(whole);
  const auto prompt = TemplateStore::builtin().text("system_prompt.txt");
  std::vector<std::string> hashes;
  for (int run = 0; run < 2; ++run) {
    const auto mixed = mix::mix(mix::og_records(corpus, prompt), mix::clarify_records(dataset, prompt),
                                {0.6, mix::Strategy::downsample, 1234});
    const auto path = dir / ("mixed" + std::to_string(run) + ".jsonl");
    mix::write_mixed(path, mixed);
    const auto summary = mix::emit_training_file(mix::load_mixed(path), mix::MaskMode::answer_only,
                                                 dir / ("train" + std::to_string(run) + ".jsonl"));
    hashes.push_back(io::sha256_hex(io::read_file(path)) + summary.file_sha256);
  }
  c.expect(hashes[0] == hashes[1], "mix/emit file hashes differ between runs with the same seed");
}

void prompts(Check& c) {
  CodingProblem p;
  p.id = "x";
  p.description = "Return the largest value in xs.";
  const std::vector<std::pair<Category, std::string>> want = {
      {Category::k1a, "Rewrite to introduce ambiguity by creating multiple valid interpretations or leaving key "
                      "details unspecified."},
      {Category::k1c, "Rewrite to introduce inconsistency by incorporating conflicting statements."},
      {Category::k1p, "Rewrite to create incompleteness by omitting key concepts or conditions essential for solving."}};
  for (const auto& [cat, text] : want) {
    const auto mp = synth::build_mutation_prompt(p, cat);
    c.expect(mp.find(text) != std::string::npos, std::string(to_code(cat)) + " mutation prompt lacks its instruction");
    c.expect(mp.find(p.description) != std::string::npos, "mutation prompt lacks the problem");
    const auto qp = synth::build_question_prompt("MOD", p.description, cat);
    c.expect(qp.find("When generating these questions, do not reference or mention the original problem "
                     "description in any way.") != std::string::npos,
             std::string(to_code(cat)) + " question prompt lacks the tail instruction");
  }
}

void evaluator(Check& c) {
  testsupport::TempDir dir;
  const auto run = testsupport::run_eval_fixture(dir.path());
  for (const auto& t : run.transcripts) {
    for (const auto& v : eval::schema_violations(t)) c.expect(false, v);
  }
  const auto golden = testsupport::data_dir() / "golden";
  if (const char* update = std::getenv("CLARIFY_UPDATE_GOLDENS"); update && std::string(update) == "1") {
    std::filesystem::create_directories(golden);
    io::write_file_atomic(golden / "eval_transcripts.jsonl", run.transcripts_text);
    io::write_file_atomic(golden / "eval_report.json", run.report_text);
    io::write_file_atomic(golden / "eval_report.txt", run.table_text);
  }
  c.expect(run.transcripts_text == testsupport::read_text(golden / "eval_transcripts.jsonl"),
           "transcripts differ from the golden file");
  c.expect(run.report_text == testsupport::read_text(golden / "eval_report.json"),
           "metrics report differs from the golden file");
  c.expect(run.table_text == testsupport::read_text(golden / "eval_report.txt"),
           "rendered table differs from the golden file");
}

void sandbox_check(Check& c) {
  const auto corpus = parse_corpus(testsupport::data_path("sandbox_corpus.jsonl"));
  std::map<std::string, std::string> mutants;
  for (const auto& line : io::read_lines(testsupport::data_path("sandbox_mutants.jsonl"))) {
    const auto j = nlohmann::json::parse(line);
    mutants[j.at("id").get<std::string>()] = j.at("code").get<std::string>();
  }
  c.expect(corpus.size() == 20, "fixture corpus has " + std::to_string(corpus.size()) + " problems");
  sandbox::SandboxConfig cfg;
  cfg.wall_timeout = 2000ms;
  for (const auto& p : corpus) {
    if (!sandbox::execute_tests(p.solutions.front(), p.test_cases, cfg, p.entry_point).all_passed()) {
      c.expect(false, p.id + ": reference solution failed");
    }
    const auto it = mutants.find(p.id);
    if (it == mutants.end()) {
      c.expect(false, p.id + ": no mutant");
      continue;
    }
    const auto o = sandbox::execute_tests(it->second, p.test_cases, cfg, p.entry_point);
    c.expect(o.passed < o.total, p.id + ": mutant passed every test");
  }
  cfg.wall_timeout = 1000ms;
  const auto start = std::chrono::steady_clock::now();
  const auto loop = sandbox::execute_tests("while True:\n    pass\n", {{"", "", Comparison::exact()}}, cfg);
  const auto took = std::chrono::steady_clock::now() - start;
  c.expect(loop.per_test == std::vector<sandbox::TestResult>{sandbox::TestResult::timeout}, "loop not reported as timeout");
  c.expect(took < 2 * cfg.wall_timeout, "loop took " +
                                            std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(took).count()) +
                                            " ms against a 1000 ms limit");
}

void metrics_oracle(Check& c) {
  std::mt19937_64 rng(5);
  auto random_transcript = [&](int i) {
    eval::EvalTranscript t;
    t.task_id = "t" + std::to_string(i);
    if (const auto k = rng() % 7; k < 6) t.category = kAllCategories[k];
    t.comm_label = int(rng() % 2);
    if (t.comm_label) t.goodq_label = int(rng() % 2);
    std::vector<sandbox::TestResult> r(1 + rng() % 4);
    for (auto& x : r) x = rng() % 2 ? sandbox::TestResult::pass : sandbox::TestResult::runtime_error;
    t.test_outcome = sandbox::TestOutcome::from(r);
    return t;
  };
  std::vector<eval::EvalTranscript> ts;
  for (int i = 0; i < 50; ++i) ts.push_back(random_transcript(i));
  const auto rep = analytics::compute_metrics(ts);
  // Brute force with exact integer counts, then compare as fractions.
  long comm = 0, goodq = 0, pass = 0;
  long double frac = 0;
  for (const auto& t : ts) {
    comm += t.comm_label;
    goodq += t.goodq_label.value_or(0);
    pass += t.test_outcome.passed == t.test_outcome.total ? 1 : 0;
    frac += static_cast<long double>(t.test_outcome.passed) / t.test_outcome.total;
  }
  c.expect(rep.overall.comm_count == std::size_t(comm) && rep.overall.comm_rate == double(comm) / 50.0, "comm_rate");
  c.expect(rep.overall.goodq_count == std::size_t(goodq) && rep.overall.goodq_rate == double(goodq) / 50.0,
           "goodq_rate");
  c.expect(rep.overall.pass_count == std::size_t(pass) && rep.overall.pass_at_1 == double(pass) / 50.0, "pass_at_1");
  c.expect(std::abs(rep.overall.test_pass_rate - double(frac / 50)) < 1e-12, "test_pass_rate");
  std::size_t violations = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<eval::EvalTranscript> fuzz;
    for (int k = 0, n = 1 + int(rng() % 20); k < n; ++k) fuzz.push_back(random_transcript(k));
    const auto r = analytics::compute_metrics(fuzz);
    if (r.overall.goodq_rate > r.overall.comm_rate) ++violations;
    for (const auto& [_, cell] : r.per_category) violations += cell.goodq_rate > cell.comm_rate;
  }
  c.expect(violations == 0, std::to_string(violations) + " fuzzed inputs had goodq_rate > comm_rate");
}

void significance(Check& c) {
  const auto strong = analytics::significance_test(90, 100, 10, 100);
  c.expect(strong.p_value < 1e-10 && strong.stars == "***", "90/100 vs 10/100 gave p=" + fmt(strong.p_value));
  const auto same = analytics::significance_test(37, 80, 37, 80);
  c.expect(same.p_value == 1.0 && same.stars.empty(), "identical proportions gave p=" + fmt(same.p_value));
  const std::vector<std::pair<double, std::string>> table = {
      {0.0099, "***"}, {0.01, "**"}, {0.05, "**"}, {0.0501, "*"}, {0.0999, "*"}, {0.1, ""}, {0.7, ""}};
  for (const auto& [p, s] : table) {
    c.expect(analytics::stars_for(p) == s, "stars_for(" + fmt(p) + ") = '" + analytics::stars_for(p) + "'");
  }
}

void perplexity_entropy(Check& c, std::string& detail) {
  std::set<std::string> vocab;
  std::string text;
  for (int i = 0; i < 37; ++i) {
    vocab.insert("w" + std::to_string(i));
    text += "w" + std::to_string((i * 7) % 37) + " ";
  }
  const double ppl = analytics::perplexity(analytics::UniformLM(vocab), text);
  c.expect(std::abs(ppl - 37.0) <= 1e-9, "uniform perplexity " + fmt(ppl));
  std::string sixteen;
  for (int i = 0; i < 16; ++i) sixteen += "t" + std::to_string(i) + " t" + std::to_string(i) + " ";
  c.expect(std::abs(analytics::entropy(sixteen) - 4.0) <= 1e-9, "16-token entropy " + fmt(analytics::entropy(sixteen)));

  testsupport::TempDir dir;
  const auto corpus = testsupport::synthetic_corpus(120, 23);
  auto transport = std::make_shared<gateway::MockTransport>(testsupport::synthesis_responder());
  gateway::Gateway gw(transport, no_sleep());
  synth::SynthOptions opts;
  opts.model = "gen";
  const auto dataset = synth::run_pipeline(corpus, {kBaseCategories.begin(), kBaseCategories.end()},
                                           dir / "ck.jsonl", gw, synth::PromptBuilder{}, opts);
  c.expect(corpus.size() >= 100, "dataset built from fewer than 100 problems");
  const auto s = analytics::analyze_dataset(dataset);
  detail = "problem ppl " + fmt(s.problem.mean_perplexity) + " > answer " + fmt(s.answer.mean_perplexity) +
           ", entropy " + fmt(s.problem.mean_entropy) + " > " + fmt(s.answer.mean_entropy) + " (scripted generation)";
  c.expect(s.problem.mean_perplexity > s.answer.mean_perplexity, "perplexity direction: " + detail);
  c.expect(s.problem.mean_entropy > s.answer.mean_entropy, "entropy direction: " + detail);
}

void kappa(Check& c) {
  using analytics::AnnotationRecord;
  auto rec = [](int h, int l) { return AnnotationRecord{"s", analytics::AnnotatedMetric::comm, h, l, "r"}; };
  std::vector<AnnotationRecord> perfect;
  for (int i = 0; i < 20; ++i) perfect.push_back(rec(i % 3 == 0, i % 3 == 0));
  c.expect(analytics::cohen_kappa(perfect) == 1.0, "perfect agreement");
  std::vector<AnnotationRecord> m;
  for (int i = 0; i < 45; ++i) m.push_back(rec(1, 1));
  for (int i = 0; i < 5; ++i) m.push_back(rec(1, 0));
  for (int i = 0; i < 5; ++i) m.push_back(rec(0, 1));
  for (int i = 0; i < 45; ++i) m.push_back(rec(0, 0));
  c.expect(std::abs(analytics::cohen_kappa(m) - 0.8) <= 1e-9, "(45,5,5,45) gave " + fmt(analytics::cohen_kappa(m)));
  std::mt19937_64 rng(9);
  std::size_t out_of_range = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<AnnotationRecord> f;
    for (int k = 0, n = 2 + int(rng() % 40); k < n; ++k) f.push_back(rec(int(rng() % 2), int(rng() % 2)));
    const double k = analytics::cohen_kappa(f);
    if (!(k >= -1.0 && k <= 1.0)) ++out_of_range;
  }
  c.expect(out_of_range == 0, std::to_string(out_of_range) + " fuzzed label sets left [-1, 1]");
}

}  // namespace

int main() {
  std::string ppl_detail;
  const std::vector<std::tuple<std::string, std::chrono::milliseconds, std::function<void(Check&)>>> criteria = {
      {"mixing arithmetic", 1000ms, mixing},
      {"determinism", 10000ms, determinism},
      {"prompt fidelity", 1000ms, prompts},
      {"evaluator protocol", 5000ms, evaluator},
      {"sandbox", 120000ms, sandbox_check},
      {"metrics oracle", 5000ms, metrics_oracle},
      {"significance", 1000ms, significance},
      {"perplexity/entropy", 10000ms, [&](Check& c) { perplexity_entropy(c, ppl_detail); }},
      {"kappa", 1000ms, kappa},
  };
  const bool have_python = testsupport::python_available();
  int failed = 0;
  for (const auto& [name, budget, fn] : criteria) {
    Check c;
    const auto start = std::chrono::steady_clock::now();
    if (!have_python && (name == "sandbox" || name == "evaluator protocol")) {
      c.expect(false, "python3 not available");
    } else {
      try {
        fn(c);
      } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
      }
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    if (ms > budget) c.expect(false, "took " + std::to_string(ms.count()) + " ms, budget " + std::to_string(budget.count()));
    std::ostringstream line;
    line << (c.failures.empty() ? "PASS" : "FAIL") << "  " << name << "  (" << ms.count() << " ms)";
    if (name == "perplexity/entropy" && !ppl_detail.empty()) line << "  " << ppl_detail;
    std::cout << line.str() << "\n";
    for (const auto& f : c.failures) std::cout << "      " << f << "\n";
    failed += c.failures.empty() ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
