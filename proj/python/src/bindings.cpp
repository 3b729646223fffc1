#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "clarifykit/analytics.hpp"
#include "clarifykit/cli.hpp"
#include "clarifykit/config.hpp"
#include "clarifykit/evaluator.hpp"
#include "clarifykit/mixer.hpp"
#include "clarifykit/sandbox.hpp"
#include "clarifykit/synthesizer.hpp"

namespace py = pybind11;
using namespace clarifykit;

namespace {

CodingProblem problem_from(const std::string& description, const std::optional<std::string>& starter) {
  CodingProblem p;
  p.id = "py";
  p.description = description;
  p.starter_code = starter;
  return p;
}

py::dict outcome_dict(const sandbox::TestOutcome& o) {
  py::list per;
  for (auto r : o.per_test) per.append(std::string(sandbox::to_string(r)));
  py::dict d;
  d["per_test"] = per;
  d["passed"] = o.passed;
  d["total"] = o.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of clarifykit";

  static py::exception<Error> error(m, "ClarifyError", PyExc_RuntimeError);
  static py::exception<ParseError> parse_error(m, "ParseError", error.ptr());
  static py::exception<PreconditionError> precondition_error(m, "PreconditionError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::set_error(parse_error, e.what());
    } catch (const PreconditionError& e) {
      py::set_error(precondition_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("version", [] { return std::string(tool_version()); });

  // mixing
  m.def("compute_ratio", &mix::compute_ratio, py::arg("n_clarify"), py::arg("n_og"));
  m.def(
      "target_counts",
      [](std::size_t n_og, std::size_t n_clarify, double ratio, const std::string& strategy) {
        return mix::target_counts(n_og, n_clarify, {ratio, mix::parse_strategy(strategy), 0});
      },
      py::arg("n_og"), py::arg("n_clarify"), py::arg("ratio"), py::arg("strategy") = "downsample",
      "Record counts (og, clarify) the strategy produces.");
  m.def(
      "mix_records",
      [](const std::string& og_jsonl, const std::string& clarify_jsonl, double ratio, const std::string& strategy,
         std::uint64_t seed) {
        const auto mixed = mix::mix(mix::parse_records(og_jsonl), mix::parse_records(clarify_jsonl),
                                    {ratio, mix::parse_strategy(strategy), seed});
        return mix::serialize_records(mixed.records, std::nullopt);
      },
      py::arg("og_jsonl"), py::arg("clarify_jsonl"), py::arg("ratio"), py::arg("strategy") = "downsample",
      py::arg("seed") = 0);

  // synthesis prompts and the leak check
  m.def(
      "build_mutation_prompt",
      [](const std::string& description, const std::string& category, const std::optional<std::string>& starter) {
        return synth::build_mutation_prompt(problem_from(description, starter), parse_category(category));
      },
      py::arg("description"), py::arg("category"), py::arg("starter_code") = py::none());
  m.def(
      "build_question_prompt",
      [](const std::string& modified, const std::string& original, const std::string& category) {
        return synth::build_question_prompt(modified, original, parse_category(category));
      },
      py::arg("modified"), py::arg("original"), py::arg("category"));
  m.def(
      "find_original_leak",
      [](const std::string& questions, const std::string& original, const std::string& modified,
         std::size_t window) -> std::optional<std::pair<std::string, std::size_t>> {
        if (auto f = synth::find_original_leak(questions, original, modified, window)) {
          return std::make_pair(f->span, f->words);
        }
        return std::nullopt;
      },
      py::arg("questions"), py::arg("original"), py::arg("modified"), py::arg("window") = 15);

  // evaluation helpers
  m.def("extract_code", &eval::extract_code, py::arg("response"));
  m.def("parse_binary_label", &eval::parse_binary_label, py::arg("reply"));
  m.def(
      "run_tests",
      [](const std::string& code, const std::string& problem_json, double timeout_secs) {
        const auto corpus = parse_corpus_text(problem_json);
        if (corpus.size() != 1) throw PreconditionError("expected exactly one problem record");
        sandbox::SandboxConfig cfg;
        cfg.wall_timeout = std::chrono::milliseconds(static_cast<long long>(timeout_secs * 1000));
        sandbox::TestOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = sandbox::execute_tests(code, corpus[0].test_cases, cfg, corpus[0].entry_point);
        }
        return outcome_dict(outcome);
      },
      py::arg("code"), py::arg("problem_json"), py::arg("timeout_secs") = 10.0,
      "Runs code against the tests of one corpus record (canonical JSON).");

  // analytics
  m.def(
      "significance_test",
      [](std::size_t sa, std::size_t na, std::size_t sb, std::size_t nb) {
        const auto s = analytics::significance_test(sa, na, sb, nb);
        return std::make_pair(s.p_value, s.stars);
      },
      py::arg("success_a"), py::arg("n_a"), py::arg("success_b"), py::arg("n_b"));
  m.def("stars_for", &analytics::stars_for, py::arg("p_value"));
  m.def(
      "compute_metrics",
      [](const std::string& transcripts_jsonl, const std::string& label) {
        std::vector<eval::EvalTranscript> ts;
        std::istringstream in(transcripts_jsonl);
        for (std::string line; std::getline(in, line);) {
          if (line.find_first_not_of(" \t\r") != std::string::npos) ts.push_back(eval::parse_transcript(line));
        }
        return analytics::serialize_report(analytics::compute_metrics(ts, label));
      },
      py::arg("transcripts_jsonl"), py::arg("label") = "", "Returns the metrics report as JSON text.");
  m.def(
      "render_report",
      [](const std::vector<std::string>& reports_json, const std::string& format) {
        std::vector<analytics::MetricsReport> reports;
        for (const auto& r : reports_json) reports.push_back(analytics::parse_report(r));
        return analytics::render_report(reports, analytics::parse_report_format(format));
      },
      py::arg("reports_json"), py::arg("format") = "table");
  m.def("tokenize", &analytics::tokenize, py::arg("text"));
  m.def("entropy", &analytics::entropy, py::arg("text"));
  m.def(
      "unigram_perplexity",
      [](const std::vector<std::string>& corpus, const std::string& text, double k) {
        return analytics::perplexity(analytics::fit_unigram(corpus, k), text);
      },
      py::arg("corpus"), py::arg("text"), py::arg("k") = analytics::kDefaultSmoothing);
  m.def(
      "cohen_kappa",
      [](const std::vector<int>& human, const std::vector<int>& llm) {
        if (human.size() != llm.size()) throw PreconditionError("label lists differ in length");
        std::vector<analytics::AnnotationRecord> recs;
        for (std::size_t i = 0; i < human.size(); ++i) {
          recs.push_back({std::to_string(i), analytics::AnnotatedMetric::comm, human[i], llm[i], ""});
        }
        return analytics::cohen_kappa(recs);
      },
      py::arg("human"), py::arg("llm"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args, const std::string& stdin_text) {
        std::istringstream in(stdin_text);
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::dispatch(args, in, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), py::arg("stdin") = "", "Runs the clarify command line; returns (exit_code, stdout, stderr).");
}
