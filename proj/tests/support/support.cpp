#include "support.hpp"

#include <unistd.h>

#include <cstdlib>
#include <random>
#include <regex>

#include "clarifykit/io.hpp"
#include "clarifykit/sandbox.hpp"

namespace testsupport {

using namespace clarifykit;

fs::path data_dir() { return CLARIFYKIT_TEST_DATA_DIR; }

fs::path data_path(const std::string& name) { return data_dir() / name; }

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "clarifykit-test-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw Error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

bool python_available() {
  static const bool ok = [] {
    try {
      sandbox::check_interpreter(sandbox::SandboxConfig{});
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }();
  return ok;
}

std::string read_text(const fs::path& path) { return io::read_file(path); }

namespace {

const std::vector<std::string> kObjects = {"parcels", "sensors", "tickets", "orchards", "satellites", "ledgers",
                                           "lanterns", "vaults", "drones", "recipes", "bridges", "meteors"};
const std::vector<std::string> kStats = {"median weight", "total cost", "longest streak", "smallest gap",
                                         "number of distinct labels", "maximum overlap", "average latency"};
const std::vector<std::string> kAdjectives = {"fragile", "active", "overdue", "northern", "encrypted", "idle",
                                              "crimson", "calibrated", "abandoned", "premium"};
const std::vector<std::string> kProperties = {"priority", "altitude", "checksum", "voltage", "temperature",
                                              "capacity", "elevation", "rank"};
const std::vector<std::string> kFormats = {
    "The first line contains n and k; the second line contains n space-separated integers.",
    "Input consists of n and k on the first line followed by n lines, each holding one integer.",
    "Read n and k, then read the values of the n items in order.",
};
const std::vector<std::string> kOutputs = {
    "Print a single integer, or -1 if no item qualifies.",
    "Output the answer on one line without trailing spaces.",
    "Print the answer modulo 1000000007.",
};

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[rng() % v.size()];
}

}  // namespace

Corpus synthetic_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "P%04zu", i);
    const auto limit = 10 + rng() % 100000;
    CodingProblem p;
    p.id = id;
    p.description = "Problem " + p.id + ": Given n " + pick(kObjects, rng) + " and an integer k, compute the " +
                    pick(kStats, rng) + " among the " + pick(kAdjectives, rng) + " " + pick(kObjects, rng) +
                    " whose " + pick(kProperties, rng) + " does not exceed k. " + pick(kFormats, rng) +
                    " Constraints: 1 <= n <= " + std::to_string(limit) + ", 0 <= k <= " +
                    std::to_string(rng() % 1000 + 1) + ". " + pick(kOutputs, rng);
    p.test_cases.push_back({"1 1\n1\n", "1\n", Comparison::exact()});
    p.solutions.push_back("n, k = map(int, input().split())\nprint(1)\n");
    p.source = Source::apps;
    corpus.push_back(std::move(p));
  }
  return corpus;
}

gateway::MockTransport::Responder synthesis_responder() {
  return [](const gateway::ChatRequest& req) -> gateway::HttpReply {
    const std::string& prompt = req.messages.back().content;
    static const std::regex id_re("P[0-9]{4}");
    std::smatch m;
    const std::string id = std::regex_search(prompt, m, id_re) ? m.str() : "P????";
    const bool question_stage = prompt.find("Modified problem:") != std::string::npos;
    if (!question_stage) {
      const auto at = prompt.find("Original problem:\n");
      std::string original = at == std::string::npos ? prompt : prompt.substr(at + 18);
      while (!original.empty() && (original.back() == '\n' || original.back() == ' ')) original.pop_back();
      std::string mutated = std::regex_replace(original, std::regex("[0-9]+ <= |<= [0-9]+"), "");
      if (prompt.find("introduce ambiguity") != std::string::npos) {
        mutated = std::regex_replace(mutated, std::regex("does not exceed k"), "is suitable");
        mutated += " Some items may be treated differently.";
      } else if (prompt.find("conflicting statements") != std::string::npos) {
        mutated += " The answer must also be the largest possible value, and it must be the smallest possible value.";
      } else {
        const auto cut = mutated.find(" Constraints:");
        if (cut != std::string::npos) mutated = mutated.substr(0, cut);
        mutated += " The output format is described elsewhere.";
      }
      return gateway::MockTransport::reply(mutated);
    }
    std::string questions;
    if (prompt.find("points of ambiguity") != std::string::npos) {
      questions = "1. What makes an item suitable?\n2. Which items are treated differently?";
    } else if (prompt.find("points of inconsistency") != std::string::npos) {
      questions = "1. Should the answer be the largest or the smallest value?";
    } else {
      questions = "1. What are the limits on n and k?\n2. What should be printed?";
    }
    return gateway::MockTransport::reply(questions + " (" + id + ")");
  };
}

EvalFixtureRun run_eval_fixture(const fs::path& workdir) {
  const auto tasks = eval::load_tasks(data_path("eval_tasks.jsonl"));
  auto transport = std::make_shared<gateway::MockTransport>(gateway::scripted_responder_file(data_path("eval_script.json")));
  gateway::GatewayOptions gopts;
  gopts.sleep = [](std::chrono::milliseconds) {};
  gateway::Gateway model_gw(transport, gopts);
  gateway::Gateway judge_gw(transport, gopts);

  eval::EvalOptions opts;
  opts.model = kFixtureModel;
  opts.judge = {kFixtureJudge, 512};
  opts.sandbox.wall_timeout = std::chrono::milliseconds(1000);
  const auto templates = TemplateStore::builtin();
  const auto path = workdir / "transcripts.jsonl";

  EvalFixtureRun run;
  run.transcripts = eval::run_eval(tasks, model_gw, judge_gw, opts, templates, eval::builtin_exemplars(), path);
  run.transcripts_text = io::read_file(path);
  run.report = analytics::compute_metrics(run.transcripts, kFixtureModel);
  run.report.templates_digest = templates.digest();
  run.report_text = analytics::serialize_report(run.report);
  run.table_text = analytics::render_report({run.report}, analytics::ReportFormat::table_text);
  return run;
}

}  // namespace testsupport
