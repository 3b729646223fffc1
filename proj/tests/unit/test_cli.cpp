#include <sstream>

#include "clarifykit/cli.hpp"
#include "clarifykit/corpus.hpp"
#include "clarifykit/io.hpp"
#include "clarifykit/mixer.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace clarifykit;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args, const std::string& input = {}) {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = cli::dispatch(args, in, out, err);
  return {code, out.str(), err.str()};
}

const char* kSynthScript = R"({
  "rules": [
    {"contains": "Modified problem:", "response": "What exactly should be printed when the input is empty?"},
    {"contains": "introduce ambiguity", "response": "Read some numbers and print a suitable result."},
    {"contains": "omitting key concepts", "response": "Read the input and print the answer."},
    {"contains": "conflicting statements", "response": "Print the sum. Print the product instead."}
  ]
})";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2, runtime errors exit 1") {
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"no-such-command"}).code == cli::kExitUsage);
    CHECK(run({"ingest"}).code == cli::kExitUsage);
    const auto missing = run({"ingest", "--input", "/nonexistent/corpus.jsonl", "-o", "/tmp/x.jsonl"});
    CHECK(missing.code == cli::kExitFailure);
    CHECK(missing.err.find("input not found") != std::string::npos);
    CHECK(run({"--help"}).code == cli::kExitOk);
  }

  TEST_CASE("dry run prints the plan and writes nothing") {
    testsupport::TempDir dir;
    const auto out = (dir / "corpus.jsonl").string();
    const auto r = run({"--dry-run", "--seed", "9", "ingest", "--input",
                        testsupport::data_path("sandbox_corpus.jsonl").string(), "-o", out});
    REQUIRE(r.code == 0);
    const auto plan = nlohmann::json::parse(r.out);
    CHECK(plan.at("command") == "ingest");
    CHECK(plan.at("writes").at(0) == out);
    CHECK(plan.at("config").at("seed") == 9);
    CHECK(plan.at("config_digest").get<std::string>().size() == 64);
    CHECK(std::filesystem::is_empty(dir.path()));
  }

  TEST_CASE("flags override the YAML file, unknown keys are rejected") {
    testsupport::TempDir dir;
    io::write_file_atomic(dir / "run.yaml", "seed: 5\nmix:\n  ratio: 0.3\n  strategy: oversample\n");
    const auto corpus = testsupport::data_path("sandbox_corpus.jsonl").string();
    const auto yaml_only = run({"--config", (dir / "run.yaml").string(), "--dry-run", "ingest", "--input", corpus,
                                "-o", (dir / "c.jsonl").string()});
    REQUIRE(yaml_only.code == 0);
    const auto a = nlohmann::json::parse(yaml_only.out).at("config");
    CHECK(a.at("seed") == 5);
    CHECK(a.at("mix").at("strategy") == "oversample");
    const auto flagged = run({"--config", (dir / "run.yaml").string(), "--seed", "6", "--dry-run", "ingest",
                              "--input", corpus, "-o", (dir / "c.jsonl").string()});
    CHECK(nlohmann::json::parse(flagged.out).at("config").at("seed") == 6);

    io::write_file_atomic(dir / "bad.yaml", "sede: 5\n");
    const auto bad = run({"--config", (dir / "bad.yaml").string(), "--dry-run", "ingest", "--input", corpus});
    CHECK(bad.code == cli::kExitFailure);
    CHECK(bad.err.find("unknown key") != std::string::npos);
  }

  TEST_CASE("synthesis through mixing end to end with a scripted model") {
    testsupport::TempDir dir;
    io::write_file_atomic(dir / "script.json", kSynthScript);
    const auto p = [&](const char* name) { return (dir / name).string(); };
    const std::vector<std::string> common = {"--mock-script", p("script.json"), "--seed", "3"};
    auto with = [&](std::vector<std::string> rest) {
      auto args = common;
      args.insert(args.end(), rest.begin(), rest.end());
      return run(args);
    };

    REQUIRE(with({"ingest", "--input", testsupport::data_path("sandbox_corpus.jsonl").string(), "-o", p("corpus.jsonl")})
                .code == 0);
    CHECK(std::filesystem::exists(p("corpus.jsonl.meta.json")));
    const auto meta = nlohmann::json::parse(io::read_file(p("corpus.jsonl.meta.json")));
    CHECK(meta.at("seed") == 3);
    CHECK(meta.at("command") == "ingest");

    const auto mut = with({"mutate", "--corpus", p("corpus.jsonl"), "--checkpoint", p("ck.jsonl"), "--categories",
                           "1a,1p", "--model", "gen"});
    CHECK(mut.code == 0);
    CHECK(mut.out.find("completed=40") != std::string::npos);
    const auto gq = with({"genq", "--corpus", p("corpus.jsonl"), "--checkpoint", p("ck.jsonl"), "--categories",
                          "1a,1p", "--model", "gen"});
    CHECK(gq.code == 0);
    CHECK(gq.out.find("completed=40") != std::string::npos);

    const auto cons = with({"consolidate", "--corpus", p("corpus.jsonl"), "--checkpoint", p("ck.jsonl"), "-o",
                            p("dataset.jsonl")});
    REQUIRE(cons.code == 0);
    CHECK(cons.out.find("consolidated 40 samples 1a=20 1p=20") != std::string::npos);

    const auto mixed = with({"mix", "--corpus", p("corpus.jsonl"), "--dataset", p("dataset.jsonl"), "--ratio", "0.5",
                             "--strategy", "downsample", "-o", p("mixed.jsonl")});
    REQUIRE(mixed.code == 0);
    CHECK(mixed.out.find("og=20/20 clarify=20/40 total=40 ratio=0.500000") != std::string::npos);

    const auto emit = with({"emit-train", "--mixed", p("mixed.jsonl"), "--mask-mode", "full_sequence", "-o",
                            p("train.jsonl")});
    REQUIRE(emit.code == 0);
    const auto summary = nlohmann::json::parse(io::read_file(p("train.jsonl.summary.json")));
    CHECK(summary.at("sha256") == io::sha256_hex(io::read_file(p("train.jsonl"))));
    CHECK(summary.at("mask_mode") == "full_sequence");
    for (const auto& r : mix::parse_records(io::read_file(p("train.jsonl")))) {
      CHECK(r.mask_mode == mix::MaskMode::full_sequence);
    }

    // Same seed, same bytes.
    REQUIRE(with({"mix", "--corpus", p("corpus.jsonl"), "--dataset", p("dataset.jsonl"), "--ratio", "0.5",
                  "--strategy", "downsample", "-o", p("mixed2.jsonl")})
                .code == 0);
    CHECK(io::read_file(p("mixed.jsonl")) == io::read_file(p("mixed2.jsonl")));

    const auto ppl = with({"perplexity", "--dataset", p("dataset.jsonl")});
    CHECK(ppl.code == 0);
    CHECK(ppl.out.find("perplexity") != std::string::npos);
  }

  TEST_CASE("evaluate, metrics, report, annotate and kappa") {
    if (!testsupport::python_available()) return;
    testsupport::TempDir dir;
    const auto p = [&](const char* name) { return (dir / name).string(); };
    const auto ev = run({"--mock-script", testsupport::data_path("eval_script.json").string(), "evaluate", "--tasks",
                         testsupport::data_path("eval_tasks.jsonl").string(), "--model", testsupport::kFixtureModel,
                         "--judge-model", testsupport::kFixtureJudge, "--timeout-secs", "1", "-o",
                         p("transcripts.jsonl"), "--report", p("report.json")});
    REQUIRE(ev.code == 0);
    CHECK(io::read_lines(p("transcripts.jsonl")).size() == 10);
    CHECK(std::filesystem::exists(p("transcripts.jsonl.meta.json")));

    const auto m = run({"metrics", "--transcripts", p("transcripts.jsonl"), "--baseline", p("transcripts.jsonl"),
                        "--label", "self", "-o", p("self.json")});
    REQUIRE(m.code == 0);
    CHECK(m.out.find("overall") != std::string::npos);
    const auto rep = run({"report", "--input", p("report.json"), p("self.json"), "--format", "csv"});
    REQUIRE(rep.code == 0);
    CHECK(rep.out.find("comm_rate_p") != std::string::npos);

    const auto first = run({"annotate", "--transcripts", p("transcripts.jsonl"), "-o", p("ann.jsonl"), "--rater", "r1"},
                           "1\nbogus\n0\nq\n");
    CHECK(first.code == 0);
    CHECK(first.out.find("annotated 2 new") != std::string::npos);
    const auto second = run({"annotate", "--transcripts", p("transcripts.jsonl"), "-o", p("ann.jsonl"), "--rater", "r1"},
                            "s\n1\n");
    CHECK(second.out.find("annotated 1 new") != std::string::npos);
    CHECK(io::read_lines(p("ann.jsonl")).size() == 3);

    const auto k = run({"kappa", "--input", p("ann.jsonl")});
    CHECK(k.code == 0);
    CHECK(k.out.find("comm   kappa=") != std::string::npos);
  }
}
