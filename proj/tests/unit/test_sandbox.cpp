#include <map>

#include "clarifykit/corpus.hpp"
#include "clarifykit/io.hpp"
#include "clarifykit/sandbox.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace clarifykit;
using namespace clarifykit::sandbox;
using namespace std::chrono_literals;

namespace {

SandboxConfig quick() {
  SandboxConfig cfg;
  cfg.wall_timeout = 2000ms;
  return cfg;
}

std::map<std::string, std::string> mutants() {
  std::map<std::string, std::string> out;
  for (const auto& line : io::read_lines(testsupport::data_path("sandbox_mutants.jsonl"))) {
    const auto j = nlohmann::json::parse(line);
    out[j.at("id").get<std::string>()] = j.at("code").get<std::string>();
  }
  return out;
}

}  // namespace

TEST_SUITE("sandbox") {
  TEST_CASE("output comparison rules") {
    CHECK(compare_output("3\n", "3\n", Comparison::exact()));
    CHECK_FALSE(compare_output("3 \n", "3\n", Comparison::exact()));
    CHECK(compare_output("3  \n\n\n", "3\n", Comparison::whitespace_normalized()));
    CHECK(compare_output("a\r\nb\n", "a\nb", Comparison::whitespace_normalized()));
    CHECK_FALSE(compare_output(" 3\n", "3\n", Comparison::whitespace_normalized()));
    const auto tol = Comparison::numeric_tolerant(1e-6);
    CHECK(compare_output("0.3333333\n", "0.33333333", tol));
    CHECK_FALSE(compare_output("0.3334\n", "0.3333", tol));
    CHECK(compare_output("x 1.0000000001", "x   1", tol));
    CHECK_FALSE(compare_output("x 1", "y 1", tol));
    CHECK_FALSE(compare_output("1 2", "1", tol));
  }

  TEST_CASE("result names round-trip") {
    for (auto r : {TestResult::pass, TestResult::wrong_output, TestResult::runtime_error, TestResult::timeout,
                   TestResult::no_code}) {
      CHECK(parse_test_result(to_string(r)) == r);
    }
    const auto o = TestOutcome::from({TestResult::pass, TestResult::timeout, TestResult::pass});
    CHECK(o.passed == 2);
    CHECK(o.total == 3);
    CHECK_FALSE(o.all_passed());
    CHECK(TestOutcome::no_code(2).per_test == std::vector<TestResult>{TestResult::no_code, TestResult::no_code});
  }

  TEST_CASE("config validation") {
    SandboxConfig cfg;
    cfg.interpreter_command.clear();
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    SandboxConfig zero;
    zero.wall_timeout = 0ms;
    CHECK_THROWS_AS(zero.validate(), PreconditionError);
    SandboxConfig bad_driver;
    bad_driver.driver_template = "print(1)";
    CHECK_THROWS_AS(bad_driver.validate(), PreconditionError);
  }

  TEST_CASE("empty code is no_code without running anything") {
    SandboxConfig cfg;
    cfg.interpreter_command = {"/nonexistent/interpreter"};
    const auto o = execute_tests("  \n", {{"", "x", Comparison::exact()}}, cfg);
    CHECK(o.per_test == std::vector<TestResult>{TestResult::no_code});
    CHECK_THROWS_AS(execute_tests("print(1)", {}, quick()), PreconditionError);
  }

  TEST_CASE("a missing interpreter is an error, not a test failure") {
    SandboxConfig cfg;
    cfg.interpreter_command = {"/nonexistent/interpreter"};
    CHECK_THROWS_AS(check_interpreter(cfg), Error);
    CHECK_THROWS_AS(execute_tests("print(1)", {{"", "1\n", Comparison::exact()}}, cfg), Error);
  }

  TEST_CASE("reference solutions pass and mutants fail") {
    if (!testsupport::python_available()) {
      MESSAGE("python3 not found; skipping");
      return;
    }
    const auto corpus = parse_corpus(testsupport::data_path("sandbox_corpus.jsonl"));
    const auto bad = mutants();
    const auto cfg = quick();
    for (const auto& p : corpus) {
      CAPTURE(p.id);
      const auto good = execute_tests(p.solutions.front(), p.test_cases, cfg, p.entry_point);
      CHECK(good.all_passed());
      REQUIRE(bad.count(p.id) == 1);
      const auto broken = execute_tests(bad.at(p.id), p.test_cases, cfg, p.entry_point);
      CHECK(broken.passed < broken.total);
    }
  }

  TEST_CASE("an infinite loop is stopped near the wall timeout") {
    if (!testsupport::python_available()) return;
    auto cfg = quick();
    cfg.wall_timeout = 500ms;
    const auto start = std::chrono::steady_clock::now();
    const auto o = execute_tests("while True:\n    pass\n", {{"", "", Comparison::exact()}}, cfg);
    const auto took = std::chrono::steady_clock::now() - start;
    CHECK(o.per_test == std::vector<TestResult>{TestResult::timeout});
    CHECK(took < 2 * cfg.wall_timeout);
  }

  TEST_CASE("crashes, wrong output and memory exhaustion are classified") {
    if (!testsupport::python_available()) return;
    const auto cfg = quick();
    const std::vector<TestCase> t = {{"", "ok\n", Comparison::exact()}};
    CHECK(execute_tests("raise ValueError('x')", t, cfg).per_test[0] == TestResult::runtime_error);
    CHECK(execute_tests("print('no')", t, cfg).per_test[0] == TestResult::wrong_output);
    CHECK(execute_tests("print('ok')", t, cfg).per_test[0] == TestResult::pass);
    auto small = cfg;
    small.memory_limit_bytes = 64ULL * 1024 * 1024;
    CHECK(execute_tests("x = bytearray(512 * 1024 * 1024)\nprint('ok')", t, small).per_test[0] ==
          TestResult::runtime_error);
  }

  TEST_CASE("runaway output is cut off") {
    if (!testsupport::python_available()) return;
    auto cfg = quick();
    cfg.max_output_bytes = 1024;
    const auto r = run_program("import sys\nsys.stdout.write('x' * 100000)\n", "", cfg);
    CHECK(r.output_truncated);
    CHECK(r.stdout_text.size() <= 1024);
  }

  TEST_CASE("function tasks run through the driver") {
    if (!testsupport::python_available()) return;
    const std::string code = "def add(a, b):\n    return a + b\n";
    const auto text = program_text(code, std::string("add"), quick());
    CHECK(text.find(code) != std::string::npos);
    const std::vector<TestCase> t = {{"[1, 2]", "3\n", Comparison::whitespace_normalized()},
                                     {"[\"a\", \"b\"]", "\"ab\"\n", Comparison::whitespace_normalized()}};
    CHECK(execute_tests(code, t, quick(), std::string("add")).all_passed());
    CHECK(execute_tests("def other():\n    pass\n", t, quick(), std::string("add")).per_test[0] ==
          TestResult::runtime_error);
  }

  TEST_CASE("each test runs in a fresh working directory") {
    if (!testsupport::python_available()) return;
    const std::string code =
        "import os\nprint('seen' if os.path.exists('marker') else 'fresh')\nopen('marker', 'w').close()\n";
    const std::vector<TestCase> t(2, TestCase{"", "fresh\n", Comparison::exact()});
    CHECK(execute_tests(code, t, quick()).all_passed());
  }
}
