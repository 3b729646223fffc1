#include <thread>

#include "clarifykit/io.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace clarifykit;

TEST_SUITE("io") {
  TEST_CASE("sha256 matches published test vectors") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(io::sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  }

  TEST_CASE("atomic write replaces content and leaves no temp files") {
    testsupport::TempDir dir;
    const auto p = dir / "out.txt";
    io::write_file_atomic(p, "first");
    io::write_file_atomic(p, "second");
    CHECK(io::read_file(p) == "second");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
    CHECK(files == 1);
  }

  TEST_CASE("read_file on a missing path throws") {
    CHECK_THROWS_AS(io::read_file("/nonexistent/clarifykit/file"), Error);
  }

  TEST_CASE("read_lines drops a torn final line only when asked") {
    testsupport::TempDir dir;
    const auto p = dir / "journal.jsonl";
    io::write_file_atomic(p, "{\"a\":1}\n{\"b\":2}\n{\"c\":");
    CHECK(io::read_lines(p, true).size() == 2);
    CHECK(io::read_lines(p, false).size() == 3);
    io::write_file_atomic(p, "x\n\ny\n");
    CHECK(io::read_lines(p).size() == 2);
  }

  TEST_CASE("LineAppender keeps lines whole under concurrent appends") {
    testsupport::TempDir dir;
    const auto p = dir / "log.jsonl";
    {
      io::LineAppender app(p);
      std::vector<std::jthread> threads;
      for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&app, t] {
          for (int i = 0; i < 250; ++i) app.append(std::string(40, char('a' + t)));
        });
      }
    }
    const auto lines = io::read_lines(p);
    REQUIRE(lines.size() == 1000);
    for (const auto& l : lines) {
      CHECK(l.size() == 40);
      CHECK(l.find_first_not_of(l[0]) == std::string::npos);
    }
  }
}
