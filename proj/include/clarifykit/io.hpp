#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clarifykit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or record.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

namespace io {

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits a line-delimited file into non-blank lines. When `tolerate_torn_tail`
/// is set, a final line without a terminating newline is dropped (it may be a
/// partial write from an interrupted appender).
std::vector<std::string> read_lines(const std::filesystem::path& path,
                                    bool tolerate_torn_tail = false);

std::string sha256_hex(std::string_view data);

/// Thread-safe append-only line writer. Each line is flushed on write. An
/// unterminated last line in an existing file is removed on open.
class LineAppender {
 public:
  explicit LineAppender(const std::filesystem::path& path);

  void append(std::string_view line);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace io
}  // namespace clarifykit
