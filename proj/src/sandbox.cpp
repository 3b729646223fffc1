#include "clarifykit/sandbox.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sstream>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include "clarifykit/templates.hpp"

namespace clarifykit::sandbox {

std::string_view to_string(TestResult r) {
  switch (r) {
    case TestResult::pass: return "pass";
    case TestResult::wrong_output: return "wrong_output";
    case TestResult::runtime_error: return "runtime_error";
    case TestResult::timeout: return "timeout";
    case TestResult::no_code: return "no_code";
  }
  return "no_code";
}

TestResult parse_test_result(std::string_view text) {
  for (auto r : {TestResult::pass, TestResult::wrong_output, TestResult::runtime_error,
                 TestResult::timeout, TestResult::no_code}) {
    if (text == to_string(r)) return r;
  }
  throw ParseError("unknown test result '" + std::string(text) + "'");
}

TestOutcome TestOutcome::from(std::vector<TestResult> results) {
  TestOutcome o;
  o.total = results.size();
  for (auto r : results) o.passed += r == TestResult::pass ? 1 : 0;
  o.per_test = std::move(results);
  return o;
}

TestOutcome TestOutcome::no_code(std::size_t n_tests) {
  return from(std::vector<TestResult>(n_tests, TestResult::no_code));
}

void SandboxConfig::validate() const {
  if (interpreter_command.empty() || interpreter_command.front().empty()) {
    throw PreconditionError("sandbox interpreter command is empty");
  }
  if (wall_timeout.count() <= 0) throw PreconditionError("sandbox wall timeout must be > 0");
  if (driver_template && (driver_template->find("{candidate_code}") == std::string::npos ||
                          driver_template->find("{entry_point}") == std::string::npos)) {
    throw PreconditionError("driver template needs {candidate_code} and {entry_point}");
  }
}

namespace {

std::vector<std::string> normalized_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(start, nl - start));
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
      line.pop_back();
    }
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string> tokens(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::optional<double> as_number(const std::string& tok) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty()) return std::nullopt;
  return v;
}

void ignore_sigpipe_once() {
  static const bool done = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

class TempDir {
 public:
  TempDir() {
    auto pattern = (std::filesystem::temp_directory_path() / "clarifykit-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) {
      throw Error(std::string("cannot create sandbox directory: ") + std::strerror(errno));
    }
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

}  // namespace

bool compare_output(std::string_view actual, std::string_view expected, const Comparison& rule) {
  switch (rule.kind) {
    case Comparison::Kind::exact:
      return actual == expected;
    case Comparison::Kind::whitespace_normalized:
      return normalized_lines(actual) == normalized_lines(expected);
    case Comparison::Kind::numeric_tolerant: {
      const auto a = tokens(actual);
      const auto e = tokens(expected);
      if (a.size() != e.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = as_number(a[i]);
        const auto y = as_number(e[i]);
        if (x && y) {
          if (std::isnan(*x) || std::isnan(*y)) {
            if (!(std::isnan(*x) && std::isnan(*y))) return false;
          } else if (*x != *y && !(std::abs(*x - *y) <= rule.epsilon)) {
            return false;
          }
        } else if (a[i] != e[i]) {
          return false;
        }
      }
      return true;
    }
  }
  return false;
}

std::string program_text(std::string_view code, const std::optional<std::string>& entry_point,
                         const SandboxConfig& cfg) {
  if (!entry_point) return std::string(code);
  const std::string driver = cfg.driver_template
                                 ? *cfg.driver_template
                                 : TemplateStore::builtin().raw("driver_function.py");
  return render(driver, {{"candidate_code", std::string(code)}, {"entry_point", *entry_point}});
}

RunResult run_program(std::string_view program, std::string_view stdin_text, const SandboxConfig& cfg) {
  cfg.validate();
  ignore_sigpipe_once();
  TempDir dir;
  const auto program_path = dir.path() / "main.py";
  {
    std::ofstream out(program_path, std::ios::binary);
    out.write(program.data(), static_cast<std::streamsize>(program.size()));
    if (!out) throw Error("cannot write sandbox program");
  }

  std::vector<std::string> args = cfg.interpreter_command;
  args.push_back(program_path.string());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  const std::string workdir = dir.path().string();

  int in_pipe[2], out_pipe[2], err_pipe[2], exec_pipe[2];
  if (::pipe(in_pipe) || ::pipe(out_pipe) || ::pipe(err_pipe) || ::pipe2(exec_pipe, O_CLOEXEC)) {
    throw Error(std::string("pipe failed: ") + std::strerror(errno));
  }

  const auto started = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    ::close(exec_pipe[0]);
    if (::chdir(workdir.c_str()) != 0) _exit(127);
    if (cfg.memory_limit_bytes > 0) {
      rlimit lim{cfg.memory_limit_bytes, cfg.memory_limit_bytes};
      ::setrlimit(RLIMIT_AS, &lim);
    }
    rlimit no_core{0, 0};
    ::setrlimit(RLIMIT_CORE, &no_core);
    ::execvp(argv[0], argv.data());
    const int err = errno;
    [[maybe_unused]] auto n = ::write(exec_pipe[1], &err, sizeof err);
    _exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::close(exec_pipe[1]);

  int exec_errno = 0;
  const auto got = ::read(exec_pipe[0], &exec_errno, sizeof exec_errno);
  ::close(exec_pipe[0]);
  if (got == sizeof exec_errno) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    ::waitpid(pid, nullptr, 0);
    throw Error("cannot start interpreter '" + cfg.interpreter_command.front() +
                "': " + std::strerror(exec_errno));
  }

  set_nonblocking(in_pipe[1]);
  set_nonblocking(out_pipe[0]);
  set_nonblocking(err_pipe[0]);

  RunResult result;
  std::size_t written = 0;
  int in_fd = in_pipe[1];
  if (stdin_text.empty()) {
    ::close(in_fd);
    in_fd = -1;
  }
  int out_fd = out_pipe[0];
  int err_fd = err_pipe[0];
  const auto deadline = started + cfg.wall_timeout;
  char buf[65536];

  while (out_fd >= 0 || err_fd >= 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      break;
    }
    pollfd fds[3];
    nfds_t n = 0;
    if (in_fd >= 0) fds[n++] = {in_fd, POLLOUT, 0};
    if (out_fd >= 0) fds[n++] = {out_fd, POLLIN, 0};
    if (err_fd >= 0) fds[n++] = {err_fd, POLLIN, 0};
    const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    const int ready = ::poll(fds, n, static_cast<int>(std::max<long long>(1, std::min<long long>(wait_ms, 100))));
    if (ready < 0 && errno != EINTR) break;
    for (nfds_t i = 0; i < n; ++i) {
      if (fds[i].revents == 0) continue;
      if (fds[i].fd == in_fd) {
        const auto w = ::write(in_fd, stdin_text.data() + written, stdin_text.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) written = stdin_text.size();
        if (written >= stdin_text.size()) {
          ::close(in_fd);
          in_fd = -1;
        }
        continue;
      }
      const bool is_out = fds[i].fd == out_fd;
      const auto r = ::read(fds[i].fd, buf, sizeof buf);
      if (r > 0) {
        std::string& sink = is_out ? result.stdout_text : result.stderr_text;
        const std::size_t cap = is_out ? cfg.max_output_bytes : 1 << 20;
        if (sink.size() < cap) sink.append(buf, std::min<std::size_t>(static_cast<std::size_t>(r), cap - sink.size()));
        if (is_out && sink.size() >= cap) result.output_truncated = true;
      } else if (r == 0 || (r < 0 && errno != EAGAIN && errno != EINTR)) {
        ::close(fds[i].fd);
        (is_out ? out_fd : err_fd) = -1;
      }
    }
    if (result.output_truncated) break;
  }

  if (result.timed_out || result.output_truncated) ::kill(-pid, SIGKILL);
  if (in_fd >= 0) ::close(in_fd);
  if (out_fd >= 0) ::close(out_fd);
  if (err_fd >= 0) ::close(err_fd);

  int status = 0;
  for (;;) {
    const pid_t w = ::waitpid(pid, &status, WNOHANG);
    if (w == pid) break;
    if (w < 0 && errno != EINTR) break;
    if (std::chrono::steady_clock::now() >= deadline && !result.timed_out) {
      result.timed_out = true;
      ::kill(-pid, SIGKILL);
    }
    ::usleep(1000);
  }
  // Reap stragglers left in the process group.
  ::kill(-pid, SIGKILL);
  result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.signaled = true;
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

void check_interpreter(const SandboxConfig& cfg) {
  run_program("", "", cfg);
}

TestOutcome execute_tests(std::string_view code, const std::vector<TestCase>& tests,
                          const SandboxConfig& cfg, const std::optional<std::string>& entry_point) {
  if (tests.empty()) throw PreconditionError("execute_tests needs at least one test case");
  cfg.validate();
  if (code.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    return TestOutcome::no_code(tests.size());
  }
  const std::string program = program_text(code, entry_point, cfg);
  std::vector<TestResult> results;
  results.reserve(tests.size());
  for (const auto& t : tests) {
    const auto run = run_program(program, t.input, cfg);
    if (run.timed_out) {
      results.push_back(TestResult::timeout);
    } else if (run.signaled || run.exit_code != 0) {
      results.push_back(TestResult::runtime_error);
    } else if (run.output_truncated) {
      results.push_back(TestResult::wrong_output);
    } else {
      results.push_back(compare_output(run.stdout_text, t.expected_output, t.comparison)
                            ? TestResult::pass
                            : TestResult::wrong_output);
    }
  }
  return TestOutcome::from(std::move(results));
}

}  // namespace clarifykit::sandbox
