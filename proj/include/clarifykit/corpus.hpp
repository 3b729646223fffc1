#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "clarifykit/io.hpp"

namespace clarifykit {

/// Clarification categories. Single-letter codes follow the HumanEvalComm
/// naming: a = ambiguous, c = inconsistent, p = incomplete; the 2xx values
/// combine two of them.
enum class Category { k1a, k1c, k1p, k2ac, k2ap, k2cp };

inline constexpr std::array<Category, 6> kAllCategories = {
    Category::k1a, Category::k1c, Category::k1p, Category::k2ac, Category::k2ap, Category::k2cp};
inline constexpr std::array<Category, 3> kBaseCategories = {Category::k1a, Category::k1c,
                                                            Category::k1p};

std::string_view to_code(Category c);
std::string_view to_name(Category c);
/// Accepts a code ("1a") or a name ("ambiguous", "ambiguous_incomplete", ...).
Category parse_category(std::string_view text);
bool is_base_category(Category c);

enum class Source { apps, humaneval, humanevalcomm, other };

std::string_view to_string(Source s);
Source parse_source(std::string_view text);

struct Comparison {
  enum class Kind { exact, whitespace_normalized, numeric_tolerant };
  Kind kind = Kind::exact;
  double epsilon = 0.0;  // numeric_tolerant only

  static Comparison exact() { return {}; }
  static Comparison whitespace_normalized() { return {Kind::whitespace_normalized, 0.0}; }
  static Comparison numeric_tolerant(double eps) { return {Kind::numeric_tolerant, eps}; }

  friend bool operator==(const Comparison&, const Comparison&) = default;
};

struct TestCase {
  std::string input;
  std::string expected_output;
  Comparison comparison;

  friend bool operator==(const TestCase&, const TestCase&) = default;
};

struct CodingProblem {
  std::string id;
  std::string description;
  std::optional<std::string> starter_code;
  std::vector<TestCase> test_cases;
  std::vector<std::string> solutions;
  Source source = Source::other;
  /// Set for function-style tasks: the callable the test driver invokes.
  std::optional<std::string> entry_point;

  friend bool operator==(const CodingProblem&, const CodingProblem&) = default;
};

using Corpus = std::vector<CodingProblem>;

struct ClarifySample {
  std::string problem;
  std::string answer;
  Category category = Category::k1a;
  std::string origin_id;

  friend bool operator==(const ClarifySample&, const ClarifySample&) = default;
};

struct ClarifyDataset {
  std::vector<ClarifySample> samples;
  std::map<Category, std::size_t> category_counts;
};

enum class CorpusFormat { canonical, apps };

CorpusFormat parse_corpus_format(std::string_view text);

/// Loads a line-delimited corpus. Throws ParseError naming the 1-based record
/// index and field, or listing duplicate ids.
Corpus parse_corpus(const std::filesystem::path& path, CorpusFormat format = CorpusFormat::canonical);
Corpus parse_corpus_text(std::string_view text, CorpusFormat format = CorpusFormat::canonical);

std::string serialize_corpus(const Corpus& corpus);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

std::string serialize_problem(const CodingProblem& problem);
CodingProblem parse_problem_line(std::string_view line, std::size_t record_index);

std::string serialize_dataset(const ClarifyDataset& dataset);
ClarifyDataset parse_dataset_text(std::string_view text);
ClarifyDataset load_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const ClarifyDataset& dataset);

/// Throws ParseError if a record breaks a CodingProblem invariant.
void check_problem(const CodingProblem& problem, std::size_t record_index);

struct Mutation {
  std::string origin_id;
  std::string text;
  Category category;
};

struct Question {
  std::string origin_id;
  Category category;
  std::string text;
};

/// Joins mutations with questions keyed by (origin_id, category). Output
/// follows mutation order. Throws PreconditionError listing orphan keys.
ClarifyDataset consolidate(const std::vector<Mutation>& mutations,
                           const std::vector<Question>& questions);

std::map<Category, std::size_t> count_categories(const std::vector<ClarifySample>& samples);

struct Violation {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  std::size_t index = 0;
  std::string origin_id;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  std::size_t error_count() const;
  std::size_t warning_count() const;
  bool ok() const { return error_count() == 0; }
};

/// Checks ClarifySample invariants. `synthesized` restricts categories to
/// the three base values.
ValidationReport validate_dataset(const ClarifyDataset& dataset, bool synthesized = true);

/// True if some sentence of `text` ends with a question mark.
bool has_interrogative(std::string_view text);

}  // namespace clarifykit
