#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "clarifykit/corpus.hpp"
#include "clarifykit/evaluator.hpp"

namespace clarifykit::analytics {

struct Significance {
  double p_value = 1.0;
  std::string stars;
};

/// "***" below 0.01, "**" at or below 0.05, "*" below 0.1.
std::string stars_for(double p_value);

/// Two-sided Fisher exact test on the 2x2 table of successes/failures.
/// Throws PreconditionError when a sample size is zero or successes exceed it.
Significance significance_test(std::size_t success_a, std::size_t n_a, std::size_t success_b, std::size_t n_b);

inline constexpr std::array<std::string_view, 4> kMetricNames = {"comm_rate", "goodq_rate", "pass_at_1",
                                                                 "test_pass_rate"};

struct MetricCell {
  std::size_t n = 0;
  std::size_t comm_count = 0;
  std::size_t goodq_count = 0;
  std::size_t pass_count = 0;
  /// Pooled over all transcripts in the cell.
  std::size_t tests_passed = 0;
  std::size_t tests_total = 0;

  double comm_rate = 0;
  double goodq_rate = 0;
  double pass_at_1 = 0;
  double test_pass_rate = 0;

  /// metric name -> significance against a baseline; empty unless compared.
  std::map<std::string, Significance> significance;

  double rate(std::string_view metric) const;
};

struct MetricsReport {
  std::string label;
  MetricCell overall;
  std::map<Category, MetricCell> per_category;
  /// Transcripts that carried an error.
  std::size_t errors = 0;
  std::string templates_digest;
};

/// Throws PreconditionError on empty input.
MetricsReport compute_metrics(const std::vector<eval::EvalTranscript>& transcripts, std::string label = {});

/// Tests every metric of `candidate` against `baseline`, cell by cell, and
/// stores the results in candidate's significance maps. test_pass_rate uses
/// pooled test counts.
void compare_reports(const MetricsReport& baseline, MetricsReport& candidate);

std::string serialize_report(const MetricsReport& report);
MetricsReport parse_report(std::string_view text);

enum class ReportFormat { table_text, csv };
ReportFormat parse_report_format(std::string_view text);

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format);

// ---------------------------------------------------------------------------

/// Lowercased; letter/digit/underscore runs form tokens (bytes >= 0x80 count
/// as letters); any other non-space character is a token by itself.
std::vector<std::string> tokenize(std::string_view text);

class TokenDistribution {
 public:
  virtual ~TokenDistribution() = default;
  /// Natural log probability of one token.
  virtual double log_prob(const std::string& token) const = 0;
};

class UnigramLM : public TokenDistribution {
 public:
  UnigramLM(std::map<std::string, std::size_t> counts, double k);

  double prob(const std::string& token) const;
  double unknown_prob() const;
  double log_prob(const std::string& token) const override;

  std::size_t vocabulary_size() const { return counts_.size(); }
  std::size_t total() const { return total_; }
  double smoothing_k() const { return k_; }
  const std::map<std::string, std::size_t>& counts() const { return counts_; }

 private:
  std::map<std::string, std::size_t> counts_;
  std::size_t total_ = 0;
  double k_;
};

/// Equal mass on each vocabulary token; throws on anything outside it.
class UniformLM : public TokenDistribution {
 public:
  explicit UniformLM(std::set<std::string> vocabulary);
  double log_prob(const std::string& token) const override;

 private:
  std::set<std::string> vocabulary_;
};

/// Throws PreconditionError on an empty corpus or k <= 0.
UnigramLM fit_unigram(const std::vector<std::string>& corpus, double k);

/// exp of mean negative log-likelihood per token. Throws PreconditionError
/// when `text` has no tokens.
double perplexity(const TokenDistribution& lm, std::string_view text);

/// Shannon entropy in bits of the text's own token frequencies.
double entropy(std::string_view text);

inline constexpr double kDefaultSmoothing = 0.5;

struct FieldStats {
  double mean_perplexity = 0;
  double mean_entropy = 0;
};

struct DatasetStats {
  std::size_t n = 0;
  FieldStats problem;
  FieldStats answer;
};

/// Fits one unigram per field on that field's texts and averages per-text
/// perplexity and entropy. Samples whose field has no tokens are skipped.
DatasetStats analyze_dataset(const ClarifyDataset& dataset, double k = kDefaultSmoothing);

std::string render_dataset_stats(const DatasetStats& stats);

// ---------------------------------------------------------------------------

enum class AnnotatedMetric { comm, goodq };
std::string_view to_string(AnnotatedMetric m);
AnnotatedMetric parse_annotated_metric(std::string_view text);

struct AnnotationRecord {
  std::string sample_id;
  AnnotatedMetric metric = AnnotatedMetric::comm;
  int human_label = 0;
  int llm_label = 0;
  std::string rater;
};

std::vector<AnnotationRecord> parse_annotations(std::string_view text);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);
std::string serialize_annotations(const std::vector<AnnotationRecord>& records);

/// Cohen's kappa between human and LLM labels. Needs at least two records;
/// returns 1.0 when both raters use one and the same label throughout.
double cohen_kappa(const std::vector<AnnotationRecord>& records);

}  // namespace clarifykit::analytics
