#include "clarifykit/analytics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "json.hpp"
#include "json_util.hpp"

namespace clarifykit::analytics {

using nlohmann::json;
using nlohmann::ordered_json;

std::string stars_for(double p_value) {
  if (p_value < 0.01) return "***";
  if (p_value <= 0.05) return "**";
  if (p_value < 0.1) return "*";
  return "";
}

namespace {

double log_choose(std::size_t n, std::size_t k) {
  return std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) - std::lgamma(double(n - k) + 1);
}

}  // namespace

Significance significance_test(std::size_t success_a, std::size_t n_a, std::size_t success_b, std::size_t n_b) {
  if (n_a == 0 || n_b == 0) throw PreconditionError("significance test needs non-empty samples");
  if (success_a > n_a || success_b > n_b) throw PreconditionError("successes exceed sample size");

  const std::size_t n = n_a + n_b;
  const std::size_t s = success_a + success_b;
  const std::size_t lo = s > n_b ? s - n_b : 0;
  const std::size_t hi = std::min(n_a, s);
  const double log_denominator = log_choose(n, s);
  auto log_p = [&](std::size_t x) { return log_choose(n_a, x) + log_choose(n_b, s - x) - log_denominator; };

  const double observed = log_p(success_a);
  // Relative slack so tables tied with the observed one in exact arithmetic
  // are not lost to rounding.
  const double cutoff = observed + 1e-7;
  double included = 0, excluded = 0;
  for (std::size_t x = lo; x <= hi; ++x) {
    const double lp = log_p(x);
    (lp <= cutoff ? included : excluded) += std::exp(lp);
  }
  Significance sig;
  sig.p_value = excluded == 0 ? 1.0 : std::min(1.0, included / (included + excluded));
  sig.stars = stars_for(sig.p_value);
  return sig;
}

double MetricCell::rate(std::string_view metric) const {
  if (metric == "comm_rate") return comm_rate;
  if (metric == "goodq_rate") return goodq_rate;
  if (metric == "pass_at_1") return pass_at_1;
  if (metric == "test_pass_rate") return test_pass_rate;
  throw PreconditionError("unknown metric: " + std::string(metric));
}

namespace {

void accumulate(MetricCell& cell, const eval::EvalTranscript& t, double& fraction_sum) {
  ++cell.n;
  if (t.comm_label == 1) ++cell.comm_count;
  if (t.goodq_label && *t.goodq_label == 1) ++cell.goodq_count;
  if (t.test_outcome.all_passed()) ++cell.pass_count;
  cell.tests_passed += t.test_outcome.passed;
  cell.tests_total += t.test_outcome.total;
  if (t.test_outcome.total > 0) fraction_sum += double(t.test_outcome.passed) / double(t.test_outcome.total);
}

void finish(MetricCell& cell, double fraction_sum) {
  const double n = double(cell.n);
  cell.comm_rate = double(cell.comm_count) / n;
  cell.goodq_rate = double(cell.goodq_count) / n;
  cell.pass_at_1 = double(cell.pass_count) / n;
  cell.test_pass_rate = fraction_sum / n;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<eval::EvalTranscript>& transcripts, std::string label) {
  if (transcripts.empty()) throw PreconditionError("no transcripts to aggregate");
  MetricsReport report;
  report.label = std::move(label);
  double overall_sum = 0;
  std::map<Category, double> sums;
  for (const auto& t : transcripts) {
    if (t.goodq_label && t.comm_label != 1) {
      throw PreconditionError("transcript " + t.task_id + " has a goodq label without comm_label = 1");
    }
    accumulate(report.overall, t, overall_sum);
    if (t.error) ++report.errors;
    if (t.category) accumulate(report.per_category[*t.category], t, sums[*t.category]);
  }
  finish(report.overall, overall_sum);
  for (auto& [c, cell] : report.per_category) finish(cell, sums[c]);
  return report;
}

namespace {

void compare_cells(const MetricCell& base, MetricCell& cand) {
  cand.significance.clear();
  cand.significance["comm_rate"] = significance_test(cand.comm_count, cand.n, base.comm_count, base.n);
  cand.significance["goodq_rate"] = significance_test(cand.goodq_count, cand.n, base.goodq_count, base.n);
  cand.significance["pass_at_1"] = significance_test(cand.pass_count, cand.n, base.pass_count, base.n);
  if (cand.tests_total > 0 && base.tests_total > 0) {
    cand.significance["test_pass_rate"] =
        significance_test(cand.tests_passed, cand.tests_total, base.tests_passed, base.tests_total);
  }
}

}  // namespace

void compare_reports(const MetricsReport& baseline, MetricsReport& candidate) {
  compare_cells(baseline.overall, candidate.overall);
  for (auto& [c, cell] : candidate.per_category) {
    if (auto it = baseline.per_category.find(c); it != baseline.per_category.end()) {
      compare_cells(it->second, cell);
    }
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto wordish = [](unsigned char ch) { return std::isalnum(ch) || ch == '_' || ch >= 0x80; };
  for (char c : text) {
    const auto ch = static_cast<unsigned char>(c);
    if (wordish(ch)) {
      word += static_cast<char>(std::tolower(ch));
      continue;
    }
    if (!word.empty()) tokens.push_back(std::move(word)), word.clear();
    if (!std::isspace(ch)) tokens.emplace_back(1, c);
  }
  if (!word.empty()) tokens.push_back(std::move(word));
  return tokens;
}

UnigramLM::UnigramLM(std::map<std::string, std::size_t> counts, double k) : counts_(std::move(counts)), k_(k) {
  if (!(k > 0)) throw PreconditionError("smoothing k must be positive");
  for (const auto& [_, c] : counts_) total_ += c;
}

double UnigramLM::unknown_prob() const {
  return k_ / (double(total_) + k_ * double(counts_.size() + 1));
}

double UnigramLM::prob(const std::string& token) const {
  const auto it = counts_.find(token);
  if (it == counts_.end()) return unknown_prob();
  return (double(it->second) + k_) / (double(total_) + k_ * double(counts_.size() + 1));
}

double UnigramLM::log_prob(const std::string& token) const { return std::log(prob(token)); }

UniformLM::UniformLM(std::set<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
  if (vocabulary_.empty()) throw PreconditionError("uniform model needs a vocabulary");
}

double UniformLM::log_prob(const std::string& token) const {
  if (!vocabulary_.contains(token)) throw PreconditionError("token outside the uniform vocabulary: " + token);
  return -std::log(double(vocabulary_.size()));
}

UnigramLM fit_unigram(const std::vector<std::string>& corpus, double k) {
  if (corpus.empty()) throw PreconditionError("cannot fit a unigram on an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& tok : tokenize(text)) ++counts[std::move(tok)];
  }
  return UnigramLM(std::move(counts), k);
}

double perplexity(const TokenDistribution& lm, std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw PreconditionError("perplexity of a text with no tokens");
  double nll = 0;
  for (const auto& tok : tokens) nll -= lm.log_prob(tok);
  return std::exp(nll / double(tokens.size()));
}

double entropy(std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw PreconditionError("entropy of a text with no tokens");
  std::map<std::string, std::size_t> counts;
  for (const auto& tok : tokens) ++counts[tok];
  const double n = double(tokens.size());
  double h = 0;
  for (const auto& [_, c] : counts) {
    const double p = double(c) / n;
    h -= p * std::log2(p);
  }
  return h == 0 ? 0.0 : h;
}

namespace {

FieldStats field_stats(const std::vector<std::string>& texts, double k) {
  std::vector<std::string> usable;
  for (const auto& t : texts) {
    if (!tokenize(t).empty()) usable.push_back(t);
  }
  FieldStats stats;
  if (usable.empty()) return stats;
  const auto lm = fit_unigram(usable, k);
  for (const auto& t : usable) {
    stats.mean_perplexity += perplexity(lm, t);
    stats.mean_entropy += entropy(t);
  }
  stats.mean_perplexity /= double(usable.size());
  stats.mean_entropy /= double(usable.size());
  return stats;
}

}  // namespace

DatasetStats analyze_dataset(const ClarifyDataset& dataset, double k) {
  if (dataset.samples.empty()) throw PreconditionError("dataset has no samples");
  std::vector<std::string> problems, answers;
  for (const auto& s : dataset.samples) {
    problems.push_back(s.problem);
    answers.push_back(s.answer);
  }
  DatasetStats stats;
  stats.n = dataset.samples.size();
  stats.problem = field_stats(problems, k);
  stats.answer = field_stats(answers, k);
  return stats;
}

// ---------------------------------------------------------------------------

std::string_view to_string(AnnotatedMetric m) { return m == AnnotatedMetric::comm ? "comm" : "goodq"; }

AnnotatedMetric parse_annotated_metric(std::string_view text) {
  if (text == "comm") return AnnotatedMetric::comm;
  if (text == "goodq") return AnnotatedMetric::goodq;
  throw ParseError("unknown annotation metric: " + std::string(text));
}

std::vector<AnnotationRecord> parse_annotations(std::string_view text) {
  std::vector<AnnotationRecord> out;
  std::size_t start = 0, index = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ++index;
    try {
      const auto j = json::parse(line);
      AnnotationRecord r;
      r.sample_id = j.at("sample_id").get<std::string>();
      r.metric = parse_annotated_metric(j.at("metric").get<std::string>());
      r.human_label = j.at("human_label").get<int>();
      r.llm_label = j.at("llm_label").get<int>();
      r.rater = j.value("rater", "");
      for (int v : {r.human_label, r.llm_label}) {
        if (v != 0 && v != 1) throw ParseError("labels must be 0 or 1");
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("annotation " + std::to_string(index) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("annotation " + std::to_string(index) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
  return parse_annotations(io::read_file(path));
}

std::string serialize_annotations(const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["sample_id"] = r.sample_id;
    j["metric"] = std::string(to_string(r.metric));
    j["human_label"] = r.human_label;
    j["llm_label"] = r.llm_label;
    j["rater"] = r.rater;
    out += detail::dump_line(j) + '\n';
  }
  return out;
}

double cohen_kappa(const std::vector<AnnotationRecord>& records) {
  if (records.size() < 2) throw PreconditionError("kappa needs at least two annotations");
  double m[2][2] = {{0, 0}, {0, 0}};
  for (const auto& r : records) {
    if ((r.human_label != 0 && r.human_label != 1) || (r.llm_label != 0 && r.llm_label != 1)) {
      throw PreconditionError("labels must be 0 or 1");
    }
    m[r.human_label][r.llm_label] += 1;
  }
  const double n = double(records.size());
  const double p_o = (m[0][0] + m[1][1]) / n;
  const double human1 = (m[1][0] + m[1][1]) / n, llm1 = (m[0][1] + m[1][1]) / n;
  const double p_e = human1 * llm1 + (1 - human1) * (1 - llm1);
  if (p_e == 1.0) return 1.0;
  return (p_o - p_e) / (1 - p_e);
}

}  // namespace clarifykit::analytics
