#include <cstdio>

#include "clarifykit/analytics.hpp"
#include "json.hpp"
#include "json_util.hpp"

namespace clarifykit::analytics {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json cell_json(const MetricCell& c) {
  ordered_json j;
  j["n"] = c.n;
  j["comm_count"] = c.comm_count;
  j["goodq_count"] = c.goodq_count;
  j["pass_count"] = c.pass_count;
  j["tests_passed"] = c.tests_passed;
  j["tests_total"] = c.tests_total;
  j["comm_rate"] = c.comm_rate;
  j["goodq_rate"] = c.goodq_rate;
  j["pass_at_1"] = c.pass_at_1;
  j["test_pass_rate"] = c.test_pass_rate;
  ordered_json sig = ordered_json::object();
  for (auto name : kMetricNames) {
    if (auto it = c.significance.find(std::string(name)); it != c.significance.end()) {
      sig[std::string(name)] = {{"p_value", it->second.p_value}, {"stars", it->second.stars}};
    }
  }
  j["significance"] = std::move(sig);
  return j;
}

MetricCell parse_cell(const json& j) {
  MetricCell c;
  c.n = j.at("n").get<std::size_t>();
  c.comm_count = j.at("comm_count").get<std::size_t>();
  c.goodq_count = j.at("goodq_count").get<std::size_t>();
  c.pass_count = j.at("pass_count").get<std::size_t>();
  c.tests_passed = j.at("tests_passed").get<std::size_t>();
  c.tests_total = j.at("tests_total").get<std::size_t>();
  c.comm_rate = j.at("comm_rate").get<double>();
  c.goodq_rate = j.at("goodq_rate").get<double>();
  c.pass_at_1 = j.at("pass_at_1").get<double>();
  c.test_pass_rate = j.at("test_pass_rate").get<double>();
  if (auto s = j.find("significance"); s != j.end()) {
    for (const auto& [name, v] : s->items()) {
      c.significance[name] = {v.at("p_value").get<double>(), v.at("stars").get<std::string>()};
    }
  }
  return c;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string stars_of(const MetricCell& c, std::string_view metric) {
  const auto it = c.significance.find(std::string(metric));
  return it == c.significance.end() ? std::string() : it->second.stars;
}

std::vector<std::pair<std::string, const MetricCell*>> rows(const MetricsReport& r) {
  std::vector<std::pair<std::string, const MetricCell*>> out{{"overall", &r.overall}};
  for (auto c : kAllCategories) {
    if (auto it = r.per_category.find(c); it != r.per_category.end()) {
      out.emplace_back(std::string(to_code(c)), &it->second);
    }
  }
  return out;
}

std::string render_table(const std::vector<MetricsReport>& reports) {
  std::string out;
  bool first = true;
  for (const auto& r : reports) {
    if (!first) out += '\n';
    first = false;
    out += "report: " + (r.label.empty() ? std::string("(unlabelled)") : r.label) + "\n";
    if (!r.templates_digest.empty()) out += "templates: " + r.templates_digest + "\n";
    out += "errors: " + std::to_string(r.errors) + "\n";
    out += pad("category", 10) + pad("n", 7) + pad("comm%", 12) + pad("goodq%", 12) + pad("pass@1%", 12) +
           "testpass%\n";
    for (const auto& [name, cell] : rows(r)) {
      std::string line = pad(name, 10) + pad(std::to_string(cell->n), 7);
      for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
        std::string v = fixed(100.0 * cell->rate(kMetricNames[m]), 2) + stars_of(*cell, kMetricNames[m]);
        line += m + 1 < kMetricNames.size() ? pad(std::move(v), 12) : v;
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + "\n";
    }
  }
  if (!reports.empty()) out += "\n* p<0.1; ** p<=0.05; *** p<0.01\n";
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string render_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "label,category,n,comm_count,goodq_count,pass_count,tests_passed,tests_total";
  for (auto m : kMetricNames) out += "," + std::string(m);
  for (auto m : kMetricNames) out += "," + std::string(m) + "_p," + std::string(m) + "_stars";
  out += '\n';
  for (const auto& r : reports) {
    for (const auto& [name, cell] : rows(r)) {
      out += csv_field(r.label) + "," + name + "," + std::to_string(cell->n) + "," +
             std::to_string(cell->comm_count) + "," + std::to_string(cell->goodq_count) + "," +
             std::to_string(cell->pass_count) + "," + std::to_string(cell->tests_passed) + "," +
             std::to_string(cell->tests_total);
      for (auto m : kMetricNames) out += "," + fixed(cell->rate(m), 6);
      for (auto m : kMetricNames) {
        const auto it = cell->significance.find(std::string(m));
        if (it == cell->significance.end()) {
          out += ",,";
        } else {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.6g", it->second.p_value);
          out += std::string(",") + buf + "," + it->second.stars;
        }
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace

std::string serialize_report(const MetricsReport& report) {
  ordered_json j;
  j["label"] = report.label;
  j["templates_digest"] = report.templates_digest;
  j["errors"] = report.errors;
  j["overall"] = cell_json(report.overall);
  ordered_json per = ordered_json::object();
  for (auto c : kAllCategories) {
    if (auto it = report.per_category.find(c); it != report.per_category.end()) {
      per[std::string(to_code(c))] = cell_json(it->second);
    }
  }
  j["per_category"] = std::move(per);
  return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

MetricsReport parse_report(std::string_view text) {
  try {
    const auto j = json::parse(text);
    MetricsReport r;
    r.label = j.value("label", "");
    r.templates_digest = j.value("templates_digest", "");
    r.errors = j.value("errors", std::size_t{0});
    r.overall = parse_cell(j.at("overall"));
    for (const auto& [code, cell] : j.at("per_category").items()) {
      r.per_category[parse_category(code)] = parse_cell(cell);
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed metrics report: ") + e.what());
  }
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "table_text" || text == "table" || text == "text") return ReportFormat::table_text;
  if (text == "csv") return ReportFormat::csv;
  throw ParseError("unknown report format: " + std::string(text));
}

std::string render_report(const std::vector<MetricsReport>& reports, ReportFormat format) {
  return format == ReportFormat::csv ? render_csv(reports) : render_table(reports);
}

std::string render_dataset_stats(const DatasetStats& stats) {
  std::string out = "samples: " + std::to_string(stats.n) + "\n";
  out += pad("field", 10) + pad("perplexity", 14) + "entropy_bits\n";
  out += pad("problem", 10) + pad(fixed(stats.problem.mean_perplexity, 2), 14) +
         fixed(stats.problem.mean_entropy, 2) + "\n";
  out += pad("answer", 10) + pad(fixed(stats.answer.mean_perplexity, 2), 14) +
         fixed(stats.answer.mean_entropy, 2) + "\n";
  return out;
}

}  // namespace clarifykit::analytics
