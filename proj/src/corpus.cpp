#include "clarifykit/corpus.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

#include "json.hpp"
#include "json_util.hpp"

namespace clarifykit {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CategoryInfo {
  Category value;
  std::string_view code;
  std::string_view name;
};

constexpr std::array<CategoryInfo, 6> kCategoryTable = {{
    {Category::k1a, "1a", "ambiguous"},
    {Category::k1c, "1c", "inconsistent"},
    {Category::k1p, "1p", "incomplete"},
    {Category::k2ac, "2ac", "ambiguous_inconsistent"},
    {Category::k2ap, "2ap", "ambiguous_incomplete"},
    {Category::k2cp, "2cp", "inconsistent_incomplete"},
}};

const CategoryInfo& info(Category c) {
  return kCategoryTable[static_cast<std::size_t>(c)];
}

ParseError field_error(std::size_t index, std::string_view field, std::string_view what) {
  return ParseError("record " + std::to_string(index) + ": " + std::string(what) + " (field `" +
                    std::string(field) + "`)");
}

std::string require_string(const json& obj, std::string_view field, std::size_t index) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    throw field_error(index, field, "missing field");
  }
  if (!it->is_string()) {
    throw field_error(index, field, "expected a string");
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, std::string_view field,
                                           std::size_t index) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    return std::nullopt;
  }
  if (!it->is_string()) {
    throw field_error(index, field, "expected a string");
  }
  return it->get<std::string>();
}

json comparison_to_json(const Comparison& c) {
  switch (c.kind) {
    case Comparison::Kind::exact:
      return "exact";
    case Comparison::Kind::whitespace_normalized:
      return "whitespace_normalized";
    case Comparison::Kind::numeric_tolerant:
      return json{{"kind", "numeric_tolerant"}, {"epsilon", c.epsilon}};
  }
  return "exact";
}

Comparison comparison_from_json(const json& j, std::size_t index) {
  if (j.is_null()) {
    return Comparison::exact();
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "exact") return Comparison::exact();
    if (s == "whitespace_normalized") return Comparison::whitespace_normalized();
    if (s == "numeric_tolerant") {
      throw field_error(index, "comparison", "numeric_tolerant requires an epsilon");
    }
    throw field_error(index, "comparison", "unknown comparison '" + s + "'");
  }
  if (j.is_object() && j.value("kind", "") == "numeric_tolerant") {
    const auto eps = j.find("epsilon");
    if (eps == j.end() || !eps->is_number()) {
      throw field_error(index, "comparison", "numeric_tolerant requires an epsilon");
    }
    return Comparison::numeric_tolerant(eps->get<double>());
  }
  throw field_error(index, "comparison", "malformed comparison");
}

bool is_number_token(const std::string& tok) {
  if (tok.empty()) return false;
  char* end = nullptr;
  std::strtod(tok.c_str(), &end);
  return end == tok.c_str() + tok.size();
}

bool all_numeric(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tok;
  bool any = false;
  while (in >> tok) {
    if (!is_number_token(tok)) return false;
    any = true;
  }
  return any;
}

std::string join_lines_if_array(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) {
    std::string out;
    for (const auto& line : j) {
      out += line.is_string() ? line.get<std::string>() : line.dump();
      if (out.empty() || out.back() != '\n') out += '\n';
    }
    return out;
  }
  return j.dump();
}

// APPS rows store `solutions` and `input_output` as JSON-encoded strings.
json maybe_decode(const json& j) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s.empty()) return json();
    return json::parse(s);
  }
  return j;
}

CodingProblem parse_apps_row(const json& row, std::size_t index) {
  CodingProblem p;
  p.source = Source::apps;
  const auto id_it = row.find("problem_id");
  if (id_it == row.end() || id_it->is_null()) {
    throw field_error(index, "problem_id", "missing field");
  }
  p.id = id_it->is_string() ? id_it->get<std::string>() : id_it->dump();
  p.description = row.value("question", "");
  if (auto starter = optional_string(row, "starter_code", index); starter && !starter->empty()) {
    p.starter_code = std::move(starter);
  }
  json solutions;
  json io;
  try {
    solutions = maybe_decode(row.value("solutions", json()));
    io = maybe_decode(row.value("input_output", json()));
  } catch (const json::parse_error& e) {
    throw field_error(index, "input_output", std::string("invalid embedded JSON: ") + e.what());
  }
  if (solutions.is_array()) {
    for (const auto& s : solutions) {
      if (s.is_string()) p.solutions.push_back(s.get<std::string>());
    }
  }
  if (!io.is_object()) {
    throw field_error(index, "input_output", "missing test cases");
  }
  const auto& inputs = io.value("inputs", json::array());
  const auto& outputs = io.value("outputs", json::array());
  if (!inputs.is_array() || !outputs.is_array() || inputs.size() != outputs.size()) {
    throw field_error(index, "input_output", "inputs and outputs differ in length");
  }
  if (auto fn = io.find("fn_name"); fn != io.end() && fn->is_string()) {
    p.entry_point = fn->get<std::string>();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const json args = inputs[i].is_array() ? inputs[i] : json::array({inputs[i]});
      // APPS wraps each call-based expected value in a one-element list.
      const json& expected = outputs[i].is_array() && outputs[i].size() == 1 ? outputs[i][0] : outputs[i];
      p.test_cases.push_back({args.dump(), expected.dump() + "\n", Comparison::whitespace_normalized()});
    }
  } else {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      TestCase tc;
      tc.input = join_lines_if_array(inputs[i]);
      tc.expected_output = join_lines_if_array(outputs[i]);
      tc.comparison = all_numeric(tc.expected_output) ? Comparison::numeric_tolerant(1e-6)
                                                      : Comparison::exact();
      p.test_cases.push_back(std::move(tc));
    }
  }
  return p;
}

void check_unique_ids(const Corpus& corpus) {
  std::map<std::string, std::size_t> seen;
  std::vector<std::string> dups;
  for (const auto& p : corpus) {
    if (++seen[p.id] == 2) dups.push_back(p.id);
  }
  if (!dups.empty()) {
    std::string msg = "duplicate ids:";
    for (const auto& d : dups) msg += " " + d;
    throw ParseError(msg);
  }
}

}  // namespace

std::string_view to_code(Category c) { return info(c).code; }
std::string_view to_name(Category c) { return info(c).name; }

Category parse_category(std::string_view text) {
  for (const auto& entry : kCategoryTable) {
    if (text == entry.code || text == entry.name) return entry.value;
  }
  throw ParseError("unknown clarification category '" + std::string(text) + "'");
}

bool is_base_category(Category c) {
  return c == Category::k1a || c == Category::k1c || c == Category::k1p;
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::apps: return "apps";
    case Source::humaneval: return "humaneval";
    case Source::humanevalcomm: return "humanevalcomm";
    case Source::other: return "other";
  }
  return "other";
}

Source parse_source(std::string_view text) {
  if (text == "apps") return Source::apps;
  if (text == "humaneval") return Source::humaneval;
  if (text == "humanevalcomm") return Source::humanevalcomm;
  if (text == "other") return Source::other;
  throw ParseError("unknown source '" + std::string(text) + "'");
}

CorpusFormat parse_corpus_format(std::string_view text) {
  if (text == "canonical" || text == "jsonl") return CorpusFormat::canonical;
  if (text == "apps") return CorpusFormat::apps;
  throw ParseError("unknown corpus format '" + std::string(text) + "'");
}

void check_problem(const CodingProblem& p, std::size_t index) {
  if (p.id.empty()) throw field_error(index, "id", "empty id");
  if (p.description.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ParseError("record " + std::to_string(index) + ": empty description");
  }
  for (std::size_t t = 0; t < p.test_cases.size(); ++t) {
    const auto& c = p.test_cases[t].comparison;
    if (c.kind == Comparison::Kind::numeric_tolerant && !(c.epsilon > 0.0)) {
      throw field_error(index, "test_cases",
                        "test " + std::to_string(t) + " numeric_tolerant epsilon must be > 0");
    }
  }
  if (p.entry_point && p.entry_point->empty()) {
    throw field_error(index, "entry_point", "empty entry point");
  }
}

CodingProblem parse_problem_line(std::string_view line, std::size_t index) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("record " + std::to_string(index) + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ParseError("record " + std::to_string(index) + ": not an object");
  CodingProblem p;
  p.id = require_string(j, "id", index);
  p.description = optional_string(j, "description", index).value_or("");
  p.starter_code = optional_string(j, "starter_code", index);
  p.entry_point = optional_string(j, "entry_point", index);
  if (auto src = optional_string(j, "source", index)) {
    try {
      p.source = parse_source(*src);
    } catch (const ParseError&) {
      throw field_error(index, "source", "unknown source '" + *src + "'");
    }
  }
  if (auto it = j.find("test_cases"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw field_error(index, "test_cases", "expected a list");
    for (const auto& tc : *it) {
      if (!tc.is_object()) throw field_error(index, "test_cases", "expected objects");
      TestCase t;
      t.input = require_string(tc, "input", index);
      t.expected_output = require_string(tc, "expected_output", index);
      t.comparison = comparison_from_json(tc.value("comparison", json()), index);
      p.test_cases.push_back(std::move(t));
    }
  }
  if (auto it = j.find("solutions"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw field_error(index, "solutions", "expected a list");
    for (const auto& s : *it) {
      if (!s.is_string()) throw field_error(index, "solutions", "expected strings");
      p.solutions.push_back(s.get<std::string>());
    }
  }
  check_problem(p, index);
  return p;
}

Corpus parse_corpus_text(std::string_view text, CorpusFormat format) {
  Corpus corpus;
  std::size_t index = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ++index;
    if (format == CorpusFormat::canonical) {
      corpus.push_back(parse_problem_line(line, index));
    } else {
      json row;
      try {
        row = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError("record " + std::to_string(index) + ": invalid JSON: " + e.what());
      }
      auto p = parse_apps_row(row, index);
      check_problem(p, index);
      corpus.push_back(std::move(p));
    }
  }
  check_unique_ids(corpus);
  return corpus;
}

Corpus parse_corpus(const std::filesystem::path& path, CorpusFormat format) {
  return parse_corpus_text(io::read_file(path), format);
}

std::string serialize_problem(const CodingProblem& p) {
  ordered_json j;
  j["id"] = p.id;
  j["description"] = p.description;
  j["starter_code"] = p.starter_code ? json(*p.starter_code) : json();
  ordered_json tests = ordered_json::array();
  for (const auto& t : p.test_cases) {
    ordered_json tj;
    tj["input"] = t.input;
    tj["expected_output"] = t.expected_output;
    tj["comparison"] = comparison_to_json(t.comparison);
    tests.push_back(std::move(tj));
  }
  j["test_cases"] = std::move(tests);
  j["solutions"] = p.solutions;
  j["source"] = std::string(to_string(p.source));
  if (p.entry_point) j["entry_point"] = *p.entry_point;
  return detail::dump_line(j);
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& p : corpus) {
    out += serialize_problem(p);
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  io::write_file_atomic(path, serialize_corpus(corpus));
}

std::string serialize_dataset(const ClarifyDataset& dataset) {
  std::string out;
  for (const auto& s : dataset.samples) {
    ordered_json j;
    j["problem"] = s.problem;
    j["answer"] = s.answer;
    j["clarification_category"] = std::string(to_code(s.category));
    j["origin_id"] = s.origin_id;
    out += detail::dump_line(j);
    out += '\n';
  }
  return out;
}

ClarifyDataset parse_dataset_text(std::string_view text) {
  ClarifyDataset d;
  std::size_t index = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ++index;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("record " + std::to_string(index) + ": invalid JSON: " + e.what());
    }
    ClarifySample s;
    s.problem = require_string(j, "problem", index);
    s.answer = require_string(j, "answer", index);
    const auto cat = require_string(j, "clarification_category", index);
    try {
      s.category = parse_category(cat);
    } catch (const ParseError&) {
      throw field_error(index, "clarification_category", "unknown category '" + cat + "'");
    }
    s.origin_id = optional_string(j, "origin_id", index).value_or("");
    d.samples.push_back(std::move(s));
  }
  d.category_counts = count_categories(d.samples);
  return d;
}

ClarifyDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset_text(io::read_file(path));
}

void write_dataset(const std::filesystem::path& path, const ClarifyDataset& dataset) {
  io::write_file_atomic(path, serialize_dataset(dataset));
}

std::map<Category, std::size_t> count_categories(const std::vector<ClarifySample>& samples) {
  std::map<Category, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.category];
  return counts;
}

ClarifyDataset consolidate(const std::vector<Mutation>& mutations,
                           const std::vector<Question>& questions) {
  using Key = std::pair<std::string, Category>;
  std::map<Key, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    by_key[{questions[i].origin_id, questions[i].category}].push_back(i);
  }
  std::vector<std::string> orphans;
  std::set<Key> mutation_keys;
  auto key_text = [](const Key& k) { return k.first + "/" + std::string(to_code(k.second)); };

  ClarifyDataset d;
  for (const auto& m : mutations) {
    const Key key{m.origin_id, m.category};
    if (!mutation_keys.insert(key).second) {
      orphans.push_back("duplicate mutation " + key_text(key));
      continue;
    }
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      orphans.push_back("mutation " + key_text(key));
      continue;
    }
    if (it->second.size() > 1) {
      orphans.push_back("duplicate question " + key_text(key));
      continue;
    }
    d.samples.push_back({m.text, questions[it->second.front()].text, m.category, m.origin_id});
  }
  for (const auto& [key, idx] : by_key) {
    if (!mutation_keys.contains(key)) orphans.push_back("question " + key_text(key));
  }
  if (!orphans.empty()) {
    std::string msg = std::to_string(orphans.size()) + " orphan key(s):";
    for (const auto& o : orphans) msg += " [" + o + "]";
    throw PreconditionError(msg);
  }
  d.category_counts = count_categories(d.samples);
  return d;
}

bool has_interrogative(std::string_view text) {
  return text.find('?') != std::string_view::npos;
}

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(), [](const auto& v) {
    return v.severity == Violation::Severity::error;
  }));
}

std::size_t ValidationReport::warning_count() const {
  return violations.size() - error_count();
}

ValidationReport validate_dataset(const ClarifyDataset& dataset, bool synthesized) {
  ValidationReport report;
  auto add = [&](Violation::Severity sev, std::size_t i, std::string msg) {
    report.violations.push_back({sev, i, dataset.samples[i].origin_id, std::move(msg)});
  };
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    const auto& id = s.origin_id;
    if (s.problem.find_first_not_of(" \t\r\n") == std::string::npos) {
      add(Violation::Severity::error, i, "sample " + id + ": empty problem");
    }
    if (s.answer.find_first_not_of(" \t\r\n") == std::string::npos) {
      add(Violation::Severity::error, i, "sample " + id + ": empty answer");
    } else if (!has_interrogative(s.answer)) {
      add(Violation::Severity::warning, i, "sample " + id + ": answer has no question mark");
    }
    if (synthesized && !is_base_category(s.category)) {
      add(Violation::Severity::error, i,
          "sample " + id + ": category " + std::string(to_code(s.category)) +
              " is not a synthesis category");
    }
    if (id.empty()) {
      add(Violation::Severity::error, i, "sample " + std::to_string(i) + ": empty origin_id");
    }
  }
  return report;
}

}  // namespace clarifykit
