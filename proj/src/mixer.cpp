#include "clarifykit/mixer.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "json_util.hpp"

namespace clarifykit::mix {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(RecordSource s) { return s == RecordSource::og ? "og" : "clarify"; }

std::string_view to_string(MaskMode m) {
  return m == MaskMode::answer_only ? "answer_only" : "full_sequence";
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::uniform: return "uniform";
    case Strategy::oversample: return "oversample";
    case Strategy::downsample: return "downsample";
  }
  return "downsample";
}

MaskMode parse_mask_mode(std::string_view text) {
  if (text == "answer_only") return MaskMode::answer_only;
  if (text == "full_sequence") return MaskMode::full_sequence;
  throw ParseError("unknown mask mode '" + std::string(text) + "'");
}

Strategy parse_strategy(std::string_view text) {
  if (text == "uniform") return Strategy::uniform;
  if (text == "oversample") return Strategy::oversample;
  if (text == "downsample") return Strategy::downsample;
  throw ParseError("unknown sampling strategy '" + std::string(text) + "'");
}

void TrainingRecord::validate() const {
  if (prompt.empty()) throw PreconditionError("training record has an empty prompt");
  if (completion.empty()) throw PreconditionError("training record has an empty completion");
  if ((source == RecordSource::clarify) != category.has_value()) {
    throw PreconditionError("training record category must be set exactly for clarify records");
  }
}

void MixSpec::validate() const {
  if (!(ratio_r >= 0.0 && ratio_r <= 1.0)) {
    throw PreconditionError("ratio must lie in [0, 1]");
  }
}

// std::mt19937_64 output is fixed by the standard; only the bounded draw and
// the shuffle need to be ours.
Sampler::Sampler(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Sampler::below(std::uint64_t bound) {
  if (bound == 0) throw PreconditionError("Sampler::below requires a positive bound");
  // Rejection sampling on the largest multiple of bound.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) return x % bound;
  }
}

double compute_ratio(std::size_t n_clarify, std::size_t n_og) {
  if (n_clarify + n_og == 0) throw PreconditionError("compute_ratio: both datasets are empty");
  return static_cast<double>(n_clarify) / static_cast<double>(n_og + n_clarify);
}

double MixedDataset::achieved_ratio() const { return compute_ratio(clarify_count, og_count); }

std::pair<std::size_t, std::size_t> target_counts(std::size_t n_og, std::size_t n_clarify,
                                                  const MixSpec& spec) {
  spec.validate();
  const double r = spec.ratio_r;
  if (r == 1.0) {
    if (n_clarify == 0) throw PreconditionError("ratio 1 needs a non-empty clarify dataset");
    return {0, n_clarify};
  }
  if (r == 0.0) {
    if (n_og == 0) throw PreconditionError("ratio 0 needs a non-empty standard dataset");
    return {n_og, 0};
  }
  if (n_og == 0 || n_clarify == 0) {
    throw PreconditionError("both datasets must be non-empty for a ratio strictly inside (0, 1)");
  }
  const double current = compute_ratio(n_clarify, n_og);
  const auto total = static_cast<double>(n_og + n_clarify);
  switch (spec.strategy) {
    case Strategy::uniform:
      if (std::abs(current - r) > 1.0 / total) {
        throw PreconditionError("uniform strategy keeps the natural ratio " + std::to_string(current) +
                                ", which is not within 1/|mixed| of " + std::to_string(r) +
                                "; use downsample or oversample");
      }
      return {n_og, n_clarify};
    case Strategy::downsample:
      if (current > r) {
        // Clarify side over-represented: c' = r * og / (1 - r).
        const auto c = static_cast<std::size_t>(std::llround(r * static_cast<double>(n_og) / (1.0 - r)));
        return {n_og, std::min(c, n_clarify)};
      } else {
        const auto o = static_cast<std::size_t>(std::llround((1.0 - r) * static_cast<double>(n_clarify) / r));
        return {std::min(o, n_og), n_clarify};
      }
    case Strategy::oversample:
      if (current < r) {
        const auto c = static_cast<std::size_t>(std::llround(r * static_cast<double>(n_og) / (1.0 - r)));
        return {n_og, std::max(c, n_clarify)};
      } else {
        const auto o = static_cast<std::size_t>(std::llround((1.0 - r) * static_cast<double>(n_clarify) / r));
        return {std::max(o, n_og), n_clarify};
      }
  }
  return {n_og, n_clarify};
}

namespace {

// Picks `want` records from `pool`: a seeded subset when shrinking, every
// record plus uniform draws with replacement when growing.
std::vector<TrainingRecord> resize_side(const std::vector<TrainingRecord>& pool, std::size_t want,
                                        Sampler& sampler) {
  if (want == pool.size()) return pool;
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<TrainingRecord> out;
  out.reserve(want);
  if (want < pool.size()) {
    // Partial Fisher-Yates: the first `want` slots are a uniform subset.
    for (std::size_t i = 0; i < want; ++i) {
      const auto j = i + static_cast<std::size_t>(sampler.below(pool.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(want);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.push_back(pool[i]);
    return out;
  }
  out = pool;
  while (out.size() < want) out.push_back(pool[static_cast<std::size_t>(sampler.below(pool.size()))]);
  return out;
}

}  // namespace

MixedDataset mix(const std::vector<TrainingRecord>& og, const std::vector<TrainingRecord>& clarify,
                 const MixSpec& spec) {
  const auto [want_og, want_clarify] = target_counts(og.size(), clarify.size(), spec);
  Sampler sampler(spec.seed);
  MixedDataset out;
  out.spec = spec;
  out.og_input = og.size();
  out.clarify_input = clarify.size();
  auto og_side = resize_side(og, want_og, sampler);
  auto clarify_side = resize_side(clarify, want_clarify, sampler);
  out.og_count = og_side.size();
  out.clarify_count = clarify_side.size();
  out.records = std::move(og_side);
  out.records.insert(out.records.end(), std::make_move_iterator(clarify_side.begin()),
                     std::make_move_iterator(clarify_side.end()));
  sampler.shuffle(out.records);
  return out;
}

std::string compose_prompt(std::string_view system_prompt, std::string_view description) {
  std::string out(system_prompt);
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
  out += "\n\n";
  out += description;
  return out;
}

std::vector<TrainingRecord> og_records(const Corpus& corpus, std::string_view system_prompt) {
  std::vector<TrainingRecord> out;
  for (const auto& p : corpus) {
    if (p.solutions.empty() || p.solutions.front().empty()) continue;
    std::string description = p.description;
    if (p.starter_code && !p.starter_code->empty()) description += "\n\n" + *p.starter_code;
    out.push_back({compose_prompt(system_prompt, description), p.solutions.front(), RecordSource::og,
                   std::nullopt, MaskMode::answer_only});
  }
  return out;
}

std::vector<TrainingRecord> clarify_records(const ClarifyDataset& dataset,
                                            std::string_view system_prompt) {
  std::vector<TrainingRecord> out;
  out.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) {
    out.push_back({compose_prompt(system_prompt, s.problem), s.answer, RecordSource::clarify,
                   s.category, MaskMode::answer_only});
  }
  return out;
}

std::string serialize_records(const std::vector<TrainingRecord>& records,
                              std::optional<MaskMode> mask_mode) {
  std::string out;
  for (const auto& r : records) {
    r.validate();
    ordered_json j;
    j["prompt"] = r.prompt;
    j["completion"] = r.completion;
    if (mask_mode) j["mask_mode"] = std::string(to_string(*mask_mode));
    j["source"] = std::string(to_string(r.source));
    j["category"] = r.category ? json(std::string(to_code(*r.category))) : json();
    out += detail::dump_line(j);
    out += '\n';
  }
  return out;
}

std::vector<TrainingRecord> parse_records(std::string_view text) {
  std::vector<TrainingRecord> out;
  std::size_t start = 0;
  std::size_t index = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ++index;
    try {
      const auto j = json::parse(line);
      TrainingRecord r;
      r.prompt = j.at("prompt").get<std::string>();
      r.completion = j.at("completion").get<std::string>();
      r.source = j.at("source").get<std::string>() == "clarify" ? RecordSource::clarify : RecordSource::og;
      if (auto c = j.find("category"); c != j.end() && c->is_string()) {
        r.category = parse_category(c->get<std::string>());
      }
      if (auto m = j.find("mask_mode"); m != j.end() && m->is_string()) {
        r.mask_mode = parse_mask_mode(m->get<std::string>());
      }
      r.validate();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("record " + std::to_string(index) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError("record " + std::to_string(index) + ": " + e.what());
    }
  }
  return out;
}

void write_mixed(const std::filesystem::path& path, const MixedDataset& mixed) {
  io::write_file_atomic(path, serialize_records(mixed.records, std::nullopt));
}

MixedDataset load_mixed(const std::filesystem::path& path) {
  MixedDataset m;
  m.records = parse_records(io::read_file(path));
  for (const auto& r : m.records) {
    (r.source == RecordSource::og ? m.og_count : m.clarify_count)++;
  }
  m.og_input = m.og_count;
  m.clarify_input = m.clarify_count;
  return m;
}

EmitSummary emit_training_file(const MixedDataset& mixed, MaskMode mask_mode,
                               const std::filesystem::path& path) {
  const std::string content = serialize_records(mixed.records, mask_mode);
  io::write_file_atomic(path, content);
  EmitSummary s;
  s.total = mixed.records.size();
  s.mask_mode = mask_mode;
  s.spec = mixed.spec;
  for (const auto& r : mixed.records) {
    ++s.per_source[std::string(to_string(r.source))];
    if (r.category) ++s.per_category[std::string(to_code(*r.category))];
  }
  s.achieved_ratio = s.total == 0 ? 0.0 : mixed.achieved_ratio();
  s.file_sha256 = io::sha256_hex(content);
  return s;
}

std::string EmitSummary::to_text() const {
  std::ostringstream out;
  out << "records: " << total << "\n";
  for (const auto& [k, v] : per_source) out << "  source " << k << ": " << v << "\n";
  for (const auto& [k, v] : per_category) out << "  category " << k << ": " << v << "\n";
  out << "mask_mode: " << to_string(mask_mode) << "\n";
  out << "ratio: target " << spec.ratio_r << ", achieved " << achieved_ratio << " ("
      << to_string(spec.strategy) << ", seed " << spec.seed << ")\n";
  out << "sampler: " << sampler << "\n";
  out << "sha256: " << file_sha256 << "\n";
  return out.str();
}

std::string EmitSummary::to_json() const {
  ordered_json j;
  j["total"] = total;
  j["per_source"] = per_source;
  j["per_category"] = per_category;
  j["mask_mode"] = std::string(to_string(mask_mode));
  j["ratio_target"] = spec.ratio_r;
  j["ratio_achieved"] = achieved_ratio;
  j["strategy"] = std::string(to_string(spec.strategy));
  j["seed"] = spec.seed;
  j["sampler"] = sampler;
  j["sha256"] = file_sha256;
  return j.dump(2);
}

}  // namespace clarifykit::mix
