#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "clarifykit/corpus.hpp"

namespace clarifykit::mix {

enum class RecordSource { og, clarify };
enum class MaskMode { answer_only, full_sequence };
enum class Strategy { uniform, oversample, downsample };

std::string_view to_string(RecordSource s);
std::string_view to_string(MaskMode m);
std::string_view to_string(Strategy s);
MaskMode parse_mask_mode(std::string_view text);
Strategy parse_strategy(std::string_view text);

/// One fine-tuning example. The prompt/completion split is the loss boundary:
/// answer_only trains on completion tokens, full_sequence on both.
struct TrainingRecord {
  std::string prompt;
  std::string completion;
  RecordSource source = RecordSource::og;
  std::optional<Category> category;
  MaskMode mask_mode = MaskMode::answer_only;

  /// prompt/completion non-empty; category present iff source is clarify.
  void validate() const;

  friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

struct MixSpec {
  double ratio_r = 0.5;
  Strategy strategy = Strategy::downsample;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Identifier of the sampling algorithm, recorded in every EmitSummary.
inline constexpr std::string_view kSamplerId = "mt19937_64/fisher-yates-rejection/v1";

/// Seeded generator with a platform-independent bounded draw (the standard
/// distributions are implementation-defined).
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed);

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// n_clarify / (n_og + n_clarify). Throws PreconditionError when both are 0.
double compute_ratio(std::size_t n_clarify, std::size_t n_og);

struct MixedDataset {
  std::vector<TrainingRecord> records;
  MixSpec spec;
  std::size_t og_input = 0;
  std::size_t clarify_input = 0;
  std::size_t og_count = 0;
  std::size_t clarify_count = 0;

  double achieved_ratio() const;
};

/// Sizes (og, clarify) the strategy produces from the given inputs.
/// Throws PreconditionError when the target is unreachable.
std::pair<std::size_t, std::size_t> target_counts(std::size_t n_og, std::size_t n_clarify,
                                                  const MixSpec& spec);

/// Combines both datasets at spec.ratio_r. Output order is a seeded shuffle.
MixedDataset mix(const std::vector<TrainingRecord>& og, const std::vector<TrainingRecord>& clarify,
                 const MixSpec& spec);

/// Builds standard records (problem -> first reference solution). Problems
/// without a solution are skipped.
std::vector<TrainingRecord> og_records(const Corpus& corpus, std::string_view system_prompt);
/// Builds clarify records (mutated problem -> clarifying questions).
std::vector<TrainingRecord> clarify_records(const ClarifyDataset& dataset,
                                            std::string_view system_prompt);
/// System prompt followed by the problem description.
std::string compose_prompt(std::string_view system_prompt, std::string_view description);

struct EmitSummary {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_source;
  std::map<std::string, std::size_t> per_category;
  MaskMode mask_mode = MaskMode::answer_only;
  MixSpec spec;
  double achieved_ratio = 0.0;
  std::string sampler = std::string(kSamplerId);
  std::string file_sha256;

  std::string to_text() const;
  std::string to_json() const;
};

std::string serialize_records(const std::vector<TrainingRecord>& records,
                              std::optional<MaskMode> mask_mode);
std::vector<TrainingRecord> parse_records(std::string_view text);

/// Writes the mixed dataset without a mask mode (the `mix` artifact).
void write_mixed(const std::filesystem::path& path, const MixedDataset& mixed);
MixedDataset load_mixed(const std::filesystem::path& path);

/// Writes one training record per line with the chosen mask mode.
EmitSummary emit_training_file(const MixedDataset& mixed, MaskMode mask_mode,
                               const std::filesystem::path& path);

}  // namespace clarifykit::mix
