#pragma once

// API-call log ingestion: sandbox log lines -> records -> per-API counts ->
// normalized feature vectors over a fixed vocabulary.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evb/label.hpp"

namespace evb {

// Entries in the reference Windows API vocabulary.
inline constexpr std::size_t kVocabularySize = 491;
inline constexpr std::uint64_t kDefaultCountCap = 32;

// Ordered API names; position j is feature index j. Names are stored lowercase
// and lookups are case-insensitive.
class ApiVocabulary {
 public:
  ApiVocabulary() = default;

  // Throws ConfigError on empty or duplicate names.
  static ApiVocabulary from_names(std::vector<std::string> names);

  // Parses the `index<whitespace>name` text format. Indices must be contiguous
  // from 0 but may appear in any order. Blank lines are ignored.
  static ApiVocabulary parse(std::string_view text);

  // Placeholder names "api000", "api001", ... for synthetic experiments.
  static ApiVocabulary synthetic(std::size_t size);

  std::string serialize() const;

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::optional<std::size_t> index_of(std::string_view api_name) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One line of a sandbox log: `Name:HexAddr (args)"tid"`.
struct ApiLogRecord {
  std::string api_name;
  std::string address;
  std::string args;
  std::string thread_id;

  bool operator==(const ApiLogRecord&) const = default;
};

struct ParsedLog {
  std::vector<ApiLogRecord> records;
  // Non-blank lines that did not match the record layout.
  std::size_t skipped = 0;
};

// Never throws on content. Blank lines are neither records nor skips.
ParsedLog parse_log(std::string_view text);

// Inverse of parse_log for a single record (no trailing newline).
std::string format_record(const ApiLogRecord& record);

struct FeatureCounts {
  std::vector<std::uint64_t> counts;
  std::size_t ignored = 0;  // records whose API is not in the vocabulary
};

FeatureCounts count_features(std::span<const ApiLogRecord> records, const ApiVocabulary& vocab);

// One sample: M values in [0,1] plus an optional label.
struct FeatureVector {
  std::string id;
  std::optional<Label> label;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  std::span<const double> view() const { return values; }

  bool operator==(const FeatureVector&) const = default;
};

// Throws NumericError for non-finite values and ConfigError for values
// outside [0,1] or a length different from expected_size (when non-zero).
void validate_feature_vector(const FeatureVector& fv, std::size_t expected_size = 0);

// value[j] = min(count[j], cap) / cap. Throws ConfigError when cap == 0.
FeatureVector normalize_counts(std::span<const std::uint64_t> counts,
                               std::uint64_t cap = kDefaultCountCap);

// value[j] = 1 if value[j] > 0 else 0. Keeps id and label.
FeatureVector binarize(const FeatureVector& fv);

}  // namespace evb
