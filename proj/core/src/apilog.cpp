#include "evb/apilog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "evb/error.hpp"

namespace evb {
namespace {

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view text) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

bool is_hex(std::string_view text) {
  return !text.empty() && std::all_of(text.begin(), text.end(), [](unsigned char c) {
    return std::isxdigit(c) != 0;
  });
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  while (!text.empty()) {
    const auto nl = text.find('\n');
    fn(text.substr(0, nl));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
}

std::optional<ApiLogRecord> parse_record(std::string_view line) {
  // Name:HexAddr (args)"tid"
  const auto colon = line.find(':');
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  const auto name = line.substr(0, colon);
  if (std::any_of(name.begin(), name.end(),
                  [](unsigned char c) { return std::isspace(c) != 0 || c == '"'; })) {
    return std::nullopt;
  }

  auto rest = line.substr(colon + 1);
  const auto open = rest.find(" (");
  if (open == std::string_view::npos) return std::nullopt;
  const auto address = rest.substr(0, open);
  if (!is_hex(address)) return std::nullopt;
  rest.remove_prefix(open + 2);

  // The thread id is the trailing quoted token; args run up to the `)"` before it.
  if (rest.size() < 3 || rest.back() != '"') return std::nullopt;
  const auto close = rest.rfind(")\"", rest.size() - 2);
  if (close == std::string_view::npos) return std::nullopt;
  const auto args = rest.substr(0, close);
  const auto tid = rest.substr(close + 2, rest.size() - close - 3);
  if (tid.find('"') != std::string_view::npos) return std::nullopt;

  return ApiLogRecord{std::string(name), std::string(address), std::string(args), std::string(tid)};
}

}  // namespace

ApiVocabulary ApiVocabulary::from_names(std::vector<std::string> names) {
  ApiVocabulary vocab;
  vocab.names_.reserve(names.size());
  for (auto& raw : names) {
    std::string name = to_lower(trim(raw));
    if (name.empty()) throw ConfigError("vocabulary contains an empty API name");
    if (!vocab.index_.emplace(name, vocab.names_.size()).second) {
      throw ConfigError("duplicate API name in vocabulary: " + name);
    }
    vocab.names_.push_back(std::move(name));
  }
  return vocab;
}

ApiVocabulary ApiVocabulary::parse(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string>> entries;
  std::size_t line_no = 0;
  for_each_line(text, [&](std::string_view raw) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) return;
    const auto split = line.find_first_of(" \t");
    if (split == std::string_view::npos) {
      throw FormatError("vocabulary line " + std::to_string(line_no) + ": expected 'index name'");
    }
    const auto index_text = line.substr(0, split);
    const auto name = trim(line.substr(split));
    std::size_t index = 0;
    auto [ptr, ec] = std::from_chars(index_text.data(), index_text.data() + index_text.size(), index);
    if (ec != std::errc{} || ptr != index_text.data() + index_text.size()) {
      throw FormatError("vocabulary line " + std::to_string(line_no) + ": bad index");
    }
    if (name.find_first_of(" \t") != std::string_view::npos) {
      throw FormatError("vocabulary line " + std::to_string(line_no) + ": name contains whitespace");
    }
    entries.emplace_back(index, std::string(name));
  });

  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> names;
  names.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != i) {
      throw FormatError("vocabulary indices must be contiguous from 0; missing or duplicate index " +
                        std::to_string(i));
    }
    names.push_back(std::move(entries[i].second));
  }
  return from_names(std::move(names));
}

ApiVocabulary ApiVocabulary::synthetic(std::size_t size) {
  std::vector<std::string> names;
  names.reserve(size);
  char buffer[32];
  for (std::size_t i = 0; i < size; ++i) {
    std::snprintf(buffer, sizeof buffer, "api%03zu", i);
    names.emplace_back(buffer);
  }
  return from_names(std::move(names));
}

std::string ApiVocabulary::serialize() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < names_.size(); ++i) out << i << ' ' << names_[i] << '\n';
  return out.str();
}

std::optional<std::size_t> ApiVocabulary::index_of(std::string_view api_name) const {
  const auto it = index_.find(to_lower(api_name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParsedLog parse_log(std::string_view text) {
  ParsedLog parsed;
  for_each_line(text, [&](std::string_view raw) {
    auto line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) return;
    if (auto record = parse_record(trim(line))) {
      parsed.records.push_back(std::move(*record));
    } else {
      ++parsed.skipped;
    }
  });
  return parsed;
}

std::string format_record(const ApiLogRecord& record) {
  return record.api_name + ":" + record.address + " (" + record.args + ")\"" + record.thread_id + "\"";
}

FeatureCounts count_features(std::span<const ApiLogRecord> records, const ApiVocabulary& vocab) {
  FeatureCounts out;
  out.counts.assign(vocab.size(), 0);
  for (const auto& record : records) {
    if (auto index = vocab.index_of(record.api_name)) {
      ++out.counts[*index];
    } else {
      ++out.ignored;
    }
  }
  return out;
}

void validate_feature_vector(const FeatureVector& fv, std::size_t expected_size) {
  if (expected_size != 0 && fv.values.size() != expected_size) {
    throw ShapeError("feature vector '" + fv.id + "' has length " + std::to_string(fv.values.size()) +
                     ", expected " + std::to_string(expected_size));
  }
  for (std::size_t j = 0; j < fv.values.size(); ++j) {
    const double v = fv.values[j];
    if (!std::isfinite(v)) {
      throw NumericError("feature vector '" + fv.id + "' has a non-finite value at index " +
                         std::to_string(j));
    }
    if (v < 0.0 || v > 1.0) {
      throw ConfigError("feature vector '" + fv.id + "' value out of [0,1] at index " +
                        std::to_string(j));
    }
  }
}

FeatureVector normalize_counts(std::span<const std::uint64_t> counts, std::uint64_t cap) {
  if (cap == 0) throw ConfigError("normalization cap must be >= 1");
  FeatureVector fv;
  fv.values.resize(counts.size());
  const auto denom = static_cast<double>(cap);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    fv.values[j] = static_cast<double>(std::min(counts[j], cap)) / denom;
  }
  return fv;
}

FeatureVector binarize(const FeatureVector& fv) {
  FeatureVector out{fv.id, fv.label, {}};
  out.values.resize(fv.values.size());
  std::transform(fv.values.begin(), fv.values.end(), out.values.begin(),
                 [](double v) { return v > 0.0 ? 1.0 : 0.0; });
  return out;
}

}  // namespace evb
