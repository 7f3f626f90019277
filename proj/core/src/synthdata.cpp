#include "evb/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "evb/error.hpp"
#include "evb/numfmt.hpp"
#include "evb/rng.hpp"

namespace evb {
namespace {

std::string sample_id(Label label, std::size_t index) {
  char buffer[48];
  std::snprintf(buffer, sizeof buffer, "%s-%05zu", label == Label::clean ? "clean" : "malware", index);
  return buffer;
}

void check_rates(const std::vector<double>& rates, std::size_t m, const char* which) {
  if (rates.size() != m) {
    throw ConfigError(std::string(which) + " profile has " + std::to_string(rates.size()) +
                      " rates, expected " + std::to_string(m));
  }
  for (double r : rates) {
    if (!std::isfinite(r) || r < 0.0) throw ConfigError(std::string(which) + " profile has an invalid rate");
  }
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  while (true) {
    const auto comma = line.find(',');
    fields.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return fields;
}

}  // namespace

ClassProfiles default_profiles(std::size_t m, std::uint64_t seed, const ProfileRecipe& recipe) {
  if (m == 0) throw ConfigError("vocabulary size must be positive");
  Rng rng(seed);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  const auto n_mal = static_cast<std::size_t>(std::round(recipe.malware_indicative_fraction * static_cast<double>(m)));
  const auto n_clean = static_cast<std::size_t>(std::round(recipe.clean_indicative_fraction * static_cast<double>(m)));
  if (n_mal + n_clean > m) throw ConfigError("indicative fractions exceed 1");

  ClassProfiles profiles{std::vector<double>(m), std::vector<double>(m)};
  for (std::size_t pos = 0; pos < m; ++pos) {
    const std::size_t j = order[pos];
    if (pos < n_mal) {
      profiles.malware[j] = rng.uniform(recipe.malware_rate_lo, recipe.malware_rate_hi);
      profiles.clean[j] = recipe.background_rate;
    } else if (pos < n_mal + n_clean) {
      profiles.clean[j] = rng.uniform(recipe.clean_rate_lo, recipe.clean_rate_hi);
      profiles.malware[j] = recipe.background_rate;
    } else {
      const double base = rng.uniform(recipe.shared_rate_lo, recipe.shared_rate_hi);
      profiles.clean[j] = base * rng.uniform(0.9, 1.1);
      profiles.malware[j] = base * rng.uniform(0.9, 1.1);
    }
  }
  return profiles;
}

void CorpusSpec::validate() const {
  if (n_clean == 0 || n_malware == 0) throw ConfigError("corpus needs at least one sample per class");
  if (m == 0) throw ConfigError("vocabulary size must be positive");
  if (cap == 0) throw ConfigError("normalization cap must be >= 1");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("overlap must lie in [0,1]");
  check_rates(profiles.clean, m, "clean");
  check_rates(profiles.malware, m, "malware");
}

ClassProfiles CorpusSpec::effective_profiles() const {
  ClassProfiles out = profiles;
  for (std::size_t j = 0; j < m; ++j) {
    const double mean = 0.5 * (profiles.clean[j] + profiles.malware[j]);
    out.clean[j] = (1.0 - overlap) * profiles.clean[j] + overlap * mean;
    out.malware[j] = (1.0 - overlap) * profiles.malware[j] + overlap * mean;
  }
  return out;
}

CorpusSpec corpus_spec_from_json(std::string_view json_text) {
  try {
    const auto doc = nlohmann::json::parse(json_text);
    CorpusSpec spec;
    spec.n_clean = doc.at("n_clean").get<std::size_t>();
    spec.n_malware = doc.at("n_malware").get<std::size_t>();
    spec.m = doc.at("m").get<std::size_t>();
    spec.overlap = doc.value("overlap", 0.0);
    spec.cap = doc.value("cap", kDefaultCountCap);
    spec.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("class_profiles")) {
      spec.profiles.clean = doc["class_profiles"].at("clean").get<std::vector<double>>();
      spec.profiles.malware = doc["class_profiles"].at("malware").get<std::vector<double>>();
    } else {
      spec.profiles = default_profiles(spec.m, doc.value("profile_seed", spec.seed));
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corpus spec JSON: ") + e.what());
  }
}

std::string corpus_spec_to_json(const CorpusSpec& spec) {
  nlohmann::ordered_json doc;
  doc["n_clean"] = spec.n_clean;
  doc["n_malware"] = spec.n_malware;
  doc["m"] = spec.m;
  doc["overlap"] = spec.overlap;
  doc["cap"] = spec.cap;
  doc["seed"] = spec.seed;
  doc["class_profiles"] = {{"clean", spec.profiles.clean}, {"malware", spec.profiles.malware}};
  return doc.dump(2) + "\n";
}

std::vector<FeatureVector> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const auto rates = spec.effective_profiles();
  std::vector<FeatureVector> corpus;
  corpus.reserve(spec.n_clean + spec.n_malware);
  std::vector<std::uint64_t> counts(spec.m);

  const auto emit = [&](Label label, std::size_t n, std::size_t offset) {
    const auto& profile = label == Label::clean ? rates.clean : rates.malware;
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(spec.seed, offset + i));
      for (std::size_t j = 0; j < spec.m; ++j) counts[j] = rng.poisson(profile[j]);
      FeatureVector fv = normalize_counts(counts, spec.cap);
      fv.id = sample_id(label, i);
      fv.label = label;
      corpus.push_back(std::move(fv));
    }
  };
  emit(Label::clean, spec.n_clean, 0);
  emit(Label::malware, spec.n_malware, spec.n_clean);
  return corpus;
}

DatasetSplit split(std::span<const FeatureVector> corpus, std::array<double, 3> fractions,
                   std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }

  // 0 = train, 1 = validation, 2 = test
  std::vector<int> assignment(corpus.size(), 0);
  Rng rng(seed);
  for (int stratum = 0; stratum < 3; ++stratum) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& label = corpus[i].label;
      const int key = label ? static_cast<int>(class_index(*label)) : 2;
      if (key == stratum) members.push_back(i);
    }
    rng.shuffle(std::span<std::size_t>(members));
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::round(fractions[0] * n));
    const auto n_val = std::min(members.size() - n_train,
                                static_cast<std::size_t>(std::round(fractions[1] * n)));
    for (std::size_t k = 0; k < members.size(); ++k) {
      assignment[members[k]] = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
    }
  }

  DatasetSplit out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& dest = assignment[i] == 0 ? out.train : (assignment[i] == 1 ? out.validation : out.test);
    dest.push_back(corpus[i]);
  }
  return out;
}

std::vector<FeatureVector> with_label(std::span<const FeatureVector> samples, Label label) {
  std::vector<FeatureVector> out;
  for (const auto& s : samples) {
    if (s.label == label) out.push_back(s);
  }
  return out;
}

void write_feature_csv(std::ostream& out, std::span<const FeatureVector> samples, std::size_t m) {
  if (m == 0 && !samples.empty()) m = samples.front().size();
  out << "id,label";
  for (std::size_t j = 0; j < m; ++j) out << ",f" << j;
  out << '\n';
  for (const auto& s : samples) {
    if (s.size() != m) throw ShapeError("sample '" + s.id + "' does not have " + std::to_string(m) + " features");
    if (s.id.find_first_of(",\n") != std::string::npos) throw FormatError("sample id contains ',' or newline");
    out << s.id << ',' << (s.label ? to_string(*s.label) : std::string_view{});
    for (double v : s.values) out << ',' << format_double(v);
    out << '\n';
  }
}

std::string feature_csv(std::span<const FeatureVector> samples, std::size_t m) {
  std::ostringstream out;
  write_feature_csv(out, samples, m);
  return out.str();
}

std::vector<FeatureVector> parse_feature_csv(std::string_view text) {
  std::vector<FeatureVector> samples;
  std::size_t m = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_fields(line);

    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "id" || fields[1] != "label") {
        throw FormatError("feature CSV header must start with 'id,label'");
      }
      for (std::size_t j = 2; j < fields.size(); ++j) {
        if (fields[j] != "f" + std::to_string(j - 2)) {
          throw FormatError("feature CSV header column " + std::to_string(j) + " must be f" + std::to_string(j - 2));
        }
      }
      m = fields.size() - 2;
      header_seen = true;
      continue;
    }

    if (fields.size() != m + 2) {
      throw FormatError("feature CSV line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " + std::to_string(m + 2));
    }
    FeatureVector fv;
    fv.id = std::string(fields[0]);
    if (!fields[1].empty()) {
      fv.label = parse_label(fields[1]);
      if (!fv.label) throw FormatError("feature CSV line " + std::to_string(line_no) + ": bad label");
    }
    fv.values.reserve(m);
    for (std::size_t j = 0; j < m; ++j) fv.values.push_back(parse_double(fields[j + 2]));
    try {
      validate_feature_vector(fv, m);
    } catch (const Error& e) {
      throw FormatError("feature CSV line " + std::to_string(line_no) + ": " + e.what());
    }
    samples.push_back(std::move(fv));
  }
  if (!header_seen) throw FormatError("feature CSV is missing its header");
  return samples;
}

void save_csv(const std::filesystem::path& path, std::span<const FeatureVector> samples, std::size_t m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_feature_csv(out, samples, m);
}

std::vector<FeatureVector> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open feature matrix " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_feature_csv(buffer.str());
}

}  // namespace evb
