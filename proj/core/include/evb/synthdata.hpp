#pragma once

// Seeded synthetic API-count corpora, stratified splits and the feature
// matrix CSV format (`id,label,f0,...,f{M-1}`).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evb/apilog.hpp"

namespace evb {

// Mean API-call count per feature for each class (Poisson rates).
struct ClassProfiles {
  std::vector<double> clean;
  std::vector<double> malware;
};

// Feature groups used by default_profiles(). Fractions are of M; whatever is
// left over is "shared" (same rate in both classes up to small jitter).
struct ProfileRecipe {
  double malware_indicative_fraction = 0.25;
  double clean_indicative_fraction = 0.25;
  double malware_rate_lo = 3.0;  // malware-indicative APIs, calls per malware sample
  double malware_rate_hi = 10.0;
  double clean_rate_lo = 0.5;    // clean-indicative APIs are rarer
  double clean_rate_hi = 2.0;
  double background_rate = 0.05; // indicative APIs in the other class
  double shared_rate_lo = 0.5;
  double shared_rate_hi = 8.0;
};

ClassProfiles default_profiles(std::size_t m, std::uint64_t seed, const ProfileRecipe& recipe = {});

struct CorpusSpec {
  std::size_t n_clean = 0;
  std::size_t n_malware = 0;
  std::size_t m = 64;
  ClassProfiles profiles;
  double overlap = 0.0;  // 0 keeps class profiles apart, 1 merges them
  std::uint64_t cap = kDefaultCountCap;
  std::uint64_t seed = 0;

  // Throws ConfigError on zero sizes, wrong profile lengths, negative or
  // non-finite rates, or overlap outside [0,1].
  void validate() const;

  // Per-class rates after blending toward the mean profile by `overlap`.
  ClassProfiles effective_profiles() const;
};

CorpusSpec corpus_spec_from_json(std::string_view json_text);
std::string corpus_spec_to_json(const CorpusSpec& spec);

// Clean samples first ("clean-00000", ...), then malware ("malware-00000", ...).
// Sample i draws from its own stream derive_seed(seed, i).
std::vector<FeatureVector> generate_corpus(const CorpusSpec& spec);

struct DatasetSplit {
  std::vector<FeatureVector> train;
  std::vector<FeatureVector> validation;
  std::vector<FeatureVector> test;
};

// Train / validation / test fractions used when a caller has no preference.
inline constexpr std::array<double, 3> kDefaultSplitFractions{0.8, 0.01, 0.19};

// Stratified by label (unlabeled samples form their own stratum); each split
// keeps corpus order. Throws ConfigError when fractions are negative or do
// not sum to 1.
DatasetSplit split(std::span<const FeatureVector> corpus, std::array<double, 3> fractions,
                   std::uint64_t seed);

// Subsets of a dataset by label.
std::vector<FeatureVector> with_label(std::span<const FeatureVector> samples, Label label);

void write_feature_csv(std::ostream& out, std::span<const FeatureVector> samples, std::size_t m);
// `m` is only needed for the header of an empty set; 0 infers it from the data.
std::string feature_csv(std::span<const FeatureVector> samples, std::size_t m = 0);
std::vector<FeatureVector> parse_feature_csv(std::string_view text);

void save_csv(const std::filesystem::path& path, std::span<const FeatureVector> samples, std::size_t m = 0);
std::vector<FeatureVector> load_csv(const std::filesystem::path& path);

}  // namespace evb
