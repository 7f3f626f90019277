#pragma once

// Experiment configuration for the evbench tool: an INI document with one
// section per pipeline stage. Unknown sections or keys are rejected so that a
// typo cannot silently fall back to a default.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evb/defenses.hpp"
#include "evb/evalkit.hpp"
#include "evb/synthdata.hpp"
#include "evb/tensornet.hpp"

namespace evb::bench {

enum class AttackMode { whitebox, greybox, greybox_binary, random_baseline };

std::string_view to_string(AttackMode mode);
AttackMode parse_attack_mode(std::string_view text);
inline constexpr AttackMode kAllAttackModes[] = {AttackMode::whitebox, AttackMode::greybox,
                                                 AttackMode::greybox_binary, AttackMode::random_baseline};

struct ModelSection {
  std::vector<std::size_t> hidden;
  TrainConfig train;
};

struct ExperimentConfig {
  std::string name = "default";
  std::uint64_t seed = 1;
  std::filesystem::path out = "evb-out";

  // [corpus]
  std::size_t m = 64;
  std::size_t n_clean = 2750;
  std::size_t n_malware = 2750;
  double overlap = 0.7;
  // Shares of M that are class-indicative in the generated profiles.
  double malware_indicative_fraction = ProfileRecipe{}.malware_indicative_fraction;
  double clean_indicative_fraction = ProfileRecipe{}.clean_indicative_fraction;
  std::uint64_t cap = kDefaultCountCap;
  std::array<double, 3> split{8.0 / 11.0, 1.0 / 11.0, 2.0 / 11.0};
  std::size_t attacker_clean = 2750;
  std::size_t attacker_malware = 2750;
  std::size_t topup_clean = 612;

  ModelSection target;
  ModelSection substitute;

  // [attack] operating point
  double theta = 0.1;
  double gamma = 12.0 / 64.0;
  std::optional<std::size_t> max_iters;

  // [sweep]
  std::vector<AttackMode> sweep_modes{AttackMode::whitebox, AttackMode::random_baseline, AttackMode::greybox};
  std::vector<SweepAxis> sweep_axes{SweepAxis::gamma};
  std::vector<double> gamma_grid;
  std::vector<double> theta_grid;
  double sweep_theta = 0.1;          // held fixed along the gamma axis
  double sweep_gamma = 12.0 / 64.0;  // held fixed along the theta axis

  // [defense]
  std::size_t pca_k = kDefaultPcaComponents;
  std::vector<std::size_t> reduced_hidden;  // empty: same as target
  Squeezer squeezer;
  double squeeze_fpr = kDefaultSqueezeFpr;
  double distill_temperature = kDefaultDistillTemperature;
  std::vector<std::size_t> student_hidden;  // empty: same as target
  std::size_t adv_count = 736;

  // [l2]
  AttackMode l2_mode = AttackMode::greybox;
  std::size_t pair_budget = kDefaultPairBudget;

  ExperimentConfig();

  AttackConfig operating_point() const;
  CorpusSpec corpus_spec() const;
  // Throws ConfigError on the first inconsistent value.
  void validate() const;
  // Canonical INI rendering; parse(render()) reproduces the config.
  std::string render() const;
};

// Parses INI text. `base_dir` resolves `[experiment] base = ...` references,
// which load another config (or a preset name) before applying this one.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

// Loads a file path, or a bundled preset by name ("paper-shape" or
// "paper-shape.cfg"). Throws ConfigError if neither exists.
ExperimentConfig load_config(const std::string& path_or_preset);

struct PresetInfo {
  std::string name;
  std::string summary;  // first comment line of the file
};

std::vector<std::filesystem::path> preset_dirs();
std::vector<PresetInfo> list_presets();

// Numeric list syntax: comma-separated terms, each a number, a fraction
// "a/b", or an inclusive range "start:step:stop".
std::vector<double> parse_number_list(std::string_view text);

// Stream ids for derive_seed, one per stochastic stage.
namespace stream {
inline constexpr std::uint64_t profiles = 1;
inline constexpr std::uint64_t corpus = 2;
inline constexpr std::uint64_t split = 3;
inline constexpr std::uint64_t attacker = 4;
inline constexpr std::uint64_t topup = 5;
inline constexpr std::uint64_t train_target = 10;
inline constexpr std::uint64_t train_substitute = 11;
inline constexpr std::uint64_t train_substitute_binary = 12;
inline constexpr std::uint64_t train_reduced = 13;
inline constexpr std::uint64_t train_distilled = 14;
inline constexpr std::uint64_t train_advtrained = 15;
inline constexpr std::uint64_t advtrain_selection = 16;
inline constexpr std::uint64_t attack = 20;
inline constexpr std::uint64_t sweep = 30;
inline constexpr std::uint64_t l2 = 40;
}  // namespace stream

}  // namespace evb::bench
