#pragma once

// Pipeline stages behind the evbench verbs. Every stage reads its inputs from
// and writes its outputs under ExperimentConfig::out:
//
//   data/     corpus.json, vocab.txt, train/validation/test/attacker/topup CSVs
//   models/   model JSON (plus the PCA projection) and per-epoch loss CSVs
//   adv/      adversarial feature matrices and per-sample attack results
//   curves/   security-evaluation curves
//   reports/  attack, defense, squeeze, L2 reports and summary.md
//
// Stages throw evb::Error subclasses; main() maps them to exit codes.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "experiment.hpp"

namespace evb::bench {

enum class ModelRole { target, substitute, substitute_binary, reduced, distilled, advtrained };
enum class DefenseKind { none, advtraining, distillation, squeezing, pca, all };

std::string_view to_string(ModelRole role);
ModelRole parse_model_role(std::string_view text);
std::string_view to_string(DefenseKind defense);
DefenseKind parse_defense(std::string_view text);

inline constexpr ModelRole kAllModelRoles[] = {ModelRole::target,  ModelRole::substitute,
                                               ModelRole::substitute_binary, ModelRole::reduced,
                                               ModelRole::distilled, ModelRole::advtrained};

// Progress messages go here; nullptr silences them. Defaults to std::cerr.
void set_log_stream(std::ostream* out);

// Running tally of every adversarial example the stages have crafted in this
// process, checked with check_attack_invariants.
struct AttackAudit {
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::string first_violation;
};
const AttackAudit& attack_audit();
void reset_attack_audit();

void cmd_gen(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg, ModelRole role);
void cmd_attack(const ExperimentConfig& cfg, AttackMode mode);
// Sweeps the given axis (or every configured axis) for the given modes (or
// every configured mode).
void cmd_sweep(const ExperimentConfig& cfg, std::optional<SweepAxis> axis = std::nullopt,
               std::span<const AttackMode> modes = {});
void cmd_defend(const ExperimentConfig& cfg, DefenseKind defense);
void cmd_l2(const ExperimentConfig& cfg);
void cmd_report(const ExperimentConfig& cfg);

// gen, train (all roles), attack (all modes), sweep, defend all, l2, report.
void run_pipeline(const ExperimentConfig& cfg);

// Artifact locations, relative to cfg.out.
namespace paths {
std::filesystem::path data(const ExperimentConfig& cfg, std::string_view file);
std::filesystem::path model(const ExperimentConfig& cfg, ModelRole role);
std::filesystem::path adv(const ExperimentConfig& cfg, AttackMode mode);
std::filesystem::path attack_results(const ExperimentConfig& cfg, AttackMode mode);
std::filesystem::path curve(const ExperimentConfig& cfg, AttackMode mode, SweepAxis axis);
std::filesystem::path sweep_adv(const ExperimentConfig& cfg, AttackMode mode, SweepAxis axis, std::size_t point);
std::filesystem::path report(const ExperimentConfig& cfg, std::string_view file);
}  // namespace paths

// Every CSV under cfg.out, sorted by relative path.
std::vector<std::filesystem::path> list_csv_outputs(const ExperimentConfig& cfg);

}  // namespace evb::bench
