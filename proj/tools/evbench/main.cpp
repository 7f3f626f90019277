#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "commands.hpp"
#include "evb/error.hpp"
#include "experiment.hpp"

namespace {

using namespace evb::bench;

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitNumeric = 4;

std::string preset_help() {
  std::string text =
      "\nExit codes: 0 success, 2 config error, 3 missing artifact, 4 numeric failure, 1 other failure.\n"
      "\n--config accepts a file path or a bundled preset name:\n";
  const auto presets = list_presets();
  if (presets.empty()) text += "  (no preset directory found; set EVB_PRESET_DIR)\n";
  for (const auto& p : presets) {
    text += "  " + p.name;
    text.append(p.name.size() < 24 ? 24 - p.name.size() : 1, ' ');
    text += p.summary + "\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evbench: add-only evasion attacks and defenses on a seeded synthetic malware corpus"};
  app.require_subcommand(1);
  app.footer(preset_help());

  std::string config_arg;
  std::optional<std::uint64_t> seed_arg;
  std::string out_arg;
  bool quiet = false;
  app.add_option("--config", config_arg, "Experiment config file or preset name (default: built-in defaults)");
  app.add_option("--seed", seed_arg, "Override [experiment] seed");
  app.add_option("--out", out_arg, "Override [experiment] out directory");
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  auto* gen = app.add_subcommand("gen", "Generate the synthetic corpus, splits, attacker and top-up sets");

  std::string role_arg;
  auto* train = app.add_subcommand("train", "Train and persist a model");
  train->add_option("--role", role_arg, "target, substitute, substitute-binary, reduced, distilled or advtrained")
      ->required();

  std::string mode_arg;
  auto* attack = app.add_subcommand("attack", "Craft adversarial examples from test malware at the operating point");
  attack->add_option("--mode", mode_arg, "whitebox, greybox, greybox-binary or random-baseline")->required();

  std::string axis_arg;
  std::vector<std::string> sweep_modes_arg;
  auto* sweep = app.add_subcommand("sweep", "Run security-evaluation sweeps and write curve CSVs");
  sweep->add_option("--axis", axis_arg, "gamma or theta (default: [sweep] axes)");
  sweep->add_option("--mode", sweep_modes_arg, "Attack modes to sweep (default: [sweep] modes)");

  std::string defense_arg = "all";
  auto* defend = app.add_subcommand("defend", "Evaluate a defense and write a defense report CSV");
  defend->add_option("--defense", defense_arg, "none, advtraining, distillation, squeezing, pca or all")
      ->capture_default_str();

  auto* l2 = app.add_subcommand("l2", "Write L2 distance statistics along the gamma sweep");
  auto* report = app.add_subcommand("report", "Aggregate reports and curves into reports/summary.md");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  auto* show = app.add_subcommand("show-config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    ExperimentConfig cfg = config_arg.empty() ? ExperimentConfig{} : load_config(config_arg);
    if (seed_arg) cfg.seed = *seed_arg;
    if (!out_arg.empty()) cfg.out = out_arg;
    cfg.validate();
    set_log_stream(quiet ? nullptr : &std::cerr);

    if (*gen) {
      cmd_gen(cfg);
    } else if (*train) {
      cmd_train(cfg, parse_model_role(role_arg));
    } else if (*attack) {
      cmd_attack(cfg, parse_attack_mode(mode_arg));
    } else if (*sweep) {
      std::optional<evb::SweepAxis> axis;
      if (axis_arg == "gamma") {
        axis = evb::SweepAxis::gamma;
      } else if (axis_arg == "theta") {
        axis = evb::SweepAxis::theta;
      } else if (!axis_arg.empty()) {
        throw evb::ConfigError("unknown sweep axis '" + axis_arg + "'");
      }
      std::vector<AttackMode> modes;
      for (const auto& m : sweep_modes_arg) modes.push_back(parse_attack_mode(m));
      cmd_sweep(cfg, axis, modes);
    } else if (*defend) {
      cmd_defend(cfg, parse_defense(defense_arg));
    } else if (*l2) {
      cmd_l2(cfg);
    } else if (*report) {
      cmd_report(cfg);
    } else if (*pipeline) {
      run_pipeline(cfg);
    } else if (*show) {
      std::cout << cfg.render();
    }
  } catch (const evb::MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingArtifact;
  } catch (const evb::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const evb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const evb::FormatError& e) {
    std::cerr << "malformed input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const evb::ShapeError& e) {
    std::cerr << "shape mismatch: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
