#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "evb/apilog.hpp"
#include "evb/defenses.hpp"
#include "evb/error.hpp"
#include "evb/evalkit.hpp"
#include "evb/jsma.hpp"
#include "evb/numfmt.hpp"
#include "evb/rng.hpp"
#include "evb/synthdata.hpp"
#include "evb/tensornet.hpp"

namespace evb::bench {
namespace {

namespace fs = std::filesystem;

class NullBuffer : public std::streambuf {
 protected:
  int overflow(int c) override { return c; }
};

NullBuffer null_buffer;
std::ostream null_stream(&null_buffer);
std::ostream* log_target = &std::cerr;

std::ostream& log() { return log_target ? *log_target : null_stream; }

AttackAudit audit_state;

void audit(std::span<const AttackResult> results, const AttackConfig& cfg) {
  for (const auto& r : results) {
    ++audit_state.checked;
    if (auto problem = check_attack_invariants(r, cfg)) {
      if (audit_state.violations++ == 0) audit_state.first_violation = r.original.id + ": " + *problem;
    }
  }
}

void require_clean_audit() {
  if (audit_state.violations > 0) {
    throw Error("attack invariant violated (" + std::to_string(audit_state.violations) +
                " cases; first: " + audit_state.first_violation + ")");
  }
}

void write_text(const fs::path& path, std::string_view text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void save_features(const fs::path& path, std::span<const FeatureVector> samples, std::size_t m) {
  fs::create_directories(path.parent_path());
  save_csv(path, samples, m);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing artifact " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::vector<FeatureVector> load_data(const ExperimentConfig& cfg, std::string_view file) {
  const fs::path path = paths::data(cfg, file);
  if (!fs::exists(path)) throw MissingArtifactError("missing artifact " + path.string() + " (run `gen` first)");
  auto samples = load_csv(path);
  for (const auto& s : samples) validate_feature_vector(s, cfg.m);
  return samples;
}

MlpModel load_model(const ExperimentConfig& cfg, ModelRole role) {
  const fs::path path = paths::model(cfg, role);
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing model " + path.string() + " (run `train --role " +
                               std::string(to_string(role)) + "` first)");
  }
  MlpModel model = deserialize_model(read_text(path));
  return model;
}

PcaProjection load_pca(const ExperimentConfig& cfg) {
  const fs::path path = cfg.out / "models" / "reduced-pca.json";
  if (!fs::exists(path)) throw MissingArtifactError("missing artifact " + path.string() + " (run `train --role reduced`)");
  return pca_from_json(read_text(path));
}

std::vector<FeatureVector> load_adv(const fs::path& path, std::string_view hint) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing artifact " + path.string() + " (run `" + std::string(hint) + "` first)");
  }
  return load_csv(path);
}

std::vector<FeatureVector> adversarial_set(std::span<const AttackResult> results) {
  std::vector<FeatureVector> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    FeatureVector fv = r.adversarial;
    fv.label = Label::malware;
    out.push_back(std::move(fv));
  }
  return out;
}

std::string loss_csv(std::span<const double> history) {
  std::ostringstream out;
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) out << e + 1 << ',' << format_double(history[e]) << '\n';
  return out.str();
}

TrainConfig seeded(TrainConfig train, std::uint64_t seed, std::uint64_t stream_id) {
  train.seed = derive_seed(seed, stream_id);
  return train;
}

std::vector<FeatureVector> prefixed(std::vector<FeatureVector> samples, std::string_view prefix) {
  for (auto& s : samples) s.id = std::string(prefix) + s.id;
  return samples;
}

std::size_t mode_index(AttackMode mode) { return static_cast<std::size_t>(mode); }

// Models an attack mode needs: the one it crafts against and the one it is
// evaluated on. The target is always the evaluator.
struct AttackModels {
  MlpModel target;
  MlpModel source;
};

AttackModels models_for(const ExperimentConfig& cfg, AttackMode mode) {
  AttackModels m{load_model(cfg, ModelRole::target), {}};
  switch (mode) {
    case AttackMode::whitebox:
    case AttackMode::random_baseline: m.source = m.target; break;
    case AttackMode::greybox: m.source = load_model(cfg, ModelRole::substitute); break;
    case AttackMode::greybox_binary: m.source = load_model(cfg, ModelRole::substitute_binary); break;
  }
  if (m.source.input_dim() != cfg.m || m.target.input_dim() != cfg.m) {
    throw ShapeError("model input size does not match corpus.m");
  }
  return m;
}

Crafter crafter_for(AttackMode mode, const MlpModel& source) {
  switch (mode) {
    case AttackMode::whitebox:
    case AttackMode::greybox: return jsma_crafter(source);
    case AttackMode::greybox_binary: return binary_transfer_crafter(source);
    case AttackMode::random_baseline: return random_crafter(source);
  }
  throw ConfigError("unknown attack mode");
}

std::string rate_row(std::string_view defense, std::string_view dataset, const ConfusionStats& s) {
  return std::string(defense) + ',' + std::string(dataset) + ',' + format_rate(s.tpr()) + ',' +
         format_rate(s.tnr()) + '\n';
}

std::string defense_rows(std::string_view name, const ClassifyFn& classify, std::span<const FeatureVector> clean,
                         std::span<const FeatureVector> malware, std::span<const FeatureVector> adversarial) {
  return rate_row(name, "clean-test", evaluate(classify, clean)) +
         rate_row(name, "malware-test", evaluate(classify, malware)) +
         rate_row(name, "adv-examples", evaluate(classify, adversarial));
}

void train_target(const ExperimentConfig& cfg) {
  const auto train_set = load_data(cfg, "train.csv");
  log() << "training target " << train_set.size() << " samples\n";
  const auto result = fit_model(dense_architecture(cfg.m, cfg.target.hidden), hard_label_set(train_set),
                                seeded(cfg.target.train, cfg.seed, stream::train_target));
  write_text(paths::model(cfg, ModelRole::target), serialize_model(result.model));
  write_text(cfg.out / "models" / "target-loss.csv", loss_csv(result.loss_history));
}

void train_substitute(const ExperimentConfig& cfg, bool binary_features) {
  auto attacker = load_data(cfg, "attacker.csv");
  if (binary_features) {
    for (auto& s : attacker) s = binarize(s);
  }
  const ModelRole role = binary_features ? ModelRole::substitute_binary : ModelRole::substitute;
  log() << "training " << to_string(role) << " on " << attacker.size() << " attacker samples\n";
  const auto result = fit_model(
      dense_architecture(cfg.m, cfg.substitute.hidden), hard_label_set(attacker),
      seeded(cfg.substitute.train, cfg.seed,
             binary_features ? stream::train_substitute_binary : stream::train_substitute));
  write_text(paths::model(cfg, role), serialize_model(result.model));
  write_text(cfg.out / "models" / (std::string(to_string(role)) + "-loss.csv"), loss_csv(result.loss_history));
}

void train_reduced(const ExperimentConfig& cfg) {
  const auto train_set = load_data(cfg, "train.csv");
  const auto& hidden = cfg.reduced_hidden.empty() ? cfg.target.hidden : cfg.reduced_hidden;
  log() << "training PCA-reduced model, k=" << cfg.pca_k << '\n';
  const PcaPipeline pipeline =
      pca_defended_pipeline(train_set, cfg.pca_k, hidden, seeded(cfg.target.train, cfg.seed, stream::train_reduced));
  write_text(cfg.out / "models" / "reduced-pca.json", pca_to_json(pipeline.projection));
  write_text(paths::model(cfg, ModelRole::reduced), serialize_model(pipeline.model));
}

void train_distilled(const ExperimentConfig& cfg) {
  const auto train_set = load_data(cfg, "train.csv");
  DistillConfig dc;
  dc.temperature = cfg.distill_temperature;
  dc.teacher_hidden = cfg.target.hidden;
  dc.student_hidden = cfg.student_hidden;
  log() << "distilling at T=" << format_double(dc.temperature) << '\n';
  const auto result = distill(train_set, dc, seeded(cfg.target.train, cfg.seed, stream::train_distilled));
  write_text(cfg.out / "models" / "distilled-teacher.json", serialize_model(result.teacher));
  write_text(paths::model(cfg, ModelRole::distilled), serialize_model(result.student));
  write_text(cfg.out / "models" / "distilled-loss.csv", loss_csv(result.student_loss));
}

void train_advtrained(const ExperimentConfig& cfg) {
  const auto train_set = load_data(cfg, "train.csv");
  const auto topup = load_data(cfg, "topup.csv");
  const MlpModel target = load_model(cfg, ModelRole::target);

  auto pool = with_label(train_set, Label::malware);
  if (pool.size() < cfg.adv_count) {
    throw ConfigError("defense.adv_count=" + std::to_string(cfg.adv_count) + " exceeds the " +
                      std::to_string(pool.size()) + " training malware samples");
  }
  Rng rng(derive_seed(cfg.seed, stream::advtrain_selection));
  rng.shuffle(std::span<FeatureVector>(pool));
  pool.resize(cfg.adv_count);

  const AttackConfig op = cfg.operating_point();
  log() << "crafting " << pool.size() << " training adversarial examples\n";
  std::vector<AttackResult> crafted;
  crafted.reserve(pool.size());
  for (const auto& x : pool) crafted.push_back(jsma_attack(target, x, op));
  audit(crafted, op);
  require_clean_audit();
  const auto adversarial = adversarial_set(crafted);
  save_features(cfg.out / "adv" / "advtrain-source.csv", adversarial, cfg.m);

  const auto result = adversarial_training(train_set, adversarial, topup, cfg.target.hidden,
                                           seeded(cfg.target.train, cfg.seed, stream::train_advtrained));
  log() << "adversarial training set: " << result.n_clean << " clean, " << result.n_malware
        << " malware+adv, " << result.duplicates_removed << " duplicates removed\n";
  write_text(paths::model(cfg, ModelRole::advtrained), serialize_model(result.model));
  write_text(cfg.out / "models" / "advtrained-loss.csv", loss_csv(result.loss_history));
  write_text(paths::report(cfg, "advtraining-data.csv"),
             "n_clean,n_malware_and_adv,duplicates_removed\n" + std::to_string(result.n_clean) + ',' +
                 std::to_string(result.n_malware) + ',' + std::to_string(result.duplicates_removed) + '\n');
}

// Repeats the substitute's most salient API on the first test malware sample
// the target detects, one theta step at a time, and records the target's
// malware confidence after each step.
void write_escalation(const ExperimentConfig& cfg, const MlpModel& substitute, const MlpModel& target,
                      std::span<const FeatureVector> malware) {
  const auto it = std::find_if(malware.begin(), malware.end(),
                               [&](const FeatureVector& s) { return target.predict_class(s.view()) == Label::malware; });
  std::ostringstream out;
  out << "id,feature,k,p_malware\n";
  if (it != malware.end()) {
    const auto scores = saliency_scores(substitute, it->view());
    std::size_t best = cfg.m;
    for (std::size_t j = 0; j < cfg.m; ++j) {
      if (it->values[j] < kSaturationLevel && (best == cfg.m || scores[j] > scores[best])) best = j;
    }
    if (best < cfg.m) {
      const auto steps = static_cast<std::size_t>(std::ceil((1.0 - it->values[best]) / cfg.theta - 1e-9));
      for (const auto& p : repeat_single_api(target, *it, best, cfg.theta, steps)) {
        out << it->id << ',' << best << ',' << p.k << ',' << format_double(p.p_malware) << '\n';
      }
    }
  }
  write_text(paths::report(cfg, "escalation.csv"), out.str());
}

void sweep_one(const ExperimentConfig& cfg, AttackMode mode, SweepAxis axis) {
  const auto test = load_data(cfg, "test.csv");
  const auto malware = with_label(test, Label::malware);
  const AttackModels models = models_for(cfg, mode);
  const auto& values = axis == SweepAxis::gamma ? cfg.gamma_grid : cfg.theta_grid;
  const double fixed = axis == SweepAxis::gamma ? cfg.sweep_theta : cfg.sweep_gamma;
  const std::uint64_t seed =
      derive_seed(derive_seed(cfg.seed, stream::sweep), mode_index(mode) * 2 + (axis == SweepAxis::theta ? 1 : 0));

  log() << "sweep " << to_string(mode) << " along " << to_string(axis) << " (" << values.size() << " points, "
        << malware.size() << " samples)\n";
  std::vector<AttackResult> crafted;
  const SecurityCurve curve = security_sweep(crafter_for(mode, models.source), classifier_of(models.target), malware,
                                             axis, values, fixed, seed, AttackVariant::continuous, &crafted);
  write_text(paths::curve(cfg, mode, axis), curve_csv(curve));

  // security_sweep only records attacked points; unattacked points keep the
  // original malware so every point has a paired adversarial set on disk.
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < values.size(); ++p) {
    AttackConfig point;
    point.theta = axis == SweepAxis::theta ? values[p] : fixed;
    point.gamma = axis == SweepAxis::gamma ? values[p] : fixed;
    const bool attacked = point.theta > 0.0 && point.budget(cfg.m) > 0;
    std::vector<FeatureVector> adv_set;
    if (attacked) {
      const std::span<const AttackResult> slice(crafted.data() + cursor, malware.size());
      cursor += malware.size();
      audit(slice, point);
      adv_set = adversarial_set(slice);
    } else {
      adv_set = malware;
    }
    save_features(paths::sweep_adv(cfg, mode, axis, p), adv_set, cfg.m);
  }
  require_clean_audit();
}

std::string csv_to_markdown(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::ostringstream out;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string row = "| ";
    for (char c : line) row += c == ',' ? std::string(" | ") : std::string(1, c);
    out << row << " |\n";
    if (header) {
      const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
      out << '|';
      for (std::size_t i = 0; i < columns; ++i) out << " --- |";
      out << '\n';
      header = false;
    }
  }
  return out.str();
}

}  // namespace

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::target: return "target";
    case ModelRole::substitute: return "substitute";
    case ModelRole::substitute_binary: return "substitute-binary";
    case ModelRole::reduced: return "reduced";
    case ModelRole::distilled: return "distilled";
    case ModelRole::advtrained: return "advtrained";
  }
  return "?";
}

ModelRole parse_model_role(std::string_view text) {
  for (ModelRole role : kAllModelRoles) {
    if (to_string(role) == text) return role;
  }
  throw ConfigError("unknown model role '" + std::string(text) + "'");
}

std::string_view to_string(DefenseKind defense) {
  switch (defense) {
    case DefenseKind::none: return "none";
    case DefenseKind::advtraining: return "advtraining";
    case DefenseKind::distillation: return "distillation";
    case DefenseKind::squeezing: return "squeezing";
    case DefenseKind::pca: return "pca";
    case DefenseKind::all: return "all";
  }
  return "?";
}

DefenseKind parse_defense(std::string_view text) {
  for (auto d : {DefenseKind::none, DefenseKind::advtraining, DefenseKind::distillation, DefenseKind::squeezing,
                 DefenseKind::pca, DefenseKind::all}) {
    if (to_string(d) == text) return d;
  }
  throw ConfigError("unknown defense '" + std::string(text) + "'");
}

void set_log_stream(std::ostream* out) { log_target = out; }

const AttackAudit& attack_audit() { return audit_state; }
void reset_attack_audit() { audit_state = {}; }

namespace paths {
fs::path data(const ExperimentConfig& cfg, std::string_view file) { return cfg.out / "data" / file; }
fs::path model(const ExperimentConfig& cfg, ModelRole role) {
  return cfg.out / "models" / (std::string(to_string(role)) + ".json");
}
fs::path adv(const ExperimentConfig& cfg, AttackMode mode) {
  return cfg.out / "adv" / (std::string(to_string(mode)) + ".csv");
}
fs::path attack_results(const ExperimentConfig& cfg, AttackMode mode) {
  return cfg.out / "adv" / (std::string(to_string(mode)) + "-results.csv");
}
fs::path curve(const ExperimentConfig& cfg, AttackMode mode, SweepAxis axis) {
  return cfg.out / "curves" / (std::string(to_string(mode)) + "-" + std::string(to_string(axis)) + ".csv");
}
fs::path sweep_adv(const ExperimentConfig& cfg, AttackMode mode, SweepAxis axis, std::size_t point) {
  return cfg.out / "adv" / "sweeps" /
         (std::string(to_string(mode)) + "-" + std::string(to_string(axis)) + "-" + std::to_string(point) + ".csv");
}
fs::path report(const ExperimentConfig& cfg, std::string_view file) { return cfg.out / "reports" / file; }
}  // namespace paths

void cmd_gen(const ExperimentConfig& cfg) {
  cfg.validate();
  const CorpusSpec spec = cfg.corpus_spec();
  log() << "generating corpus: " << spec.n_clean << " clean, " << spec.n_malware << " malware, M=" << spec.m << '\n';
  const auto corpus = generate_corpus(spec);
  const DatasetSplit parts = split(corpus, cfg.split, derive_seed(cfg.seed, stream::split));

  CorpusSpec attacker_spec = spec;
  attacker_spec.n_clean = cfg.attacker_clean;
  attacker_spec.n_malware = cfg.attacker_malware;
  attacker_spec.seed = derive_seed(cfg.seed, stream::attacker);
  const auto attacker = prefixed(generate_corpus(attacker_spec), "atk-");

  CorpusSpec topup_spec = spec;
  topup_spec.n_clean = cfg.topup_clean;
  topup_spec.n_malware = 1;
  topup_spec.seed = derive_seed(cfg.seed, stream::topup);
  const auto topup = prefixed(with_label(generate_corpus(topup_spec), Label::clean), "topup-");

  write_text(cfg.out / "config.cfg", cfg.render());
  write_text(paths::data(cfg, "corpus.json"), corpus_spec_to_json(spec));
  write_text(paths::data(cfg, "vocab.txt"), ApiVocabulary::synthetic(cfg.m).serialize());
  save_features(paths::data(cfg, "train.csv"), parts.train, cfg.m);
  save_features(paths::data(cfg, "validation.csv"), parts.validation, cfg.m);
  save_features(paths::data(cfg, "test.csv"), parts.test, cfg.m);
  save_features(paths::data(cfg, "attacker.csv"), attacker, cfg.m);
  save_features(paths::data(cfg, "topup.csv"), topup, cfg.m);
  log() << "split: " << parts.train.size() << " train, " << parts.validation.size() << " validation, "
        << parts.test.size() << " test\n";
}

void cmd_train(const ExperimentConfig& cfg, ModelRole role) {
  cfg.validate();
  switch (role) {
    case ModelRole::target: train_target(cfg); break;
    case ModelRole::substitute: train_substitute(cfg, false); break;
    case ModelRole::substitute_binary: train_substitute(cfg, true); break;
    case ModelRole::reduced: train_reduced(cfg); break;
    case ModelRole::distilled: train_distilled(cfg); break;
    case ModelRole::advtrained: train_advtrained(cfg); break;
  }
}

void cmd_attack(const ExperimentConfig& cfg, AttackMode mode) {
  cfg.validate();
  const auto test = load_data(cfg, "test.csv");
  const auto malware = with_label(test, Label::malware);
  const AttackModels models = models_for(cfg, mode);
  const AttackConfig op = cfg.operating_point();
  const Crafter craft = crafter_for(mode, models.source);
  const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, stream::attack), mode_index(mode));

  log() << "attack " << to_string(mode) << " on " << malware.size() << " test malware (theta="
        << format_double(op.theta) << ", gamma=" << format_double(op.gamma) << ")\n";
  std::vector<AttackResult> results;
  results.reserve(malware.size());
  for (std::size_t i = 0; i < malware.size(); ++i) results.push_back(craft(malware[i], op, derive_seed(seed, i)));
  audit(results, op);
  require_clean_audit();

  const auto adversarial = adversarial_set(results);
  save_features(paths::adv(cfg, mode), adversarial, cfg.m);
  write_text(paths::attack_results(cfg, mode), attack_results_csv(results, op));

  std::size_t source_evaded = 0;
  for (const auto& r : results) source_evaded += r.evaded_source ? 1 : 0;
  const ClassifyFn target = classifier_of(models.target);
  const double baseline = detection_rate(target, malware);
  const double detected = detection_rate(target, adversarial);
  std::ostringstream report;
  report << "mode,theta,gamma,n_samples,source_evasion_rate,baseline_detection_rate,target_detection_rate,"
            "transfer_rate\n"
         << to_string(mode) << ',' << format_double(op.theta) << ',' << format_double(op.gamma) << ','
         << malware.size() << ','
         << format_double(static_cast<double>(source_evaded) / static_cast<double>(malware.size())) << ','
         << format_double(baseline) << ',' << format_double(detected) << ','
         << format_double(transfer_rate(adversarial, target)) << '\n';
  write_text(paths::report(cfg, "attack-" + std::string(to_string(mode)) + ".csv"), report.str());
  log() << "  target detection " << format_double(baseline) << " -> " << format_double(detected) << '\n';

  if (mode == AttackMode::greybox) write_escalation(cfg, models.source, models.target, malware);
}

void cmd_sweep(const ExperimentConfig& cfg, std::optional<SweepAxis> axis, std::span<const AttackMode> modes) {
  cfg.validate();
  const std::vector<SweepAxis> axes = axis ? std::vector<SweepAxis>{*axis} : cfg.sweep_axes;
  const std::span<const AttackMode> chosen = modes.empty() ? std::span<const AttackMode>(cfg.sweep_modes) : modes;
  for (SweepAxis a : axes) {
    for (AttackMode mode : chosen) sweep_one(cfg, mode, a);
  }
}

void cmd_defend(const ExperimentConfig& cfg, DefenseKind defense) {
  cfg.validate();
  const auto test = load_data(cfg, "test.csv");
  const auto clean = with_label(test, Label::clean);
  const auto malware = with_label(test, Label::malware);
  const auto adversarial = load_adv(paths::adv(cfg, AttackMode::whitebox), "attack --mode whitebox");
  const MlpModel target = load_model(cfg, ModelRole::target);

  const auto run = [&](DefenseKind kind) -> std::string {
    switch (kind) {
      case DefenseKind::none:
        return defense_rows("none", classifier_of(target), clean, malware, adversarial);
      case DefenseKind::advtraining: {
        const MlpModel model = load_model(cfg, ModelRole::advtrained);
        return defense_rows("advtraining", classifier_of(model), clean, malware, adversarial);
      }
      case DefenseKind::distillation: {
        const MlpModel model = load_model(cfg, ModelRole::distilled);
        return defense_rows("distillation", classifier_of(model), clean, malware, adversarial);
      }
      case DefenseKind::pca: {
        const PcaPipeline pipeline{load_pca(cfg), load_model(cfg, ModelRole::reduced)};
        const ClassifyFn classify = [&pipeline](std::span<const double> x) { return pipeline.predict_class(x); };
        return defense_rows("pca", classify, clean, malware, adversarial);
      }
      case DefenseKind::squeezing: {
        const auto validation = load_data(cfg, "validation.csv");
        const SqueezeCalibration cal =
            calibrate_squeeze(target, cfg.squeezer, validation, adversarial, cfg.squeeze_fpr);
        write_text(paths::report(cfg, "squeeze-calibration.csv"), calibration_csv(cal));
        write_text(paths::report(cfg, "squeeze.csv"),
                   "squeezer,threshold,validation_fpr,adversarial_tpr\n" + describe(cal.config.squeezer) + ',' +
                       format_double(cal.config.threshold) + ',' + format_double(cal.validation_fpr) + ',' +
                       format_double(cal.adversarial_tpr) + '\n');
        // A flagged input is treated as malicious; otherwise the target decides.
        const ClassifyFn classify = [&](std::span<const double> x) {
          if (squeeze_detect(target, x, cal.config).verdict == Verdict::adversarial) return Label::malware;
          return target.predict_class(x);
        };
        return defense_rows("squeezing", classify, clean, malware, adversarial);
      }
      case DefenseKind::all: break;
    }
    return {};
  };

  const std::string header = "defense,dataset,tpr,tnr\n";
  if (defense != DefenseKind::all) {
    log() << "defense " << to_string(defense) << '\n';
    write_text(paths::report(cfg, "defense-" + std::string(to_string(defense)) + ".csv"), header + run(defense));
    return;
  }
  std::string combined = header;
  for (auto kind : {DefenseKind::none, DefenseKind::advtraining, DefenseKind::distillation, DefenseKind::squeezing,
                    DefenseKind::pca}) {
    log() << "defense " << to_string(kind) << '\n';
    const std::string rows = run(kind);
    write_text(paths::report(cfg, "defense-" + std::string(to_string(kind)) + ".csv"), header + rows);
    combined += rows;
  }
  write_text(paths::report(cfg, "defenses.csv"), combined);
}

void cmd_l2(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto test = load_data(cfg, "test.csv");
  const auto clean = with_label(test, Label::clean);
  const auto malware = with_label(test, Label::malware);
  const std::uint64_t seed = derive_seed(cfg.seed, stream::l2);

  std::ostringstream out;
  out << "mode,theta,gamma,mean_malware_adv,mean_malware_clean,mean_clean_adv,pair_sample_size\n";
  for (std::size_t p = 0; p < cfg.gamma_grid.size(); ++p) {
    const auto adversarial =
        load_adv(paths::sweep_adv(cfg, cfg.l2_mode, SweepAxis::gamma, p),
                 "sweep --axis gamma --mode " + std::string(to_string(cfg.l2_mode)));
    const L2Report r = l2_report(malware, adversarial, clean, cfg.pair_budget, seed);
    out << to_string(cfg.l2_mode) << ',' << format_double(cfg.sweep_theta) << ',' << format_double(cfg.gamma_grid[p])
        << ',' << format_double(r.mean_malware_adv) << ',' << format_double(r.mean_malware_clean) << ','
        << format_double(r.mean_clean_adv) << ',' << r.pair_sample_size << '\n';
  }
  write_text(paths::report(cfg, "l2.csv"), out.str());
}

std::vector<fs::path> list_csv_outputs(const ExperimentConfig& cfg) {
  std::vector<fs::path> files;
  if (!fs::is_directory(cfg.out)) return files;
  for (const auto& entry : fs::recursive_directory_iterator(cfg.out)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(fs::relative(entry.path(), cfg.out));
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

void cmd_report(const ExperimentConfig& cfg) {
  if (!fs::is_directory(cfg.out / "reports") && !fs::is_directory(cfg.out / "curves")) {
    throw MissingArtifactError("nothing to report under " + cfg.out.string());
  }
  std::ostringstream md;
  md << "# Evasion benchmark summary: " << cfg.name << "\n\n"
     << "Seed " << cfg.seed << ", M=" << cfg.m << ", operating point theta=" << format_double(cfg.theta)
     << " gamma=" << format_double(cfg.gamma) << ".\n\n"
     << "The target model is a stand-in MLP trained on a synthetic corpus; it is not the proprietary detector.\n";
  for (const char* dir : {"reports", "curves"}) {
    const fs::path base = cfg.out / dir;
    if (!fs::is_directory(base)) continue;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(base)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      md << "\n## " << dir << '/' << f.filename().string() << "\n\n" << csv_to_markdown(read_text(f));
    }
  }
  write_text(paths::report(cfg, "summary.md"), md.str());
}

void run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  cmd_gen(cfg);
  for (ModelRole role : {ModelRole::target, ModelRole::substitute, ModelRole::substitute_binary}) {
    cmd_train(cfg, role);
  }
  for (AttackMode mode : kAllAttackModes) cmd_attack(cfg, mode);
  cmd_sweep(cfg);

  const bool l2_swept =
      std::find(cfg.sweep_axes.begin(), cfg.sweep_axes.end(), SweepAxis::gamma) != cfg.sweep_axes.end() &&
      std::find(cfg.sweep_modes.begin(), cfg.sweep_modes.end(), cfg.l2_mode) != cfg.sweep_modes.end();
  if (!l2_swept) {
    const AttackMode l2_mode[] = {cfg.l2_mode};
    cmd_sweep(cfg, SweepAxis::gamma, l2_mode);
  }

  for (ModelRole role : {ModelRole::reduced, ModelRole::distilled, ModelRole::advtrained}) cmd_train(cfg, role);
  cmd_defend(cfg, DefenseKind::all);
  cmd_l2(cfg);
  cmd_report(cfg);
}

}  // namespace evb::bench
