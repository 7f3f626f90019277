#include "experiment.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "evb/error.hpp"
#include "evb/numfmt.hpp"
#include "evb/rng.hpp"

namespace evb::bench {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view text) {
  const std::string t = trim(text);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError("expected a non-negative integer, got '" + t + "'");
  }
  return value;
}

std::size_t parse_size(std::string_view text) { return static_cast<std::size_t>(parse_u64(text)); }

double parse_real(std::string_view text) {
  const std::string t = trim(text);
  const auto slash = t.find('/');
  try {
    if (slash == std::string::npos) return parse_double(t);
    const double num = parse_double(trim(std::string_view(t).substr(0, slash)));
    const double den = parse_double(trim(std::string_view(t).substr(slash + 1)));
    if (den == 0.0) throw ConfigError("zero denominator in '" + t + "'");
    return num / den;
  } catch (const FormatError&) {
    throw ConfigError("expected a number, got '" + t + "'");
  }
}

std::vector<std::size_t> parse_size_list(std::string_view text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) out.push_back(parse_size(item));
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string join_reals(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

SweepAxis parse_axis(std::string_view text) {
  if (text == "gamma") return SweepAxis::gamma;
  if (text == "theta") return SweepAxis::theta;
  throw ConfigError("unknown sweep axis '" + std::string(text) + "' (expected gamma or theta)");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

void add_model_keys(std::map<std::string, Setter>& keys, const std::string& section,
                    ModelSection ExperimentConfig::*member) {
  keys[section + ".hidden"] = [member](ExperimentConfig& c, const std::string& v) {
    (c.*member).hidden = parse_size_list(v);
  };
  keys[section + ".epochs"] = [member](ExperimentConfig& c, const std::string& v) {
    (c.*member).train.epochs = parse_size(v);
  };
  keys[section + ".batch_size"] = [member](ExperimentConfig& c, const std::string& v) {
    (c.*member).train.batch_size = parse_size(v);
  };
  keys[section + ".learning_rate"] = [member](ExperimentConfig& c, const std::string& v) {
    (c.*member).train.learning_rate = parse_real(v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> k;
    k["experiment.name"] = [](ExperimentConfig& c, const std::string& v) { c.name = v; };
    k["experiment.seed"] = [](ExperimentConfig& c, const std::string& v) { c.seed = parse_u64(v); };
    k["experiment.out"] = [](ExperimentConfig& c, const std::string& v) { c.out = v; };

    k["corpus.m"] = [](ExperimentConfig& c, const std::string& v) { c.m = parse_size(v); };
    k["corpus.n_clean"] = [](ExperimentConfig& c, const std::string& v) { c.n_clean = parse_size(v); };
    k["corpus.n_malware"] = [](ExperimentConfig& c, const std::string& v) { c.n_malware = parse_size(v); };
    k["corpus.overlap"] = [](ExperimentConfig& c, const std::string& v) { c.overlap = parse_real(v); };
    k["corpus.malware_indicative_fraction"] = [](ExperimentConfig& c, const std::string& v) {
      c.malware_indicative_fraction = parse_real(v);
    };
    k["corpus.clean_indicative_fraction"] = [](ExperimentConfig& c, const std::string& v) {
      c.clean_indicative_fraction = parse_real(v);
    };
    k["corpus.cap"] = [](ExperimentConfig& c, const std::string& v) { c.cap = parse_u64(v); };
    k["corpus.split"] = [](ExperimentConfig& c, const std::string& v) {
      const auto parts = parse_number_list(v);
      if (parts.size() != 3) throw ConfigError("split needs three fractions (train, validation, test)");
      c.split = {parts[0], parts[1], parts[2]};
    };
    k["corpus.attacker_clean"] = [](ExperimentConfig& c, const std::string& v) { c.attacker_clean = parse_size(v); };
    k["corpus.attacker_malware"] = [](ExperimentConfig& c, const std::string& v) {
      c.attacker_malware = parse_size(v);
    };
    k["corpus.topup_clean"] = [](ExperimentConfig& c, const std::string& v) { c.topup_clean = parse_size(v); };

    add_model_keys(k, "target", &ExperimentConfig::target);
    add_model_keys(k, "substitute", &ExperimentConfig::substitute);

    k["attack.theta"] = [](ExperimentConfig& c, const std::string& v) { c.theta = parse_real(v); };
    k["attack.gamma"] = [](ExperimentConfig& c, const std::string& v) { c.gamma = parse_real(v); };
    k["attack.max_iters"] = [](ExperimentConfig& c, const std::string& v) {
      if (trim(v).empty()) {
        c.max_iters.reset();
      } else {
        c.max_iters = parse_size(v);
      }
    };

    k["sweep.modes"] = [](ExperimentConfig& c, const std::string& v) {
      c.sweep_modes.clear();
      for (const auto& item : split_list(v)) c.sweep_modes.push_back(parse_attack_mode(item));
    };
    k["sweep.axes"] = [](ExperimentConfig& c, const std::string& v) {
      c.sweep_axes.clear();
      for (const auto& item : split_list(v)) c.sweep_axes.push_back(parse_axis(item));
    };
    k["sweep.gamma_grid"] = [](ExperimentConfig& c, const std::string& v) { c.gamma_grid = parse_number_list(v); };
    k["sweep.theta_grid"] = [](ExperimentConfig& c, const std::string& v) { c.theta_grid = parse_number_list(v); };
    k["sweep.fixed_theta"] = [](ExperimentConfig& c, const std::string& v) { c.sweep_theta = parse_real(v); };
    k["sweep.fixed_gamma"] = [](ExperimentConfig& c, const std::string& v) { c.sweep_gamma = parse_real(v); };

    k["defense.pca_k"] = [](ExperimentConfig& c, const std::string& v) { c.pca_k = parse_size(v); };
    k["defense.reduced_hidden"] = [](ExperimentConfig& c, const std::string& v) {
      c.reduced_hidden = parse_size_list(v);
    };
    k["defense.squeezer"] = [](ExperimentConfig& c, const std::string& v) { c.squeezer = parse_squeezer(trim(v)); };
    k["defense.squeeze_fpr"] = [](ExperimentConfig& c, const std::string& v) { c.squeeze_fpr = parse_real(v); };
    k["defense.distill_temperature"] = [](ExperimentConfig& c, const std::string& v) {
      c.distill_temperature = parse_real(v);
    };
    k["defense.student_hidden"] = [](ExperimentConfig& c, const std::string& v) {
      c.student_hidden = parse_size_list(v);
    };
    k["defense.adv_count"] = [](ExperimentConfig& c, const std::string& v) { c.adv_count = parse_size(v); };

    k["l2.mode"] = [](ExperimentConfig& c, const std::string& v) { c.l2_mode = parse_attack_mode(trim(v)); };
    k["l2.pair_budget"] = [](ExperimentConfig& c, const std::string& v) { c.pair_budget = parse_size(v); };
    return k;
  }();
  return table;
}

void apply_tree(ExperimentConfig& cfg, const pt::ptree& tree) {
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("key '" + section + "' must appear inside a section");
    for (const auto& [key, node] : body) {
      if (section == "experiment" && key == "base") continue;
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw ConfigError("unknown config key '" + full + "'");
      try {
        it->second(cfg, node.data());
      } catch (const ConfigError& e) {
        throw ConfigError(full + ": " + e.what());
      }
    }
  }
}

std::optional<std::filesystem::path> find_preset(const std::string& name) {
  std::string file = name;
  if (std::filesystem::path(file).extension() != ".cfg") file += ".cfg";
  for (const auto& dir : preset_dirs()) {
    const auto candidate = dir / file;
    if (std::filesystem::is_regular_file(candidate)) return candidate;
  }
  return std::nullopt;
}

std::filesystem::path resolve_config(const std::string& path_or_preset, const std::filesystem::path& base_dir) {
  const std::filesystem::path direct(path_or_preset);
  if (std::filesystem::is_regular_file(direct)) return direct;
  if (!base_dir.empty() && direct.is_relative() && std::filesystem::is_regular_file(base_dir / direct)) {
    return base_dir / direct;
  }
  if (auto preset = find_preset(path_or_preset)) return *preset;
  throw ConfigError("config '" + path_or_preset + "' is neither a file nor a bundled preset");
}

ExperimentConfig load_resolved(const std::filesystem::path& path, int depth);

ExperimentConfig parse_at_depth(std::string_view text, const std::filesystem::path& base_dir, int depth) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  ExperimentConfig cfg;
  if (const auto base = tree.get_optional<std::string>("experiment.base")) {
    if (depth > 8) throw ConfigError("config 'base' chain is too deep");
    cfg = load_resolved(resolve_config(trim(*base), base_dir), depth + 1);
  }
  apply_tree(cfg, tree);
  return cfg;
}

ExperimentConfig load_resolved(const std::filesystem::path& path, int depth) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentConfig cfg = parse_at_depth(text.str(), path.parent_path(), depth);
  pt::ptree tree;
  std::istringstream again(text.str());
  pt::ini_parser::read_ini(again, tree);
  if (!tree.get_optional<std::string>("experiment.name")) cfg.name = path.stem().string();
  return cfg;
}

void check_grid(const std::vector<double>& grid, const char* name) {
  if (grid.empty()) throw ConfigError(std::string(name) + " is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw ConfigError(std::string(name) + " values must lie in [0,1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError(std::string(name) + " must be strictly increasing");
  }
}

void check_model(const ModelSection& model, const char* name) {
  if (model.hidden.empty()) throw ConfigError(std::string(name) + ".hidden is empty");
  for (std::size_t w : model.hidden) {
    if (w == 0) throw ConfigError(std::string(name) + ".hidden has a zero width");
  }
  model.train.validate();
}

}  // namespace

std::string_view to_string(AttackMode mode) {
  switch (mode) {
    case AttackMode::whitebox: return "whitebox";
    case AttackMode::greybox: return "greybox";
    case AttackMode::greybox_binary: return "greybox-binary";
    case AttackMode::random_baseline: return "random-baseline";
  }
  return "?";
}

AttackMode parse_attack_mode(std::string_view text) {
  for (AttackMode mode : kAllAttackModes) {
    if (to_string(mode) == text) return mode;
  }
  throw ConfigError("unknown attack mode '" + std::string(text) +
                    "' (expected whitebox, greybox, greybox-binary or random-baseline)");
}

ExperimentConfig::ExperimentConfig() {
  target.hidden.assign(std::begin(kTargetHidden), std::end(kTargetHidden));
  substitute.hidden.assign(std::begin(kSubstituteHidden), std::end(kSubstituteHidden));
  for (ModelSection* s : {&target, &substitute}) {
    s->train.epochs = 10;
    s->train.batch_size = 64;
    s->train.learning_rate = 0.001;
  }
  for (int k = 0; k <= 14; k += 2) gamma_grid.push_back(k / 64.0);
  theta_grid = parse_number_list("0:0.0125:0.15");
}

AttackConfig ExperimentConfig::operating_point() const {
  AttackConfig cfg;
  cfg.theta = theta;
  cfg.gamma = gamma;
  cfg.max_iters = max_iters;
  return cfg;
}

CorpusSpec ExperimentConfig::corpus_spec() const {
  CorpusSpec spec;
  spec.n_clean = n_clean;
  spec.n_malware = n_malware;
  spec.m = m;
  spec.overlap = overlap;
  spec.cap = cap;
  spec.seed = derive_seed(seed, stream::corpus);
  ProfileRecipe recipe;
  recipe.malware_indicative_fraction = malware_indicative_fraction;
  recipe.clean_indicative_fraction = clean_indicative_fraction;
  spec.profiles = default_profiles(m, derive_seed(seed, stream::profiles), recipe);
  return spec;
}

void ExperimentConfig::validate() const {
  if (out.empty()) throw ConfigError("experiment.out is empty");
  if (m == 0) throw ConfigError("corpus.m must be positive");
  if (n_clean == 0 || n_malware == 0) throw ConfigError("corpus needs at least one sample per class");
  if (attacker_clean == 0 || attacker_malware == 0) throw ConfigError("attacker corpus needs both classes");
  if (topup_clean == 0) throw ConfigError("corpus.topup_clean must be positive");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("corpus.overlap must lie in [0,1]");
  if (!(malware_indicative_fraction >= 0.0 && clean_indicative_fraction >= 0.0 &&
        malware_indicative_fraction + clean_indicative_fraction <= 1.0)) {
    throw ConfigError("corpus indicative fractions must be non-negative and sum to at most 1");
  }
  if (cap == 0) throw ConfigError("corpus.cap must be positive");
  double total = 0.0;
  for (double f : split) {
    if (!(f >= 0.0)) throw ConfigError("corpus.split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("corpus.split must sum to 1");
  if (!(split[1] > 0.0) || !(split[2] > 0.0)) {
    throw ConfigError("corpus.split needs non-empty validation and test fractions");
  }

  check_model(target, "target");
  check_model(substitute, "substitute");
  operating_point().validate(m);

  if (sweep_modes.empty()) throw ConfigError("sweep.modes is empty");
  if (sweep_axes.empty()) throw ConfigError("sweep.axes is empty");
  check_grid(gamma_grid, "sweep.gamma_grid");
  check_grid(theta_grid, "sweep.theta_grid");
  if (!(sweep_theta > 0.0 && sweep_theta <= 1.0)) throw ConfigError("sweep.fixed_theta must lie in (0,1]");
  if (!(sweep_gamma > 0.0 && sweep_gamma <= 1.0)) throw ConfigError("sweep.fixed_gamma must lie in (0,1]");

  if (pca_k == 0 || pca_k > m) throw ConfigError("defense.pca_k must lie in [1, M]");
  for (std::size_t w : reduced_hidden) {
    if (w == 0) throw ConfigError("defense.reduced_hidden has a zero width");
  }
  for (std::size_t w : student_hidden) {
    if (w == 0) throw ConfigError("defense.student_hidden has a zero width");
  }
  squeezer.validate();
  if (!(squeeze_fpr >= 0.0 && squeeze_fpr < 1.0)) throw ConfigError("defense.squeeze_fpr must lie in [0,1)");
  if (!(distill_temperature > 0.0)) throw ConfigError("defense.distill_temperature must be positive");
  if (adv_count == 0) throw ConfigError("defense.adv_count must be positive");
  if (pair_budget == 0) throw ConfigError("l2.pair_budget must be positive");
}

std::string ExperimentConfig::render() const {
  std::ostringstream o;
  o << "[experiment]\nname = " << name << "\nseed = " << seed << "\nout = " << out.string() << "\n\n";
  o << "[corpus]\nm = " << m << "\nn_clean = " << n_clean << "\nn_malware = " << n_malware
    << "\noverlap = " << format_double(overlap)
    << "\nmalware_indicative_fraction = " << format_double(malware_indicative_fraction)
    << "\nclean_indicative_fraction = " << format_double(clean_indicative_fraction) << "\ncap = " << cap
    << "\nsplit = " << join_reals(split)
    << "\nattacker_clean = " << attacker_clean << "\nattacker_malware = " << attacker_malware
    << "\ntopup_clean = " << topup_clean << "\n\n";
  for (const auto& [section, model] : {std::pair{"target", &target}, std::pair{"substitute", &substitute}}) {
    o << '[' << section << "]\nhidden = " << join_sizes(model->hidden) << "\nepochs = " << model->train.epochs
      << "\nbatch_size = " << model->train.batch_size
      << "\nlearning_rate = " << format_double(model->train.learning_rate) << "\n\n";
  }
  o << "[attack]\ntheta = " << format_double(theta) << "\ngamma = " << format_double(gamma)
    << "\nmax_iters = " << (max_iters ? std::to_string(*max_iters) : std::string()) << "\n\n";
  o << "[sweep]\nmodes = ";
  for (std::size_t i = 0; i < sweep_modes.size(); ++i) o << (i ? "," : "") << to_string(sweep_modes[i]);
  o << "\naxes = ";
  for (std::size_t i = 0; i < sweep_axes.size(); ++i) o << (i ? "," : "") << to_string(sweep_axes[i]);
  o << "\ngamma_grid = " << join_reals(gamma_grid) << "\ntheta_grid = " << join_reals(theta_grid)
    << "\nfixed_theta = " << format_double(sweep_theta) << "\nfixed_gamma = " << format_double(sweep_gamma)
    << "\n\n";
  o << "[defense]\npca_k = " << pca_k << "\nreduced_hidden = " << join_sizes(reduced_hidden)
    << "\nsqueezer = " << describe(squeezer) << "\nsqueeze_fpr = " << format_double(squeeze_fpr)
    << "\ndistill_temperature = " << format_double(distill_temperature)
    << "\nstudent_hidden = " << join_sizes(student_hidden) << "\nadv_count = " << adv_count << "\n\n";
  o << "[l2]\nmode = " << to_string(l2_mode) << "\npair_budget = " << pair_budget << '\n';
  return o.str();
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  return parse_at_depth(text, base_dir, 0);
}

ExperimentConfig load_config(const std::string& path_or_preset) {
  return load_resolved(resolve_config(path_or_preset, {}), 0);
}

std::vector<std::filesystem::path> preset_dirs() {
  std::vector<std::filesystem::path> dirs;
  if (const char* env = std::getenv("EVB_PRESET_DIR"); env && *env) dirs.emplace_back(env);
#ifdef EVB_SOURCE_PRESET_DIR
  dirs.emplace_back(EVB_SOURCE_PRESET_DIR);
#endif
#ifdef EVB_INSTALL_PRESET_DIR
  dirs.emplace_back(EVB_INSTALL_PRESET_DIR);
#endif
  return dirs;
}

std::vector<PresetInfo> list_presets() {
  std::map<std::string, PresetInfo> found;
  for (const auto& dir : preset_dirs()) {
    if (!std::filesystem::is_directory(dir)) continue;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".cfg") continue;
      const std::string name = entry.path().stem().string();
      if (found.count(name)) continue;
      std::ifstream in(entry.path());
      std::string line;
      std::string summary;
      while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#' || t[0] == ';') summary = trim(std::string_view(t).substr(1));
        break;
      }
      found[name] = {name, summary};
    }
  }
  std::vector<PresetInfo> out;
  for (auto& [_, info] : found) out.push_back(std::move(info));
  return out;
}

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& term : split_list(text)) {
    if (term.empty()) throw ConfigError("empty term in number list '" + std::string(text) + "'");
    const auto c1 = term.find(':');
    if (c1 == std::string::npos) {
      out.push_back(parse_real(term));
      continue;
    }
    const auto c2 = term.find(':', c1 + 1);
    if (c2 == std::string::npos) throw ConfigError("range '" + term + "' must be start:step:stop");
    const double start = parse_real(std::string_view(term).substr(0, c1));
    const double step = parse_real(std::string_view(term).substr(c1 + 1, c2 - c1 - 1));
    const double stop = parse_real(std::string_view(term).substr(c2 + 1));
    if (!(step > 0.0) || !(stop >= start)) throw ConfigError("range '" + term + "' needs step > 0 and stop >= start");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
      // Snap to 12 decimals so 0:0.0125:0.15 yields 0.0375 rather than 0.037500000000000006.
      out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
    }
  }
  return out;
}

}  // namespace evb::bench
