// Microbenchmarks for the hot paths of an evaluation run: forward passes and
// input Jacobians on the target and substitute shapes, a full JSMA attack,
// and fitting PCA on a training-sized corpus.

#include <benchmark/benchmark.h>

#include <vector>

#include "evb/defenses.hpp"
#include "evb/jsma.hpp"
#include "evb/rng.hpp"
#include "evb/synthdata.hpp"
#include "evb/tensornet.hpp"

namespace {

constexpr std::size_t kFeatures = 491;

std::vector<double> random_input(std::size_t m, std::uint64_t seed) {
  evb::Rng rng(seed);
  std::vector<double> x(m);
  for (auto& v : x) v = rng.uniform(0.0, 1.0);
  return x;
}

evb::MlpModel model_for(int hidden_set) {
  const auto arch = hidden_set == 0 ? evb::dense_architecture(kFeatures, evb::kTargetHidden)
                                    : evb::dense_architecture(kFeatures, evb::kSubstituteHidden);
  return evb::MlpModel::he_uniform(arch, 7);
}

void BM_Forward(benchmark::State& state) {
  const auto model = model_for(static_cast<int>(state.range(0)));
  const auto x = random_input(kFeatures, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->ArgName("substitute");

void BM_InputJacobian(benchmark::State& state) {
  const auto model = model_for(static_cast<int>(state.range(0)));
  const auto x = random_input(kFeatures, 2);
  for (auto _ : state) benchmark::DoNotOptimize(model.input_jacobian(x));
}
BENCHMARK(BM_InputJacobian)->Arg(0)->Arg(1)->ArgName("substitute");

// The output bias pins the prediction to malware, so every run spends the
// whole budget of floor(gamma * M) Jacobian evaluations.
void BM_JsmaAttack(benchmark::State& state) {
  auto model = model_for(0);
  const auto last = model.num_layers() - 1;
  Eigen::VectorXd bias(2);
  bias << -1e3, 1e3;
  model.set_parameters(last, model.layer(last).weights, bias);
  evb::FeatureVector x{"bench", evb::Label::malware, random_input(kFeatures, 3)};
  evb::AttackConfig cfg;
  cfg.gamma = static_cast<double>(state.range(0)) / static_cast<double>(kFeatures);
  for (auto _ : state) benchmark::DoNotOptimize(jsma_attack(model, x, cfg));
  state.counters["budget"] = static_cast<double>(cfg.budget(kFeatures));
}
BENCHMARK(BM_JsmaAttack)->Arg(4)->Arg(12)->ArgName("features")->Unit(benchmark::kMillisecond);

void BM_FitPca(benchmark::State& state) {
  evb::CorpusSpec spec;
  spec.n_clean = spec.n_malware = static_cast<std::size_t>(state.range(0)) / 2;
  spec.m = kFeatures;
  spec.profiles = evb::default_profiles(kFeatures, 11);
  spec.seed = 11;
  const auto corpus = evb::generate_corpus(spec);
  for (auto _ : state) benchmark::DoNotOptimize(evb::fit_pca(corpus, 19));
}
BENCHMARK(BM_FitPca)->Arg(2000)->ArgName("samples")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
