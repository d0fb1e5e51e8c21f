#include <benchmark/benchmark.h>

#include <optional>
#include <random>
#include <vector>

#include "tmcseg/data.hpp"
#include "tmcseg/inference.hpp"
#include "tmcseg/models.hpp"
#include "tmcseg/oracle.hpp"

using namespace tmcseg;

namespace {

data::LabeledSequence camel_sequence(std::size_t side) {
  const auto img = data::generate_shape(data::ShapeKind::Polygon, side, 11);
  return data::make_sequence(img, data::NoiseSpec::camel_preset(21), 0.4, 31);
}

void BM_ElboGradient(benchmark::State& state) {
  const auto kind = static_cast<models::ModelKind>(state.range(0));
  auto model = models::make_model(models::TmcConfig::preset(kind), 1);
  const auto seq = camel_sequence(static_cast<std::size_t>(state.range(1)));
  dist::Rng rng(2);
  for (auto _ : state) {
    model.params.zero_grad();
    benchmark::DoNotOptimize(inference::elbo_with_gradient(model, seq, rng, {}).total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(seq.length()));
  state.SetLabel(models::display_name(kind));
}
BENCHMARK(BM_ElboGradient)
    ->ArgsProduct({{static_cast<int>(models::ModelKind::Dmtmc), static_cast<int>(models::ModelKind::Vsl),
                    static_cast<int>(models::ModelKind::Svrnn)},
                   {16, 32}})
    ->Unit(benchmark::kMillisecond);

void BM_PosteriorLabels(benchmark::State& state) {
  auto model = models::make_model(models::TmcConfig::preset(models::ModelKind::Dmtmc), 1);
  const auto seq = camel_sequence(32);
  for (auto _ : state) benchmark::DoNotOptimize(inference::posterior_labels(model, seq, 5, 3).decoded.data());
}
BENCHMARK(BM_PosteriorLabels)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const oracle::DiscreteHmm hmm{{0.5, 0.5}, {{0.95, 0.05}, {0.05, 0.95}}, {-1.0, 1.0}, {0.8, 0.8}};
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> xs(n);
  for (double& x : xs) x = nd(rng);
  const std::vector<std::optional<data::Label>> clamp(n);
  for (auto _ : state) benchmark::DoNotOptimize(oracle::forward_backward(hmm, xs, clamp).log_evidence);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(1024)->Arg(4096)->Arg(16384);

void BM_HilbertMap(benchmark::State& state) {
  for (auto _ : state) {
    data::HilbertMap map(static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(map.size());
  }
}
BENCHMARK(BM_HilbertMap)->DenseRange(4, 10, 2);

void BM_MakeSequence(benchmark::State& state) {
  const auto img = data::generate_shape(data::ShapeKind::Blob, 64, 11);
  for (auto _ : state)
    benchmark::DoNotOptimize(data::make_sequence(img, data::NoiseSpec::cattle_preset(21), 0.4, 31).xs.data());
}
BENCHMARK(BM_MakeSequence);

}  // namespace

BENCHMARK_MAIN();
