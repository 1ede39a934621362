// Microbenchmarks for the hot paths: prototype distances, the similarity
// map, the conv stack, and spearman.

#include <benchmark/benchmark.h>

#include "protoda/base_model.hpp"
#include "protoda/explain.hpp"
#include "protoda/inspect.hpp"
#include "protoda/protolayer.hpp"

using namespace protoda;

namespace {

FeatureVolume make_volume(std::size_t h, std::size_t w, std::size_t d,
                          std::uint64_t seed) {
  Rng rng(seed);
  FeatureVolume vol(h, w, d);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : vol.v) v = dist(rng);
  return vol;
}

PrototypeBank make_bank(int c, int k, int d, std::uint64_t seed) {
  Rng rng(seed);
  PrototypeBank bank(c, k, d);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : bank.raw()) v = dist(rng);
  return bank;
}

void BM_MinDistances(benchmark::State& state) {
  const auto vol = make_volume(7, 7, 128, 1);
  const auto bank = make_bank(65, 10, 128, 2);
  for (auto _ : state) {
    auto md = min_distances(vol, bank);
    benchmark::DoNotOptimize(md.dist2.data());
  }
}
BENCHMARK(BM_MinDistances);

void BM_SimilarityScores(benchmark::State& state) {
  const auto vol = make_volume(4, 4, 32, 3);
  const auto bank = make_bank(5, 10, 32, 4);
  for (auto _ : state) {
    auto ss = similarity_scores(vol, bank);
    benchmark::DoNotOptimize(ss.score.data());
  }
}
BENCHMARK(BM_SimilarityScores);

void BM_SyntheticBackboneForward(benchmark::State& state) {
  BaseModel model(synthetic_backbone_spec(), 5, NormConsts{}, 11);
  model.freeze();
  ImageSample img;
  img.id = "bench";
  img.side = 32;
  img.label = 0;
  img.pixels.assign(3 * 32 * 32, 0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(i % 251);
  for (auto _ : state) {
    auto vol = model.extract_features(img);
    benchmark::DoNotOptimize(vol.v.data());
  }
}
BENCHMARK(BM_SyntheticBackboneForward);

void BM_HeatmapUpsample(benchmark::State& state) {
  Mat grid(7, 7);
  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : grid.v) v = u(rng);
  for (auto _ : state) {
    auto up = upsample_bilinear(grid, 224);
    benchmark::DoNotOptimize(up.v.data());
  }
}
BENCHMARK(BM_HeatmapUpsample);

void BM_Spearman(benchmark::State& state) {
  Rng rng(7);
  std::uniform_int_distribution<int> v(0, 9);
  std::vector<double> a(20), b(20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = v(rng);
    b[i] = v(rng);
  }
  for (auto _ : state) {
    auto r = spearman(a, b);
    benchmark::DoNotOptimize(r.rho);
  }
}
BENCHMARK(BM_Spearman);

}  // namespace

BENCHMARK_MAIN();
