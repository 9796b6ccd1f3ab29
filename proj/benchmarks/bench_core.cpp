#include <benchmark/benchmark.h>

#include "tsvat/encoder.hpp"
#include "tsvat/pca.hpp"
#include "tsvat/projection.hpp"
#include "tsvat/rng.hpp"
#include "tsvat/series.hpp"
#include "tsvat/synth.hpp"
#include "tsvat/tsne.hpp"

namespace {

using namespace tsvat;

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

const ts::TimeSeries& s1_series() {
  static const auto series = [] {
    synth::SynthConfig cfg;
    return synth::gen_s1(cfg).series;
  }();
  return series;
}

void BM_EncoderForward(benchmark::State& state) {
  const auto model = encoder::init_model(encoder::EncoderConfig{});
  const Matrix window = gaussian(state.range(0), 1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(encoder::forward(model, window));
}
BENCHMARK(BM_EncoderForward)->Arg(54)->Arg(128)->Arg(512);

void BM_EncoderGradients(benchmark::State& state) {
  const auto model = encoder::init_model(encoder::EncoderConfig{});
  const Matrix window = gaussian(state.range(0), 1, 2);
  Rng rng(3);
  const auto mask = encoder::sample_mask(state.range(0) / model.config.patch_len, 0.5, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encoder::gradients(model, window, mask));
}
BENCHMARK(BM_EncoderGradients)->Arg(54)->Arg(128)->Arg(512);

void BM_EmbedSeries(benchmark::State& state) {
  const auto model = encoder::init_model(encoder::EncoderConfig{});
  const ts::WindowSpec spec{54, state.range(0)};
  for (auto _ : state) benchmark::DoNotOptimize(projection::embed_series(model, s1_series(), spec));
}
BENCHMARK(BM_EmbedSeries)->Arg(2)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_DominantWindowSizes(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(ts::dominant_window_sizes(s1_series(), 5, 8, 500));
}
BENCHMARK(BM_DominantWindowSizes)->Unit(benchmark::kMicrosecond);

void BM_Pca(benchmark::State& state) {
  const Matrix x = gaussian(state.range(0), 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(projection::pca(x, 2));
}
BENCHMARK(BM_Pca)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_TsneAffinities(benchmark::State& state) {
  const Matrix x = gaussian(state.range(0), 16, 5);
  for (auto _ : state) benchmark::DoNotOptimize(projection::conditional_affinities(x, 30.0));
}
BENCHMARK(BM_TsneAffinities)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Tsne(benchmark::State& state) {
  const Matrix x = gaussian(state.range(0), 16, 6);
  projection::TsneConfig cfg;
  cfg.iterations = 250;
  for (auto _ : state) benchmark::DoNotOptimize(projection::tsne(x, cfg));
}
BENCHMARK(BM_Tsne)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
