#include "adtp/model.hpp"
#include "adtp/series.hpp"
#include "adtp/spectral.hpp"
#include "adtp/training.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

namespace {

std::vector<adtp::Complex> random_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<adtp::Complex> v(n);
  for (auto& x : v) x = {normal(rng), normal(rng)};
  return v;
}

std::vector<double> sine(std::size_t n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = std::sin(2.0 * 3.141592653589793 * static_cast<double>(i) / 1440.0) + normal(rng);
  return v;
}

void BM_Fft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const adtp::FftPlan plan(n);
  const auto x = random_signal(n, 1);
  auto work = x;
  for (auto _ : state) {
    work = x;
    plan.forward(work);
    benchmark::DoNotOptimize(work.data());
  }
}
BENCHMARK(BM_Fft)->Arg(30)->Arg(120)->Arg(256)->Arg(1024);

void BM_Saliency(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const adtp::FftPlan plan(n);
  const auto x = sine(n, 0.05, 2);
  for (auto _ : state) benchmark::DoNotOptimize(adtp::saliency_map(plan, x, 3, 1e-8));
}
BENCHMARK(BM_Saliency)->Arg(30)->Arg(120);

void BM_SegmentWeights(benchmark::State& state) {
  const auto values = sine(4096, 0.05, 3);
  const auto segments = adtp::segment_series(values, 120);
  const adtp::SpectralConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(adtp::segment_weights(segments, config));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(segments.size()));
}
BENCHMARK(BM_SegmentWeights);

void BM_LstmStep(benchmark::State& state) {
  adtp::ModelShape shape;
  std::mt19937_64 rng(4);
  const auto params = adtp::init_params(shape, rng, 5.0);
  const auto x = sine(shape.window, 0.05, 5);
  auto s = adtp::LstmState::zeros(shape.lstm_hidden);
  for (auto _ : state) {
    auto [next, y] = adtp::lstm_step(params.lstm, s, x);
    benchmark::DoNotOptimize(y);
    s = std::move(next);
  }
}
BENCHMARK(BM_LstmStep);

void BM_Backward(benchmark::State& state) {
  adtp::TrainConfig config;
  config.sequence_length = static_cast<std::size_t>(state.range(0));
  const auto values = sine(config.sequence_length + config.shape.window + 1, 0.05, 6);
  const auto set = adtp::make_training_set(values, config);
  std::mt19937_64 rng(7);
  const auto params = adtp::init_params(config.shape, rng, config.offset);
  const auto& batch = set.batches.front();
  std::normal_distribution<double> normal;
  Eigen::MatrixXd noise(static_cast<Eigen::Index>(config.shape.latent), batch.segments.cols());
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = normal(rng);
  const adtp::LossTerms terms{config.beta, config.lambda, config.offset};
  for (auto _ : state) benchmark::DoNotOptimize(adtp::backward(params, batch, noise, terms));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(256);

} // namespace

BENCHMARK_MAIN();
