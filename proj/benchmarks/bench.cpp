// Microbenchmarks at the toy model's size (H32, 6 layers, L 96).

#include <benchmark/benchmark.h>

#include <random>

#include "tsdiff/guidance.hpp"
#include "tsdiff/parallel.hpp"
#include "tsdiff/refine.hpp"
#include "tsdiff/rng.hpp"

using namespace tsdiff;

namespace {

DiffusionModel bench_model() {
  DiffusionModel m;
  m.config.length = 96;
  m.config.hidden = 32;
  m.config.time_emb_dim = 32;
  m.config.residual_layers = 6;
  m.schedule = build_linear_schedule(100, 1e-4, 0.1);
  m.params = init_params(m.config, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.05);
  for (auto& v : m.params.values) v += n(rng);
  m.meta.context_length = 72;
  m.meta.prediction_length = 24;
  m.meta.representative_step = 25;
  return m;
}

Eigen::MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return n(rng); });
}

void BM_ForwardBatch(benchmark::State& state) {
  const DiffusionModel m = bench_model();
  const Denoiser net = m.denoiser();
  const int b = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = random_batch(1, b * 96);
  const std::vector<int> steps(b, 50);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_batch(x, steps));
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_ForwardBatch)->Arg(1)->Arg(8)->Arg(32);

void BM_ForwardBackward(benchmark::State& state) {
  const DiffusionModel m = bench_model();
  const Denoiser net = m.denoiser();
  const int b = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = random_batch(1, b * 96);
  const Eigen::MatrixXd cot = random_batch(1, b * 96);
  const std::vector<int> steps(b, 50);
  std::vector<double> grad(m.params.values.size());
  for (auto _ : state) {
    DenoiserTape tape;
    net.forward_batch(x, steps, &tape);
    Eigen::MatrixXd dx;
    net.backward(tape, cot, &dx, grad);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(8)->Arg(32);

void BM_GuidedStep(benchmark::State& state) {
  const DiffusionModel m = bench_model();
  const Denoiser net = m.denoiser();
  ObservationMask mask = ObservationMask::empty(96, 1);
  for (int i = 0; i < 72; ++i) mask.observed(i, 0) = true;
  mask = observe(mask, Window(random_batch(96, 1)));
  GuidanceConfig g;
  g.variant = state.range(0) ? GuidanceVariant::Quantile : GuidanceVariant::MeanSquare;
  g.scale = 1.0;
  const Window x = random_batch(96, 1), noise = random_batch(96, 1);
  for (auto _ : state) benchmark::DoNotOptimize(guided_reverse_step(net, m.schedule, x, 50, mask, g, 0.3, noise));
}
BENCHMARK(BM_GuidedStep)->ArgName("quantile")->Arg(0)->Arg(1);

void BM_SelfGuidedForecast(benchmark::State& state) {
  const DiffusionModel m = bench_model();
  ObservationMask mask = ObservationMask::empty(96, 1);
  for (int i = 0; i < 72; ++i) mask.observed(i, 0) = true;
  mask = observe(mask, Window(random_batch(96, 1)));
  GuidanceConfig g;
  g.variant = GuidanceVariant::Quantile;
  g.scale = 4.0;
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(self_guided_sample(m, mask, 1.0, g, n, 7));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SelfGuidedForecast)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_RefinePath(benchmark::State& state) {
  const DiffusionModel m = bench_model();
  std::vector<bool> obs(96, false);
  for (int i = 0; i < 72; ++i) obs[i] = true;
  const Eigen::VectorXd y = random_batch(96, 1);
  const RefinementInput in = combine_with_base(y, obs, y.tail(24), 1.0);
  RefinementConfig cfg;
  cfg.variant = state.range(0) ? RefineVariant::LMC : RefineVariant::ML;
  for (auto _ : state) {
    auto rng = stream_rng(5, 0);
    benchmark::DoNotOptimize(refine_path(m, in, cfg, 0.5, rng));
  }
}
BENCHMARK(BM_RefinePath)->ArgName("lmc")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  tune_allocator();  // as the tsdiff executable does
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
