#include <benchmark/benchmark.h>

#include "cfaug/bias.hpp"
#include "cfaug/cgan.hpp"
#include "cfaug/metrics.hpp"
#include "cfaug/nn.hpp"
#include "cfaug/rng.hpp"
#include "cfaug/synthetic.hpp"

namespace {

using namespace cfaug;

Dataset bench_dataset(std::int64_t n, int d_rich) {
  SynthConfig cfg;
  cfg.n = n;
  cfg.d_tab = 10;
  cfg.d_rich = d_rich;
  cfg.data_seed = 99;
  return generate_synthetic(cfg).first;
}

void BM_MlpTrainStep(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  nn::Mlp net({10, 256, 1}, nn::Head::Sigmoid, 1);
  nn::Adam opt(1e-3);
  Rng rng(2);
  Eigen::MatrixXd x(batch, 10);
  Eigen::MatrixXd y(batch, 1);
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < 10; ++j) x(i, j) = rng.normal();
    y(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  }
  nn::GradBuffer grads = net.make_grads();
  for (auto _ : state) {
    const nn::Mlp::Trace trace = net.forward(x);
    const nn::LossGrad loss = nn::supervised_loss(trace.logits, y, net.head());
    grads.set_zero();
    net.backward(trace, loss.grad_logits, grads);
    opt.step(net, grads);
    benchmark::DoNotOptimize(loss.value);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpTrainStep)->Arg(64)->Arg(256);

void BM_BiasInduction(benchmark::State& state) {
  const auto n = state.range(0);
  const Dataset pool = bench_dataset(n, 0);
  const TabModel tab = fit_tab_model(pool, pool.task(), 7);
  const std::vector<std::uint8_t> recs = predict_recs(tab, pool);
  for (auto _ : state) {
    BiasedTrainSet biased = induce_train_bias(pool, recs, 0.9, 0.35, 11);
    benchmark::DoNotOptimize(biased.size());
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BiasInduction)->Arg(2000)->Arg(20000);

void BM_GanIterations(benchmark::State& state) {
  const Dataset pool = bench_dataset(1500, 0);
  const TabModel tab = fit_tab_model(pool, pool.task(), 7);
  const BiasedTrainSet biased =
      induce_train_bias(pool, predict_recs(tab, pool), 0.9, 0.35, 11);
  GanConfig cfg;
  cfg.g_iters = static_cast<int>(state.range(0));
  for (auto _ : state) {
    CganModel model = train_cgan(biased, cfg, pool.task(), 3);
    benchmark::DoNotOptimize(model.telemetry().supervised_loss.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GanIterations)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Metrics(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(5);
  std::vector<double> y_true(n), y_pred(n);
  for (std::int64_t i = 0; i < n; ++i) {
    y_true[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    y_pred[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  }
  TaskSpec task;
  for (auto _ : state) {
    MetricsReport report = compute_metrics(y_true, y_pred, task);
    benchmark::DoNotOptimize(report.n_eval);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Metrics)->Arg(10000);

void BM_Synthesis(benchmark::State& state) {
  SynthConfig cfg;
  cfg.n = state.range(0);
  cfg.data_seed = 42;
  for (auto _ : state) {
    auto [d, truth] = generate_synthetic(cfg);
    benchmark::DoNotOptimize(d.size());
  }
  state.SetItemsProcessed(state.iterations() * cfg.n);
}
BENCHMARK(BM_Synthesis)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
