#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fairdemand/kernels.hpp"
#include "fairdemand/synthetic.hpp"
#include "fairdemand/training.hpp"

using namespace fairdemand;
using kernels::ConstMat;
using kernels::Mat;

namespace {

struct Operands {
  std::vector<double> a, b, c;
  std::size_t n;

  explicit Operands(std::size_t size) : a(size * size), b(size * size), c(size * size), n(size) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
  }
  ConstMat ca() const { return {a, n, n}; }
  ConstMat cb() const { return {b, n, n}; }
  Mat cc() { return {c, n, n}; }
};

using Gemm = void (*)(ConstMat, ConstMat, Mat, kernels::Accumulate);

void run_gemm(benchmark::State& state, Gemm f) {
  Operands op(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    f(op.ca(), op.cb(), op.cc(), kernels::Accumulate::overwrite);
    benchmark::DoNotOptimize(op.c.data());
  }
  const double n = static_cast<double>(op.n);
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                         benchmark::Counter::kIs1000);
}

void BM_gemm_nn_serial(benchmark::State& s) { run_gemm(s, kernels::serial::gemm_nn); }
void BM_gemm_nn_omp(benchmark::State& s) { run_gemm(s, kernels::omp::gemm_nn); }
void BM_gemm_tn_serial(benchmark::State& s) { run_gemm(s, kernels::serial::gemm_tn); }
void BM_gemm_tn_omp(benchmark::State& s) { run_gemm(s, kernels::omp::gemm_tn); }
void BM_gemm_nt_serial(benchmark::State& s) { run_gemm(s, kernels::serial::gemm_nt); }
void BM_gemm_nt_omp(benchmark::State& s) { run_gemm(s, kernels::omp::gemm_nt); }

BENCHMARK(BM_gemm_nn_serial)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_gemm_nn_omp)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_gemm_tn_serial)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_gemm_tn_omp)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_gemm_nt_serial)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_gemm_nt_omp)->RangeMultiplier(4)->Range(16, 256);

// One training epoch on the default generator.
void BM_train_epoch(benchmark::State& state) {
  data::SyntheticSpec spec;
  spec.steps = 500;
  const auto syn = data::generate_synthetic(spec);
  const auto d = training::prepare_experiment(syn.demand, syn.attributes, 12, 1, {},
                                              data::NormalizerMode::global);
  models::ModelConfig mc;
  mc.kind = state.range(0) == 0 ? models::ModelKind::mlp : models::ModelKind::gru;
  mc.hidden = state.range(0) == 0 ? 64 : 8;
  training::TrainConfig tc;
  tc.max_epochs = 1;
  training::LossConfig loss;
  loss.lambda = 0.1;
  for (auto _ : state) {
    auto m = models::Model::create(mc, d.nodes);
    benchmark::DoNotOptimize(training::train(*m, d, loss, tc).epochs.size());
  }
  state.SetLabel(models::to_string(mc.kind));
}
BENCHMARK(BM_train_epoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
