#include <benchmark/benchmark.h>

#include "pvmle/dgp.hpp"
#include "pvmle/io.hpp"
#include "pvmle/semiparam.hpp"

namespace {

using namespace pvmle;

Dataset bench_data(std::int64_t n) {
    DesignConfig d;
    d.beta0 = Eigen::VectorXd(4);
    d.beta0 << 2.0, -0.5, 0.5, 1.0;
    d.betaR = Eigen::VectorXd(5);
    d.betaR << 1.0, 0.5, -1.5, 2.5, 1.0;
    d.rho = -0.8;
    d.n = n;
    d.seed = 1;
    d.tau_fn = -2.4;
    d.tau_fp = -2.4;
    return to_dataset(simulate(d));
}

void BM_KernelProbs(benchmark::State& state) {
    const Dataset data = bench_data(state.range(0));
    SmlTheta t;
    t.beta_r = Eigen::VectorXd(5);
    t.beta_r << 1.0, 0.5, -1.5, 2.5, 1.0;
    t.beta = Eigen::VectorXd(4);
    t.beta << 2.0, -0.5, 0.5, 1.0;
    const KernelConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernel_probs(t, data, cfg));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KernelProbs)->Arg(500)->Arg(2000)->Arg(5000)
    ->Unit(benchmark::kMillisecond);

void BM_SmlLoglik(benchmark::State& state) {
    const Dataset data = bench_data(state.range(0));
    SmlTheta t;
    t.beta_r = Eigen::VectorXd(5);
    t.beta_r << 1.0, 0.5, -1.5, 2.5, 1.0;
    t.beta = Eigen::VectorXd(4);
    t.beta << 2.0, -0.5, 0.5, 1.0;
    const KernelConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            sml_loglik(t, data, cfg, SmlVariant::PPO));
    }
}
BENCHMARK(BM_SmlLoglik)->Arg(2000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
