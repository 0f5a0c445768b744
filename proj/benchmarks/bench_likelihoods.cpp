#include <benchmark/benchmark.h>

#include "pvmle/dgp.hpp"
#include "pvmle/estimators.hpp"
#include "pvmle/io.hpp"

namespace {

using namespace pvmle;

DesignConfig bench_design(std::int64_t n) {
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
    return d;
}

void BM_PpoLoglikGrad(benchmark::State& state) {
    const DesignConfig d = bench_design(state.range(0));
    const Dataset data = to_dataset(simulate(d));
    ThetaFull t;
    t.beta_r = d.betaR;
    t.beta = d.beta0;
    t.rho_raw = std::atanh(d.rho);
    Eigen::VectorXd grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            ppo_loglik_grad(t, data, LinkFamily::Normal, grad));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PpoLoglikGrad)->Arg(1000)->Arg(5000)->Arg(20000);

void BM_FitPpo(benchmark::State& state) {
    const DesignConfig d = bench_design(5000);
    const Dataset data = to_dataset(simulate(d));
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_ppo_mle(data, LinkFamily::Normal));
    }
}
BENCHMARK(BM_FitPpo)->Unit(benchmark::kMillisecond);

void BM_FitProbit(benchmark::State& state) {
    const DesignConfig d = bench_design(5000);
    const Dataset data = to_dataset(simulate(d));
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fit_probit_naive(data, NaiveOutcome::Reported,
                             LinkFamily::Normal));
    }
}
BENCHMARK(BM_FitProbit)->Unit(benchmark::kMillisecond);

}  // namespace
