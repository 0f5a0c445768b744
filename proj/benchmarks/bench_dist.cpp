#include <benchmark/benchmark.h>

#include "pvmle/dist.hpp"

namespace {

using pvmle::LinkFamily;

void BM_BivariateNormalCdf(benchmark::State& state) {
    const double rho = state.range(0) / 100.0;
    double a = -2.0;
    for (auto _ : state) {
        a += 0.001;
        if (a > 2.0) a = -2.0;
        benchmark::DoNotOptimize(
            pvmle::joint_cdf(LinkFamily::Normal, a, 0.3, rho));
    }
}
BENCHMARK(BM_BivariateNormalCdf)->Arg(-80)->Arg(0)->Arg(95);

void BM_BivariateNormalGrad(benchmark::State& state) {
    double a = -2.0;
    for (auto _ : state) {
        a += 0.001;
        if (a > 2.0) a = -2.0;
        benchmark::DoNotOptimize(
            pvmle::joint_cdf_grad(LinkFamily::Normal, a, 0.3, -0.8));
    }
}
BENCHMARK(BM_BivariateNormalGrad);

void BM_AmhJointCdf(benchmark::State& state) {
    double a = -2.0;
    for (auto _ : state) {
        a += 0.001;
        if (a > 2.0) a = -2.0;
        benchmark::DoNotOptimize(
            pvmle::joint_cdf(LinkFamily::AmhLogistic, a, 0.3, -0.8));
    }
}
BENCHMARK(BM_AmhJointCdf);

void BM_NormQuantile(benchmark::State& state) {
    double p = 0.001;
    for (auto _ : state) {
        p += 1e-4;
        if (p > 0.999) p = 0.001;
        benchmark::DoNotOptimize(pvmle::norm_quantile(p));
    }
}
BENCHMARK(BM_NormQuantile);

}  // namespace
