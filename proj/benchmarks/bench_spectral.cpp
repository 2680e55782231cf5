#include "specshape/spectral.hpp"

#include <benchmark/benchmark.h>

using namespace specshape;

namespace {

linop::Operator dense(Eigen::Index n) {
    std::srand(3);
    return linop::Operator::dense(Eigen::MatrixXd::Random(n, n));
}

void BM_PowerQR(benchmark::State& state) {
    const auto op = dense(state.range(0));
    spectral::PowerQRConfig cfg;
    cfg.k = static_cast<int>(state.range(1));
    cfg.iterations = 50;
    cfg.convergence_tol = 0.0;
    for (auto _ : state) benchmark::DoNotOptimize(spectral::power_qr(op, cfg, 0));
}
BENCHMARK(BM_PowerQR)->Args({64, 1})->Args({64, 5})->Args({256, 5});

void BM_PowerQRWarmStart(benchmark::State& state) {
    const auto op = dense(128);
    spectral::PowerQRConfig cfg;
    cfg.k = 1;
    cfg.iterations = 1000;
    cfg.convergence_tol = 1e-10;
    cfg.warm_start = spectral::power_qr(op, cfg, 0).vectors;
    for (auto _ : state) benchmark::DoNotOptimize(spectral::power_qr(op, cfg, 0));
}
BENCHMARK(BM_PowerQRWarmStart);

void BM_SvdOracle(benchmark::State& state) {
    const auto op = dense(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(spectral::svd_oracle(op));
}
BENCHMARK(BM_SvdOracle)->Arg(64)->Arg(256);

}  // namespace
