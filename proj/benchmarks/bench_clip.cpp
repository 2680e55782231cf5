#include "specshape/clipper.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace specshape;

namespace {

void BM_ClipDense(benchmark::State& state) {
    std::srand(5);
    const auto n = state.range(0);
    const auto op = linop::Operator::dense(Eigen::MatrixXd::Random(n, n));
    const auto cfg = clipper::ClipConfig::for_operator(op, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(clipper::clip_spectral_norm(op, cfg, 0));
}
BENCHMARK(BM_ClipDense)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ClipConv2d(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    std::vector<double> filter(9);
    for (auto& f : filter) f = normal(rng);
    const int side = static_cast<int>(state.range(0));
    const auto op = linop::Operator::conv2d(1, 1, 3, 3, filter, side, side, linop::Padding::zeros, 1, 1);
    const auto cfg = clipper::ClipConfig::for_operator(op, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(clipper::clip_spectral_norm(op, cfg, 0));
}
BENCHMARK(BM_ClipConv2d)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
