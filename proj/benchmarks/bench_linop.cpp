#include "specshape/linop.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace specshape;

namespace {

linop::Operator conv(int side, int channels, linop::Padding padding) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    std::vector<double> filter(static_cast<std::size_t>(channels * channels * 9));
    for (auto& f : filter) f = normal(rng);
    return linop::Operator::conv2d(channels, channels, 3, 3, std::move(filter), side, side, padding, 1, 1);
}

void BM_Conv2dApply(benchmark::State& state) {
    const auto op = conv(static_cast<int>(state.range(0)), 4, linop::Padding::zeros);
    const Eigen::VectorXd x = Eigen::VectorXd::Random(op.in_dim());
    for (auto _ : state) benchmark::DoNotOptimize(op.apply_linear(x));
    state.SetItemsProcessed(state.iterations() * op.in_dim());
}
BENCHMARK(BM_Conv2dApply)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dAdjoint(benchmark::State& state) {
    const auto op = conv(static_cast<int>(state.range(0)), 4, linop::Padding::circular);
    const Eigen::VectorXd y = Eigen::VectorXd::Random(op.out_dim());
    for (auto _ : state) benchmark::DoNotOptimize(op.adjoint_apply(y));
    state.SetItemsProcessed(state.iterations() * op.out_dim());
}
BENCHMARK(BM_Conv2dAdjoint)->Arg(8)->Arg(16)->Arg(32);

void BM_DenseApply(benchmark::State& state) {
    const auto n = state.range(0);
    const auto op = linop::Operator::dense(Eigen::MatrixXd::Random(n, n));
    const Eigen::VectorXd x = Eigen::VectorXd::Random(n);
    for (auto _ : state) benchmark::DoNotOptimize(op.apply_linear(x));
}
BENCHMARK(BM_DenseApply)->Arg(64)->Arg(256);

}  // namespace
