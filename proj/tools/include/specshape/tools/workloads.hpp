#pragma once

// Random operators, toy datasets and model builders shared by the CLI
// scenarios, the acceptance suite and the benchmarks.

#include "specshape/circulant.hpp"
#include "specshape/dataset.hpp"
#include "specshape/linop.hpp"
#include "specshape/net.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace specshape::tools {

/// Dense with Gaussian entries.
linop::Operator random_dense(int rows, int cols, std::mt19937_64& rng);

/// Random-shape conv1d / conv2d with total input and output size <= max_dim.
linop::Operator random_conv1d(int max_dim, std::mt19937_64& rng);
linop::Operator random_conv2d(int max_dim, std::mt19937_64& rng);

/// Dispatches on kind (dense, conv1d or conv2d); dense sides are at most max_dim.
linop::Operator random_operator(linop::Kind kind, int max_dim, std::mt19937_64& rng);

/// Single-channel 3x3 conv2d on a side x side image.
linop::Operator random_conv2d_fixed(int side, linop::Padding padding, int stride, std::mt19937_64& rng);

struct FilterBankLimits {
    int max_n = 64;
    int max_k = 7;
    int max_m = 4;
};

circulant::FilterBank random_filter_bank(const FilterBankLimits& limits, bool nonnegative, std::mt19937_64& rng);

/// `classes` isotropic unit-variance clusters in R^dim with N(0, spread^2)
/// centroids drawn from `rng`.
data::LabeledDataset random_clusters(int dim, int classes, double spread, int train_per_class, int test_per_class,
                                     std::mt19937_64& rng, std::uint64_t sample_seed);

/// Two unit-variance 2-D classes with centroids (+-separation/2, 0).
data::LabeledDataset two_gaussians(double separation, int train_per_class, int test_per_class, std::uint64_t seed);

/// conv1d(1->4) -> conv1d(4->4) -> dense(64->classes) on length-16 inputs.
net::TinyNet small_conv_net(int classes, std::mt19937_64& rng);

}  // namespace specshape::tools
