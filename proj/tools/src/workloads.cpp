#include "specshape/tools/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace specshape::tools {

namespace {

int uniform_int(int lo, int hi, std::mt19937_64& rng) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<double> gaussian_values(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

linop::Padding random_padding(std::mt19937_64& rng) {
    static constexpr linop::Padding all[] = {linop::Padding::circular, linop::Padding::zeros,
                                             linop::Padding::reflect, linop::Padding::replicate};
    return all[uniform_int(0, 3, rng)];
}

}  // namespace

linop::Operator random_dense(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
    return linop::Operator::dense(std::move(w));
}

linop::Operator random_conv1d(int max_dim, std::mt19937_64& rng) {
    const int cin = uniform_int(1, 3, rng);
    const int cout = uniform_int(1, 3, rng);
    const int kernel = uniform_int(1, 5, rng);
    const int stride = uniform_int(1, 2, rng);
    const int max_len = std::max(kernel, max_dim / std::max(cin, cout));
    const int length = uniform_int(kernel, max_len, rng);
    auto filter = gaussian_values(static_cast<std::size_t>(cin * cout * kernel), rng);
    return linop::Operator::conv1d(cin, cout, kernel, std::move(filter), length, random_padding(rng), stride);
}

linop::Operator random_conv2d(int max_dim, std::mt19937_64& rng) {
    const int cin = uniform_int(1, 2, rng);
    const int cout = uniform_int(1, 3, rng);
    const int kh = uniform_int(1, 3, rng);
    const int kw = uniform_int(1, 3, rng);
    const int side_cap = std::max(3, static_cast<int>(std::sqrt(max_dim / std::max(cin, cout))));
    const int h = uniform_int(3, side_cap, rng);
    const int w = uniform_int(3, side_cap, rng);
    const int sh = uniform_int(1, 2, rng);
    const int sw = uniform_int(1, 2, rng);
    auto filter = gaussian_values(static_cast<std::size_t>(cin * cout * kh * kw), rng);
    return linop::Operator::conv2d(cin, cout, kh, kw, std::move(filter), h, w, random_padding(rng), sh, sw);
}

linop::Operator random_operator(linop::Kind kind, int max_dim, std::mt19937_64& rng) {
    switch (kind) {
        case linop::Kind::dense:
            return random_dense(uniform_int(1, max_dim, rng), uniform_int(1, max_dim, rng), rng);
        case linop::Kind::conv1d:
            return random_conv1d(max_dim, rng);
        case linop::Kind::conv2d:
            return random_conv2d(max_dim, rng);
        default:
            throw std::invalid_argument("random_operator: unsupported kind " + linop::to_string(kind));
    }
}

linop::Operator random_conv2d_fixed(int side, linop::Padding padding, int stride, std::mt19937_64& rng) {
    auto filter = gaussian_values(9, rng);
    return linop::Operator::conv2d(1, 1, 3, 3, std::move(filter), side, side, padding, stride, stride);
}

circulant::FilterBank random_filter_bank(const FilterBankLimits& limits, bool nonnegative, std::mt19937_64& rng) {
    circulant::FilterBank fb;
    const int k = uniform_int(1, limits.max_k, rng);
    fb.n = uniform_int(k, limits.max_n, rng);
    const int m = uniform_int(1, limits.max_m, rng);
    for (int l = 0; l < m; ++l) {
        auto f = gaussian_values(static_cast<std::size_t>(k), rng);
        if (nonnegative)
            for (auto& x : f) x = std::abs(x);
        fb.filters.push_back(std::move(f));
    }
    return fb;
}

data::LabeledDataset random_clusters(int dim, int classes, double spread, int train_per_class, int test_per_class,
                                     std::mt19937_64& rng, std::uint64_t sample_seed) {
    std::normal_distribution<double> normal;
    data::GaussianMixtureSpec spec;
    for (int c = 0; c < classes; ++c) {
        Eigen::VectorXd m(dim);
        for (int i = 0; i < dim; ++i) m(i) = spread * normal(rng);
        spec.centroids.push_back(std::move(m));
        spec.stddevs.push_back(1.0);
    }
    spec.train_per_class = train_per_class;
    spec.test_per_class = test_per_class;
    return data::gaussian_mixture(spec, sample_seed);
}

data::LabeledDataset two_gaussians(double separation, int train_per_class, int test_per_class, std::uint64_t seed) {
    data::GaussianMixtureSpec spec;
    spec.centroids = {Eigen::Vector2d(-separation / 2, 0.0), Eigen::Vector2d(separation / 2, 0.0)};
    spec.stddevs = {1.0, 1.0};
    spec.train_per_class = train_per_class;
    spec.test_per_class = test_per_class;
    return data::gaussian_mixture(spec, seed);
}

net::TinyNet small_conv_net(int classes, std::mt19937_64& rng) {
    std::vector<net::Layer> layers;
    layers.push_back(net::conv1d_layer("conv1", 1, 4, 3, 16, linop::Padding::circular, net::Activation::relu, rng));
    layers.push_back(net::conv1d_layer("conv2", 4, 4, 3, 16, linop::Padding::circular, net::Activation::relu, rng));
    layers.push_back(net::dense_layer("fc", 64, classes, net::Activation::identity, rng));
    return net::TinyNet(std::move(layers));
}

}  // namespace specshape::tools
