#include "oracles.hpp"

#include "specshape/circulant.hpp"
#include "specshape/spectral.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace specshape;
using circulant::FilterBank;

namespace {

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

FilterBank random_bank(int n, int k, int m, std::mt19937_64& rng, bool nonnegative = false) {
    FilterBank fb;
    fb.n = n;
    for (int l = 0; l < m; ++l) {
        auto f = gaussian(static_cast<std::size_t>(k), rng);
        if (nonnegative)
            for (auto& x : f) x = std::abs(x);
        fb.filters.push_back(std::move(f));
    }
    return fb;
}

Eigen::VectorXd sorted_desc(Eigen::VectorXd v) {
    std::sort(v.data(), v.data() + v.size(), std::greater<>());
    return v;
}

}  // namespace

TEST_CASE("a unit filter has a flat spectrum") {
    const FilterBank fb{{{1.0}}, 4};
    CHECK((circulant::circulant_spectrum(fb) - Eigen::Vector4d::Ones()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("a nonnegative filter peaks at its sum") {
    const FilterBank fb{{{1.0, 2.0, 1.0}}, 8};
    CHECK(circulant::circulant_spectrum(fb).maxCoeff() == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("autocorrelations of a short filter") {
    const auto c = circulant::autocorrelation({1.0, 2.0, 1.0});
    REQUIRE(c.size() == 3);
    CHECK(c[0] == 6.0);
    CHECK(c[1] == 4.0);
    CHECK(c[2] == 1.0);
}

TEST_CASE("two-channel closed form matches the oracle SVD and a Fourier sum") {
    std::mt19937_64 rng(30);
    for (int t = 0; t < 10; ++t) {
        const auto fb = random_bank(16, 3, 2, rng);
        const Eigen::VectorXd closed = sorted_desc(circulant::circulant_spectrum(fb));
        CHECK((closed - spectral::svd_oracle(circulant::to_operator(fb)).values).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((closed - oracle::dft_filter_bank_values(fb.filters, fb.n)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("closed form equals brute force across sizes") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> kdist(1, 7), mdist(1, 4);
    for (int t = 0; t < 60; ++t) {
        const int k = kdist(rng);
        const int n = std::uniform_int_distribution<int>(k, 64)(rng);
        const auto fb = random_bank(n, k, mdist(rng), rng, t % 5 == 0);
        const Eigen::VectorXd closed = sorted_desc(circulant::circulant_spectrum(fb));
        const Eigen::VectorXd brute = oracle::jacobi_singular_values(linop::materialize(circulant::to_operator(fb)));
        CHECK((closed - brute).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("to_operator stacks one circulant per output channel") {
    const FilterBank fb{{{1.0, 2.0, 3.0}, {-1.0, 0.5, 0.0}}, 5};
    const Eigen::MatrixXd m = linop::materialize(circulant::to_operator(fb));
    REQUIRE(m.rows() == 10);
    CHECK(m.topRows(5) == oracle::circulant({2.0, 3.0, 0.0, 0.0, 1.0}));
    CHECK(m.bottomRows(5) == oracle::circulant({0.5, 0.0, 0.0, 0.0, -1.0}));
}

TEST_CASE("bounds coincide with the norm on nonnegative filters") {
    std::mt19937_64 rng(32);
    for (int t = 0; t < 50; ++t) {
        const auto fb = random_bank(20, 1 + t % 7, 1 + t % 4, rng, true);
        const auto b = circulant::spectral_norm_bounds(fb);
        const double top = circulant::circulant_spectrum(fb).maxCoeff();
        CHECK(b.lower == doctest::Approx(b.upper).epsilon(1e-12));
        CHECK(top == doctest::Approx(b.upper).epsilon(1e-12));
    }
}

TEST_CASE("bounds separate when a channel mixes signs") {
    std::mt19937_64 rng(33);
    for (int t = 0; t < 50; ++t) {
        auto fb = random_bank(16, 2 + t % 6, 1 + t % 3, rng, true);
        fb.filters[0][1] = -fb.filters[0][1] - 0.1;
        const auto b = circulant::spectral_norm_bounds(fb);
        CHECK(b.lower < b.upper - 1e-12);
    }
}

TEST_CASE("a difference filter on an even length reaches the upper bound") {
    const FilterBank fb{{{1.0, -1.0}}, 8};
    const auto b = circulant::spectral_norm_bounds(fb);
    const double top = circulant::circulant_spectrum(fb).maxCoeff();
    CHECK(b.lower == doctest::Approx(0.0));
    CHECK(b.upper == doctest::Approx(2.0));
    CHECK(top == doctest::Approx(oracle::dft_filter_bank_values(fb.filters, 8)(0)).epsilon(1e-14));
    CHECK(top == doctest::Approx(2.0).epsilon(1e-14));

    const FilterBank odd{{{1.0, -1.0}}, 7};
    const double odd_top = circulant::circulant_spectrum(odd).maxCoeff();
    CHECK(odd_top > 0.0);
    CHECK(odd_top < 2.0 - 1e-6);
}

TEST_CASE("the norm sits between the bounds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const auto fb = random_bank(24, 5, 3, rng);
        const auto b = circulant::spectral_norm_bounds(fb);
        const double top = circulant::circulant_spectrum(fb).maxCoeff();
        CHECK(b.lower <= top + 1e-12);
        CHECK(top <= b.upper + 1e-12);
    }
}

TEST_CASE("at most two values lack a duplicate") {
    std::mt19937_64 rng(34);
    for (int t = 0; t < 30; ++t) {
        CHECK(circulant::duplicate_structure(random_bank(8, 3, 1 + t % 3, rng)) <= 2);
        CHECK(circulant::duplicate_structure(random_bank(7, 3, 1 + t % 3, rng)) <= 2);
    }
    CHECK(circulant::duplicate_structure(FilterBank{{{2.5}}, 6}) == 0);
}

TEST_CASE("invalid filter banks are rejected") {
    CHECK_THROWS_AS(circulant::validate(FilterBank{{}, 4}), std::invalid_argument);
    CHECK_THROWS_AS(circulant::validate(FilterBank{{{1, 2, 3}}, 2}), std::invalid_argument);
    CHECK_THROWS_AS(circulant::validate(FilterBank{{{1, 2}, {1}}, 4}), std::invalid_argument);
}

TEST_CASE("ortho bound with a zero filter holds everywhere") {
    std::mt19937_64 rng(35);
    const auto a = circulant::to_operator(FilterBank{{{0.0, 0.0, 0.0}}, 16});
    const auto b = circulant::to_operator(random_bank(16, 3, 1, rng));
    const auto r = circulant::ortho_bound_check(a, b, 0.1);
    CHECK(r.all_hold);
    for (double v : r.norms) CHECK(v == 0.0);
}

TEST_CASE("ortho bound rejects pairing an operator with itself") {
    std::mt19937_64 rng(36);
    const auto a = circulant::to_operator(random_bank(16, 3, 1, rng));
    CHECK_THROWS_WITH_AS(circulant::ortho_bound_check(a, a, 0.1), doctest::Contains("||A v'_1||"),
                         std::invalid_argument);
}

TEST_CASE("one projection step satisfies the ortho bound") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const auto b = circulant::to_operator(random_bank(32, 3, 1, rng));
        const auto a0 = circulant::to_operator(random_bank(32, 3, 1, rng));
        const Eigen::VectorXd v1 = spectral::svd_oracle(b).vectors.col(0);
        const auto a = circulant::project_out_response(a0, v1);
        CHECK(a.apply_linear(v1).norm() < 1e-10);
        const auto r = circulant::ortho_bound_check(a, b, 1e-8);
        CHECK(r.all_hold);
        CHECK(r.norms.size() == 32);
    }
}
