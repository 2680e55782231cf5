#include "oracles.hpp"

#include "specshape/circulant.hpp"
#include "specshape/linop.hpp"
#include "specshape/spectral.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace specshape;
using linop::Operator;
using linop::Padding;

namespace {

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

Operator diag321() {
    return Operator::dense(Eigen::Vector3d(3, 2, 1).asDiagonal().toDenseMatrix());
}

double max_rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    double err = 0.0;
    for (Eigen::Index i = 0; i < got.size(); ++i)
        err = std::max(err, std::abs(got(i) - want(i)) / std::max(want(0), 1e-300));
    return err;
}

}  // namespace

TEST_CASE("power_qr recovers a diagonal spectrum") {
    spectral::PowerQRConfig cfg;
    cfg.k = 2;
    cfg.iterations = 200;
    const auto s = spectral::power_qr(diag321(), cfg, 1);
    CHECK(s.values(0) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(s.values(1) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("power_qr on the identity converges immediately") {
    for (int k = 1; k <= 4; ++k) {
        spectral::PowerQRConfig cfg;
        cfg.k = k;
        const auto s = spectral::power_qr(Operator::identity(6), cfg, 3);
        CHECK(s.converged);
        CHECK(s.iterations_used == 1);
        for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(s.values(i) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("power_qr matches a Jacobi reference on a random dense operator") {
    std::mt19937_64 rng(20);
    const Eigen::MatrixXd w = oracle::random_matrix(20, 12, rng);
    spectral::PowerQRConfig cfg;
    cfg.k = 5;
    cfg.iterations = 5000;
    cfg.convergence_tol = 1e-14;
    const auto s = spectral::power_qr(Operator::dense(w), cfg, 4);
    CHECK(max_rel_err(s.values, oracle::jacobi_singular_values(w).head(5)) < 1e-6);
}

TEST_CASE("qr_decompose of the identity is trivial") {
    const auto qr = spectral::qr_decompose(Eigen::MatrixXd::Identity(4, 4));
    CHECK((qr.Q - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-15);
    CHECK((qr.R - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-15);
}

TEST_CASE("qr_decompose of orthonormal columns returns them") {
    std::mt19937_64 rng(21);
    const Eigen::MatrixXd x = Eigen::HouseholderQR<Eigen::MatrixXd>(oracle::random_matrix(7, 3, rng))
                                  .householderQ() * Eigen::MatrixXd::Identity(7, 3);
    const auto qr = spectral::qr_decompose(x);
    CHECK((qr.R - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK((qr.Q.col(j).cwiseAbs() - x.col(j).cwiseAbs()).norm() < 1e-12);
}

TEST_CASE("qr_decompose reconstructs with the sign convention") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::MatrixXd x = oracle::random_matrix(6, 3, rng);
        const auto qr = spectral::qr_decompose(x);
        CHECK((x - qr.Q * qr.R).norm() < 1e-12);
        CHECK((qr.Q.transpose() * qr.Q - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
        for (Eigen::Index i = 0; i < 3; ++i) {
            CHECK(qr.R(i, i) >= 0.0);
            for (Eigen::Index j = 0; j < i; ++j) CHECK(qr.R(i, j) == 0.0);
        }
    }
}

TEST_CASE("qr_decompose rejects dependent columns") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 2, 2, 4, 3, 6, 4, 8;
    CHECK_THROWS_AS((void)spectral::qr_decompose(x), std::domain_error);
}

TEST_CASE("svd_oracle on simple operators") {
    const auto s = spectral::svd_oracle(diag321());
    CHECK((s.values - Eigen::Vector3d(3, 2, 1)).cwiseAbs().maxCoeff() < 1e-14);

    const auto scale = spectral::svd_oracle(Operator::conv1d(1, 1, 1, {3.0}, 4, Padding::circular));
    CHECK((scale.values - Eigen::Vector4d::Constant(3.0)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("svd_oracle agrees with the circulant closed form and a Jacobi reference") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 1 + trial % 5;
        const int n = k + 3 + trial;
        circulant::FilterBank fb;
        fb.n = n;
        fb.filters.push_back(gaussian(static_cast<std::size_t>(k), rng));
        const auto op = circulant::to_operator(fb);
        const auto s = spectral::svd_oracle(op);
        Eigen::VectorXd closed = circulant::circulant_spectrum(fb);
        std::sort(closed.data(), closed.data() + closed.size(), std::greater<>());
        CHECK((s.values - closed).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((s.values - oracle::jacobi_singular_values(linop::materialize(op))).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("power_qr matches the oracle for every operator kind") {
    std::mt19937_64 rng(24);
    std::vector<Operator> ops;
    for (int t = 0; t < 4; ++t) {
        ops.push_back(Operator::dense(oracle::random_matrix(9 + t, 7, rng)));
        ops.push_back(Operator::conv1d(1, 2, 3, gaussian(6, rng), 10 + t, static_cast<Padding>(t), 1 + t % 2));
        ops.push_back(Operator::conv2d(1, 1, 3, 3, gaussian(9, rng), 5, 4, static_cast<Padding>(t), 1, 1 + t % 2));
        const Eigen::VectorXd var = oracle::random_vector(8, rng).cwiseAbs();
        ops.push_back(Operator::diagonal(oracle::random_vector(8, rng), Eigen::VectorXd::Zero(8), var, 1e-2));
    }
    const Eigen::Index m = ops[1].out_dim();
    const Eigen::VectorXd var = oracle::random_vector(m, rng).cwiseAbs();
    const auto bn = Operator::diagonal(oracle::random_vector(m, rng), Eigen::VectorXd::Zero(m), var, 1e-2);
    ops.push_back(linop::compose({bn, ops[1]}));
    for (std::size_t i = 0; i < ops.size(); ++i) {
        CAPTURE(i);
        const auto& op = ops[i];
        spectral::PowerQRConfig cfg;
        cfg.k = static_cast<int>(std::min<Eigen::Index>(3, std::min(op.in_dim(), op.out_dim())));
        cfg.iterations = 500;
        cfg.convergence_tol = 1e-15;
        const auto s = spectral::power_qr(op, cfg, i);
        const auto o = spectral::svd_oracle(op);
        CHECK(max_rel_err(s.values, o.values.head(cfg.k)) < 1e-6);
    }
}

TEST_CASE("spectrum invariants: order, orthonormality and ||M v|| = sigma") {
    std::mt19937_64 rng(25);
    for (int t = 0; t < 10; ++t) {
        const auto op = Operator::conv1d(2, 2, 3, gaussian(12, rng), 12, static_cast<Padding>(t % 4));
        spectral::PowerQRConfig cfg;
        cfg.k = 4;
        cfg.iterations = 4000;
        cfg.convergence_tol = 1e-14;
        const auto s = spectral::power_qr(op, cfg, t);
        for (Eigen::Index i = 1; i < s.size(); ++i) CHECK(s.values(i - 1) >= s.values(i));
        CHECK((s.vectors.transpose() * s.vectors - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
        for (Eigen::Index i = 0; i < s.size(); ++i)
            CHECK(op.apply_linear(s.vectors.col(i)).norm() == doctest::Approx(s.values(i)).epsilon(1e-4));
    }
}

TEST_CASE("warm start needs fewer iterations after a small perturbation") {
    std::vector<int> cold_iters;
    std::vector<int> warm_iters;
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const Eigen::MatrixXd w = oracle::random_matrix(30, 20, rng);
        const Eigen::MatrixXd w2 = w + 1e-3 * oracle::random_matrix(30, 20, rng);
        spectral::PowerQRConfig cfg;
        cfg.k = 3;
        cfg.iterations = 20000;
        cfg.convergence_tol = 1e-10;
        const auto before = spectral::power_qr(Operator::dense(w), cfg, seed);
        const auto cold = spectral::power_qr(Operator::dense(w2), cfg, seed + 1000);
        cfg.warm_start = before.vectors;
        const auto warm = spectral::power_qr(Operator::dense(w2), cfg, seed + 1000);
        REQUIRE(cold.converged);
        REQUIRE(warm.converged);
        cold_iters.push_back(cold.iterations_used);
        warm_iters.push_back(warm.iterations_used);
    }
    auto median = [](std::vector<int> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    CHECK(median(warm_iters) < median(cold_iters));
}

TEST_CASE("the shift does not change the answer") {
    std::mt19937_64 rng(26);
    for (int t = 0; t < 10; ++t) {
        const auto op = Operator::dense(oracle::random_matrix(12, 10, rng));
        spectral::PowerQRConfig cfg;
        cfg.k = 3;
        cfg.iterations = 20000;
        cfg.convergence_tol = 1e-14;
        cfg.shift = 0.0;
        const auto a = spectral::power_qr(op, cfg, t);
        cfg.shift = 1.0;
        const auto b = spectral::power_qr(op, cfg, t);
        CHECK(max_rel_err(a.values, b.values) < 1e-6);
    }
}

TEST_CASE("power_qr validates its configuration") {
    spectral::PowerQRConfig cfg;
    cfg.k = 4;
    CHECK_THROWS_AS((void)spectral::power_qr(diag321(), cfg, 0), std::invalid_argument);
    cfg.k = 1;
    cfg.iterations = 0;
    CHECK_THROWS_AS((void)spectral::power_qr(diag321(), cfg, 0), std::invalid_argument);
    cfg.iterations = 1;
    cfg.shift = -1;
    CHECK_THROWS_AS((void)spectral::power_qr(diag321(), cfg, 0), std::invalid_argument);
}

TEST_CASE("spectra round-trip through json") {
    spectral::PowerQRConfig cfg;
    cfg.k = 2;
    const auto s = spectral::power_qr(diag321(), cfg, 7);
    const auto back = spectral::spectrum_from_json(spectral::to_json(s));
    CHECK(back.values == s.values);
    CHECK(back.vectors == s.vectors);
    CHECK(back.iterations_used == s.iterations_used);
    CHECK(back.converged == s.converged);
}
