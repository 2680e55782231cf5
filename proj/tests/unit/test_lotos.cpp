#include "oracles.hpp"

#include "specshape/lotos.hpp"
#include "specshape/net.hpp"
#include "specshape/spectral.hpp"

#include <doctest.h>

#include <random>

using namespace specshape;
using linop::Operator;

namespace {

spectral::Spectrum oracle_top(const Operator& op, int k) {
    const Eigen::MatrixXd m = linop::materialize(op);
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    oracle::jacobi_eigen(m.transpose() * m, values, vectors);
    spectral::Spectrum s;
    s.values = values.head(k).cwiseMax(0.0).cwiseSqrt();
    s.vectors = vectors.leftCols(k);
    return s;
}

double hand_similarity(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g, const std::vector<double>& w, double mal) {
    const auto fs = oracle_top(Operator::dense(f), static_cast<int>(w.size()));
    const auto gs = oracle_top(Operator::dense(g), static_cast<int>(w.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        s += w[i] * (std::max((f * gs.vectors.col(c)).norm() - mal, 0.0) +
                     std::max((g * fs.vectors.col(c)).norm() - mal, 0.0));
    }
    return s;
}

std::vector<net::TinyNet> toy_ensemble(std::uint64_t seed) {
    std::vector<net::TinyNet> models;
    for (std::uint64_t m = 0; m < 2; ++m) {
        std::mt19937_64 rng(seed + m);
        std::vector<net::Layer> layers;
        layers.push_back(net::conv1d_layer("conv1", 1, 2, 3, 8, linop::Padding::circular, net::Activation::relu, rng));
        layers.push_back(net::dense_layer("fc", 16, 3, net::Activation::identity, rng));
        models.emplace_back(std::move(layers));
    }
    return models;
}

std::vector<net::Example> toy_batch(std::mt19937_64& rng, int n) {
    std::vector<net::Example> batch;
    for (int i = 0; i < n; ++i) batch.push_back({oracle::random_vector(8, rng), net::one_hot(i % 3, 3)});
    return batch;
}

}  // namespace

TEST_CASE("self-pairing with zero slack gives twice the norm") {
    std::mt19937_64 rng(80);
    const auto f = Operator::dense(oracle::random_matrix(6, 5, rng));
    lotos::LotosConfig cfg;
    cfg.weights = {1.0};
    const double sigma = oracle::jacobi_singular_values(linop::materialize(f))(0);
    CHECK(lotos::subspace_similarity(f, f, cfg) == doctest::Approx(2.0 * sigma).epsilon(1e-9));
}

TEST_CASE("mutually blind layers have zero similarity") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = 3.0;
    b(1, 1) = 2.0;
    lotos::LotosConfig cfg;
    CHECK(lotos::subspace_similarity(Operator::dense(a), Operator::dense(b), cfg) == doctest::Approx(0.0));
}

TEST_CASE("similarity matches a hand computation from reference vectors") {
    std::mt19937_64 rng(81);
    for (int t = 0; t < 10; ++t) {
        const Eigen::MatrixXd f = 0.5 * oracle::random_matrix(6, 5, rng);
        const Eigen::MatrixXd g = 0.5 * oracle::random_matrix(4, 5, rng);
        lotos::LotosConfig cfg;
        cfg.k = 2;
        cfg.mal = 0.8;
        cfg.weights = {0.7, 0.3};
        const double want = hand_similarity(f, g, cfg.weights, cfg.mal);
        const auto fo = Operator::dense(f);
        const auto go = Operator::dense(g);
        CHECK(lotos::subspace_similarity(fo, oracle_top(fo, 2), go, oracle_top(go, 2), cfg) ==
              doctest::Approx(want).epsilon(1e-12));
        // tracked vectors carry the PowerQR convergence error
        CHECK(lotos::subspace_similarity(fo, go, cfg) == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("similarity is nonnegative and zero only within the slack") {
    std::mt19937_64 rng(82);
    for (int t = 0; t < 100; ++t) {
        const auto f = Operator::dense(oracle::random_matrix(4, 4, rng));
        const auto g = Operator::dense(oracle::random_matrix(4, 4, rng));
        lotos::LotosConfig cfg;
        cfg.k = 1 + t % 3;
        cfg.mal = 0.05 * t;
        const auto fs = oracle_top(f, cfg.k);
        const auto gs = oracle_top(g, cfg.k);
        const double s = lotos::subspace_similarity(f, fs, g, gs, cfg);
        CHECK(s >= 0.0);
        if (s == 0.0)
            for (int i = 0; i < cfg.k; ++i) {
                CHECK(f.apply_linear(gs.vectors.col(i)).norm() <= cfg.mal + 1e-9);
                CHECK(g.apply_linear(fs.vectors.col(i)).norm() <= cfg.mal + 1e-9);
            }
    }
}

TEST_CASE("configuration and dimension checks") {
    lotos::LotosConfig cfg;
    cfg.k = 2;
    cfg.weights = {0.2, 0.8};
    CHECK_THROWS_AS(lotos::validate(cfg), std::invalid_argument);
    cfg.weights = {};
    cfg.mal = -1;
    CHECK_THROWS_AS(lotos::validate(cfg), std::invalid_argument);
    cfg.mal = 0;
    cfg.lambda = -1;
    CHECK_THROWS_AS(lotos::validate(cfg), std::invalid_argument);
    CHECK(lotos::weights_of(lotos::LotosConfig{4, {}, 0, 1, {}}) == std::vector<double>(4, 0.25));

    lotos::LotosConfig ok;
    CHECK_THROWS_AS(lotos::subspace_similarity(Operator::identity(3), Operator::identity(4), ok),
                    std::invalid_argument);
}

TEST_CASE("without orthogonalization the loss is the mean cross-entropy") {
    std::mt19937_64 rng(83);
    const auto models = toy_ensemble(84);
    lotos::LotosConfig cfg;
    cfg.lambda = 0.0;
    const auto tracked = lotos::track_layers(models, cfg, 50, 1);
    const auto batch = toy_batch(rng, 10);
    double ce = 0.0;
    for (const auto& m : models)
        for (const auto& ex : batch) ce += net::cross_entropy(m, ex.x, ex.target);
    ce /= 20.0;
    const auto loss = lotos::lotos_loss(models, tracked, batch, cfg);
    CHECK(loss.loss == doctest::Approx(ce).epsilon(1e-14));
    CHECK(loss.penalty == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("two models and one layer halve the ordered-pair sum") {
    std::mt19937_64 rng(85);
    const auto models = toy_ensemble(86);
    lotos::LotosConfig cfg;
    cfg.k = 2;
    cfg.mal = 0.1;
    cfg.lambda = 1.7;
    const auto tracked = lotos::track_layers(models, cfg, 50, 2);
    const auto& f = models[0].layer("conv1").op;
    const auto& g = models[1].layer("conv1").op;
    const double s01 = lotos::subspace_similarity(f, tracked[0].at("conv1"), g, tracked[1].at("conv1"), cfg);
    const double s10 = lotos::subspace_similarity(g, tracked[1].at("conv1"), f, tracked[0].at("conv1"), cfg);
    const auto loss = lotos::lotos_loss(models, tracked, toy_batch(rng, 4), cfg);
    CHECK(loss.penalty == doctest::Approx(cfg.lambda * (s01 + s10) / 2.0).epsilon(1e-13));
}

TEST_CASE("ensemble gradients match central differences") {
    std::mt19937_64 rng(87);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto models = toy_ensemble(200 + seed);
        lotos::LotosConfig cfg;
        cfg.k = 2;
        cfg.mal = 0.0;
        cfg.lambda = 0.8;
        cfg.layers = {"conv1", "fc"};
        cfg.weights = {0.6, 0.4};
        auto conv_only = cfg;
        conv_only.layers = {"conv1"};
        auto tracked = lotos::track_layers(models, conv_only, 50, seed);
        const auto fc_tracked = lotos::track_layers(models, lotos::LotosConfig{2, {}, 0, 1, {"fc"}}, 50, seed);
        for (std::size_t m = 0; m < 2; ++m) tracked[m]["fc"] = fc_tracked[m].at("fc");
        const auto batch = toy_batch(rng, 6);
        const auto loss = lotos::lotos_loss(models, tracked, batch, cfg);
        for (std::size_t m = 0; m < 2; ++m) {
            auto objective = [&](const Eigen::VectorXd& theta) {
                auto copy = models;
                copy[m].set_parameters(theta);
                return lotos::lotos_loss(copy, tracked, batch, cfg).loss;
            };
            for (int probe = 0; probe < 4; ++probe) {
                const Eigen::VectorXd d = oracle::random_unit(models[m].parameter_count(), rng);
                const double fd = oracle::central_difference(objective, models[m].parameters(), d);
                CHECK(loss.grads[m].dot(d) == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("the loss does not depend on model order") {
    std::mt19937_64 rng(88);
    auto models = toy_ensemble(89);
    std::mt19937_64 extra(90);
    std::vector<net::Layer> layers;
    layers.push_back(net::conv1d_layer("conv1", 1, 2, 3, 8, linop::Padding::circular, net::Activation::relu, extra));
    layers.push_back(net::dense_layer("fc", 16, 3, net::Activation::identity, extra));
    models.emplace_back(std::move(layers));
    lotos::LotosConfig cfg;
    cfg.k = 2;
    cfg.mal = 0.3;
    const auto tracked = lotos::track_layers(models, cfg, 50, 3);
    const auto batch = toy_batch(rng, 5);
    const auto a = lotos::lotos_loss(models, tracked, batch, cfg);
    const std::vector<net::TinyNet> perm = {models[2], models[0], models[1]};
    const lotos::TrackedVectors perm_tracked = {tracked[2], tracked[0], tracked[1]};
    const auto b = lotos::lotos_loss(perm, perm_tracked, batch, cfg);
    CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-14));
    CHECK((b.grads[0] - a.grads[2]).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((b.grads[1] - a.grads[0]).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("pairs of incompatible layers are skipped with a warning") {
    std::mt19937_64 rng(91);
    std::vector<net::TinyNet> models = {net::make_mlp({8, 6, 3}, 1), net::make_mlp({8, 5, 3}, 2)};
    lotos::LotosConfig cfg;
    cfg.layers = {"fc1"};
    const auto tracked = lotos::track_layers(models, cfg, 20, 4);
    std::vector<net::Example> batch = {{oracle::random_vector(8, rng), net::one_hot(0, 3)}};
    const auto loss = lotos::lotos_loss(models, tracked, batch, cfg);
    CHECK(loss.warnings.size() == 2);
    CHECK(loss.penalty == 0.0);
}

TEST_CASE("a model transfers perfectly to itself") {
    data::GaussianMixtureSpec spec;
    spec.centroids = {Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 0)};
    spec.stddevs = {1.0, 1.0};
    spec.train_per_class = 50;
    spec.test_per_class = 50;
    const auto data = data::gaussian_mixture(spec, 92);
    net::TrainConfig tc;
    tc.steps = 500;
    const auto model = net::sgd_train(net::make_mlp({2, 8, 2}, 93), data, tc).net;
    const auto rate = lotos::transfer_rate(model, model, data.only(data::Partition::test), 2.0, {});
    REQUIRE(rate.has_value());
    CHECK(*rate == 1.0);
}

TEST_CASE("a never-correct target leaves the rate undefined") {
    data::LabeledDataset eval(2);
    eval.add(Eigen::Vector2d(1, 0), 0, data::Partition::test);
    eval.add(Eigen::Vector2d(-1, 0), 0, data::Partition::test);
    auto constant = net::make_mlp({2, 2}, 94);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(constant.parameter_count());
    theta(theta.size() - 1) = 5.0;
    constant.set_parameters(theta);
    REQUIRE(constant.predict(Eigen::Vector2d(1, 0)) == 1);
    const auto source = net::make_mlp({2, 2}, 95);
    CHECK_FALSE(lotos::transfer_rate(source, constant, eval, 1.0, {}).has_value());
}

TEST_CASE("transfer rate equals a direct count") {
    data::GaussianMixtureSpec spec;
    spec.centroids = {Eigen::Vector2d(-1.5, 0), Eigen::Vector2d(1.5, 0), Eigen::Vector2d(0, 2)};
    spec.stddevs = {1.0, 1.0, 1.0};
    spec.train_per_class = 60;
    spec.test_per_class = 60;
    const auto data = data::gaussian_mixture(spec, 96);
    net::TrainConfig tc;
    tc.steps = 800;
    tc.seed = 97;
    const auto f = net::sgd_train(net::make_mlp({2, 12, 3}, 98), data, tc).net;
    tc.seed = 99;
    const auto g = net::sgd_train(net::make_mlp({2, 12, 3}, 100), data, tc).net;
    const auto test = data.only(data::Partition::test);
    const double eps = 0.8;
    int conditioned = 0;
    int fooled = 0;
    for (const auto& s : test) {
        if (f.predict(s.x) != s.label || g.predict(s.x) != s.label) continue;
        const Eigen::VectorXd adv = net::pgd_attack(f, s.x, s.label, eps, {});
        if (f.predict(adv) == s.label) continue;
        ++conditioned;
        fooled += g.predict(adv) != s.label;
    }
    REQUIRE(conditioned > 0);
    const auto rate = lotos::transfer_rate(f, g, test, eps, {});
    REQUIRE(rate.has_value());
    CHECK(*rate == static_cast<double>(fooled) / conditioned);
}
