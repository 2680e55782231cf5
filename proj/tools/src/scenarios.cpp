#include "scenarios.hpp"

#include "specshape/circulant.hpp"
#include "specshape/classunlearn.hpp"
#include "specshape/clipper.hpp"
#include "specshape/lotos.hpp"
#include "specshape/spectral.hpp"
#include "specshape/tools/workloads.hpp"
#include "specshape/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace specshape::tools::detail {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename T>
T get(const json& p, const char* key) {
    return p.at(key).get<T>();
}

Eigen::VectorXd unit_gaussian(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v / v.norm();
}

net::AttackConfig attack_from_json(const json& j, std::uint64_t seed) {
    net::AttackConfig cfg;
    cfg.seed = seed;
    cfg.steps = j.value("steps", cfg.steps);
    cfg.step_frac = j.value("step_frac", cfg.step_frac);
    cfg.restarts = j.value("restarts", cfg.restarts);
    const auto kind = j.value("kind", std::string("pgd"));
    if (kind == "pgd")
        cfg.kind = net::AttackKind::pgd;
    else if (kind == "fgsm_restart")
        cfg.kind = net::AttackKind::fgsm_restart;
    else
        throw std::invalid_argument("attack.kind: unknown attack '" + kind + "'");
    return cfg;
}

std::vector<Eigen::VectorXd> centroids_from_json(const json& j) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& row : j) {
        const auto values = row.get<std::vector<double>>();
        out.emplace_back(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
    }
    return out;
}

data::LabeledDataset class_split_mixture(const json& p, std::uint64_t seed) {
    data::GaussianMixtureSpec spec;
    spec.centroids = centroids_from_json(p.at("centroids"));
    spec.stddevs.assign(spec.centroids.size(), 1.0);
    spec.train_per_class = get<int>(p, "train_per_class");
    spec.test_per_class = get<int>(p, "test_per_class");
    return data::split_forget_class(data::gaussian_mixture(spec, seed), get<int>(p, "forget_class"));
}

double top_value(const linop::Operator& op) { return spectral::svd_oracle(op).top(); }

// ---------------------------------------------------------------- spectrum

void run_spectrum(const json& p, std::uint64_t seed, SeedRun& run) {
    std::mt19937_64 rng(seed);
    const int instances = get<int>(p, "instances");
    const int max_dim = get<int>(p, "max_dim");
    const int k = get<int>(p, "k");
    std::vector<linop::Kind> kinds;
    for (const auto& name : p.at("kinds")) {
        const auto s = name.get<std::string>();
        if (s == "dense")
            kinds.push_back(linop::Kind::dense);
        else if (s == "conv1d")
            kinds.push_back(linop::Kind::conv1d);
        else if (s == "conv2d")
            kinds.push_back(linop::Kind::conv2d);
        else
            throw std::invalid_argument("kinds: unsupported kind '" + s + "'");
    }
    if (kinds.empty()) throw std::invalid_argument("kinds: empty");

    double worst_value = 0.0;
    json per_instance = json::array();
    for (int i = 0; i < instances; ++i) {
        const auto kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
        const auto op = random_operator(kind, max_dim, rng);
        const auto oracle = spectral::svd_oracle(op);
        const int kk = static_cast<int>(std::min<Eigen::Index>(k, oracle.size()));
        spectral::PowerQRConfig cfg;
        cfg.k = kk;
        cfg.iterations = get<int>(p, "iterations");
        cfg.convergence_tol = get<double>(p, "tolerance");
        const auto est = spectral::power_qr(op, cfg, seed * 1000003ULL + static_cast<std::uint64_t>(i));
        double err = 0.0;
        for (int j = 0; j < kk; ++j) {
            const double ref = std::max(oracle.values(j), 1e-12 * oracle.top());
            err = std::max(err, std::abs(est.values(j) - oracle.values(j)) / ref);
        }
        worst_value = std::max(worst_value, err);
        per_instance.push_back({{"kind", linop::to_string(kind)},
                                {"in_dim", op.in_dim()},
                                {"out_dim", op.out_dim()},
                                {"iterations", est.iterations_used},
                                {"relative_error", err}});
    }

    double worst_adjoint = 0.0;
    const int probes = get<int>(p, "probes");
    for (auto kind : kinds) {
        for (int i = 0; i < probes; ++i) {
            const auto op = random_operator(kind, max_dim, rng);
            const auto x = unit_gaussian(op.in_dim(), rng);
            const auto y = unit_gaussian(op.out_dim(), rng);
            worst_adjoint = std::max(worst_adjoint, std::abs(op.apply_linear(x).dot(y) - x.dot(op.adjoint_apply(y))));
        }
    }

    run.metrics["instances"] = instances;
    run.metrics["max_value_rel_err"] = worst_value;
    run.metrics["max_adjoint_err"] = worst_adjoint;
    run.flags["values_match"] = worst_value <= get<double>(p, "value_tol");
    run.flags["adjoint_ok"] = worst_adjoint <= get<double>(p, "adjoint_tol");
    run.details["instances"] = std::move(per_instance);
}

// -------------------------------------------------------------------- clip

linop::Operator clip_instance(const json& p, std::mt19937_64& rng) {
    const auto kind = get<std::string>(p, "kind");
    if (kind == "dense") return random_dense(get<int>(p, "rows"), get<int>(p, "cols"), rng);
    if (kind == "conv2d")
        return random_conv2d_fixed(get<int>(p, "side"), linop::padding_from_string(get<std::string>(p, "padding")),
                                   get<int>(p, "stride"), rng);
    if (kind == "conv1d") {
        std::normal_distribution<double> normal;
        std::vector<double> filter(3);
        for (auto& f : filter) f = normal(rng);
        return linop::Operator::conv1d(1, 1, 3, std::move(filter), get<int>(p, "side"),
                                       linop::padding_from_string(get<std::string>(p, "padding")),
                                       get<int>(p, "stride"));
    }
    throw std::invalid_argument("kind: unsupported kind '" + kind + "'");
}

void run_clip(const json& p, std::uint64_t seed, SeedRun& run) {
    if (!p.at("job").is_null()) {
        const auto report = clipper::run_clip_job(p.at("job"), seed);
        run.metrics["sigma_before"] = report.at("sigma_before").get<double>();
        run.metrics["sigma_after"] = report.at("sigma_after").get<double>();
        run.metrics["iterations"] = report.at("iterations").get<int>();
        run.flags["reached_target"] = report.at("reached_target").get<bool>();
        run.details["operator"] = report.at("operator");
        return;
    }

    std::mt19937_64 rng(seed);
    const double target = get<double>(p, "target");
    const double band = get<double>(p, "band");
    const bool dense = get<std::string>(p, "kind") == "dense";
    double worst_projection = 0.0;
    double worst_idempotence = 0.0;
    double worst_band = 0.0;
    double worst_increase = 0.0;
    int iterations = 0;
    bool reached = true;
    for (int i = 0; i < get<int>(p, "instances"); ++i) {
        const auto op = clip_instance(p, rng);
        json merged = clipper::to_json(clipper::ClipConfig::for_operator(op, target));
        merged.update({{"restart_iters", 1000}, {"powerqr_tol", 1e-14}});
        merged.update(p.at("config"));
        auto cfg = clipper::clip_config_from_json(merged, target);
        cfg.fail_on_cap = false;
        const std::uint64_t clip_seed = seed * 7919ULL + static_cast<std::uint64_t>(i);
        const auto before = spectral::svd_oracle(op).values;
        const auto once = clipper::clip_spectral_norm(op, cfg, clip_seed);
        const auto twice = clipper::clip_spectral_norm(once.op, cfg, clip_seed + 1);
        const auto after = spectral::svd_oracle(once.op).values;
        iterations = std::max(iterations, once.while_iters);
        reached = reached && once.reached_target;

        const double expected_top = std::min(before(0), target);
        worst_band = std::max(worst_band, std::abs(after(0) - expected_top));
        worst_idempotence =
            std::max(worst_idempotence, (twice.op.parameters() - once.op.parameters()).lpNorm<Eigen::Infinity>());
        for (Eigen::Index j = 0; j < after.size(); ++j) {
            worst_increase = std::max(worst_increase, after(j) - before(j));
            if (dense) worst_projection = std::max(worst_projection, std::abs(after(j) - std::min(before(j), target)));
        }
    }
    run.metrics["max_top_err"] = worst_band;
    run.metrics["max_idempotence_change"] = worst_idempotence;
    run.metrics["max_value_increase"] = worst_increase;
    run.metrics["max_while_iters"] = iterations;
    run.flags["reached_target"] = reached;
    run.flags["top_in_band"] = worst_band <= band;
    if (dense) {
        run.flags["idempotent"] = worst_idempotence < get<double>(p, "idempotence_tol");
        run.flags["monotone"] = worst_increase <= 1e-6;
        run.metrics["max_projection_err"] = worst_projection;
        run.flags["projection_law"] = worst_projection <= get<double>(p, "projection_tol");
    }
}

// ---------------------------------------------------------------- fastclip

void run_fastclip(const json& p, std::uint64_t seed, SeedRun& run) {
    std::mt19937_64 rng(seed);
    const int classes = get<int>(p, "classes");
    const auto data = random_clusters(16, classes, get<double>(p, "spread"), get<int>(p, "train_per_class"),
                                      get<int>(p, "test_per_class"), rng, seed);
    const auto model = small_conv_net(classes, rng);

    net::TrainConfig tc;
    tc.lr = get<double>(p, "lr");
    tc.steps = get<int>(p, "steps");
    tc.batch = get<int>(p, "batch");
    tc.seed = seed;
    clipper::FastClipConfig fc;
    fc.clip_every = get<int>(p, "clip_every");
    fc.clip_while_iters = get<int>(p, "clip_while_iters");
    const double target = get<double>(p, "target");
    const std::map<std::string, double> targets{{"conv1", target}, {"conv2", target}, {"fc", target}};
    const auto result = clipper::fastclip_train(model, data, targets, tc, fc, seed);

    const double band = get<double>(p, "band");
    bool in_band = true;
    double lipschitz = 1.0;
    for (const auto& layer : result.net.layers()) {
        const double sigma = top_value(layer.op.linear());
        run.metrics["sigma_" + layer.name] = sigma;
        run.details["tracked_sigma"][layer.name] = result.tracked_sigma.at(layer.name);
        in_band = in_band && std::abs(sigma - target) <= band;
        lipschitz *= sigma;
    }
    const double train_acc = net::accuracy(result.net, data.training());
    run.metrics["lipschitz_bound"] = lipschitz;
    run.metrics["train_accuracy"] = train_acc;
    run.metrics["test_accuracy"] = net::accuracy(result.net, data.only(data::Partition::test));
    run.metrics["final_loss"] = result.loss_trace.empty() ? kNaN : result.loss_trace.back();
    run.flags["sigma_in_band"] = in_band;
    run.flags["accuracy_ok"] = train_acc >= get<double>(p, "min_train_accuracy");
}

// -------------------------------------------------------- circulant-verify

void run_circulant(const json& p, std::uint64_t seed, SeedRun& run) {
    std::mt19937_64 rng(seed);
    FilterBankLimits limits{get<int>(p, "max_n"), get<int>(p, "max_k"), get<int>(p, "max_m")};
    const int every = get<int>(p, "nonnegative_every");
    const double tol = get<double>(p, "tolerance");
    double worst_err = 0.0;
    double worst_violation = 0.0;
    double worst_nonneg_gap = 0.0;
    int worst_singletons = 0;
    bool pairing = true;
    for (int i = 0; i < get<int>(p, "instances"); ++i) {
        const bool nonneg = every > 0 && i % every == every - 1;
        const auto fb = random_filter_bank(limits, nonneg, rng);
        Eigen::VectorXd closed = circulant::circulant_spectrum(fb);
        std::sort(closed.data(), closed.data() + closed.size(), std::greater<>());
        const auto oracle = spectral::svd_oracle(circulant::to_operator(fb)).values;
        worst_err = std::max(worst_err, (closed - oracle).cwiseAbs().maxCoeff());
        try {
            worst_singletons = std::max(worst_singletons, circulant::duplicate_structure(fb));
        } catch (const std::logic_error&) {
            pairing = false;
        }
        const auto bounds = circulant::spectral_norm_bounds(fb);
        const double top = oracle(0);
        const double scale = std::max(1.0, bounds.upper);
        worst_violation =
            std::max({worst_violation, bounds.lower - top - 1e-9 * scale, top - bounds.upper - 1e-9 * scale});
        if (nonneg)
            worst_nonneg_gap = std::max(
                {worst_nonneg_gap, std::abs(bounds.upper - top) / scale, std::abs(bounds.lower - top) / scale});
    }
    run.metrics["max_abs_err"] = worst_err;
    run.metrics["max_singletons"] = worst_singletons;
    run.metrics["max_bound_violation"] = std::max(worst_violation, 0.0);
    run.metrics["max_nonnegative_gap"] = worst_nonneg_gap;
    run.flags["closed_form_ok"] = worst_err <= tol;
    run.flags["duplicates_ok"] = pairing && worst_singletons <= 2;
    run.flags["bounds_ok"] = worst_violation <= 0.0;
    run.flags["nonnegative_tight"] = worst_nonneg_gap <= 1e-9;
}

// ------------------------------------------------------------------- lotos

double top_subspace_cross_norm(const linop::Operator& a, const linop::Operator& b) {
    // ||A V|| where V spans b's top singular subspace; v_1 alone is not unique
    // when the top value is repeated.
    const auto sb = spectral::svd_oracle(b);
    Eigen::Index m = 1;
    while (m < sb.size() && sb.values(m) > sb.values(0) * (1.0 - 1e-6)) ++m;
    Eigen::MatrixXd image(a.out_dim(), m);
    for (Eigen::Index i = 0; i < m; ++i) image.col(i) = a.apply_linear(sb.vectors.col(i));
    return Eigen::JacobiSVD<Eigen::MatrixXd>(image).singularValues()(0);
}

double pair_cross_norm(const net::TinyNet& a, const net::TinyNet& b, const std::string& layer) {
    const auto& fa = a.layer(layer).op.linear();
    const auto& fb = b.layer(layer).op.linear();
    return std::max(top_subspace_cross_norm(fa, fb), top_subspace_cross_norm(fb, fa));
}

json rate_json(const std::optional<double>& r) { return r ? json(*r) : json(nullptr); }

void run_lotos(const json& p, std::uint64_t seed, SeedRun& run) {
    std::mt19937_64 rng(seed);
    const int classes = get<int>(p, "classes");
    const auto data = random_clusters(16, classes, get<double>(p, "spread"), get<int>(p, "train_per_class"),
                                      get<int>(p, "test_per_class"), rng, seed);
    std::vector<net::TinyNet> members;
    for (int m = 0; m < 2; ++m) members.push_back(small_conv_net(classes, rng));

    lotos::EnsembleConfig ec;
    ec.train.lr = get<double>(p, "lr");
    ec.train.steps = get<int>(p, "steps");
    ec.train.batch = get<int>(p, "batch");
    ec.train.seed = seed;
    const double c = get<double>(p, "clip_target");
    ec.clip_targets = {{"conv1", c}, {"conv2", c}, {"fc", c}};
    ec.lotos.k = get<int>(p, "k");
    ec.lotos.mal = get<double>(p, "mal");
    ec.lotos.lambda = get<double>(p, "lambda");
    ec.lotos.layers = {"conv1"};
    const auto orthogonal = lotos::train_ensemble(members, data, ec, seed);
    ec.lotos.lambda = 0.0;
    const auto clipped = lotos::train_ensemble(members, data, ec, seed);

    const auto test = data.only(data::Partition::test);
    auto attack = attack_from_json(p.at("attack"), seed);
    const double eps = get<double>(p, "attack_eps");
    auto mean_rate = [&](const std::vector<net::TinyNet>& ms, json& matrix) {
        const auto r01 = lotos::transfer_rate(ms[0], ms[1], test, eps, attack);
        const auto r10 = lotos::transfer_rate(ms[1], ms[0], test, eps, attack);
        matrix = json::array({json::array({nullptr, rate_json(r01)}), json::array({rate_json(r10), nullptr})});
        double sum = 0.0;
        int n = 0;
        for (const auto& r : {r01, r10})
            if (r) sum += *r, ++n;
        return n ? sum / n : kNaN;
    };
    json matrix_orthogonal;
    json matrix_clipped;
    const double rate_orthogonal = mean_rate(orthogonal.models, matrix_orthogonal);
    const double rate_clipped = mean_rate(clipped.models, matrix_clipped);
    const double cross_orthogonal = pair_cross_norm(orthogonal.models[0], orthogonal.models[1], "conv1");
    const double cross_clipped = pair_cross_norm(clipped.models[0], clipped.models[1], "conv1");

    run.metrics["cross_norm_lotos"] = cross_orthogonal;
    run.metrics["cross_norm_clipped"] = cross_clipped;
    run.metrics["t_rate_lotos"] = rate_orthogonal;
    run.metrics["t_rate_clipped"] = rate_clipped;
    run.metrics["test_acc_lotos"] =
        0.5 * (net::accuracy(orthogonal.models[0], test) + net::accuracy(orthogonal.models[1], test));
    run.metrics["test_acc_clipped"] =
        0.5 * (net::accuracy(clipped.models[0], test) + net::accuracy(clipped.models[1], test));
    run.flags["cross_norm_ok"] = cross_orthogonal <= get<double>(p, "mal") + get<double>(p, "cross_slack");
    run.flags["transfer_lower"] =
        !std::isnan(rate_orthogonal) && !std::isnan(rate_clipped) && rate_orthogonal < rate_clipped;
    run.details["t_rate_matrix"] = {{"lotos", matrix_orthogonal}, {"clipped", matrix_clipped}};
    json trace = json::array();
    for (std::size_t i = 0; i < orthogonal.penalty_trace.size(); i += 100) trace.push_back(orthogonal.penalty_trace[i]);
    run.details["sk_trace_every_100"] = std::move(trace);
}

// -------------------------------------------------------------------- amun

void run_amun(const json& p, std::uint64_t seed, SeedRun& run) {
    const auto data = data::split_forget_random(
        two_gaussians(get<double>(p, "separation"), get<int>(p, "train_per_class"), get<int>(p, "test_per_class"),
                      seed),
        get<double>(p, "forget_fraction"), seed);
    const int hidden = get<int>(p, "hidden");
    net::TrainConfig tc;
    tc.lr = get<double>(p, "train_lr");
    tc.steps = get<int>(p, "train_steps");
    tc.batch = get<int>(p, "batch");
    tc.seed = seed;
    tc.schedule = {get<int>(p, "decay_every"), get<double>(p, "decay_gamma")};
    const auto original = net::sgd_train(net::make_mlp({2, hidden, hidden, 2}, seed), data, tc).net;

    const auto forget = data.only(data::Partition::forget);
    const auto test = data.only(data::Partition::test);
    const auto advset =
        unlearn::build_adversarial_set(original, forget, get<double>(p, "eps_init"), attack_from_json(p.at("attack"), seed));

    net::TrainConfig ft;
    ft.lr = get<double>(p, "finetune_lr");
    ft.steps = get<int>(p, "finetune_steps");
    ft.batch = get<int>(p, "batch");
    ft.seed = seed + 1;
    const auto mode = unlearn::mode_from_string(get<std::string>(p, "mode"));
    const auto unlearned = unlearn::amun_finetune(original, data, advset, mode, ft).net;
    const auto adv_only = unlearn::amun_finetune(original, data, advset, unlearn::Mode::adv_only, ft).net;

    const double auc_before = unlearn::membership_auc(original, forget, test);
    const double auc_after = unlearn::membership_auc(unlearned, forget, test);
    const double acc_before = net::accuracy(original, test);
    const double acc_adv_only = net::accuracy(adv_only, test);
    double mean_eps = 0.0;
    for (const auto& r : advset) mean_eps += r.eps_found / static_cast<double>(advset.size());

    run.metrics["auc_before"] = auc_before;
    run.metrics["auc_after"] = auc_after;
    run.metrics["test_acc_before"] = acc_before;
    run.metrics["test_acc_after"] = net::accuracy(unlearned, test);
    run.metrics["test_acc_adv_only"] = acc_adv_only;
    run.metrics["mean_eps_found"] = mean_eps;
    run.flags["auc_closer"] = std::abs(auc_after - 0.5) < std::abs(auc_before - 0.5);
    run.flags["adv_only_drop_ok"] = acc_before - acc_adv_only < get<double>(p, "max_accuracy_drop");
    run.details["membership_metric"] = "threshold-AUC proxy";
    run.details["mode"] = unlearn::to_string(mode);
}

// --------------------------------------------------------------------- trw

double agreement(const net::TinyNet& a, const net::TinyNet& b, const data::LabeledDataset& set) {
    std::size_t same = 0;
    for (const auto& s : set) same += a.predict(s.x) == b.predict(s.x) ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(set.size());
}

void run_trw(const json& p, std::uint64_t seed, SeedRun& run) {
    const auto data = class_split_mixture(p, seed);
    const int forget_class = get<int>(p, "forget_class");
    const int classes = data.num_classes();
    const int hidden = get<int>(p, "hidden");
    net::TrainConfig tc;
    tc.lr = get<double>(p, "train_lr");
    tc.steps = get<int>(p, "train_steps");
    tc.seed = seed;
    const auto original = net::sgd_train(net::make_mlp({2, hidden, classes}, seed), data, tc).net;
    const auto retrained =
        net::sgd_train(net::make_mlp({2, hidden, classes}, seed + 100), data.only(data::Partition::retain), tc).net;

    const auto scores = classunlearn::centroid_scores(centroids_from_json(p.at("centroids")), forget_class);
    net::TrainConfig ft;
    ft.lr = get<double>(p, "finetune_lr");
    ft.steps = get<int>(p, "finetune_steps");
    ft.seed = seed + 1;
    const auto tilted = classunlearn::trw_finetune(original, data, forget_class, scores, get<double>(p, "beta"), ft).net;
    const auto reweighted = classunlearn::trw_finetune(original, data, forget_class, scores, 0.0, ft).net;

    const auto test = data.only(data::Partition::test);
    const auto forget_test = test.with_label(forget_class);
    const auto retain_test = test.without_label(forget_class);
    const auto mia_tilted = classunlearn::mia_nn({retrained}, tilted, test, forget_class);
    const auto mia_reweighted = classunlearn::mia_nn({retrained}, reweighted, test, forget_class);
    const double agree_tilted = agreement(tilted, retrained, forget_test);
    const double agree_reweighted = agreement(reweighted, retrained, forget_test);

    run.metrics["acc_retain"] = net::accuracy(tilted, retain_test);
    run.metrics["acc_forget"] = net::accuracy(tilted, forget_test);
    run.metrics["gap"] = mia_tilted.gap;
    run.metrics["agreement_trw"] = agree_tilted;
    run.metrics["agreement_reweight"] = agree_reweighted;
    run.metrics["gap_reweight"] = mia_reweighted.gap;
    run.flags["trw_agrees_more"] = agree_tilted > agree_reweighted;
    run.details["scores"] = std::vector<double>(scores.data(), scores.data() + scores.size());
}

// ------------------------------------------------------------------- miann

// Best accuracy over every cut point between and around the sorted scores,
// evaluated by direct counting.
double exhaustive_threshold_accuracy(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double> cuts{sorted.front() - 1.0, sorted.back() + 1.0};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) cuts.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    double best = 0.0;
    for (double t : cuts) {
        for (bool above : {true, false}) {
            std::size_t right = 0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                const int pred = (above ? scores[i] > t : scores[i] < t) ? 1 : 0;
                right += pred == labels[i] ? 1 : 0;
            }
            best = std::max(best, static_cast<double>(right) / static_cast<double>(scores.size()));
        }
    }
    return best;
}

void run_miann(const json& p, std::uint64_t seed, SeedRun& run) {
    const auto data = class_split_mixture(p, seed);
    const int forget_class = get<int>(p, "forget_class");
    const int classes = data.num_classes();
    const int hidden = get<int>(p, "hidden");
    const int count = get<int>(p, "retrained_models");
    const auto retain = data.only(data::Partition::retain);
    std::vector<net::TinyNet> models;
    for (int i = 0; i <= count; ++i) {
        const std::uint64_t model_seed = seed * 10 + static_cast<std::uint64_t>(i);
        net::TrainConfig tc;
        tc.lr = get<double>(p, "train_lr");
        tc.steps = get<int>(p, "train_steps");
        tc.seed = model_seed;
        models.push_back(net::sgd_train(net::make_mlp({2, hidden, classes}, model_seed), retain, tc).net);
    }
    const auto held_out = models.back();
    models.pop_back();

    const auto test = data.only(data::Partition::test);
    const auto report = classunlearn::mia_nn(models, held_out, test, forget_class);
    const auto nearest =
        std::find(report.classes.begin(), report.classes.end(), report.nearest_class) - report.classes.begin();
    double mean = 0.0;
    for (const auto& acc : report.per_model) mean += acc[static_cast<std::size_t>(nearest)] / count;
    double var = 0.0;
    for (const auto& acc : report.per_model) var += std::pow(acc[static_cast<std::size_t>(nearest)] - mean, 2);
    const double sd = count > 1 ? std::sqrt(var / (count - 1)) : 0.0;

    bool exact = true;
    for (const auto& model : models) {
        for (int r : report.classes) {
            std::vector<double> scores;
            std::vector<int> labels;
            for (const auto& s : test) {
                if (s.label == forget_class) continue;
                scores.push_back(model.logits(s.x)(r));
                labels.push_back(s.label == r ? 1 : 0);
            }
            exact = exact && classunlearn::fit_threshold(scores, labels).accuracy ==
                                 exhaustive_threshold_accuracy(scores, labels);
        }
    }

    run.metrics["nearest_class"] = report.nearest_class;
    run.metrics["mean_acc_retrain"] = report.mean_acc_retrain;
    run.metrics["acc_unlearned"] = report.acc_unlearned;
    run.metrics["gap"] = report.gap;
    run.metrics["sd_nearest"] = sd;
    run.flags["gap_within_2sd"] = report.gap <= 2.0 * sd;
    run.flags["threshold_exact"] = exact;
    run.details["per_class_mean_accuracy"] = report.mean_accuracy;
    run.details["classes"] = report.classes;
}

std::vector<ScenarioDef> build_defs() {
    std::vector<ScenarioDef> defs;
    defs.push_back({"spectrum",
                    {{"instances", 10},
                     {"kinds", {"dense", "conv1d", "conv2d"}},
                     {"max_dim", 400},
                     {"k", 5},
                     {"iterations", 100000},
                     {"tolerance", 1e-13},
                     {"probes", 10},
                     {"value_tol", 1e-6},
                     {"adjoint_tol", 1e-10}},
                    {"instances", "max_value_rel_err", "max_adjoint_err"},
                    {"values_match", "adjoint_ok"},
                    {{"instances", 1}, {"max_dim", 1}, {"k", 1}, {"iterations", 1}, {"probes", 0}},
                    run_spectrum});
    defs.push_back({"clip",
                    {{"job", nullptr},
                     {"kind", "dense"},
                     {"instances", 5},
                     {"rows", 8},
                     {"cols", 6},
                     {"side", 8},
                     {"padding", "circular"},
                     {"stride", 1},
                     {"target", 1.0},
                     {"config", json::object()},
                     {"band", 1e-3},
                     {"projection_tol", 1e-6},
                     {"idempotence_tol", 1e-8}},
                    {"max_top_err", "max_projection_err", "max_idempotence_change", "max_value_increase",
                     "max_while_iters", "sigma_before", "sigma_after", "iterations"},
                    {"reached_target", "top_in_band", "projection_law", "idempotent", "monotone"},
                    {{"instances", 1}, {"rows", 1}, {"cols", 1}, {"side", 1}, {"stride", 1}, {"target", 1e-12}},
                    run_clip});
    defs.push_back({"fastclip",
                    {{"classes", 4},
                     {"spread", 3.0},
                     {"train_per_class", 100},
                     {"test_per_class", 50},
                     {"steps", 2000},
                     {"lr", 0.05},
                     {"batch", 32},
                     {"target", 1.0},
                     {"clip_every", 100},
                     {"clip_while_iters", 100},
                     {"band", 0.05},
                     {"min_train_accuracy", 0.9}},
                    {"sigma_conv1", "sigma_conv2", "sigma_fc", "lipschitz_bound", "train_accuracy", "test_accuracy",
                     "final_loss"},
                    {"sigma_in_band", "accuracy_ok"},
                    {{"classes", 2},
                     {"train_per_class", 1},
                     {"test_per_class", 1},
                     {"steps", 1},
                     {"batch", 1},
                     {"clip_every", 1},
                     {"clip_while_iters", 1},
                     {"target", 1e-12}},
                    run_fastclip});
    defs.push_back({"circulant-verify",
                    {{"instances", 50},
                     {"max_n", 64},
                     {"max_k", 7},
                     {"max_m", 4},
                     {"nonnegative_every", 5},
                     {"tolerance", 1e-8}},
                    {"max_abs_err", "max_singletons", "max_bound_violation", "max_nonnegative_gap"},
                    {"closed_form_ok", "duplicates_ok", "bounds_ok", "nonnegative_tight"},
                    {{"instances", 1}, {"max_n", 1}, {"max_k", 1}, {"max_m", 1}, {"nonnegative_every", 0}},
                    run_circulant});
    defs.push_back({"lotos",
                    {{"classes", 4},
                     {"spread", 3.0},
                     {"train_per_class", 100},
                     {"test_per_class", 50},
                     {"steps", 2000},
                     {"lr", 0.05},
                     {"batch", 32},
                     {"k", 2},
                     {"mal", 0.2},
                     {"lambda", 1.0},
                     {"clip_target", 1.0},
                     {"attack_eps", 10.0},
                     {"attack", {{"kind", "pgd"}, {"steps", 50}, {"step_frac", 0.1}}},
                     {"cross_slack", 0.05}},
                    {"cross_norm_lotos", "cross_norm_clipped", "t_rate_lotos", "t_rate_clipped", "test_acc_lotos",
                     "test_acc_clipped"},
                    {"cross_norm_ok", "transfer_lower"},
                    {{"classes", 2},
                     {"train_per_class", 1},
                     {"test_per_class", 1},
                     {"steps", 1},
                     {"batch", 1},
                     {"k", 1},
                     {"mal", 0.0},
                     {"lambda", 0.0},
                     {"clip_target", 1e-12},
                     {"attack_eps", 0.0}},
                    run_lotos});
    defs.push_back({"amun",
                    {{"separation", 1.0},
                     {"train_per_class", 30},
                     {"test_per_class", 500},
                     {"forget_fraction", 0.1},
                     {"hidden", 128},
                     {"train_steps", 10000},
                     {"train_lr", 0.1},
                     {"decay_every", 3333},
                     {"decay_gamma", 0.3},
                     {"batch", 32},
                     {"mode", "R+F+A"},
                     {"finetune_lr", 0.02},
                     {"finetune_steps", 200},
                     {"eps_init", 0.05},
                     {"attack", {{"kind", "pgd"}, {"steps", 50}, {"step_frac", 0.1}}},
                     {"max_accuracy_drop", 0.1}},
                    {"auc_before", "auc_after", "test_acc_before", "test_acc_after", "test_acc_adv_only",
                     "mean_eps_found"},
                    {"auc_closer", "adv_only_drop_ok"},
                    {{"train_per_class", 1},
                     {"test_per_class", 1},
                     {"forget_fraction", 1e-12},
                     {"hidden", 1},
                     {"train_steps", 0},
                     {"decay_every", 0},
                     {"batch", 1},
                     {"finetune_steps", 0},
                     {"eps_init", 1e-12}},
                    run_amun});
    defs.push_back({"trw",
                    {{"centroids", {{0.0, 0.0}, {3.5, 0.0}, {3.5, 4.5}}},
                     {"forget_class", 1},
                     {"train_per_class", 100},
                     {"test_per_class", 500},
                     {"hidden", 32},
                     {"train_steps", 3000},
                     {"train_lr", 0.1},
                     {"beta", 10.0},
                     {"finetune_lr", 0.05},
                     {"finetune_steps", 500}},
                    {"acc_retain", "acc_forget", "gap", "agreement_trw", "agreement_reweight", "gap_reweight"},
                    {"trw_agrees_more"},
                    {{"forget_class", 0},
                     {"train_per_class", 1},
                     {"test_per_class", 1},
                     {"hidden", 1},
                     {"train_steps", 0},
                     {"finetune_steps", 0}},
                    run_trw});
    defs.push_back({"miann",
                    {{"centroids", {{0.0, 0.0}, {3.5, 0.0}, {3.5, 4.5}, {-1.0, 5.0}}},
                     {"forget_class", 1},
                     {"train_per_class", 100},
                     {"test_per_class", 500},
                     {"hidden", 32},
                     {"train_steps", 2000},
                     {"train_lr", 0.1},
                     {"retrained_models", 3}},
                    {"nearest_class", "mean_acc_retrain", "acc_unlearned", "gap", "sd_nearest"},
                    {"gap_within_2sd", "threshold_exact"},
                    {{"forget_class", 0},
                     {"train_per_class", 1},
                     {"test_per_class", 1},
                     {"hidden", 1},
                     {"train_steps", 0},
                     {"retrained_models", 1}},
                    run_miann});
    return defs;
}

}  // namespace

const std::vector<ScenarioDef>& scenario_defs() {
    static const std::vector<ScenarioDef> defs = build_defs();
    return defs;
}

const ScenarioDef& find_scenario(const std::string& name) {
    for (const auto& def : scenario_defs())
        if (def.name == name) return def;
    throw ConfigError("scenario", "unknown scenario '" + name + "'");
}

}  // namespace specshape::tools::detail
