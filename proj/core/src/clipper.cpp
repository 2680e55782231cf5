#include "specshape/clipper.hpp"

#include <Eigen/QR>

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace specshape::clipper {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

spectral::Spectrum top_pair(const linop::Operator& op, int iterations, double tol, std::uint64_t seed) {
    spectral::PowerQRConfig cfg;
    cfg.k = 1;
    cfg.iterations = iterations;
    cfg.convergence_tol = tol;
    return spectral::power_qr(op, cfg, seed);
}

linop::Kind linear_kind(const linop::Operator& op) {
    return op.kind() == linop::Kind::affine ? op.linear().kind() : op.kind();
}

}  // namespace

ClipConfig ClipConfig::for_operator(const linop::Operator& op, double target) {
    ClipConfig cfg;
    cfg.target = target;
    if (linear_kind(op) != linop::Kind::dense) {
        cfg.learning_rate = 0.9;
        cfg.inner_iters = 10;
    }
    return cfg;
}

void validate(const ClipConfig& cfg) {
    if (!(cfg.target > 0.0)) throw std::invalid_argument("clip config: target must be positive");
    if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0))
        throw std::invalid_argument("clip config: learning_rate must lie in (0, 1]");
    if (cfg.inner_iters < 1 || cfg.restart_iters < 1 || cfg.max_while_iters < 1)
        throw std::invalid_argument("clip config: iteration counts must be at least 1");
}

ClipResult clip_spectral_norm(const linop::Operator& op, const ClipConfig& cfg, std::uint64_t seed,
                              const std::optional<spectral::Spectrum>& tracked) {
    validate(cfg);
    if (op.parameter_count() == 0) throw std::invalid_argument("clip: operator has no trainable parameters");

    ClipResult result{op, {}, 0.0, 0, true};
    result.top = tracked && tracked->size() > 0 ? *tracked
                                                 : top_pair(op, cfg.restart_iters, cfg.powerqr_tol, mix_seed(seed, 0));
    result.sigma_before = result.top.top();

    while (result.top.top() > cfg.target + cfg.slack && result.while_iters < cfg.max_while_iters) {
        ++result.while_iters;
        const double sigma = result.top.top();
        const Eigen::VectorXd v = result.top.top_vector();
        const Eigen::VectorXd goal = (cfg.target / sigma) * result.op.apply_linear(v);

        linop::Operator current = result.op;
        Eigen::VectorXd params = current.parameters();
        for (int i = 0; i < cfg.inner_iters; ++i) {
            const Eigen::VectorXd residual = current.apply_linear(v) - goal;
            const Eigen::VectorXd grad = current.parameter_gradient(v, residual);
            const Eigen::VectorXd change = current.parameter_directional(v, grad);
            const double denom = change.squaredNorm();
            if (denom == 0.0) break;
            const double step = cfg.learning_rate * residual.dot(change) / denom;
            params -= step * grad;
            current = current.with_parameters(params);
        }
        result.op = current;
        result.top = top_pair(result.op, cfg.restart_iters, cfg.powerqr_tol,
                              mix_seed(seed, static_cast<std::uint64_t>(result.while_iters)));
    }

    result.reached_target = result.top.top() <= cfg.target + cfg.slack;
    if (!result.reached_target && cfg.fail_on_cap) {
        std::ostringstream os;
        os << "clip: max_while_iters = " << cfg.max_while_iters << " exhausted with sigma_1 = " << result.top.top()
           << " > target " << cfg.target;
        throw std::runtime_error(os.str());
    }
    return result;
}

linop::Operator clip_diagonal_norm(const linop::Operator& op, double c) {
    if (op.kind() != linop::Kind::diagonal) throw std::invalid_argument("clip_diagonal_norm: need a diagonal operator");
    if (!(c > 0.0)) throw std::invalid_argument("clip_diagonal_norm: target must be positive");
    const double norm = op.diagonal_gains().cwiseAbs().maxCoeff();
    if (norm <= c) return op;
    return linop::Operator::diagonal(op.gamma() * (c / norm), op.mean(), op.variance(), op.bn_eps());
}

CompositionClipResult clip_composition(const std::vector<linop::Operator>& children, const ClipConfig& cfg,
                                       std::uint64_t seed) {
    auto clipped = clip_spectral_norm(linop::compose(children), cfg, seed);
    return {clipped.op.children(), std::move(clipped.top), clipped.while_iters, clipped.reached_target};
}

GraftResult graft_spectrum(const linop::Operator& op, const Eigen::VectorXd& new_values) {
    const linop::Operator& lin = op.kind() == linop::Kind::affine ? op.linear() : op;
    const auto kind = lin.kind();
    if (kind == linop::Kind::composition)
        throw std::invalid_argument("graft_spectrum: compositions are not linear in their parameters");

    const auto spectrum = spectral::svd_oracle(lin);
    if (new_values.size() != spectrum.size()) {
        std::ostringstream os;
        os << "graft_spectrum: expected " << spectrum.size() << " values, got " << new_values.size();
        throw std::invalid_argument(os.str());
    }
    if ((new_values.array() < 0.0).any() || !new_values.allFinite())
        throw std::invalid_argument("graft_spectrum: values must be finite and non-negative");

    const double zero_tol = 1e-12 * std::max(spectrum.top(), 1.0);
    Eigen::VectorXd ratio(spectrum.size());
    for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
        const double s = spectrum.values(i);
        if (s <= zero_tol) {
            if (std::abs(new_values(i) - s) > zero_tol) {
                std::ostringstream os;
                os << "graft_spectrum: singular value " << i << " is zero but the target is " << new_values(i);
                throw std::domain_error(os.str());
            }
            ratio(i) = 1.0;
        } else {
            ratio(i) = new_values(i) / s;
        }
    }

    const Eigen::MatrixXd M = linop::materialize(lin);
    const Eigen::MatrixXd& V = spectrum.vectors;
    // directions outside span(V) are mapped to zero by M and stay that way
    const Eigen::MatrixXd target = M + M * V * (ratio.array() - 1.0).matrix().asDiagonal() * V.transpose();

    linop::Operator grafted = lin;
    if (kind == linop::Kind::dense) {
        grafted = linop::Operator::dense(target);
    } else {
        // the map is linear in the parameters: fit on all standard-basis probes
        const auto p = lin.parameter_count();
        const auto rows = M.size();
        Eigen::MatrixXd design(rows, p);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
        for (Eigen::Index t = 0; t < p; ++t) {
            e(t) = 1.0;
            design.col(t) = Eigen::Map<const Eigen::VectorXd>(materialize(lin.with_parameters(e)).data(), rows);
            e(t) = 0.0;
        }
        const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(target.data(), rows);
        const Eigen::VectorXd params = design.completeOrthogonalDecomposition().solve(rhs);
        grafted = lin.with_parameters(params);
    }

    const double residual = (linop::materialize(grafted) - target).norm();
    if (op.kind() == linop::Kind::affine) grafted = linop::Operator::affine(grafted, op.bias());
    return {std::move(grafted), residual};
}

void validate(const FastClipConfig& cfg) {
    if (cfg.clip_every < 1) throw std::invalid_argument("fastclip config: clip_every must be at least 1");
    if (cfg.per_step_powerqr_iters < 1 || cfg.clip_inner < 1 || cfg.clip_restart < 1 || cfg.clip_while_iters < 1 ||
        cfg.warmup_powerqr_iters < 1)
        throw std::invalid_argument("fastclip config: iteration counts must be at least 1");
    if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0))
        throw std::invalid_argument("fastclip config: learning_rate must lie in (0, 1]");
}

FastClipResult fastclip_train(net::TinyNet model, const data::LabeledDataset& data,
                              const std::map<std::string, double>& layer_targets,
                              const net::TrainConfig& train_cfg, const FastClipConfig& fc_cfg, std::uint64_t seed) {
    validate(fc_cfg);
    struct Tracked {
        std::size_t index;
        double target;
        spectral::Spectrum top;
    };
    std::vector<Tracked> tracked;
    for (const auto& [name, target] : layer_targets) {
        const auto index = model.layer_index(name);
        if (!(target > 0.0)) throw std::invalid_argument("fastclip: target for layer '" + name + "' must be positive");
        const auto& op = model.layers()[index].op;
        tracked.push_back({index, target,
                           top_pair(op, fc_cfg.warmup_powerqr_iters, 0.0, mix_seed(seed, tracked.size()))});
    }

    const auto train = data.training();
    if (train.empty()) throw std::invalid_argument("fastclip: empty train partition");

    std::uint64_t clip_calls = 0;
    auto hook = [&](int step, net::TinyNet& current) {
        for (auto& t : tracked) {
            const auto& op = current.layers()[t.index].op;
            spectral::PowerQRConfig cfg;
            cfg.k = 1;
            cfg.iterations = fc_cfg.per_step_powerqr_iters;
            cfg.convergence_tol = 0.0;
            cfg.warm_start = t.top.vectors;
            t.top = spectral::power_qr(op, cfg, 0);
            if (step % fc_cfg.clip_every != 0) continue;

            ClipConfig clip;
            clip.target = t.target;
            clip.inner_iters = fc_cfg.clip_inner;
            clip.learning_rate = fc_cfg.learning_rate;
            clip.restart_iters = fc_cfg.clip_restart;
            clip.max_while_iters = fc_cfg.clip_while_iters;
            clip.fail_on_cap = false;
            auto clipped = clip_spectral_norm(op, clip, mix_seed(seed, 1000 + clip_calls++), t.top);
            current.set_operator(t.index, clipped.op);
            t.top = std::move(clipped.top);
        }
    };

    auto trained = net::train_examples(std::move(model), net::hard_examples(train), train_cfg, hook);
    FastClipResult result{std::move(trained.net), std::move(trained.loss_trace), {}};
    for (const auto& t : tracked) result.tracked_sigma[result.net.layers()[t.index].name] = t.top.top();
    return result;
}

nlohmann::json to_json(const ClipConfig& cfg) {
    return {{"target", cfg.target},
            {"inner_iters", cfg.inner_iters},
            {"learning_rate", cfg.learning_rate},
            {"restart_iters", cfg.restart_iters},
            {"max_while_iters", cfg.max_while_iters},
            {"slack", cfg.slack},
            {"powerqr_tol", cfg.powerqr_tol}};
}

ClipConfig clip_config_from_json(const nlohmann::json& j, double target) {
    static const std::set<std::string> known{"target",          "inner_iters", "learning_rate", "restart_iters",
                                             "max_while_iters", "slack",       "powerqr_tol"};
    if (!j.is_object()) throw std::invalid_argument("clip config: expected an object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw std::invalid_argument("clip config: unknown field '" + key + "'");
    ClipConfig cfg;
    cfg.target = target;
    cfg.inner_iters = j.value("inner_iters", cfg.inner_iters);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.restart_iters = j.value("restart_iters", cfg.restart_iters);
    cfg.max_while_iters = j.value("max_while_iters", cfg.max_while_iters);
    cfg.slack = j.value("slack", cfg.slack);
    cfg.powerqr_tol = j.value("powerqr_tol", cfg.powerqr_tol);
    validate(cfg);
    return cfg;
}

nlohmann::json run_clip_job(const nlohmann::json& job, std::uint64_t seed) {
    const auto op = linop::operator_from_json(job.at("operator"));
    const double target = job.at("target").get<double>();
    ClipConfig cfg = ClipConfig::for_operator(op, target);
    if (job.contains("config")) {
        nlohmann::json merged = to_json(cfg);
        merged.update(job.at("config"));
        cfg = clip_config_from_json(merged, target);
    }
    const auto result = clip_spectral_norm(op, cfg, seed);
    return {{"sigma_before", result.sigma_before},
            {"sigma_after", result.top.top()},
            {"iterations", result.while_iters},
            {"reached_target", result.reached_target},
            {"operator", linop::to_json(result.op)}};
}

}  // namespace specshape::clipper
