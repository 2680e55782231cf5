#include "specshape/lotos.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace specshape::lotos {

void validate(const LotosConfig& cfg) {
    if (cfg.k < 1) throw std::invalid_argument("lotos config: k must be at least 1");
    if (cfg.mal < 0.0) throw std::invalid_argument("lotos config: mal must be non-negative");
    if (cfg.lambda < 0.0) throw std::invalid_argument("lotos config: lambda must be non-negative");
    if (!cfg.weights.empty()) {
        if (static_cast<int>(cfg.weights.size()) != cfg.k)
            throw std::invalid_argument("lotos config: need one weight per singular vector");
        for (std::size_t i = 1; i < cfg.weights.size(); ++i)
            if (cfg.weights[i] > cfg.weights[i - 1])
                throw std::invalid_argument("lotos config: weights must be non-increasing");
    }
}

std::vector<double> weights_of(const LotosConfig& cfg) {
    if (!cfg.weights.empty()) return cfg.weights;
    return std::vector<double>(static_cast<std::size_t>(cfg.k), 1.0 / cfg.k);
}

namespace {

void require_vectors(const spectral::Spectrum& s, const linop::Operator& op, int k) {
    if (s.vectors.rows() != op.in_dim() || s.vectors.cols() < k)
        throw std::invalid_argument("subspace_similarity: tracked vectors do not match the layer");
}

double hinge_sum(const linop::Operator& op, const spectral::Spectrum& other, const std::vector<double>& w,
                 double mal) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        s += w[i] * std::max(op.apply_linear(other.vectors.col(static_cast<Eigen::Index>(i))).norm() - mal, 0.0);
    return s;
}

// d/dW of sum_i w_i relu(||op(v_i)|| - mal), accumulated into grad.
void hinge_grad(const linop::Operator& op, const spectral::Spectrum& other, const std::vector<double>& w, double mal,
                double scale, Eigen::Ref<Eigen::VectorXd> grad) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        const Eigen::VectorXd v = other.vectors.col(static_cast<Eigen::Index>(i));
        const Eigen::VectorXd out = op.apply_linear(v);
        const double norm = out.norm();
        if (norm <= mal || norm == 0.0) continue;
        grad += (scale * w[i] / norm) * op.parameter_gradient(v, out);
    }
}

std::vector<std::string> selected_layers(const net::TinyNet& model, const LotosConfig& cfg) {
    if (!cfg.layers.empty()) return cfg.layers;
    return {model.layers().front().name};
}

}  // namespace

double subspace_similarity(const linop::Operator& f, const spectral::Spectrum& f_top, const linop::Operator& g,
                           const spectral::Spectrum& g_top, const LotosConfig& cfg) {
    validate(cfg);
    if (f.in_dim() != g.in_dim()) {
        std::ostringstream os;
        os << "subspace_similarity: input dimensions differ (" << f.in_dim() << " vs " << g.in_dim() << ")";
        throw std::invalid_argument(os.str());
    }
    require_vectors(f_top, f, cfg.k);
    require_vectors(g_top, g, cfg.k);
    const auto w = weights_of(cfg);
    return hinge_sum(f, g_top, w, cfg.mal) + hinge_sum(g, f_top, w, cfg.mal);
}

double subspace_similarity(const linop::Operator& f, const linop::Operator& g, const LotosConfig& cfg) {
    spectral::PowerQRConfig pq;
    pq.k = cfg.k;
    pq.iterations = 1000;
    pq.convergence_tol = 1e-12;
    return subspace_similarity(f, spectral::power_qr(f, pq, 0), g, spectral::power_qr(g, pq, 1), cfg);
}

LotosLoss lotos_loss(const std::vector<net::TinyNet>& ensemble, const TrackedVectors& tracked,
                     const std::vector<net::Example>& batch, const LotosConfig& cfg) {
    validate(cfg);
    const auto N = ensemble.size();
    if (N < 2) throw std::invalid_argument("lotos_loss: need at least two models");
    if (tracked.size() != N) throw std::invalid_argument("lotos_loss: need tracked vectors for every model");
    if (batch.empty()) throw std::invalid_argument("lotos_loss: empty batch");

    LotosLoss out;
    out.grads.reserve(N);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const auto& model : ensemble) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameter_count());
        double ce = 0.0;
        for (const auto& ex : batch) {
            auto g = net::backward(model, ex.x, ex.target);
            grad += g.params;
            ce += g.loss;
        }
        out.mean_ce += ce * inv_batch / static_cast<double>(N);
        out.grads.push_back(grad * (inv_batch / static_cast<double>(N)));
    }

    const auto layers = selected_layers(ensemble.front(), cfg);
    const auto w = weights_of(cfg);
    const double coef =
        cfg.lambda / (static_cast<double>(layers.size()) * static_cast<double>(N) * static_cast<double>(N - 1));
    double raw = 0.0;
    for (const auto& name : layers) {
        for (std::size_t j = 0; j < N; ++j) {
            for (std::size_t l = 0; l < N; ++l) {
                if (j == l) continue;
                const auto& fj = ensemble[j].layer(name).op;
                const auto& fl = ensemble[l].layer(name).op;
                if (fj.in_dim() != fl.in_dim()) {
                    out.warnings.push_back("layer '" + name + "': models " + std::to_string(j) + " and " +
                                           std::to_string(l) + " differ in input dimension, pair skipped");
                    continue;
                }
                const auto& tj = tracked[j].at(name);
                const auto& tl = tracked[l].at(name);
                require_vectors(tj, fj, cfg.k);
                require_vectors(tl, fl, cfg.k);
                raw += hinge_sum(fj, tl, w, cfg.mal) + hinge_sum(fl, tj, w, cfg.mal);
                if (cfg.lambda == 0.0) continue;
                const auto off_j = ensemble[j].parameter_offset(ensemble[j].layer_index(name));
                const auto off_l = ensemble[l].parameter_offset(ensemble[l].layer_index(name));
                hinge_grad(fj, tl, w, cfg.mal, coef, out.grads[j].segment(off_j, fj.parameter_count()));
                hinge_grad(fl, tj, w, cfg.mal, coef, out.grads[l].segment(off_l, fl.parameter_count()));
            }
        }
    }
    out.penalty = coef * raw;
    out.loss = out.mean_ce + out.penalty;
    return out;
}

TrackedVectors track_layers(const std::vector<net::TinyNet>& ensemble, const LotosConfig& cfg, int iterations,
                            std::uint64_t seed) {
    TrackedVectors tracked(ensemble.size());
    spectral::PowerQRConfig pq;
    pq.k = cfg.k;
    pq.iterations = iterations;
    pq.convergence_tol = 0.0;
    for (std::size_t m = 0; m < ensemble.size(); ++m)
        for (const auto& name : selected_layers(ensemble[m], cfg))
            tracked[m][name] = spectral::power_qr(ensemble[m].layer(name).op, pq, seed + 7919 * m);
    return tracked;
}

EnsembleResult train_ensemble(std::vector<net::TinyNet> models, const data::LabeledDataset& data,
                              const EnsembleConfig& cfg, std::uint64_t seed) {
    validate(cfg.lotos);
    clipper::validate(cfg.fastclip);
    if (models.size() < 2) throw std::invalid_argument("train_ensemble: need at least two models");
    const auto train = data.training();
    if (train.empty()) throw std::invalid_argument("train_ensemble: empty train partition");
    const auto examples = net::hard_examples(train);

    // every tracked layer keeps k vectors; clipped layers use the first one
    LotosConfig track_cfg = cfg.lotos;
    track_cfg.layers = selected_layers(models.front(), cfg.lotos);
    for (const auto& [name, c] : cfg.clip_targets)
        if (std::find(track_cfg.layers.begin(), track_cfg.layers.end(), name) == track_cfg.layers.end())
            track_cfg.layers.push_back(name);
    auto tracked = track_layers(models, track_cfg, cfg.fastclip.warmup_powerqr_iters, seed);

    EnsembleResult result;
    net::BatchSampler sampler(examples.size(), cfg.train.seed);
    const auto batch_size = static_cast<std::size_t>(std::max(cfg.train.batch, 1));
    std::uint64_t clip_calls = 0;
    for (int step = 1; step <= cfg.train.steps; ++step) {
        std::vector<net::Example> batch;
        for (auto i : sampler.next(batch_size)) batch.push_back(examples[i]);
        const auto loss = lotos_loss(models, tracked, batch, cfg.lotos);
        if (!std::isfinite(loss.loss)) {
            std::ostringstream os;
            os << "train_ensemble: non-finite loss at step " << step;
            throw std::runtime_error(os.str());
        }
        result.loss_trace.push_back(loss.loss);
        result.penalty_trace.push_back(loss.penalty);

        const double lr = net::learning_rate_at(cfg.train, step);
        for (std::size_t m = 0; m < models.size(); ++m) {
            Eigen::VectorXd params = models[m].parameters();
            Eigen::VectorXd grad = loss.grads[m];
            if (cfg.train.weight_decay != 0.0) grad += cfg.train.weight_decay * params;
            models[m].set_parameters(params - lr * grad);
        }

        for (std::size_t m = 0; m < models.size(); ++m) {
            for (auto& [name, spec] : tracked[m]) {
                const auto index = models[m].layer_index(name);
                spectral::PowerQRConfig pq;
                pq.k = track_cfg.k;
                pq.iterations = cfg.fastclip.per_step_powerqr_iters;
                pq.convergence_tol = 0.0;
                pq.warm_start = spec.vectors;
                spec = spectral::power_qr(models[m].layers()[index].op, pq, 0);

                const auto target = cfg.clip_targets.find(name);
                if (target == cfg.clip_targets.end() || step % cfg.fastclip.clip_every != 0) continue;
                clipper::ClipConfig clip;
                clip.target = target->second;
                clip.inner_iters = cfg.fastclip.clip_inner;
                clip.learning_rate = cfg.fastclip.learning_rate;
                clip.restart_iters = cfg.fastclip.clip_restart;
                clip.max_while_iters = cfg.fastclip.clip_while_iters;
                clip.fail_on_cap = false;
                auto clipped = clipper::clip_spectral_norm(models[m].layers()[index].op, clip,
                                                           seed + 104729 * (++clip_calls), spec);
                models[m].set_operator(index, clipped.op);
                pq.iterations = cfg.fastclip.clip_restart;
                spec = spectral::power_qr(clipped.op, pq, 0);
            }
        }
    }
    result.models = std::move(models);
    return result;
}

std::optional<double> transfer_rate(const net::TinyNet& source, const net::TinyNet& target,
                                    const data::LabeledDataset& eval_set, double eps,
                                    const net::AttackConfig& cfg) {
    if (eval_set.empty()) throw std::invalid_argument("transfer_rate: empty evaluation set");
    std::size_t conditioned = 0;
    std::size_t transferred = 0;
    for (const auto& s : eval_set) {
        if (source.predict(s.x) != s.label || target.predict(s.x) != s.label) continue;
        if (cfg.target_class && *cfg.target_class == s.label) continue;
        const auto adv = net::pgd_attack(source, s.x, s.label, eps, cfg);
        const int src = source.predict(adv);
        const bool fools_source = cfg.target_class ? src == *cfg.target_class : src != s.label;
        if (!fools_source) continue;
        ++conditioned;
        const int tgt = target.predict(adv);
        transferred += (cfg.target_class ? tgt == *cfg.target_class : tgt != s.label) ? 1 : 0;
    }
    if (conditioned == 0) return std::nullopt;
    return static_cast<double>(transferred) / static_cast<double>(conditioned);
}

}  // namespace specshape::lotos
