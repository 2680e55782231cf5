#include "specshape/unlearn.hpp"

#include "specshape/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace specshape::unlearn {

AdvSet build_adversarial_set(const net::TinyNet& model, const data::LabeledDataset& forget, double eps_init,
                             const net::AttackConfig& attack, int max_doublings) {
    if (!(eps_init > 0.0)) throw std::invalid_argument("build_adversarial_set: eps_init must be positive");
    if (max_doublings < 0) throw std::invalid_argument("build_adversarial_set: max_doublings must be non-negative");
    AdvSet out;
    out.reserve(forget.size());
    for (std::size_t i = 0; i < forget.size(); ++i) {
        const auto& s = forget[i];
        net::AttackConfig cfg = attack;
        cfg.target_class.reset();
        cfg.seed = attack.seed + i;
        double eps = eps_init;
        bool found = false;
        for (int d = 0; d <= max_doublings; ++d, eps *= 2.0) {
            auto x_adv = net::pgd_attack(model, s.x, s.label, eps, cfg);
            const int pred = model.predict(x_adv);
            if (pred != s.label) {
                out.push_back({s.x, s.label, std::move(x_adv), pred, eps});
                found = true;
                break;
            }
        }
        if (!found) {
            std::ostringstream os;
            os << "build_adversarial_set: no adversarial example for forget sample " << i << " up to eps = "
               << eps / 2.0;
            throw std::runtime_error(os.str());
        }
    }
    return out;
}

std::string to_string(Mode mode) {
    switch (mode) {
    case Mode::retain_forget_adv: return "R+F+A";
    case Mode::forget_adv: return "F+A";
    case Mode::retain_adv: return "R+A";
    case Mode::adv_only: return "A";
    }
    return "unknown";
}

Mode mode_from_string(const std::string& name) {
    if (name == "R+F+A") return Mode::retain_forget_adv;
    if (name == "F+A") return Mode::forget_adv;
    if (name == "R+A") return Mode::retain_adv;
    if (name == "A") return Mode::adv_only;
    throw std::invalid_argument("unknown AMUN mode '" + name + "' (expected R+F+A, F+A, R+A or A)");
}

net::TrainResult amun_finetune(net::TinyNet model, const data::LabeledDataset& data, const AdvSet& advset, Mode mode,
                               const net::TrainConfig& cfg) {
    data::LabeledDataset clean(data.num_classes());
    switch (mode) {
    case Mode::retain_forget_adv: clean = data.training(); break;
    case Mode::forget_adv: clean = data.only(data::Partition::forget); break;
    case Mode::retain_adv: clean = data.only(data::Partition::retain); break;
    case Mode::adv_only: break;
    }
    if (mode != Mode::adv_only && clean.empty())
        throw std::invalid_argument("amun_finetune: mode " + to_string(mode) + " has no clean samples");
    if (mode != Mode::retain_forget_adv && advset.empty())
        throw std::invalid_argument("amun_finetune: mode " + to_string(mode) + " needs a non-empty adversarial set");

    auto examples = net::hard_examples(clean);
    for (const auto& r : advset) examples.push_back({r.x_adv, net::one_hot(r.y_adv, model.num_classes())});
    return net::train_examples(std::move(model), examples, cfg);
}

double scaled_confidence(const net::TinyNet& model, const Eigen::VectorXd& x, int y) {
    const Eigen::VectorXd z = model.logits(x);
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < z.size(); ++j)
        if (j != y) m = std::max(m, z(j));
    double s = 0.0;
    for (Eigen::Index j = 0; j < z.size(); ++j)
        if (j != y) s += std::exp(z(j) - m);
    return z(y) - (m + std::log(s));
}

double mann_whitney_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
    if (positives.empty() || negatives.empty()) throw std::invalid_argument("mann_whitney_auc: empty score set");
    struct Item {
        double score;
        bool positive;
    };
    std::vector<Item> all;
    all.reserve(positives.size() + negatives.size());
    for (double s : positives) all.push_back({s, true});
    for (double s : negatives) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    // count pairs (pos, neg) with pos > neg, ties as one half
    double wins = 0.0;
    std::size_t neg_below = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        std::size_t pos_here = 0;
        std::size_t neg_here = 0;
        while (j < all.size() && all[j].score == all[i].score) {
            (all[j].positive ? pos_here : neg_here) += 1;
            ++j;
        }
        wins += static_cast<double>(pos_here) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(neg_here));
        neg_below += neg_here;
        i = j;
    }
    return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

double membership_auc(const net::TinyNet& model, const data::LabeledDataset& set_a, const data::LabeledDataset& set_b) {
    if (set_a.empty() || set_b.empty()) throw std::invalid_argument("membership_auc: both sets must be non-empty");
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& s : set_a) a.push_back(scaled_confidence(model, s.x, s.label));
    for (const auto& s : set_b) b.push_back(scaled_confidence(model, s.x, s.label));
    return mann_whitney_auc(a, b);
}

namespace {

double total_loss(const net::TinyNet& model, const data::LabeledDataset& data) {
    double loss = 0.0;
    for (const auto& s : data) loss += net::cross_entropy(model, s.x, net::one_hot(s.label, model.num_classes()));
    return loss;
}

data::LabeledDataset without_index(const data::LabeledDataset& data, std::size_t index) {
    data::LabeledDataset out(data.num_classes());
    for (std::size_t i = 0; i < data.size(); ++i)
        if (i != index) out.add(data[i].x, data[i].label, data[i].partition);
    return out;
}

}  // namespace

net::TinyNet train_full_batch(net::TinyNet model, const data::LabeledDataset& data, const ConvexTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("train_full_batch: empty dataset");
    const double inv = 1.0 / static_cast<double>(data.size());
    const int classes = model.num_classes();
    for (int step = 1; step <= cfg.steps; ++step) {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.parameter_count());
        double loss = 0.0;
        for (const auto& s : data) {
            auto g = net::backward(model, s.x, net::one_hot(s.label, classes));
            grad += g.params;
            loss += g.loss;
        }
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "train_full_batch: non-finite loss at step " << step;
            throw std::runtime_error(os.str());
        }
        model.set_parameters(model.parameters() - cfg.lr * inv * grad);
    }
    return model;
}

ConvexInstance train_convex_pair(const data::LabeledDataset& data, std::size_t forget_index,
                                 const ConvexTrainConfig& cfg, const net::AttackConfig& attack, double eps_init) {
    if (forget_index >= data.size()) throw std::out_of_range("train_convex_pair: forget index out of range");
    const auto init = net::make_mlp({static_cast<int>(data.dim()), data.num_classes()}, attack.seed);
    ConvexInstance inst;
    inst.data = data;
    inst.forget_index = forget_index;
    inst.original = train_full_batch(init, data, cfg);
    inst.retrained = train_full_batch(init, without_index(data, forget_index), cfg);

    data::LabeledDataset single(data.num_classes());
    single.add(data[forget_index].x, data[forget_index].label, data::Partition::forget);
    const auto adv = build_adversarial_set(inst.original, single, eps_init, attack, 20);
    inst.x_adv = adv.front().x_adv;
    inst.y_adv = adv.front().y_adv;
    return inst;
}

ConvexInstance make_convex_instance(std::uint64_t seed, int per_class, double separation,
                                    const ConvexTrainConfig& cfg) {
    data::GaussianMixtureSpec spec;
    spec.centroids = {Eigen::Vector2d(-separation / 2.0, 0.0), Eigen::Vector2d(separation / 2.0, 0.0)};
    spec.stddevs = {1.0, 1.0};
    spec.train_per_class = per_class;
    spec.test_per_class = 0;
    const auto data = data::gaussian_mixture(spec, seed);
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    net::AttackConfig attack;
    attack.seed = seed;
    return train_convex_pair(data, pick(rng), cfg, attack, 0.05);
}

double smoothness_bound(const ConvexInstance& inst) {
    // softmax cross-entropy Hessian in the logits has norm at most 1/2
    double sum = 0.0;
    for (const auto& s : inst.data) sum += s.x.squaredNorm() + 1.0;
    sum += inst.x_adv.squaredNorm() + 1.0;
    return 0.5 * sum;
}

AmunBoundReport verify_amun_bound(const ConvexInstance& inst, double beta) {
    const auto& layers = inst.original.layers();
    if (layers.size() != 1 || layers.front().op.linear().kind() != linop::Kind::dense ||
        layers.front().activation != net::Activation::identity)
        throw std::invalid_argument("verify_amun_bound: the model must be a single affine layer with softmax");
    if (!(beta > 0.0)) throw std::invalid_argument("verify_amun_bound: beta must be positive");

    const int K = inst.original.num_classes();
    const auto& fs = inst.data[inst.forget_index];
    AmunBoundReport r;
    r.beta = beta;
    r.beta_bound = smoothness_bound(inst);
    if (beta < r.beta_bound) {
        r.beta_warning = true;
        std::ostringstream os;
        os << "beta = " << beta << " is below the smoothness bound " << r.beta_bound << "; the step may be too large";
        r.notes.push_back(os.str());
    }

    const auto retained = without_index(inst.data, inst.forget_index);
    r.loss_original = total_loss(inst.original, inst.data);
    r.loss_retrained = total_loss(inst.retrained, retained);
    if (r.loss_original > 1e-2 || r.loss_retrained > 1e-2) {
        r.inconclusive = true;
        r.notes.push_back("near-zero training loss precondition unmet");
    }
    auto loss = [&](const net::TinyNet& m, const Eigen::VectorXd& x, int y) {
        return net::cross_entropy(m, x, net::one_hot(y, K));
    };
    r.adv_loss_original = loss(inst.original, inst.x_adv, inst.y_adv);
    if (r.adv_loss_original > 1e-2) {
        r.adv_loss_flag = true;
        r.notes.push_back("adversarial point has non-negligible loss under the original model");
    }

    // one gradient step of size 1/beta on the unnormalized loss over D and the adversarial point
    const Eigen::VectorXd theta_o = inst.original.parameters();
    const Eigen::VectorXd theta_u = inst.retrained.parameters();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_o.size());
    for (const auto& s : inst.data) grad += net::backward(inst.original, s.x, net::one_hot(s.label, K)).params;
    grad += net::backward(inst.original, inst.x_adv, net::one_hot(inst.y_adv, K)).params;
    net::TinyNet stepped = inst.original;
    stepped.set_parameters(theta_o - grad / beta);
    const Eigen::VectorXd theta_p = stepped.parameters();

    r.delta = (fs.x - inst.x_adv).norm();
    r.lipschitz = std::sqrt(2.0) * spectral::svd_oracle(layers.front().op.linear()).top();
    r.c_term = loss(inst.original, inst.x_adv, fs.label) + loss(stepped, inst.x_adv, inst.y_adv) -
               loss(inst.retrained, fs.x, fs.label) - loss(inst.retrained, inst.x_adv, inst.y_adv);
    r.lhs = (theta_p - theta_u).squaredNorm();
    r.rhs = (theta_o - theta_u).squaredNorm() + (2.0 / beta) * (r.lipschitz * r.delta - r.c_term);
    r.holds = r.lhs <= r.rhs + 1e-12 * std::max(1.0, std::abs(r.rhs));
    return r;
}

}  // namespace specshape::unlearn
