#include "specshape/classunlearn.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace specshape::classunlearn {

std::vector<int> retained_classes(int num_classes, int forget_class) {
    std::vector<int> out;
    for (int y = 0; y < num_classes; ++y)
        if (y != forget_class) out.push_back(y);
    return out;
}

namespace {

void check_distribution(const Eigen::VectorXd& p, int forget_class) {
    if (p.size() < 2) throw std::invalid_argument("distribution needs at least two classes");
    if (forget_class < 0 || forget_class >= p.size())
        throw std::invalid_argument("forget class outside the distribution");
    if (!p.allFinite() || (p.array() < 0.0).any())
        throw std::invalid_argument("distribution entries must be finite and non-negative");
    if (p(forget_class) >= 1.0 - 1e-12) {
        std::ostringstream os;
        os << "degenerate distribution: p(forget class) = " << p(forget_class) << " leaves no mass to redistribute";
        throw std::domain_error(os.str());
    }
}

void check_scores(const Eigen::VectorXd& p, const Eigen::VectorXd& scores) {
    if (scores.size() != p.size() - 1)
        throw std::invalid_argument("scores need one entry per retained class");
    if (!scores.allFinite()) throw std::invalid_argument("scores must be finite");
}

// Tilted probabilities over the full K classes; `scores` indexed by retained order.
Eigen::VectorXd tilt_probs(const Eigen::VectorXd& reweighted, int forget_class, const Eigen::VectorXd& scores,
                           double beta) {
    const auto K = reweighted.size();
    Eigen::VectorXd logits = Eigen::VectorXd::Constant(K, -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    Eigen::Index r = 0;
    for (Eigen::Index y = 0; y < K; ++y) {
        if (y == forget_class) continue;
        if (reweighted(y) > 0.0) {
            logits(y) = std::log(reweighted(y)) + beta * scores(r);
            top = std::max(top, logits(y));
        }
        ++r;
    }
    Eigen::VectorXd q = Eigen::VectorXd::Zero(K);
    double total = 0.0;
    for (Eigen::Index y = 0; y < K; ++y) {
        if (!std::isfinite(logits(y))) continue;
        q(y) = std::exp(logits(y) - top);
        total += q(y);
    }
    return q / total;
}

double moment_of(const Eigen::VectorXd& q, int forget_class, const Eigen::VectorXd& scores) {
    double m = 0.0;
    Eigen::Index r = 0;
    for (Eigen::Index y = 0; y < q.size(); ++y) {
        if (y == forget_class) continue;
        m += q(y) * scores(r++);
    }
    return m;
}

}  // namespace

Eigen::VectorXd reweight_distribution(const Eigen::VectorXd& p, int forget_class) {
    check_distribution(p, forget_class);
    Eigen::VectorXd out = p / (1.0 - p(forget_class));
    out(forget_class) = 0.0;
    return out;
}

void validate(const TiltedTarget& t) {
    if (t.forget_class < 0 || t.forget_class >= t.probs.size())
        throw std::invalid_argument("tilted target: forget class out of range");
    if (!t.probs.allFinite() || (t.probs.array() < 0.0).any())
        throw std::invalid_argument("tilted target: entries must be finite and non-negative");
    if (t.probs(t.forget_class) != 0.0) throw std::invalid_argument("tilted target: forget entry must be zero");
    if (std::abs(t.probs.sum() - 1.0) > 1e-12) throw std::invalid_argument("tilted target: entries must sum to one");
}

TiltedTarget tilt_distribution(const Eigen::VectorXd& p, int forget_class, const Eigen::VectorXd& scores,
                               double beta) {
    check_distribution(p, forget_class);
    check_scores(p, scores);
    if (!std::isfinite(beta)) throw std::invalid_argument("tilt_distribution: beta must be finite");
    TiltedTarget t;
    t.probs = tilt_probs(reweight_distribution(p, forget_class), forget_class, scores, beta);
    t.beta = beta;
    t.moment = moment_of(t.probs, forget_class, scores);
    t.scores = scores;
    t.forget_class = forget_class;
    return t;
}

BetaSolution solve_beta(const Eigen::VectorXd& p, int forget_class, const Eigen::VectorXd& scores, double target_c) {
    check_distribution(p, forget_class);
    check_scores(p, scores);
    const Eigen::VectorXd base = reweight_distribution(p, forget_class);

    double lo_s = std::numeric_limits<double>::infinity();
    double hi_s = -std::numeric_limits<double>::infinity();
    Eigen::Index r = 0;
    for (Eigen::Index y = 0; y < p.size(); ++y) {
        if (y == forget_class) continue;
        if (base(y) > 0.0) {
            lo_s = std::min(lo_s, scores(r));
            hi_s = std::max(hi_s, scores(r));
        }
        ++r;
    }
    if (!(lo_s < target_c && target_c < hi_s)) {
        std::ostringstream os;
        os.precision(17);
        os << "solve_beta: target " << target_c << " is infeasible; m(beta) ranges over the open interval (" << lo_s
           << ", " << hi_s << ")";
        throw std::domain_error(os.str());
    }

    constexpr double tol = 1e-10;
    auto m = [&](double beta) { return moment_of(tilt_probs(base, forget_class, scores, beta), forget_class, scores); };
    if (std::abs(m(0.0) - target_c) <= tol) return {0.0, m(0.0)};

    double lo = -1.0;
    double hi = 1.0;
    while (m(hi) < target_c && hi < 1e300) hi *= 2.0;
    while (m(lo) > target_c && lo > -1e300) lo *= 2.0;

    double best = 0.0;
    double best_err = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 2000; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        const double value = m(mid);
        const double err = std::abs(value - target_c);
        if (err < best_err) {
            best = mid;
            best_err = err;
        }
        if (err == 0.0 || mid == lo || mid == hi) break;
        (value < target_c ? lo : hi) = mid;
    }
    return {best, m(best)};
}

ClassScores class_similarity_scores(const net::TinyNet& model, int forget_class, const ScoreConfig& cfg) {
    const auto& last = model.layers().back().op;
    if (last.linear().kind() != linop::Kind::dense)
        throw std::invalid_argument("class_similarity_scores: the final layer must be dense");
    if (!(cfg.temperature > 0.0)) throw std::invalid_argument("class_similarity_scores: temperature must be positive");
    const Eigen::MatrixXd& W = last.linear().weight();  // row y is the weight vector of class y
    const auto K = W.rows();
    if (forget_class < 0 || forget_class >= K) throw std::invalid_argument("class_similarity_scores: bad forget class");

    ClassScores out;
    out.classes = retained_classes(static_cast<int>(K), forget_class);

    const Eigen::RowVectorXd mean = W.colwise().mean();
    const Eigen::MatrixXd centered = W.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(K);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
    const double scale = std::max(values.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    int rank = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i) rank += values(i) > 1e-12 * scale ? 1 : 0;

    int dim = cfg.pca_dim < 0 ? static_cast<int>(std::min<Eigen::Index>(K - 1, 8)) : cfg.pca_dim;
    if (dim > rank) {
        out.warnings.push_back("pca_dim " + std::to_string(dim) + " exceeds the rank " + std::to_string(rank) +
                               " of the class weights; using the rank");
        dim = rank;
    }
    out.pca_dim = dim;
    const Eigen::MatrixXd U = eig.eigenvectors().rightCols(dim);

    auto embed = [&](Eigen::Index y) -> Eigen::VectorXd { return U.transpose() * centered.row(y).transpose(); };
    const Eigen::VectorXd anchor = embed(forget_class);
    out.cosine.resize(static_cast<Eigen::Index>(out.classes.size()));
    for (std::size_t i = 0; i < out.classes.size(); ++i) {
        const Eigen::VectorXd e = embed(out.classes[i]);
        const double denom = e.norm() * anchor.norm();
        out.cosine(static_cast<Eigen::Index>(i)) = denom > 0.0 ? e.dot(anchor) / denom : 0.0;
    }
    out.scores = net::softmax(out.cosine / cfg.temperature);
    return out;
}

Eigen::VectorXd centroid_scores(const std::vector<Eigen::VectorXd>& centroids, int forget_class) {
    const auto K = static_cast<int>(centroids.size());
    if (forget_class < 0 || forget_class >= K) throw std::invalid_argument("centroid_scores: bad forget class");
    const auto classes = retained_classes(K, forget_class);
    Eigen::VectorXd s(static_cast<Eigen::Index>(classes.size()));
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const double d = (centroids[static_cast<std::size_t>(classes[i])] -
                          centroids[static_cast<std::size_t>(forget_class)])
                             .norm();
        if (d == 0.0) throw std::domain_error("centroid_scores: coincident centroids");
        s(static_cast<Eigen::Index>(i)) = 1.0 / d;
    }
    return s;
}

LossAndGrad trw_loss_and_grad(const net::TinyNet& model, const data::LabeledDataset& batch, int forget_class,
                              const std::vector<TiltedTarget>& forget_targets) {
    const int K = model.num_classes();
    LossAndGrad out{0.0, Eigen::VectorXd::Zero(model.parameter_count())};
    std::size_t next = 0;
    for (const auto& s : batch) {
        Eigen::VectorXd target;
        if (s.label == forget_class) {
            if (next >= forget_targets.size())
                throw std::invalid_argument("trw_loss_and_grad: fewer tilted targets than forget samples");
            const auto& t = forget_targets[next++];
            validate(t);
            if (t.forget_class != forget_class || t.probs.size() != K)
                throw std::invalid_argument("trw_loss_and_grad: tilted target does not match the model");
            target = t.probs;
        } else {
            target = net::one_hot(s.label, K);
        }
        auto g = net::backward(model, s.x, target);
        out.loss += g.loss;
        out.grads += g.params;
    }
    return out;
}

std::vector<TiltedTarget> tilted_targets(const net::TinyNet& model, const data::LabeledDataset& data,
                                         int forget_class, const Eigen::VectorXd& scores, double beta) {
    std::vector<TiltedTarget> out;
    for (const auto& s : data)
        if (s.partition != data::Partition::test && s.label == forget_class)
            out.push_back(tilt_distribution(model.forward(s.x), forget_class, scores, beta));
    return out;
}

net::TrainResult trw_finetune(net::TinyNet model, const data::LabeledDataset& data, int forget_class,
                              const Eigen::VectorXd& scores, double beta, const net::TrainConfig& cfg) {
    const auto train = data.training();
    const auto targets = tilted_targets(model, train, forget_class, scores, beta);
    std::vector<net::Example> examples;
    examples.reserve(train.size());
    std::size_t next = 0;
    for (const auto& s : train) {
        if (s.label == forget_class)
            examples.push_back({s.x, targets[next++].probs});
        else
            examples.push_back({s.x, net::one_hot(s.label, model.num_classes())});
    }
    return net::train_examples(std::move(model), examples, cfg);
}

ThresholdClassifier fit_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw std::invalid_argument("fit_threshold: need one label per score");
    const auto n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::size_t total_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("fit_threshold: labels must be 0 or 1");
        total_pos += static_cast<std::size_t>(l);
    }
    const std::size_t total_neg = n - total_pos;

    // cut c sits below the c-th distinct value; c = 0 is below everything
    ThresholdClassifier best;
    best.accuracy = -1.0;
    std::size_t pos_below = 0;
    std::size_t neg_below = 0;
    std::size_t i = 0;
    const double lowest = scores[order.front()];
    double threshold = lowest - std::max(1.0, std::abs(lowest));
    while (true) {
        const double above_acc =
            static_cast<double>((total_pos - pos_below) + neg_below) / static_cast<double>(n);
        const double below_acc = static_cast<double>(pos_below + (total_neg - neg_below)) / static_cast<double>(n);
        if (above_acc > best.accuracy) best = {threshold, true, above_acc};
        if (below_acc > best.accuracy) best = {threshold, false, below_acc};
        if (i >= n) break;
        const double value = scores[order[i]];
        while (i < n && scores[order[i]] == value) {
            (labels[order[i]] == 1 ? pos_below : neg_below) += 1;
            ++i;
        }
        threshold = i < n ? value + 0.5 * (scores[order[i]] - value) : value + std::max(1.0, std::abs(value));
    }
    return best;
}

MiaNnReport mia_nn(const std::vector<net::TinyNet>& retrained, const net::TinyNet& unlearned,
                   const data::LabeledDataset& test, int forget_class) {
    if (retrained.empty()) throw std::invalid_argument("mia_nn: need at least one retrained model");
    const int K = test.num_classes();
    if (forget_class < 0 || forget_class >= K) throw std::invalid_argument("mia_nn: bad forget class");
    for (int y = 0; y < K; ++y)
        if (test.with_label(y).empty()) throw std::invalid_argument("mia_nn: test set has no samples of class " +
                                                                    std::to_string(y));

    auto logits_of = [&](const net::TinyNet& m) {
        std::vector<Eigen::VectorXd> z;
        z.reserve(test.size());
        for (const auto& s : test) z.push_back(m.logits(s.x));
        return z;
    };
    // accuracy on forget-class samples of the threshold fit for class r
    auto class_accuracy = [&](const std::vector<Eigen::VectorXd>& z, int r) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (std::size_t i = 0; i < test.size(); ++i) {
            if (test[i].label == forget_class) continue;
            scores.push_back(z[i](r));
            labels.push_back(test[i].label == r ? 1 : 0);
        }
        const auto h = fit_threshold(scores, labels);
        std::size_t hits = 0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            if (test[i].label != forget_class) continue;
            hits += static_cast<std::size_t>(h.predict(z[i](r)));
            ++count;
        }
        return static_cast<double>(hits) / static_cast<double>(count);
    };

    MiaNnReport rep;
    rep.classes = retained_classes(K, forget_class);
    rep.mean_accuracy.assign(rep.classes.size(), 0.0);
    for (const auto& m : retrained) {
        if (m.num_classes() != K) throw std::invalid_argument("mia_nn: retrained model has the wrong class count");
        const auto z = logits_of(m);
        std::vector<double> row;
        for (std::size_t c = 0; c < rep.classes.size(); ++c) {
            row.push_back(class_accuracy(z, rep.classes[c]));
            rep.mean_accuracy[c] += row.back() / static_cast<double>(retrained.size());
        }
        rep.per_model.push_back(std::move(row));
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < rep.classes.size(); ++c)
        if (rep.mean_accuracy[c] > rep.mean_accuracy[best]) best = c;
    rep.nearest_class = rep.classes[best];
    rep.mean_acc_retrain = rep.mean_accuracy[best];
    if (unlearned.num_classes() != K) throw std::invalid_argument("mia_nn: unlearned model has the wrong class count");
    rep.acc_unlearned = class_accuracy(logits_of(unlearned), rep.nearest_class);
    rep.gap = std::abs(rep.mean_acc_retrain - rep.acc_unlearned);
    return rep;
}

}  // namespace specshape::classunlearn
