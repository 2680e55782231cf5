#pragma once

// Class unlearning by tilted reweighting of the original model's predictive
// distribution, and the nearest-neighbor membership test.

#include "specshape/dataset.hpp"
#include "specshape/net.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace specshape::classunlearn {

/// Indices of all classes except the forget class, ascending.
std::vector<int> retained_classes(int num_classes, int forget_class);

/// p(y) / (1 - p(y_f)) with the forget entry set to zero.
Eigen::VectorXd reweight_distribution(const Eigen::VectorXd& p, int forget_class);

struct TiltedTarget {
    Eigen::VectorXd probs;   // K entries, forget entry exactly 0
    double beta = 0.0;
    double moment = 0.0;     // sum_y q(y) s_y
    Eigen::VectorXd scores;  // over retained classes, in retained_classes() order
    int forget_class = 0;
};

/// Throws std::invalid_argument unless the invariants hold.
void validate(const TiltedTarget& t);

/// q(y) proportional to p~(y) exp(beta s_y), evaluated in log space. `scores`
/// has one entry per retained class.
TiltedTarget tilt_distribution(const Eigen::VectorXd& p, int forget_class, const Eigen::VectorXd& scores,
                               double beta);

struct BetaSolution {
    double beta = 0.0;
    double achieved = 0.0;
};

/// Finds beta with |m(beta) - c| <= 1e-10 by bracketing and bisection.
/// Throws std::domain_error unless c lies strictly between the smallest and
/// largest score carrying probability mass.
BetaSolution solve_beta(const Eigen::VectorXd& p, int forget_class, const Eigen::VectorXd& scores, double target_c);

struct ScoreConfig {
    int pca_dim = -1;  // negative means min(K - 1, 8)
    double temperature = 0.01;
};

struct ClassScores {
    std::vector<int> classes;  // retained classes
    Eigen::VectorXd cosine;    // cosine similarity to the forget class
    Eigen::VectorXd scores;    // softmax(cosine / temperature)
    int pca_dim = 0;
    std::vector<std::string> warnings;
};

/// Cosine similarities of the final layer's class weight vectors after a
/// centered PCA, turned into probabilities by a low-temperature softmax.
ClassScores class_similarity_scores(const net::TinyNet& model, int forget_class, const ScoreConfig& cfg = {});

/// Scores from inverse Euclidean distances between class centroids.
Eigen::VectorXd centroid_scores(const std::vector<Eigen::VectorXd>& centroids, int forget_class);

struct LossAndGrad {
    double loss = 0.0;
    Eigen::VectorXd grads;
};

/// Sum of hard-label cross-entropy over samples of retained classes and
/// soft cross-entropy against the tilted targets over forget-class samples.
/// Forget samples consume `forget_targets` in order.
LossAndGrad trw_loss_and_grad(const net::TinyNet& model, const data::LabeledDataset& batch, int forget_class,
                              const std::vector<TiltedTarget>& forget_targets);

/// Tilted targets for every forget-class training sample under `model`.
std::vector<TiltedTarget> tilted_targets(const net::TinyNet& model, const data::LabeledDataset& data,
                                         int forget_class, const Eigen::VectorXd& scores, double beta);

/// Fine-tunes on retained-class samples (hard labels) and forget-class
/// samples (tilted targets from the model before fine-tuning). beta = 0
/// gives plain reweighting.
net::TrainResult trw_finetune(net::TinyNet model, const data::LabeledDataset& data, int forget_class,
                              const Eigen::VectorXd& scores, double beta, const net::TrainConfig& cfg);

struct ThresholdClassifier {
    double threshold = 0.0;
    bool above = true;  // predicts 1 when score > threshold, else when score < threshold
    double accuracy = 0.0;

    [[nodiscard]] int predict(double score) const { return (above ? score > threshold : score < threshold) ? 1 : 0; }
};

/// Accuracy-optimal 1-D threshold with orientation over all midpoints of the
/// sorted distinct scores (plus the two outer cuts). Ties keep the first
/// candidate in ascending threshold order, "above" before "below".
ThresholdClassifier fit_threshold(const std::vector<double>& scores, const std::vector<int>& labels);

struct MiaNnReport {
    std::vector<int> classes;                  // retained classes
    std::vector<std::vector<double>> per_model;  // [model][class] accuracy on forget-class test samples
    std::vector<double> mean_accuracy;         // per class
    int nearest_class = -1;
    double mean_acc_retrain = 0.0;
    double acc_unlearned = 0.0;
    double gap = 0.0;
};

MiaNnReport mia_nn(const std::vector<net::TinyNet>& retrained, const net::TinyNet& unlearned,
                   const data::LabeledDataset& test, int forget_class);

}  // namespace specshape::classunlearn
