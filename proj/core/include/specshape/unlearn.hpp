#pragma once

// Unlearning by fine-tuning on adversarial examples of the forget set.

#include "specshape/dataset.hpp"
#include "specshape/net.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace specshape::unlearn {

struct AdvRecord {
    Eigen::VectorXd x;
    int y = 0;
    Eigen::VectorXd x_adv;
    int y_adv = 0;
    double eps_found = 0.0;
};

using AdvSet = std::vector<AdvRecord>;

/// For every sample, attacks at eps_init and doubles eps until the
/// prediction changes. Throws std::runtime_error naming the first sample that
/// still resists after max_doublings doublings.
AdvSet build_adversarial_set(const net::TinyNet& model, const data::LabeledDataset& forget, double eps_init,
                             const net::AttackConfig& attack, int max_doublings = 10);

enum class Mode { retain_forget_adv, forget_adv, retain_adv, adv_only };

std::string to_string(Mode mode);
/// Accepts "R+F+A", "F+A", "R+A" and "A".
Mode mode_from_string(const std::string& name);

/// Fine-tunes on the mode's sets; adversarial records enter as hard-labeled
/// (x_adv, y_adv) samples after the clean ones.
net::TrainResult amun_finetune(net::TinyNet model, const data::LabeledDataset& data, const AdvSet& advset, Mode mode,
                               const net::TrainConfig& cfg);

/// Scaled confidence log(p_y / (1 - p_y)), computed from logits.
double scaled_confidence(const net::TinyNet& model, const Eigen::VectorXd& x, int y);

/// Mann-Whitney AUC of scaled confidences, set_a scored as the positive
/// class; ties count one half. A threshold-AUC membership proxy.
double membership_auc(const net::TinyNet& model, const data::LabeledDataset& set_a,
                      const data::LabeledDataset& set_b);

/// AUC of positives vs negatives; exposed for direct use on scores.
double mann_whitney_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

/// A single affine + softmax model trained to small loss with and without one
/// sample, plus an adversarial point for that sample.
struct ConvexInstance {
    data::LabeledDataset data;  // training set D
    std::size_t forget_index = 0;
    net::TinyNet original;   // trained on D
    net::TinyNet retrained;  // trained on D minus the forget sample
    Eigen::VectorXd x_adv;
    int y_adv = 0;
};

struct ConvexTrainConfig {
    double lr = 1.0;  // full-batch gradient descent on the mean loss
    int steps = 3000;
};

net::TinyNet train_full_batch(net::TinyNet model, const data::LabeledDataset& data, const ConvexTrainConfig& cfg);

/// Builds a separable two-class instance from a seed.
ConvexInstance make_convex_instance(std::uint64_t seed, int per_class = 10, double separation = 6.0,
                                    const ConvexTrainConfig& cfg = {});

/// Trains the original and retrained models for a given dataset and finds
/// an adversarial example for the forget sample against the original.
ConvexInstance train_convex_pair(const data::LabeledDataset& data, std::size_t forget_index,
                                 const ConvexTrainConfig& cfg, const net::AttackConfig& attack, double eps_init);

/// Smoothness constant of the unnormalized loss over D plus the adversarial
/// point: (1/2) sum ||[x; 1]||^2.
double smoothness_bound(const ConvexInstance& inst);

struct AmunBoundReport {
    double lhs = 0.0;  // ||theta' - theta_u||^2
    double rhs = 0.0;  // ||theta_o - theta_u||^2 + (2/beta)(L delta - C)
    bool holds = false;
    double delta = 0.0;
    double lipschitz = 0.0;
    double c_term = 0.0;
    double beta = 0.0;
    double beta_bound = 0.0;
    double loss_original = 0.0;   // total loss of theta_o on D
    double loss_retrained = 0.0;  // total loss of theta_u on D minus the sample
    double adv_loss_original = 0.0;
    bool inconclusive = false;   // near-zero-loss precondition unmet
    bool beta_warning = false;   // beta below the smoothness bound
    bool adv_loss_flag = false;  // adversarial point not fit by theta_o
    std::vector<std::string> notes;
};

/// One gradient step of size 1/beta from theta_o on D plus the adversarial
/// point, then both sides of the distance bound.
AmunBoundReport verify_amun_bound(const ConvexInstance& inst, double beta);

}  // namespace specshape::unlearn
