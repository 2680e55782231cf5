#pragma once

// A small feed-forward classifier built from affine operators with manual
// backpropagation, plus SGD training and l2 PGD attacks.

#include "specshape/dataset.hpp"
#include "specshape/linop.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace specshape::net {

enum class Activation { relu, identity };

struct Layer {
    std::string name;
    linop::Operator op;  // affine over a dense or convolutional operator
    Activation activation = Activation::relu;
};

class TinyNet {
public:
    TinyNet() = default;
    explicit TinyNet(std::vector<Layer> layers);

    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    [[nodiscard]] std::size_t layer_index(const std::string& name) const;
    [[nodiscard]] const Layer& layer(const std::string& name) const { return layers_[layer_index(name)]; }
    /// Replaces a layer's operator; shapes must match.
    void set_operator(std::size_t index, linop::Operator op);

    [[nodiscard]] Eigen::Index input_dim() const { return layers_.front().op.in_dim(); }
    [[nodiscard]] int num_classes() const { return static_cast<int>(layers_.back().op.out_dim()); }

    [[nodiscard]] Eigen::VectorXd logits(const Eigen::VectorXd& x) const;
    [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
    [[nodiscard]] int predict(const Eigen::VectorXd& x) const;

    /// Per layer: linear parameters followed by the bias.
    [[nodiscard]] Eigen::Index parameter_count() const;
    [[nodiscard]] Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& params);
    /// Offset of layer `index` inside parameters().
    [[nodiscard]] Eigen::Index parameter_offset(std::size_t index) const;

private:
    std::vector<Layer> layers_;
};

/// Layer constructors with He-normal initialization.
Layer dense_layer(std::string name, int in, int out, Activation act, std::mt19937_64& rng);
Layer conv1d_layer(std::string name, int channels_in, int channels_out, int kernel, int length,
                   linop::Padding padding, Activation act, std::mt19937_64& rng);
/// dims = {input, hidden..., classes}; ReLU on hidden layers, identity on the last.
TinyNet make_mlp(const std::vector<int>& dims, std::uint64_t seed);

Eigen::VectorXd softmax(const Eigen::VectorXd& z);
Eigen::VectorXd one_hot(int label, int classes);

/// Cross-entropy H(target, f(x)).
double cross_entropy(const TinyNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target);

struct Gradients {
    double loss = 0.0;
    Eigen::VectorXd params;  // layout of TinyNet::parameters()
    Eigen::VectorXd input;
};

Gradients backward(const TinyNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target);

struct Example {
    Eigen::VectorXd x;
    Eigen::VectorXd target;  // probability vector
};

std::vector<Example> hard_examples(const data::LabeledDataset& data);

struct Schedule {
    int decay_every = 0;  // 0 disables decay
    double gamma = 1.0;
};

struct TrainConfig {
    double lr = 0.1;
    int steps = 1000;
    int batch = 32;
    std::uint64_t seed = 0;
    Schedule schedule;
    double weight_decay = 0.0;
};

struct TrainResult {
    TinyNet net;
    std::vector<double> loss_trace;
};

/// Called after every optimizer step with the 1-based step index.
using StepHook = std::function<void(int step, TinyNet& net)>;

/// Deterministic mini-batch order: a seeded reshuffle at every epoch.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed);
    std::vector<std::size_t> next(std::size_t batch);

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::mt19937_64 rng_;
};

double learning_rate_at(const TrainConfig& cfg, int step);

/// Mean soft-target cross-entropy SGD. Throws std::runtime_error naming the
/// step on a non-finite loss.
TrainResult train_examples(TinyNet net, const std::vector<Example>& examples, const TrainConfig& cfg,
                           const StepHook& hook = {});

/// SGD on the train/forget/retain samples of `data`.
TrainResult sgd_train(TinyNet net, const data::LabeledDataset& data, const TrainConfig& cfg);

double accuracy(const TinyNet& net, const data::LabeledDataset& data);

enum class AttackKind { pgd, fgsm_restart };

struct AttackConfig {
    int steps = 50;
    double step_frac = 0.1;
    AttackKind kind = AttackKind::pgd;
    std::uint64_t seed = 0;
    int restarts = 5;                 // fgsm_restart only
    std::optional<int> target_class;  // targeted variant when set
};

/// l2-bounded attack: ||x_adv - x|| <= eps. Untargeted ascent on the
/// true-label loss unless a target class is configured.
Eigen::VectorXd pgd_attack(const TinyNet& net, const Eigen::VectorXd& x, int y, double eps,
                           const AttackConfig& cfg);

nlohmann::json to_json(const TinyNet& net);
TinyNet net_from_json(const nlohmann::json& j);

}  // namespace specshape::net
