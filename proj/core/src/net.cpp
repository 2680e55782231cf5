#include "specshape/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace specshape::net {

namespace {

void check_layer(const Layer& layer) {
    if (layer.op.kind() != linop::Kind::affine)
        throw std::invalid_argument("TinyNet: layer '" + layer.name + "' must be an affine operator");
    const auto inner = layer.op.linear().kind();
    if (inner != linop::Kind::dense && inner != linop::Kind::conv1d && inner != linop::Kind::conv2d)
        throw std::invalid_argument("TinyNet: layer '" + layer.name +
                                    "' must wrap a dense or convolutional operator");
}

Eigen::VectorXd activate(Activation act, const Eigen::VectorXd& z) {
    return act == Activation::relu ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
}

}  // namespace

TinyNet::TinyNet(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("TinyNet: need at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        check_layer(layers_[i]);
        if (i + 1 < layers_.size() && layers_[i].op.out_dim() != layers_[i + 1].op.in_dim()) {
            std::ostringstream os;
            os << "TinyNet: layer '" << layers_[i].name << "' output " << layers_[i].op.out_dim()
               << " does not feed layer '" << layers_[i + 1].name << "' input " << layers_[i + 1].op.in_dim();
            throw std::invalid_argument(os.str());
        }
    }
}

std::size_t TinyNet::layer_index(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i].name == name) return i;
    throw std::out_of_range("TinyNet: no layer named '" + name + "'");
}

void TinyNet::set_operator(std::size_t index, linop::Operator op) {
    auto& layer = layers_.at(index);
    if (op.in_dim() != layer.op.in_dim() || op.out_dim() != layer.op.out_dim())
        throw std::invalid_argument("TinyNet::set_operator: shape mismatch for layer '" + layer.name + "'");
    Layer candidate{layer.name, std::move(op), layer.activation};
    check_layer(candidate);
    layer = std::move(candidate);
}

Eigen::VectorXd TinyNet::logits(const Eigen::VectorXd& x) const {
    Eigen::VectorXd a = x;
    for (const auto& layer : layers_) a = activate(layer.activation, layer.op.apply(a));
    return a;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    const double m = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - m).exp().matrix();
    return e / e.sum();
}

Eigen::VectorXd one_hot(int label, int classes) {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(classes);
    t(label) = 1.0;
    return t;
}

Eigen::VectorXd TinyNet::forward(const Eigen::VectorXd& x) const { return softmax(logits(x)); }

int TinyNet::predict(const Eigen::VectorXd& x) const {
    Eigen::Index arg = 0;
    logits(x).maxCoeff(&arg);
    return static_cast<int>(arg);
}

Eigen::Index TinyNet::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.op.parameter_count() + l.op.out_dim();
    return n;
}

Eigen::Index TinyNet::parameter_offset(std::size_t index) const {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < index; ++i) n += layers_[i].op.parameter_count() + layers_[i].op.out_dim();
    return n;
}

Eigen::VectorXd TinyNet::parameters() const {
    Eigen::VectorXd p(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
        const auto n = l.op.parameter_count();
        p.segment(k, n) = l.op.parameters();
        k += n;
        p.segment(k, l.op.out_dim()) = l.op.bias();
        k += l.op.out_dim();
    }
    return p;
}

void TinyNet::set_parameters(const Eigen::VectorXd& params) {
    if (params.size() != parameter_count())
        throw std::invalid_argument("TinyNet::set_parameters: size mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
        const auto n = l.op.parameter_count();
        const auto m = l.op.out_dim();
        l.op = linop::Operator::affine(l.op.linear().with_parameters(params.segment(k, n)),
                                       params.segment(k + n, m));
        k += n + m;
    }
}

Layer dense_layer(std::string name, int in, int out, Activation act, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / in));
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = normal(rng);
    return {std::move(name), linop::Operator::affine(linop::Operator::dense(std::move(w)), Eigen::VectorXd::Zero(out)),
            act};
}

Layer conv1d_layer(std::string name, int channels_in, int channels_out, int kernel, int length,
                   linop::Padding padding, Activation act, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (channels_in * kernel)));
    std::vector<double> filter(static_cast<std::size_t>(channels_in) * channels_out * kernel);
    for (auto& v : filter) v = normal(rng);
    auto conv = linop::Operator::conv1d(channels_in, channels_out, kernel, std::move(filter), length, padding);
    const auto out = conv.out_dim();
    return {std::move(name), linop::Operator::affine(std::move(conv), Eigen::VectorXd::Zero(out)), act};
}

TinyNet make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need input and output sizes");
    std::mt19937_64 rng(seed);
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = i + 2 == dims.size();
        layers.push_back(dense_layer("fc" + std::to_string(i), dims[i], dims[i + 1],
                                     last ? Activation::identity : Activation::relu, rng));
    }
    return TinyNet(std::move(layers));
}

namespace {

double log_sum_exp(const Eigen::VectorXd& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

}  // namespace

double cross_entropy(const TinyNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
    const Eigen::VectorXd z = net.logits(x);
    const double lse = log_sum_exp(z);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i)
        if (target(i) != 0.0) loss -= target(i) * (z(i) - lse);
    return loss;
}

Gradients backward(const TinyNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& target) {
    const auto& layers = net.layers();
    const auto L = layers.size();
    std::vector<Eigen::VectorXd> inputs(L);
    std::vector<Eigen::VectorXd> pre(L);
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < L; ++l) {
        inputs[l] = a;
        pre[l] = layers[l].op.apply(a);
        a = activate(layers[l].activation, pre[l]);
    }
    const Eigen::VectorXd& z = a;
    const double lse = log_sum_exp(z);
    Gradients g;
    g.loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i)
        if (target(i) != 0.0) g.loss -= target(i) * (z(i) - lse);

    // d/dz of -sum_i t_i log softmax(z)_i
    Eigen::VectorXd delta = target.sum() * softmax(z) - target;
    g.params.resize(net.parameter_count());
    for (std::size_t l = L; l-- > 0;) {
        if (layers[l].activation == Activation::relu)
            delta = (pre[l].array() > 0.0).select(delta, 0.0);
        const auto off = net.parameter_offset(l);
        const auto n = layers[l].op.parameter_count();
        g.params.segment(off, n) = layers[l].op.parameter_gradient(inputs[l], delta);
        g.params.segment(off + n, layers[l].op.out_dim()) = delta;
        delta = layers[l].op.adjoint_apply(delta);
    }
    g.input = std::move(delta);
    return g;
}

std::vector<Example> hard_examples(const data::LabeledDataset& data) {
    std::vector<Example> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back({s.x, one_hot(s.label, data.num_classes())});
    return out;
}

BatchSampler::BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), cursor_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch && !order_.empty()) {
        if (cursor_ >= order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        out.push_back(order_[cursor_++]);
    }
    return out;
}

double learning_rate_at(const TrainConfig& cfg, int step) {
    if (cfg.schedule.decay_every <= 0) return cfg.lr;
    return cfg.lr * std::pow(cfg.schedule.gamma, (step - 1) / cfg.schedule.decay_every);
}

TrainResult train_examples(TinyNet net, const std::vector<Example>& examples, const TrainConfig& cfg,
                           const StepHook& hook) {
    if (examples.empty()) throw std::invalid_argument("train: no training examples");
    TrainResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(std::max(cfg.steps, 0)));
    BatchSampler sampler(examples.size(), cfg.seed);
    const auto batch = static_cast<std::size_t>(std::max(cfg.batch, 1));
    for (int step = 1; step <= cfg.steps; ++step) {
        const auto idx = sampler.next(batch);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.parameter_count());
        double loss = 0.0;
        for (auto i : idx) {
            auto g = backward(net, examples[i].x, examples[i].target);
            grad += g.params;
            loss += g.loss;
        }
        const double inv = 1.0 / static_cast<double>(idx.size());
        loss *= inv;
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "train: non-finite loss at step " << step;
            throw std::runtime_error(os.str());
        }
        result.loss_trace.push_back(loss);
        const double lr = learning_rate_at(cfg, step);
        if (lr != 0.0) {
            Eigen::VectorXd params = net.parameters();
            grad *= inv;
            if (cfg.weight_decay != 0.0) grad += cfg.weight_decay * params;
            net.set_parameters(params - lr * grad);
        }
        if (hook) hook(step, net);
    }
    result.net = std::move(net);
    return result;
}

TrainResult sgd_train(TinyNet net, const data::LabeledDataset& data, const TrainConfig& cfg) {
    const auto train = data.training();
    if (train.empty()) throw std::invalid_argument("sgd_train: empty train partition");
    return train_examples(std::move(net), hard_examples(train), cfg);
}

double accuracy(const TinyNet& net, const data::LabeledDataset& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : data) correct += net.predict(s.x) == s.label ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

Eigen::VectorXd project_l2(const Eigen::VectorXd& delta, double eps) {
    const double n = delta.norm();
    return n > eps ? Eigen::VectorXd(delta * (eps / n)) : delta;
}

// Direction that increases the attack objective.
Eigen::VectorXd attack_direction(const TinyNet& net, const Eigen::VectorXd& x, int y, const AttackConfig& cfg) {
    const int classes = net.num_classes();
    if (cfg.target_class) return -backward(net, x, one_hot(*cfg.target_class, classes)).input;
    return backward(net, x, one_hot(y, classes)).input;
}

bool attack_succeeded(const TinyNet& net, const Eigen::VectorXd& x, int y, const AttackConfig& cfg) {
    const int pred = net.predict(x);
    return cfg.target_class ? pred == *cfg.target_class : pred != y;
}

}  // namespace

Eigen::VectorXd pgd_attack(const TinyNet& net, const Eigen::VectorXd& x, int y, double eps,
                           const AttackConfig& cfg) {
    if (eps < 0.0) throw std::invalid_argument("pgd_attack: eps must be non-negative");
    if (eps == 0.0) return x;
    const double step = cfg.step_frac * eps;

    if (cfg.kind == AttackKind::pgd) {
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(x.size());
        for (int s = 0; s < cfg.steps; ++s) {
            const Eigen::VectorXd g = attack_direction(net, x + delta, y, cfg);
            const double gn = g.norm();
            if (gn == 0.0 || !std::isfinite(gn)) break;
            delta = project_l2(delta + (step / gn) * g, eps);
        }
        return x + delta;
    }

    // fgsm_restart: random nudge of norm 0.1 eps, one gradient, then walk
    // along it until the label flips or the ball boundary is reached.
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd last = x;
    const int walk = std::max(1, static_cast<int>(std::ceil(1.0 / cfg.step_frac)));
    for (int r = 0; r < std::max(cfg.restarts, 1); ++r) {
        Eigen::VectorXd noise(x.size());
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = normal(rng);
        Eigen::VectorXd delta = noise * (0.1 * eps / std::max(noise.norm(), 1e-300));
        const Eigen::VectorXd g = attack_direction(net, x + delta, y, cfg);
        const double gn = g.norm();
        if (gn == 0.0 || !std::isfinite(gn)) continue;
        const Eigen::VectorXd dir = g / gn;
        for (int t = 0; t < walk; ++t) {
            delta = project_l2(delta + step * dir, eps);
            last = x + delta;
            if (attack_succeeded(net, last, y, cfg)) return last;
        }
    }
    return last;
}

nlohmann::json to_json(const TinyNet& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers())
        layers.push_back({{"name", l.name},
                          {"activation", l.activation == Activation::relu ? "relu" : "identity"},
                          {"operator", linop::to_json(l.op)}});
    return {{"layers", std::move(layers)}};
}

TinyNet net_from_json(const nlohmann::json& j) {
    std::vector<Layer> layers;
    for (const auto& l : j.at("layers")) {
        const auto act = l.at("activation").get<std::string>();
        if (act != "relu" && act != "identity")
            throw std::invalid_argument("net json: unknown activation '" + act + "'");
        layers.push_back({l.at("name").get<std::string>(), linop::operator_from_json(l.at("operator")),
                          act == "relu" ? Activation::relu : Activation::identity});
    }
    return TinyNet(std::move(layers));
}

}  // namespace specshape::net
