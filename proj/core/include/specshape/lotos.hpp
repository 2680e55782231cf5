#pragma once

// Layer-wise orthogonalization of ensemble members: the subspace similarity
// penalty, the ensemble training loss and the transferability rate.

#include "specshape/clipper.hpp"
#include "specshape/dataset.hpp"
#include "specshape/linop.hpp"
#include "specshape/net.hpp"
#include "specshape/spectral.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace specshape::lotos {

struct LotosConfig {
    int k = 1;
    std::vector<double> weights;      // non-increasing; empty means uniform 1/k
    double mal = 0.0;                 // maximum allowed length
    double lambda = 1.0;
    std::vector<std::string> layers;  // empty means the first layer only
};

void validate(const LotosConfig& cfg);
/// Resolved weights (uniform when none are configured).
std::vector<double> weights_of(const LotosConfig& cfg);

/// sum_i w_i (relu(||f(v'_i)|| - mal) + relu(||g(v_i)|| - mal)) where v are
/// f's and v' are g's top right singular vectors (columns of the spectra).
double subspace_similarity(const linop::Operator& f, const spectral::Spectrum& f_top, const linop::Operator& g,
                           const spectral::Spectrum& g_top, const LotosConfig& cfg);

/// Same, with the top-k vectors computed by PowerQR.
double subspace_similarity(const linop::Operator& f, const linop::Operator& g, const LotosConfig& cfg);

/// tracked[model][layer name] holds that layer's top-k right singular vectors.
using TrackedVectors = std::vector<std::map<std::string, spectral::Spectrum>>;

struct LotosLoss {
    double loss = 0.0;
    double mean_ce = 0.0;
    double penalty = 0.0;  // normalized sum of S_k terms
    std::vector<Eigen::VectorXd> grads;  // one per model, TinyNet::parameters() layout
    std::vector<std::string> warnings;   // skipped incompatible layer pairs
};

/// (1/N) sum_j CE_j + lambda / (M N (N-1)) sum_layers sum_{j != l} S_k(f_j, f_l).
/// Singular vectors are constants within the evaluation.
LotosLoss lotos_loss(const std::vector<net::TinyNet>& ensemble, const TrackedVectors& tracked,
                     const std::vector<net::Example>& batch, const LotosConfig& cfg);

/// Top-k vectors of the selected layers of every model, by PowerQR.
TrackedVectors track_layers(const std::vector<net::TinyNet>& ensemble, const LotosConfig& cfg, int iterations,
                            std::uint64_t seed);

struct EnsembleConfig {
    net::TrainConfig train;
    LotosConfig lotos;  // lambda = 0 trains the members independently
    std::map<std::string, double> clip_targets;
    clipper::FastClipConfig fastclip;
};

struct EnsembleResult {
    std::vector<net::TinyNet> models;
    std::vector<double> loss_trace;
    std::vector<double> penalty_trace;
};

/// SGD on a shared batch sequence with one warm-started PowerQR iteration
/// per step for tracked layers and periodic clipping of clip_targets.
EnsembleResult train_ensemble(std::vector<net::TinyNet> models, const data::LabeledDataset& data,
                              const EnsembleConfig& cfg, std::uint64_t seed);

/// P(target fooled | both correct and the attack fools the source).
/// nullopt when the conditioning set is empty. With cfg.target_class set the
/// targeted variant is used.
std::optional<double> transfer_rate(const net::TinyNet& source, const net::TinyNet& target,
                                    const data::LabeledDataset& eval_set, double eps,
                                    const net::AttackConfig& cfg);

}  // namespace specshape::lotos
