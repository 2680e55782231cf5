#pragma once

// Spectral-norm projection of implicitly linear operators: stand-alone
// clipping, clipping interleaved with SGD, batch-norm style diagonal
// clipping and whole-spectrum grafting.

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

namespace specshape::clipper {

struct ClipConfig {
    double target = 1.0;
    int inner_iters = 1;          // gradient steps per deflation
    double learning_rate = 1.0;   // fraction of the exact line-search step
    int restart_iters = 10;       // PowerQR iterations from a fresh random vector
    int max_while_iters = 100;
    double slack = 1e-6;          // sigma_1 > target + slack keeps the loop running
    double powerqr_tol = 1e-9;
    bool fail_on_cap = true;

    /// Defaults per kind: lambda 1 with one step for dense, 0.9 with ten
    /// steps otherwise.
    static ClipConfig for_operator(const linop::Operator& op, double target);
};

void validate(const ClipConfig& cfg);

struct ClipResult {
    linop::Operator op;
    spectral::Spectrum top;  // final (sigma_1, v_1) estimate
    double sigma_before = 0.0;
    int while_iters = 0;
    bool reached_target = true;
};

/// Shrinks the largest singular value until it is at most cfg.target.
/// `tracked` replaces the initial PowerQR call with an existing estimate.
/// Throws std::runtime_error when max_while_iters runs out and
/// cfg.fail_on_cap is set.
ClipResult clip_spectral_norm(const linop::Operator& op, const ClipConfig& cfg, std::uint64_t seed,
                              const std::optional<spectral::Spectrum>& tracked = std::nullopt);

/// Uniformly rescales gamma so that max |gamma_i| / sqrt(var_i + eps) <= c.
linop::Operator clip_diagonal_norm(const linop::Operator& op, double c);

struct CompositionClipResult {
    std::vector<linop::Operator> children;
    spectral::Spectrum top;
    int while_iters = 0;
    bool reached_target = true;
};

/// Clips compose(children); the update is shared by every trainable child.
CompositionClipResult clip_composition(const std::vector<linop::Operator>& children, const ClipConfig& cfg,
                                       std::uint64_t seed);

struct GraftResult {
    linop::Operator op;
    double residual = 0.0;  // ||M' - M V S^-1 S' V^T||_F
};

/// Replaces the singular values of `op` by `new_values` (same order as the
/// oracle spectrum). Exact for dense operators; a least-squares fit over the
/// parameters on standard-basis probes otherwise.
GraftResult graft_spectrum(const linop::Operator& op, const Eigen::VectorXd& new_values);

struct FastClipConfig {
    int clip_every = 100;
    int per_step_powerqr_iters = 1;
    int clip_inner = 1;
    int clip_restart = 10;
    int clip_while_iters = 100;
    double learning_rate = 1.0;
    int warmup_powerqr_iters = 10;
};

void validate(const FastClipConfig& cfg);

struct FastClipResult {
    net::TinyNet net;
    std::vector<double> loss_trace;
    std::map<std::string, double> tracked_sigma;  // last PowerQR estimate per layer
};

/// SGD with tracked top singular pairs and periodic clipping of the named
/// layers to their targets.
FastClipResult fastclip_train(net::TinyNet model, const data::LabeledDataset& data,
                              const std::map<std::string, double>& layer_targets,
                              const net::TrainConfig& train_cfg, const FastClipConfig& fc_cfg,
                              std::uint64_t seed);

/// Job: {"operator": ..., "target": c, "config": {...}}.
/// Report: {"sigma_before", "sigma_after", "iterations", "reached_target", "operator"}.
nlohmann::json run_clip_job(const nlohmann::json& job, std::uint64_t seed);

nlohmann::json to_json(const ClipConfig& cfg);
ClipConfig clip_config_from_json(const nlohmann::json& j, double target);

}  // namespace specshape::clipper
