#pragma once

#include "specshape/linop.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>

namespace specshape::spectral {

/// Singular values in descending order with their right singular vectors as
/// columns of `vectors`.
struct Spectrum {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    int iterations_used = 0;
    bool converged = false;

    [[nodiscard]] Eigen::Index size() const { return values.size(); }
    [[nodiscard]] double top() const { return values.size() ? values(0) : 0.0; }
    [[nodiscard]] Eigen::VectorXd top_vector() const { return vectors.col(0); }
};

struct PowerQRConfig {
    int k = 1;
    int iterations = 100;
    double shift = 1.0;
    std::optional<Eigen::MatrixXd> warm_start;
    double convergence_tol = 1e-9;
};

struct QRResult {
    Eigen::MatrixXd Q;  // n x k, orthonormal columns
    Eigen::MatrixXd R;  // k x k, upper triangular, non-negative diagonal
};

/// Thin Householder QR. Throws std::domain_error when a column is
/// (numerically) dependent on the previous ones.
QRResult qr_decompose(const Eigen::MatrixXd& X);

/// Shifted subspace iteration on M^T M + shift I using only apply and
/// adjoint_apply of the operator.
Spectrum power_qr(const linop::Operator& op, const PowerQRConfig& cfg, std::uint64_t seed);

/// Dense SVD of the materialized operator; returns min(in, out) values.
Spectrum svd_oracle(const linop::Operator& op,
                    std::size_t cap = linop::kDefaultMaterializeCap);

nlohmann::json to_json(const Spectrum& s);
Spectrum spectrum_from_json(const nlohmann::json& j);

}  // namespace specshape::spectral
