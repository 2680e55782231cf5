#pragma once

// Closed-form spectra of circular-padding convolutions with one input and m
// output channels (equivalently m inputs and one output).

#include "specshape/linop.hpp"

#include <Eigen/Dense>

#include <vector>

namespace specshape::circulant {

struct FilterBank {
    std::vector<std::vector<double>> filters;  // one filter per channel, all of length k
    int n = 0;                                 // vectorized input length

    [[nodiscard]] int channels() const { return static_cast<int>(filters.size()); }
    [[nodiscard]] int kernel() const { return filters.empty() ? 0 : static_cast<int>(filters.front().size()); }
};

/// Throws std::invalid_argument unless m >= 1, all filters share length k
/// and 1 <= k <= n.
void validate(const FilterBank& fb);

/// Autocorrelations c_i = sum_t f_t f_{t+i}, i = 0..k-1.
std::vector<double> autocorrelation(const std::vector<double>& filter);

/// The n singular values, indexed by the root of unity exponent j.
Eigen::VectorXd circulant_spectrum(const FilterBank& fb);

struct NormBounds {
    double lower = 0.0;  // sqrt(sum_l (sum_i f_i)^2)
    double upper = 0.0;  // sqrt(sum_l (sum_i |f_i|)^2)
};
NormBounds spectral_norm_bounds(const FilterBank& fb);

/// Number of values with no equal partner (tolerance 1e-9). Throws
/// std::logic_error if a value generated by a non-real root is unpaired.
int duplicate_structure(const FilterBank& fb);

/// Circular conv1d operator (1 input channel, m outputs) for the bank.
linop::Operator to_operator(const FilterBank& fb);

struct OrthoBoundReport {
    double epsilon = 0.0;
    double filter_norm = 0.0;
    int kernel = 0;
    int n = 0;
    std::vector<double> norms;   // ||A v'_p||, p = 1..n
    std::vector<double> bounds;  // sqrt(eps^2 + pi ||f||^2 T^2 p / n)
    std::vector<bool> holds;
    double min_slack = 0.0;
    double max_slack = 0.0;
    bool all_hold = false;
};

/// Checks ||A v'_p|| <= sqrt(eps^2 + pi ||f||^2 T^2 p/n) for every p, where v'
/// are B's right singular vectors ordered by decreasing singular value.
/// Throws std::invalid_argument if ||A v'_1|| > eps.
OrthoBoundReport ortho_bound_check(const linop::Operator& A, const linop::Operator& B, double eps);

/// One projection of A's filter onto {f : A_f v = 0} (least-norm change).
linop::Operator project_out_response(const linop::Operator& A, const Eigen::VectorXd& v);

}  // namespace specshape::circulant
