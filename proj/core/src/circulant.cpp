#include "specshape/circulant.hpp"

#include "specshape/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace specshape::circulant {

void validate(const FilterBank& fb) {
    if (fb.filters.empty()) throw std::invalid_argument("filter bank: need at least one channel");
    const auto k = fb.filters.front().size();
    if (k == 0) throw std::invalid_argument("filter bank: empty filter");
    for (const auto& f : fb.filters)
        if (f.size() != k) throw std::invalid_argument("filter bank: channels differ in kernel length");
    if (fb.n < 1 || static_cast<int>(k) > fb.n) {
        std::ostringstream os;
        os << "filter bank: kernel length " << k << " must not exceed n = " << fb.n;
        throw std::invalid_argument(os.str());
    }
}

std::vector<double> autocorrelation(const std::vector<double>& filter) {
    const auto k = filter.size();
    std::vector<double> c(k, 0.0);
    for (std::size_t lag = 0; lag < k; ++lag)
        for (std::size_t t = 0; t + lag < k; ++t) c[lag] += filter[t] * filter[t + lag];
    return c;
}

Eigen::VectorXd circulant_spectrum(const FilterBank& fb) {
    validate(fb);
    const int n = fb.n;
    const int k = fb.kernel();
    std::vector<double> cos_table(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) cos_table[static_cast<std::size_t>(r)] = std::cos(2.0 * std::numbers::pi * r / n);

    Eigen::VectorXd squared = Eigen::VectorXd::Zero(n);
    for (const auto& f : fb.filters) {
        const auto c = autocorrelation(f);
        for (int j = 0; j < n; ++j) {
            double s = c[0];
            for (int i = 1; i < k; ++i)
                s += 2.0 * c[static_cast<std::size_t>(i)] *
                     cos_table[static_cast<std::size_t>((static_cast<long>(j) * i) % n)];
            squared(j) += s;
        }
    }
    return squared.array().max(0.0).sqrt().matrix();
}

NormBounds spectral_norm_bounds(const FilterBank& fb) {
    validate(fb);
    double lower = 0.0;
    double upper = 0.0;
    for (const auto& f : fb.filters) {
        double sum = 0.0;
        double abs_sum = 0.0;
        for (double v : f) {
            sum += v;
            abs_sum += std::abs(v);
        }
        lower += sum * sum;
        upper += abs_sum * abs_sum;
    }
    return {std::sqrt(lower), std::sqrt(upper)};
}

int duplicate_structure(const FilterBank& fb) {
    constexpr double tol = 1e-9;
    const auto values = circulant_spectrum(fb);
    const int n = fb.n;
    auto has_partner = [&](int j) {
        for (int i = 0; i < n; ++i)
            if (i != j && std::abs(values(i) - values(j)) <= tol) return true;
        return false;
    };
    int singletons = 0;
    for (int j = 0; j < n; ++j) {
        if (has_partner(j)) continue;
        const bool real_root = (j == 0) || (2 * j == n);
        if (!real_root) {
            std::ostringstream os;
            os << "duplicate_structure: value from non-real root j = " << j << " has no duplicate";
            throw std::logic_error(os.str());
        }
        ++singletons;
    }
    return singletons;
}

linop::Operator to_operator(const FilterBank& fb) {
    validate(fb);
    std::vector<double> flat;
    for (const auto& f : fb.filters) flat.insert(flat.end(), f.begin(), f.end());
    return linop::Operator::conv1d(1, fb.channels(), fb.kernel(), std::move(flat), fb.n,
                                   linop::Padding::circular);
}

namespace {

void require_single_channel_circular(const linop::Operator& op, const char* name) {
    if (op.kind() != linop::Kind::conv1d || op.padding() != linop::Padding::circular ||
        op.filter().channels_in != 1 || op.filter().channels_out != 1 || op.stride()[0] != 1)
        throw std::invalid_argument(std::string("ortho_bound_check: ") + name +
                                    " must be a single-channel circular conv1d with stride 1");
}

}  // namespace

OrthoBoundReport ortho_bound_check(const linop::Operator& A, const linop::Operator& B, double eps) {
    require_single_channel_circular(A, "A");
    require_single_channel_circular(B, "B");
    if (A.in_dim() != B.in_dim()) throw std::invalid_argument("ortho_bound_check: A and B differ in n");

    const auto spectrum_b = spectral::svd_oracle(B);
    const auto& f = A.filter().values;
    OrthoBoundReport r;
    r.epsilon = eps;
    r.n = static_cast<int>(A.in_dim());
    r.kernel = static_cast<int>(f.size());
    double f2 = 0.0;
    for (double v : f) f2 += v * v;
    r.filter_norm = std::sqrt(f2);

    const double first = A.apply_linear(spectrum_b.vectors.col(0)).norm();
    if (first > eps + 1e-12) {
        std::ostringstream os;
        os << "ortho_bound_check: precondition violated, ||A v'_1|| = " << first << " > eps = " << eps;
        throw std::invalid_argument(os.str());
    }

    const double T = r.kernel;
    r.min_slack = std::numeric_limits<double>::infinity();
    r.max_slack = -std::numeric_limits<double>::infinity();
    r.all_hold = true;
    for (Eigen::Index p = 0; p < spectrum_b.vectors.cols(); ++p) {
        const double norm = A.apply_linear(spectrum_b.vectors.col(p)).norm();
        const double bound = std::sqrt(eps * eps + std::numbers::pi * f2 * T * T *
                                                       static_cast<double>(p + 1) / r.n);
        const double slack = bound - norm;
        r.norms.push_back(norm);
        r.bounds.push_back(bound);
        r.holds.push_back(slack >= 0.0);
        r.min_slack = std::min(r.min_slack, slack);
        r.max_slack = std::max(r.max_slack, slack);
        r.all_hold = r.all_hold && slack >= 0.0;
    }
    return r;
}

linop::Operator project_out_response(const linop::Operator& A, const Eigen::VectorXd& v) {
    const auto p = A.parameter_count();
    Eigen::MatrixXd K(A.out_dim(), p);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
    for (Eigen::Index t = 0; t < p; ++t) {
        e(t) = 1.0;
        K.col(t) = A.parameter_directional(v, e);
        e(t) = 0.0;
    }
    const Eigen::VectorXd params = A.parameters();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    const Eigen::VectorXd delta = cod.solve(K * params);
    return A.with_parameters(params - delta);
}

}  // namespace specshape::circulant
