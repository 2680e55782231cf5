#include "specshape/spectral.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace specshape::spectral {

QRResult qr_decompose(const Eigen::MatrixXd& X) {
    const auto n = X.rows();
    const auto k = X.cols();
    if (k == 0 || k > n) throw std::invalid_argument("qr_decompose: need 1 <= cols <= rows");

    Eigen::MatrixXd A = X;
    std::vector<Eigen::VectorXd> reflectors;
    std::vector<double> taus;
    reflectors.reserve(static_cast<std::size_t>(k));
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());

    for (Eigen::Index j = 0; j < k; ++j) {
        auto x = A.col(j).tail(n - j);
        const double norm = x.norm();
        if (norm < 1e-14 * scale) {
            std::ostringstream os;
            os << "qr_decompose: rank deficient at column " << j << " (pivot magnitude " << norm << ")";
            throw std::domain_error(os.str());
        }
        // v = x + sign(x0)|x| e0, H = I - tau v v^T maps x to -sign(x0)|x| e0
        const double alpha = x(0) >= 0.0 ? -norm : norm;
        Eigen::VectorXd v = x;
        v(0) -= alpha;
        const double vnorm2 = v.squaredNorm();
        const double tau = vnorm2 > 0.0 ? 2.0 / vnorm2 : 0.0;
        if (tau != 0.0) {
            auto block = A.bottomRightCorner(n - j, k - j);
            Eigen::RowVectorXd w = v.transpose() * block;
            block.noalias() -= tau * v * w;
        }
        reflectors.push_back(std::move(v));
        taus.push_back(tau);
    }

    Eigen::MatrixXd R = A.topRows(k).triangularView<Eigen::Upper>();
    // Q = H_0 ... H_{k-1} [I; 0]
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(n, k);
    for (Eigen::Index j = k; j-- > 0;) {
        const auto& v = reflectors[static_cast<std::size_t>(j)];
        const double tau = taus[static_cast<std::size_t>(j)];
        if (tau == 0.0) continue;
        auto block = Q.bottomRows(n - j);
        Eigen::RowVectorXd w = v.transpose() * block;
        block.noalias() -= tau * v * w;
    }
    // sign convention: non-negative diagonal of R
    for (Eigen::Index j = 0; j < k; ++j) {
        if (R(j, j) < 0.0) {
            R.row(j) *= -1.0;
            Q.col(j) *= -1.0;
        }
    }
    return {std::move(Q), std::move(R)};
}

namespace {

Eigen::MatrixXd gram_apply(const linop::Operator& op, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd out(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c)
        out.col(c) = op.adjoint_apply(op.apply_linear(X.col(c)));
    return out;
}

Spectrum sorted(Eigen::VectorXd values, Eigen::MatrixXd vectors, int iterations, bool converged) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return values(a) > values(b); });
    Spectrum s;
    s.values.resize(values.size());
    s.vectors.resize(vectors.rows(), vectors.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
        s.values(static_cast<Eigen::Index>(i)) = values(order[i]);
        s.vectors.col(static_cast<Eigen::Index>(i)) = vectors.col(order[i]);
    }
    s.iterations_used = iterations;
    s.converged = converged;
    return s;
}

}  // namespace

Spectrum power_qr(const linop::Operator& op, const PowerQRConfig& cfg, std::uint64_t seed) {
    const auto n = op.in_dim();
    if (cfg.k < 1 || cfg.iterations < 1 || cfg.shift < 0.0)
        throw std::invalid_argument("power_qr: need k >= 1, iterations >= 1, shift >= 0");
    if (cfg.k > std::min(n, op.out_dim())) {
        std::ostringstream os;
        os << "power_qr: k = " << cfg.k << " exceeds min(in_dim, out_dim) = " << std::min(n, op.out_dim());
        throw std::invalid_argument(os.str());
    }

    Eigen::MatrixXd X;
    if (cfg.warm_start && cfg.warm_start->cols() >= cfg.k && cfg.warm_start->rows() == n) {
        X = cfg.warm_start->leftCols(cfg.k);
    } else {
        if (cfg.warm_start)
            throw std::invalid_argument("power_qr: warm start has the wrong shape");
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        X.resize(n, cfg.k);
        for (Eigen::Index c = 0; c < X.cols(); ++c)
            for (Eigen::Index r = 0; r < X.rows(); ++r) X(r, c) = normal(rng);
    }
    X = qr_decompose(X).Q;

    Eigen::VectorXd diag_prev;
    Eigen::VectorXd diag;
    bool converged = false;
    int it = 0;
    while (it < cfg.iterations) {
        ++it;
        Eigen::MatrixXd Y = cfg.shift * X + gram_apply(op, X);
        if (!Y.allFinite()) {
            std::ostringstream os;
            os << "power_qr: non-finite values at iteration " << it;
            throw std::domain_error(os.str());
        }
        if (it == 1) {
            // Rayleigh quotients of the starting block serve as the previous estimate
            diag_prev = (X.array() * Y.array()).colwise().sum().transpose();
        }
        auto qr = qr_decompose(Y);
        X = std::move(qr.Q);
        diag = qr.R.diagonal();
        const double rel = ((diag - diag_prev).array().abs() /
                            diag.array().abs().max(std::numeric_limits<double>::min()))
                               .maxCoeff();
        diag_prev = diag;
        if (rel < cfg.convergence_tol) {
            converged = true;
            break;
        }
    }
    Eigen::VectorXd values = (diag.array() - cfg.shift).max(0.0).sqrt().matrix();
    return sorted(std::move(values), std::move(X), it, converged);
}

Spectrum svd_oracle(const linop::Operator& op, std::size_t cap) {
    const Eigen::MatrixXd M = linop::materialize(op, cap);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinV);
    Spectrum s;
    s.values = svd.singularValues();
    s.vectors = svd.matrixV().leftCols(s.values.size());
    s.iterations_used = 0;
    s.converged = true;
    return s;
}

nlohmann::json to_json(const Spectrum& s) {
    nlohmann::json vectors = nlohmann::json::array();
    for (Eigen::Index c = 0; c < s.vectors.cols(); ++c)
        vectors.push_back(std::vector<double>(s.vectors.col(c).data(),
                                              s.vectors.col(c).data() + s.vectors.rows()));
    return {{"values", std::vector<double>(s.values.data(), s.values.data() + s.values.size())},
            {"vectors", std::move(vectors)},
            {"iterations_used", s.iterations_used},
            {"converged", s.converged}};
}

Spectrum spectrum_from_json(const nlohmann::json& j) {
    Spectrum s;
    auto values = j.at("values").get<std::vector<double>>();
    s.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    const auto& vecs = j.at("vectors");
    if (vecs.size() != values.size()) throw std::invalid_argument("spectrum json: vector count mismatch");
    if (!vecs.empty()) {
        const auto rows = static_cast<Eigen::Index>(vecs.at(0).size());
        s.vectors.resize(rows, static_cast<Eigen::Index>(vecs.size()));
        for (std::size_t c = 0; c < vecs.size(); ++c) {
            auto col = vecs.at(c).get<std::vector<double>>();
            if (static_cast<Eigen::Index>(col.size()) != rows)
                throw std::invalid_argument("spectrum json: ragged vectors");
            s.vectors.col(static_cast<Eigen::Index>(c)) = Eigen::Map<Eigen::VectorXd>(col.data(), rows);
        }
    }
    s.iterations_used = j.value("iterations_used", 0);
    s.converged = j.value("converged", false);
    return s;
}

}  // namespace specshape::spectral
