#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace oracle {

namespace {

using specshape::linop::Padding;

// Padded coordinate -> source coordinate, written as numpy.pad would fill it.
int padded_source(int i, int n, Padding padding) {
    if (i >= 0 && i < n) return i;
    switch (padding) {
    case Padding::zeros: return -1;
    case Padding::circular: return ((i % n) + n) % n;
    case Padding::replicate: return std::clamp(i, 0, n - 1);
    case Padding::reflect:
        if (n == 1) return 0;
        if (i < 0) return -i;
        return 2 * (n - 1) - i;
    }
    return -1;
}

}  // namespace

Eigen::MatrixXd conv_matrix(const specshape::linop::ConvFilter& f, int height, int width, Padding padding,
                            int stride_h, int stride_w) {
    const int ph = f.kernel_h / 2;
    const int pw = f.kernel_w / 2;
    const int out_h = (height + stride_h - 1) / stride_h;
    const int out_w = (width + stride_w - 1) / stride_w;
    const int in_dim = f.channels_in * height * width;
    const int out_dim = f.channels_out * out_h * out_w;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out_dim, in_dim);

    // one unit input at a time through an explicitly padded copy
    const int hp = height + f.kernel_h - 1;
    const int wp = width + f.kernel_w - 1;
    std::vector<double> padded(static_cast<std::size_t>(f.channels_in) * hp * wp);
    for (int col = 0; col < in_dim; ++col) {
        for (int c = 0; c < f.channels_in; ++c)
            for (int a = 0; a < hp; ++a)
                for (int b = 0; b < wp; ++b) {
                    const int sa = padded_source(a - ph, height, padding);
                    const int sb = padded_source(b - pw, width, padding);
                    const int src = (sa < 0 || sb < 0) ? -1 : (c * height + sa) * width + sb;
                    padded[(static_cast<std::size_t>(c) * hp + a) * wp + b] = src == col ? 1.0 : 0.0;
                }
        for (int o = 0; o < f.channels_out; ++o)
            for (int oh = 0; oh < out_h; ++oh)
                for (int ow = 0; ow < out_w; ++ow) {
                    double acc = 0.0;
                    for (int c = 0; c < f.channels_in; ++c)
                        for (int th = 0; th < f.kernel_h; ++th)
                            for (int tw = 0; tw < f.kernel_w; ++tw) {
                                const double w =
                                    f.values[((static_cast<std::size_t>(o) * f.channels_in + c) * f.kernel_h + th) *
                                                 f.kernel_w + tw];
                                acc += w * padded[(static_cast<std::size_t>(c) * hp + oh * stride_h + th) * wp +
                                                  ow * stride_w + tw];
                            }
                    m((o * out_h + oh) * out_w + ow, col) = acc;
                }
    }
    return m;
}

Eigen::MatrixXd circulant(const std::vector<double>& first_row) {
    const int n = static_cast<int>(first_row.size());
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = first_row[static_cast<std::size_t>(((j - i) % n + n) % n)];
    return m;
}

void jacobi_eigen(Eigen::MatrixXd a, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
    values.resize(n);
    vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
}

Eigen::VectorXd jacobi_singular_values(const Eigen::MatrixXd& m) {
    const bool wide = m.cols() > m.rows();
    const Eigen::MatrixXd gram = wide ? Eigen::MatrixXd(m * m.transpose()) : Eigen::MatrixXd(m.transpose() * m);
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    jacobi_eigen(gram, values, vectors);
    return values.cwiseMax(0.0).cwiseSqrt();
}

Eigen::VectorXd dft_filter_bank_values(const std::vector<std::vector<double>>& filters, int n) {
    Eigen::VectorXd out(n);
    for (int j = 0; j < n; ++j) {
        double power = 0.0;
        for (const auto& f : filters) {
            std::complex<double> acc = 0.0;
            for (std::size_t t = 0; t < f.size(); ++t)
                acc += f[t] * std::polar(1.0, 2.0 * std::numbers::pi * j * static_cast<double>(t) / n);
            power += std::norm(acc);
        }
        out(j) = std::sqrt(power);
    }
    std::sort(out.data(), out.data() + n, std::greater<>());
    return out;
}

double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& direction, double h) {
    return (f(x + h * direction) - f(x - h * direction)) / (2.0 * h);
}

double pairwise_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
    double wins = 0.0;
    for (double p : positives)
        for (double q : negatives) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
    return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

double exhaustive_threshold_accuracy(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<double> cuts;
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    cuts.push_back(sorted.front() - 1.0);
    cuts.push_back(sorted.back() + 1.0);
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
        if (sorted[i] < sorted[i + 1]) cuts.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    double best = 0.0;
    for (double t : cuts) {
        int above = 0;
        int below = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            above += (scores[i] > t) == (labels[i] == 1);
            below += (scores[i] < t) == (labels[i] == 1);
        }
        best = std::max({best, static_cast<double>(above), static_cast<double>(below)});
    }
    return best / static_cast<double>(scores.size());
}

double kl_divergence(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (q(i) <= 0.0) continue;
        if (p(i) <= 0.0) return std::numeric_limits<double>::infinity();
        kl += q(i) * std::log(q(i) / p(i));
    }
    return kl;
}

double kl_sampled_margin(const Eigen::VectorXd& base, const Eigen::VectorXd& scores, double c, double best, long count,
                         double window, std::mt19937_64& rng) {
    const Eigen::Index n = scores.size();
    Eigen::Index hi = 0;
    Eigen::Index lo = 0;
    scores.maxCoeff(&hi);
    scores.minCoeff(&lo);
    std::exponential_distribution<double> expo(1.0);
    double margin = std::numeric_limits<double>::infinity();
    Eigen::VectorXd q(n);
    for (long accepted = 0; accepted < count;) {
        for (Eigen::Index i = 0; i < n; ++i) q(i) = expo(rng);
        q /= q.sum();
        const double m = q.dot(scores);
        if (std::abs(m - c) > window) continue;
        const Eigen::Index v = m < c ? hi : lo;
        const double t = (c - m) / (scores(v) - m);
        q *= 1.0 - t;
        q(v) += t;
        margin = std::min(margin, kl_divergence(q, base) - best);
        ++accepted;
    }
    return margin;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

Eigen::VectorXd random_unit(Eigen::Index n, std::mt19937_64& rng) {
    Eigen::VectorXd v = random_vector(n, rng);
    return v / v.norm();
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

}  // namespace oracle
