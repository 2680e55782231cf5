#include "specshape/linop.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace specshape::linop {

namespace {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(" << s.channels << "," << s.height << "," << s.width << ")";
    return os.str();
}

void require_size(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want) {
        std::ostringstream os;
        os << what << ": expected vector of length " << want << ", got " << got;
        throw std::invalid_argument(os.str());
    }
}

// Source coordinate for a padded index, or -1 when the tap reads padding.
int source_index(int i, int n, Padding padding) {
    if (i >= 0 && i < n) return i;
    switch (padding) {
    case Padding::zeros:
        return -1;
    case Padding::circular:
        return ((i % n) + n) % n;
    case Padding::replicate:
        return i < 0 ? 0 : n - 1;
    case Padding::reflect:
        if (n == 1) return 0;
        // period 2(n-1) mirror without repeating the edge sample
        {
            const int period = 2 * (n - 1);
            int r = ((i % period) + period) % period;
            return r < n ? r : period - r;
        }
    }
    return -1;
}

}  // namespace

struct Operator::Impl {
    struct Dense {
        Eigen::MatrixXd weight;
    };
    struct Conv {
        Kind kind;
        ConvFilter filter;
        Padding padding;
        std::array<int, 2> stride;
        // taps[p * kernel_size + t] = source spatial index, -1 for zero padding
        std::vector<int> taps;
        int out_spatial;
        int in_spatial;
    };
    struct Diagonal {
        Eigen::VectorXd gamma, mean, variance;
        double eps;
    };
    struct Composition {
        std::vector<Operator> children;
    };
    struct Affine {
        std::vector<Operator> inner;  // exactly one
        Eigen::VectorXd bias;
    };

    Kind kind;
    Shape in, out;
    std::variant<Dense, Conv, Diagonal, Composition, Affine> payload;
};

Operator::Operator(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

std::string to_string(Kind kind) {
    switch (kind) {
    case Kind::dense: return "dense";
    case Kind::conv1d: return "conv1d";
    case Kind::conv2d: return "conv2d";
    case Kind::diagonal: return "diagonal";
    case Kind::composition: return "composition";
    case Kind::affine: return "affine";
    }
    return "unknown";
}

std::string to_string(Padding padding) {
    switch (padding) {
    case Padding::circular: return "circular";
    case Padding::zeros: return "zeros";
    case Padding::reflect: return "reflect";
    case Padding::replicate: return "replicate";
    }
    return "unknown";
}

Padding padding_from_string(const std::string& name) {
    if (name == "circular") return Padding::circular;
    if (name == "zeros") return Padding::zeros;
    if (name == "reflect") return Padding::reflect;
    if (name == "replicate") return Padding::replicate;
    throw std::invalid_argument("unknown padding mode '" + name + "'");
}

Operator Operator::dense(Eigen::MatrixXd weight) {
    if (weight.rows() == 0 || weight.cols() == 0)
        throw std::invalid_argument("dense operator needs a non-empty weight");
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::dense;
    impl->in = Shape{static_cast<int>(weight.cols()), 1, 1};
    impl->out = Shape{static_cast<int>(weight.rows()), 1, 1};
    impl->payload = Impl::Dense{std::move(weight)};
    return Operator(std::move(impl));
}

Operator Operator::identity(Eigen::Index n) {
    return dense(Eigen::MatrixXd::Identity(n, n));
}

namespace {

Operator::Impl make_conv(Kind kind, ConvFilter filter, int height, int width,
                         Padding padding, int stride_h, int stride_w) {
    if (filter.channels_in < 1 || filter.channels_out < 1 || filter.kernel_h < 1 ||
        filter.kernel_w < 1)
        throw std::invalid_argument("convolution: channel and kernel extents must be >= 1");
    if (stride_h < 1 || stride_w < 1)
        throw std::invalid_argument("convolution: strides must be positive");
    if (height < 1 || width < 1)
        throw std::invalid_argument("convolution: spatial extents must be positive");
    const std::size_t expected = static_cast<std::size_t>(filter.channels_in) *
                                 filter.channels_out * filter.kernel_h * filter.kernel_w;
    if (filter.values.size() != expected) {
        std::ostringstream os;
        os << "convolution: filter has " << filter.values.size() << " values, expected "
           << expected;
        throw std::invalid_argument(os.str());
    }
    const int pad_h = filter.kernel_h / 2;
    const int pad_w = filter.kernel_w / 2;
    if (padding == Padding::reflect &&
        (pad_h > height - 1 || pad_w > width - 1 ||
         filter.kernel_h - 1 - pad_h > height - 1 || filter.kernel_w - 1 - pad_w > width - 1))
        throw std::invalid_argument("convolution: reflect padding wider than the input");

    const int out_h = (height - 1) / stride_h + 1;
    const int out_w = (width - 1) / stride_w + 1;
    const int ksize = filter.kernel_h * filter.kernel_w;

    Operator::Impl impl;
    impl.kind = kind;
    impl.in = Shape{filter.channels_in, height, width};
    impl.out = Shape{filter.channels_out, out_h, out_w};

    Operator::Impl::Conv conv;
    conv.kind = kind;
    conv.padding = padding;
    conv.stride = {stride_h, stride_w};
    conv.out_spatial = out_h * out_w;
    conv.in_spatial = height * width;
    conv.taps.resize(static_cast<std::size_t>(conv.out_spatial) * ksize);
    for (int oh = 0; oh < out_h; ++oh) {
        for (int ow = 0; ow < out_w; ++ow) {
            const int p = oh * out_w + ow;
            for (int th = 0; th < filter.kernel_h; ++th) {
                const int ih = source_index(oh * stride_h + th - pad_h, height, padding);
                for (int tw = 0; tw < filter.kernel_w; ++tw) {
                    const int iw = source_index(ow * stride_w + tw - pad_w, width, padding);
                    const int src = (ih < 0 || iw < 0) ? -1 : ih * width + iw;
                    conv.taps[static_cast<std::size_t>(p) * ksize + th * filter.kernel_w + tw] = src;
                }
            }
        }
    }
    conv.filter = std::move(filter);
    impl.payload = std::move(conv);
    return impl;
}

}  // namespace

Operator Operator::conv1d(int channels_in, int channels_out, int kernel,
                          std::vector<double> filter, int length, Padding padding,
                          int stride) {
    ConvFilter f{channels_in, channels_out, kernel, 1, std::move(filter)};
    return Operator(std::make_shared<Impl>(
        make_conv(Kind::conv1d, std::move(f), length, 1, padding, stride, 1)));
}

Operator Operator::conv2d(int channels_in, int channels_out, int kernel_h, int kernel_w,
                          std::vector<double> filter, int height, int width,
                          Padding padding, int stride_h, int stride_w) {
    ConvFilter f{channels_in, channels_out, kernel_h, kernel_w, std::move(filter)};
    return Operator(std::make_shared<Impl>(
        make_conv(Kind::conv2d, std::move(f), height, width, padding, stride_h, stride_w)));
}

Operator Operator::diagonal(Eigen::VectorXd gamma, Eigen::VectorXd mean,
                            Eigen::VectorXd variance, double eps) {
    const auto n = gamma.size();
    if (n == 0 || mean.size() != n || variance.size() != n)
        throw std::invalid_argument("diagonal: gamma, mean and variance must share a non-zero length");
    if (eps < 0.0 || (variance.array() + eps <= 0.0).any())
        throw std::invalid_argument("diagonal: var + eps must be positive");
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::diagonal;
    impl->in = impl->out = Shape{static_cast<int>(n), 1, 1};
    impl->payload = Impl::Diagonal{std::move(gamma), std::move(mean), std::move(variance), eps};
    return Operator(std::move(impl));
}

Operator Operator::affine(Operator linear, Eigen::VectorXd bias) {
    require_size(bias.size(), linear.out_dim(), "affine bias");
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::affine;
    impl->in = linear.input_shape();
    impl->out = linear.output_shape();
    impl->payload = Impl::Affine{{std::move(linear)}, std::move(bias)};
    return Operator(std::move(impl));
}

Operator Operator::composition(std::vector<Operator> ops) {
    if (ops.empty()) throw std::invalid_argument("compose: empty operator list");
    for (std::size_t i = 0; i + 1 < ops.size(); ++i) {
        if (ops[i].in_dim() != ops[i + 1].out_dim()) {
            std::ostringstream os;
            os << "compose: shape chain broken between operator " << i << " (input "
               << shape_str(ops[i].input_shape()) << ") and operator " << i + 1
               << " (output " << shape_str(ops[i + 1].output_shape()) << ")";
            throw std::invalid_argument(os.str());
        }
    }
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::composition;
    impl->in = ops.back().input_shape();
    impl->out = ops.front().output_shape();
    impl->payload = Impl::Composition{std::move(ops)};
    return Operator(std::move(impl));
}

Operator compose(std::vector<Operator> ops) { return Operator::composition(std::move(ops)); }

Kind Operator::kind() const { return impl_->kind; }
const Shape& Operator::input_shape() const { return impl_->in; }
const Shape& Operator::output_shape() const { return impl_->out; }

namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

Eigen::VectorXd conv_forward(const Operator::Impl::Conv& c, const Eigen::VectorXd& x,
                             const std::vector<double>& filter) {
    const auto& f = c.filter;
    const int ksize = f.kernel_h * f.kernel_w;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.channels_out) * c.out_spatial);
    for (int o = 0; o < f.channels_out; ++o) {
        for (int ci = 0; ci < f.channels_in; ++ci) {
            const double* w = filter.data() + (static_cast<std::size_t>(o) * f.channels_in + ci) * ksize;
            const double* xin = x.data() + static_cast<std::size_t>(ci) * c.in_spatial;
            double* yout = y.data() + static_cast<std::size_t>(o) * c.out_spatial;
            for (int p = 0; p < c.out_spatial; ++p) {
                const int* tap = c.taps.data() + static_cast<std::size_t>(p) * ksize;
                double acc = 0.0;
                for (int t = 0; t < ksize; ++t)
                    if (tap[t] >= 0) acc += w[t] * xin[tap[t]];
                yout[p] += acc;
            }
        }
    }
    return y;
}

Eigen::VectorXd conv_adjoint(const Operator::Impl::Conv& c, const Eigen::VectorXd& y) {
    // Scatter through the tap table: identical to zero-insertion followed by
    // correlation with the flipped filter, and exact for every padding mode.
    const auto& f = c.filter;
    const int ksize = f.kernel_h * f.kernel_w;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.channels_in) * c.in_spatial);
    for (int o = 0; o < f.channels_out; ++o) {
        const double* yout = y.data() + static_cast<std::size_t>(o) * c.out_spatial;
        for (int ci = 0; ci < f.channels_in; ++ci) {
            const double* w = f.values.data() + (static_cast<std::size_t>(o) * f.channels_in + ci) * ksize;
            double* xin = x.data() + static_cast<std::size_t>(ci) * c.in_spatial;
            for (int p = 0; p < c.out_spatial; ++p) {
                const int* tap = c.taps.data() + static_cast<std::size_t>(p) * ksize;
                const double g = yout[p];
                if (g == 0.0) continue;
                for (int t = 0; t < ksize; ++t)
                    if (tap[t] >= 0) xin[tap[t]] += w[t] * g;
            }
        }
    }
    return x;
}

Eigen::VectorXd conv_param_grad(const Operator::Impl::Conv& c, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& g) {
    const auto& f = c.filter;
    const int ksize = f.kernel_h * f.kernel_w;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.values.size()));
    for (int o = 0; o < f.channels_out; ++o) {
        const double* gout = g.data() + static_cast<std::size_t>(o) * c.out_spatial;
        for (int ci = 0; ci < f.channels_in; ++ci) {
            double* dw = grad.data() + (static_cast<std::size_t>(o) * f.channels_in + ci) * ksize;
            const double* xin = x.data() + static_cast<std::size_t>(ci) * c.in_spatial;
            for (int p = 0; p < c.out_spatial; ++p) {
                const int* tap = c.taps.data() + static_cast<std::size_t>(p) * ksize;
                const double gp = gout[p];
                if (gp == 0.0) continue;
                for (int t = 0; t < ksize; ++t)
                    if (tap[t] >= 0) dw[t] += gp * xin[tap[t]];
            }
        }
    }
    return grad;
}

Eigen::VectorXd gains(const Operator::Impl::Diagonal& d) {
    return (d.gamma.array() / (d.variance.array() + d.eps).sqrt()).matrix();
}

}  // namespace

Eigen::VectorXd Operator::apply_linear(const Eigen::VectorXd& x) const {
    require_size(x.size(), in_dim(), "apply");
    return std::visit(
        overloaded{
            [&](const Impl::Dense& d) -> Eigen::VectorXd { return d.weight * x; },
            [&](const Impl::Conv& c) -> Eigen::VectorXd { return conv_forward(c, x, c.filter.values); },
            [&](const Impl::Diagonal& d) -> Eigen::VectorXd {
                return (gains(d).array() * x.array()).matrix();
            },
            [&](const Impl::Composition& c) -> Eigen::VectorXd {
                Eigen::VectorXd z = x;
                for (auto it = c.children.rbegin(); it != c.children.rend(); ++it)
                    z = it->apply_linear(z);
                return z;
            },
            [&](const Impl::Affine& a) -> Eigen::VectorXd { return a.inner.front().apply_linear(x); },
        },
        impl_->payload);
}

Eigen::VectorXd Operator::apply(const Eigen::VectorXd& x) const {
    require_size(x.size(), in_dim(), "apply");
    return std::visit(
        overloaded{
            [&](const Impl::Dense&) -> Eigen::VectorXd { return apply_linear(x); },
            [&](const Impl::Conv&) -> Eigen::VectorXd { return apply_linear(x); },
            [&](const Impl::Diagonal& d) -> Eigen::VectorXd {
                return (gains(d).array() * (x - d.mean).array()).matrix();
            },
            [&](const Impl::Composition& c) -> Eigen::VectorXd {
                Eigen::VectorXd z = x;
                for (auto it = c.children.rbegin(); it != c.children.rend(); ++it)
                    z = it->apply(z);
                return z;
            },
            [&](const Impl::Affine& a) -> Eigen::VectorXd { return a.inner.front().apply(x) + a.bias; },
        },
        impl_->payload);
}

Eigen::VectorXd Operator::offset() const { return apply(Eigen::VectorXd::Zero(in_dim())); }

Eigen::VectorXd Operator::adjoint_apply(const Eigen::VectorXd& y) const {
    require_size(y.size(), out_dim(), "adjoint_apply");
    return std::visit(
        overloaded{
            [&](const Impl::Dense& d) -> Eigen::VectorXd { return d.weight.transpose() * y; },
            [&](const Impl::Conv& c) -> Eigen::VectorXd { return conv_adjoint(c, y); },
            [&](const Impl::Diagonal& d) -> Eigen::VectorXd {
                return (gains(d).array() * y.array()).matrix();
            },
            [&](const Impl::Composition& c) -> Eigen::VectorXd {
                Eigen::VectorXd z = y;
                for (const auto& child : c.children) z = child.adjoint_apply(z);
                return z;
            },
            [&](const Impl::Affine& a) -> Eigen::VectorXd { return a.inner.front().adjoint_apply(y); },
        },
        impl_->payload);
}

Eigen::Index Operator::parameter_count() const {
    return std::visit(
        overloaded{
            [](const Impl::Dense& d) -> Eigen::Index { return d.weight.size(); },
            [](const Impl::Conv& c) -> Eigen::Index {
                return static_cast<Eigen::Index>(c.filter.values.size());
            },
            [](const Impl::Diagonal& d) -> Eigen::Index { return d.gamma.size(); },
            [](const Impl::Composition& c) -> Eigen::Index {
                Eigen::Index n = 0;
                for (const auto& child : c.children) n += child.parameter_count();
                return n;
            },
            [](const Impl::Affine& a) -> Eigen::Index { return a.inner.front().parameter_count(); },
        },
        impl_->payload);
}

Eigen::VectorXd Operator::parameters() const {
    return std::visit(
        overloaded{
            [](const Impl::Dense& d) -> Eigen::VectorXd {
                // row-major flattening
                Eigen::VectorXd p(d.weight.size());
                Eigen::Index k = 0;
                for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
                    for (Eigen::Index c = 0; c < d.weight.cols(); ++c) p(k++) = d.weight(r, c);
                return p;
            },
            [](const Impl::Conv& c) -> Eigen::VectorXd {
                return Eigen::Map<const Eigen::VectorXd>(c.filter.values.data(),
                                                         static_cast<Eigen::Index>(c.filter.values.size()));
            },
            [](const Impl::Diagonal& d) -> Eigen::VectorXd { return d.gamma; },
            [this](const Impl::Composition& c) -> Eigen::VectorXd {
                Eigen::VectorXd p(parameter_count());
                Eigen::Index k = 0;
                for (const auto& child : c.children) {
                    const auto n = child.parameter_count();
                    p.segment(k, n) = child.parameters();
                    k += n;
                }
                return p;
            },
            [](const Impl::Affine& a) -> Eigen::VectorXd { return a.inner.front().parameters(); },
        },
        impl_->payload);
}

Operator Operator::with_parameters(const Eigen::VectorXd& params) const {
    require_size(params.size(), parameter_count(), "with_parameters");
    if (!params.allFinite()) throw std::domain_error("with_parameters: non-finite parameters");
    auto impl = std::make_shared<Impl>(*impl_);
    std::visit(overloaded{
                   [&](Impl::Dense& d) {
                       Eigen::Index k = 0;
                       for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
                           for (Eigen::Index c = 0; c < d.weight.cols(); ++c) d.weight(r, c) = params(k++);
                   },
                   [&](Impl::Conv& c) {
                       c.filter.values.assign(params.data(), params.data() + params.size());
                   },
                   [&](Impl::Diagonal& d) { d.gamma = params; },
                   [&](Impl::Composition& c) {
                       Eigen::Index k = 0;
                       for (auto& child : c.children) {
                           const auto n = child.parameter_count();
                           child = child.with_parameters(params.segment(k, n));
                           k += n;
                       }
                   },
                   [&](Impl::Affine& a) { a.inner.front() = a.inner.front().with_parameters(params); },
               },
               impl->payload);
    return Operator(std::move(impl));
}

Eigen::VectorXd Operator::parameter_gradient(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& upstream) const {
    require_size(x.size(), in_dim(), "parameter_gradient input");
    require_size(upstream.size(), out_dim(), "parameter_gradient upstream");
    return std::visit(
        overloaded{
            [&](const Impl::Dense& d) -> Eigen::VectorXd {
                Eigen::VectorXd g(d.weight.size());
                const auto cols = d.weight.cols();
                for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
                    g.segment(r * cols, cols) = upstream(r) * x;
                return g;
            },
            [&](const Impl::Conv& c) -> Eigen::VectorXd { return conv_param_grad(c, x, upstream); },
            [&](const Impl::Diagonal& d) -> Eigen::VectorXd {
                return (upstream.array() * x.array() / (d.variance.array() + d.eps).sqrt()).matrix();
            },
            [&](const Impl::Composition& c) -> Eigen::VectorXd {
                const auto m = c.children.size();
                // inputs[i] is the linear input seen by child i
                std::vector<Eigen::VectorXd> inputs(m);
                Eigen::VectorXd z = x;
                for (std::size_t i = m; i-- > 0;) {
                    inputs[i] = z;
                    z = c.children[i].apply_linear(z);
                }
                Eigen::VectorXd grad(parameter_count());
                std::vector<Eigen::Index> offsets(m);
                Eigen::Index k = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    offsets[i] = k;
                    k += c.children[i].parameter_count();
                }
                Eigen::VectorXd up = upstream;
                for (std::size_t i = 0; i < m; ++i) {
                    const auto n = c.children[i].parameter_count();
                    grad.segment(offsets[i], n) = c.children[i].parameter_gradient(inputs[i], up);
                    if (i + 1 < m) up = c.children[i].adjoint_apply(up);
                }
                return grad;
            },
            [&](const Impl::Affine& a) -> Eigen::VectorXd {
                return a.inner.front().parameter_gradient(x, upstream);
            },
        },
        impl_->payload);
}

Eigen::VectorXd Operator::parameter_directional(const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& direction) const {
    require_size(x.size(), in_dim(), "parameter_directional input");
    require_size(direction.size(), parameter_count(), "parameter_directional direction");
    return std::visit(
        overloaded{
            [&](const Impl::Dense&) -> Eigen::VectorXd {
                return with_parameters(direction).apply_linear(x);
            },
            [&](const Impl::Conv& c) -> Eigen::VectorXd {
                std::vector<double> dir(direction.data(), direction.data() + direction.size());
                return conv_forward(c, x, dir);
            },
            [&](const Impl::Diagonal& d) -> Eigen::VectorXd {
                return (direction.array() * x.array() / (d.variance.array() + d.eps).sqrt()).matrix();
            },
            [&](const Impl::Composition& c) -> Eigen::VectorXd {
                // product rule: sum over children of outer * d(child) * inner
                const auto m = c.children.size();
                std::vector<Eigen::VectorXd> inputs(m);
                Eigen::VectorXd z = x;
                for (std::size_t i = m; i-- > 0;) {
                    inputs[i] = z;
                    z = c.children[i].apply_linear(z);
                }
                Eigen::VectorXd total = Eigen::VectorXd::Zero(out_dim());
                Eigen::Index k = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    const auto n = c.children[i].parameter_count();
                    Eigen::VectorXd part =
                        c.children[i].parameter_directional(inputs[i], direction.segment(k, n));
                    for (std::size_t j = i; j-- > 0;) part = c.children[j].apply_linear(part);
                    total += part;
                    k += n;
                }
                return total;
            },
            [&](const Impl::Affine& a) -> Eigen::VectorXd {
                return a.inner.front().parameter_directional(x, direction);
            },
        },
        impl_->payload);
}

namespace {

template <class T>
const T& payload_as(const Operator::Impl& impl, const char* what) {
    if (const auto* p = std::get_if<T>(&impl.payload)) return *p;
    throw std::logic_error(std::string(what) + ": not available for kind " + to_string(impl.kind));
}

}  // namespace

const Eigen::MatrixXd& Operator::weight() const { return payload_as<Impl::Dense>(*impl_, "weight").weight; }
const ConvFilter& Operator::filter() const { return payload_as<Impl::Conv>(*impl_, "filter").filter; }
Padding Operator::padding() const { return payload_as<Impl::Conv>(*impl_, "padding").padding; }
std::array<int, 2> Operator::stride() const { return payload_as<Impl::Conv>(*impl_, "stride").stride; }
const Eigen::VectorXd& Operator::gamma() const { return payload_as<Impl::Diagonal>(*impl_, "gamma").gamma; }
const Eigen::VectorXd& Operator::mean() const { return payload_as<Impl::Diagonal>(*impl_, "mean").mean; }
const Eigen::VectorXd& Operator::variance() const {
    return payload_as<Impl::Diagonal>(*impl_, "variance").variance;
}
double Operator::bn_eps() const { return payload_as<Impl::Diagonal>(*impl_, "bn_eps").eps; }
Eigen::VectorXd Operator::diagonal_gains() const {
    return gains(payload_as<Impl::Diagonal>(*impl_, "diagonal_gains"));
}
const std::vector<Operator>& Operator::children() const {
    return payload_as<Impl::Composition>(*impl_, "children").children;
}
const Operator& Operator::linear() const { return payload_as<Impl::Affine>(*impl_, "linear").inner.front(); }
const Eigen::VectorXd& Operator::bias() const { return payload_as<Impl::Affine>(*impl_, "bias").bias; }

Operator Operator::with_bias(Eigen::VectorXd bias) const {
    return Operator::affine(linear(), std::move(bias));
}

Eigen::MatrixXd materialize(const Operator& op, std::size_t cap) {
    const auto rows = static_cast<std::size_t>(op.out_dim());
    const auto cols = static_cast<std::size_t>(op.in_dim());
    if (rows * cols > cap) {
        std::ostringstream os;
        os << "materialize: " << rows << "x" << cols << " exceeds the cap of " << cap << " entries";
        throw std::length_error(os.str());
    }
    Eigen::MatrixXd m(op.out_dim(), op.in_dim());
    Eigen::VectorXd e = Eigen::VectorXd::Zero(op.in_dim());
    for (Eigen::Index j = 0; j < op.in_dim(); ++j) {
        e(j) = 1.0;
        m.col(j) = op.apply_linear(e);
        e(j) = 0.0;
    }
    return m;
}

// --- JSON -------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vec(const nlohmann::json& j, const char* field) {
    if (!j.contains(field) || !j.at(field).is_array())
        throw std::invalid_argument(std::string("operator json: missing array '") + field + "'");
    auto values = j.at(field).get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json shape_json(const Shape& s) { return {s.channels, s.height, s.width}; }

}  // namespace

nlohmann::json to_json(const Operator& op) {
    nlohmann::json j;
    j["kind"] = to_string(op.kind());
    j["input_shape"] = shape_json(op.input_shape());
    j["output_shape"] = shape_json(op.output_shape());
    switch (op.kind()) {
    case Kind::dense:
        j["parameters"] = {{"rows", op.weight().rows()},
                           {"cols", op.weight().cols()},
                           {"weight", vec_json(op.parameters())}};
        break;
    case Kind::conv1d:
    case Kind::conv2d: {
        const auto& f = op.filter();
        j["padding"] = to_string(op.padding());
        j["stride"] = {op.stride()[0], op.stride()[1]};
        j["parameters"] = {{"channels_in", f.channels_in},
                           {"channels_out", f.channels_out},
                           {"kernel", {f.kernel_h, f.kernel_w}},
                           {"filter", f.values}};
        break;
    }
    case Kind::diagonal:
        j["parameters"] = {{"gamma", vec_json(op.gamma())},
                           {"mean", vec_json(op.mean())},
                           {"variance", vec_json(op.variance())},
                           {"eps", op.bn_eps()}};
        break;
    case Kind::composition: {
        auto children = nlohmann::json::array();
        for (const auto& c : op.children()) children.push_back(to_json(c));
        j["children"] = std::move(children);
        break;
    }
    case Kind::affine:
        j["parameters"] = {{"bias", vec_json(op.bias())}};
        j["linear"] = to_json(op.linear());
        break;
    }
    return j;
}

Operator operator_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw std::invalid_argument("operator json: missing 'kind'");
    const auto kind = j.at("kind").get<std::string>();
    const auto& p = j.contains("parameters") ? j.at("parameters") : nlohmann::json::object();
    Operator op = [&]() -> Operator {
        if (kind == "dense") {
            const auto rows = p.at("rows").get<Eigen::Index>();
            const auto cols = p.at("cols").get<Eigen::Index>();
            auto flat = json_vec(p, "weight");
            if (flat.size() != rows * cols)
                throw std::invalid_argument("operator json: dense weight size mismatch");
            Eigen::MatrixXd w(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = flat(r * cols + c);
            return Operator::dense(std::move(w));
        }
        if (kind == "conv1d" || kind == "conv2d") {
            const auto in = j.at("input_shape").get<std::vector<int>>();
            const auto stride = j.at("stride").get<std::vector<int>>();
            const auto kernel = p.at("kernel").get<std::vector<int>>();
            if (in.size() != 3 || stride.size() != 2 || kernel.size() != 2)
                throw std::invalid_argument("operator json: malformed conv shape/stride/kernel");
            const auto padding = padding_from_string(j.at("padding").get<std::string>());
            auto filter = p.at("filter").get<std::vector<double>>();
            const int cin = p.at("channels_in").get<int>();
            const int cout = p.at("channels_out").get<int>();
            if (kind == "conv1d")
                return Operator::conv1d(cin, cout, kernel[0], std::move(filter), in[1], padding, stride[0]);
            return Operator::conv2d(cin, cout, kernel[0], kernel[1], std::move(filter), in[1], in[2],
                                    padding, stride[0], stride[1]);
        }
        if (kind == "diagonal")
            return Operator::diagonal(json_vec(p, "gamma"), json_vec(p, "mean"), json_vec(p, "variance"),
                                      p.at("eps").get<double>());
        if (kind == "composition") {
            std::vector<Operator> children;
            for (const auto& c : j.at("children")) children.push_back(operator_from_json(c));
            return Operator::composition(std::move(children));
        }
        if (kind == "affine")
            return Operator::affine(operator_from_json(j.at("linear")), json_vec(p, "bias"));
        throw std::invalid_argument("operator json: unknown kind '" + kind + "'");
    }();
    if (j.contains("input_shape")) {
        const auto in = j.at("input_shape").get<std::vector<int>>();
        if (in.size() != 3 || Shape{in[0], in[1], in[2]}.size() != op.in_dim())
            throw std::invalid_argument("operator json: input_shape disagrees with parameters");
    }
    return op;
}

}  // namespace specshape::linop
