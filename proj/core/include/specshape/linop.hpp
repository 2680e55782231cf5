#pragma once

// Implicitly linear operators: f(x) = M_W x + b where M_W is never stored
// unless explicitly materialized.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace specshape::linop {

enum class Kind { dense, conv1d, conv2d, diagonal, composition, affine };
enum class Padding { circular, zeros, reflect, replicate };

std::string to_string(Kind kind);
std::string to_string(Padding padding);
Padding padding_from_string(const std::string& name);

/// Tensor shape in (channels, height, width) order; vectors use (n, 1, 1).
struct Shape {
    int channels = 1;
    int height = 1;
    int width = 1;

    [[nodiscard]] Eigen::Index size() const {
        return static_cast<Eigen::Index>(channels) * height * width;
    }
    bool operator==(const Shape&) const = default;
};

/// Filter tensor laid out as [out][in][kh][kw], row-major.
struct ConvFilter {
    int channels_in = 1;
    int channels_out = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    std::vector<double> values;
};

inline constexpr std::size_t kDefaultMaterializeCap = std::size_t{1} << 22;

/// Immutable operator value. Copies share the underlying parameters.
///
/// Convolutions are cross-correlations whose kernel is anchored at
/// floor(k/2) on every spatial axis, so a stride-1 convolution keeps the
/// spatial size and the circular case is the circulant matrix whose first
/// row is [f_m .. f_{k-1}, 0 .. 0, f_0 .. f_{m-1}].
class Operator {
public:
    static Operator dense(Eigen::MatrixXd weight);
    static Operator identity(Eigen::Index n);
    static Operator conv1d(int channels_in, int channels_out, int kernel,
                           std::vector<double> filter, int length,
                           Padding padding, int stride = 1);
    static Operator conv2d(int channels_in, int channels_out, int kernel_h,
                           int kernel_w, std::vector<double> filter, int height,
                           int width, Padding padding, int stride_h = 1,
                           int stride_w = 1);
    /// y_i = gamma_i (x_i - mean_i) / sqrt(var_i + eps).
    static Operator diagonal(Eigen::VectorXd gamma, Eigen::VectorXd mean,
                             Eigen::VectorXd variance, double eps);
    static Operator affine(Operator linear, Eigen::VectorXd bias);
    /// ops[0] is applied last: compose({A, B}) x = A(B(x)).
    static Operator composition(std::vector<Operator> ops);

    [[nodiscard]] Kind kind() const;
    [[nodiscard]] const Shape& input_shape() const;
    [[nodiscard]] const Shape& output_shape() const;
    [[nodiscard]] Eigen::Index in_dim() const { return input_shape().size(); }
    [[nodiscard]] Eigen::Index out_dim() const { return output_shape().size(); }

    /// M_W x + b.
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
    /// M_W x, i.e. apply(x) - apply(0).
    [[nodiscard]] Eigen::VectorXd apply_linear(const Eigen::VectorXd& x) const;
    /// M_W^T y.
    [[nodiscard]] Eigen::VectorXd adjoint_apply(const Eigen::VectorXd& y) const;
    /// apply(0).
    [[nodiscard]] Eigen::VectorXd offset() const;

    // Trainable parameters of the linear part (weights, filters, gains).
    // Biases and batch statistics are not included.
    [[nodiscard]] Eigen::Index parameter_count() const;
    [[nodiscard]] Eigen::VectorXd parameters() const;
    [[nodiscard]] Operator with_parameters(const Eigen::VectorXd& params) const;
    /// d<upstream, M_W x>/dW.
    [[nodiscard]] Eigen::VectorXd parameter_gradient(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& upstream) const;
    /// Derivative of M_W x along a parameter direction.
    [[nodiscard]] Eigen::VectorXd parameter_directional(const Eigen::VectorXd& x,
                                                        const Eigen::VectorXd& direction) const;

    // kind-specific access; each throws std::logic_error on the wrong kind
    [[nodiscard]] const Eigen::MatrixXd& weight() const;
    [[nodiscard]] const ConvFilter& filter() const;
    [[nodiscard]] Padding padding() const;
    [[nodiscard]] std::array<int, 2> stride() const;
    [[nodiscard]] const Eigen::VectorXd& gamma() const;
    [[nodiscard]] const Eigen::VectorXd& mean() const;
    [[nodiscard]] const Eigen::VectorXd& variance() const;
    [[nodiscard]] double bn_eps() const;
    /// gamma_i / sqrt(var_i + eps).
    [[nodiscard]] Eigen::VectorXd diagonal_gains() const;
    [[nodiscard]] const std::vector<Operator>& children() const;
    [[nodiscard]] const Operator& linear() const;
    [[nodiscard]] const Eigen::VectorXd& bias() const;
    [[nodiscard]] Operator with_bias(Eigen::VectorXd bias) const;

    struct Impl;

private:
    explicit Operator(std::shared_ptr<const Impl> impl);
    std::shared_ptr<const Impl> impl_;
};

Operator compose(std::vector<Operator> ops);

/// Column j equals apply(e_j) - apply(0). Throws std::length_error past cap.
Eigen::MatrixXd materialize(const Operator& op,
                            std::size_t cap = kDefaultMaterializeCap);

nlohmann::json to_json(const Operator& op);
Operator operator_from_json(const nlohmann::json& j);

}  // namespace specshape::linop
