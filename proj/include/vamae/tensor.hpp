#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vamae::ad {

using Shape = std::vector<int>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

/// Handle to a node in the computation graph. Copies share the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape.at(i); }
    int rows() const { return node_->shape.at(0); }
    int cols() const { return node_->shape.at(1); }
    std::size_t size() const { return node_->value.size(); }

    std::span<const double> value() const { return node_->value; }
    std::span<double> mutable_value() { return node_->value; }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    double item() const;
    double at(std::size_t i) const { return node_->value.at(i); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate.
void backward(const Tensor& loss);

// ---- graph ops ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a[m,n] + bias[n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
/// Linear layer: x[m,in] W[in,out] + b[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_cols(const Tensor& x, int start, int count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// out[i] = x[index[i]]; repeated indices accumulate gradient.
Tensor gather_rows(const Tensor& x, const std::vector<int>& index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& pred, const Tensor& target);
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);

/// Convolution on a [C,H,W] map with weight [O,C,k,k] and bias [O],
/// stride 1, zero padding `pad`.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int pad);
/// Transposed convolution, kernel 2, stride 2: [C,H,W] -> [O,2H,2W].
/// Weight layout [C,O,2,2].
Tensor conv_transpose2x2(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Numerically stable elementwise helpers shared with the loss code.
double sigmoid(double z);
double log_sigmoid(double z);

/// Builds an op node. `backward` reads out.grad and accumulates into parents
/// that require grad.
Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward);

}  // namespace vamae::ad
