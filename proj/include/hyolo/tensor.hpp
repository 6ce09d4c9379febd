#ifndef HYOLO_TENSOR_HPP
#define HYOLO_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hyolo/errors.hpp"

namespace hyolo {

class ShapeMismatch : public LogicError { public: using LogicError::LogicError; };
class NonFiniteValue : public NumericError { public: using NumericError::NumericError; };
class MissingGradient : public LogicError { public: using LogicError::LogicError; };

namespace detail {
struct TensorNode;
}

/// Dense 64-bit float tensor with reverse-mode differentiation. Value
/// semantics on the handle; the node (data, grad, graph edges) is shared.
/// Graph construction and backward are single-threaded.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    std::int64_t size() const;
    bool requires_grad() const;

    double item() const; // single-element tensors only
    std::span<const double> data() const;
    std::span<double> mutable_data(); // leaves only; used by optimizers and gradcheck
    std::span<const double> grad() const;

    void zero_grad();

    /// Reverse pass from a single-element tensor; accumulates into the grads
    /// of every reachable tensor that requires them.
    void backward();

    detail::TensorNode* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op(std::vector<int> shape, std::vector<double> data,
                          std::vector<Tensor> parents,
                          std::function<void(detail::TensorNode&)> backward_fn);
};

namespace detail {
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad; // allocated lazily, same length as data
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() { if (grad.size() != data.size()) grad.assign(data.size(), 0.0); }
    TensorNode* parent_node(std::size_t i) { return parents[i].node(); }
};
} // namespace detail

/// Graph-node factory for fused ops (used by the loss module). The result is
/// non-leaf; requires_grad is inherited from the parents. Checks finiteness.
Tensor make_op(std::vector<int> shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backward_fn);

// Elementwise ops. Binary ops require identical shapes (no broadcasting
// beyond the explicit scalar forms below).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor atan(const Tensor& a);
Tensor square(const Tensor& a);
/// Elementwise min/max; ties route the gradient to the first argument.
Tensor vmin(const Tensor& a, const Tensor& b);
Tensor vmax(const Tensor& a, const Tensor& b);
Tensor max_scalar(const Tensor& a, double c);
Tensor silu(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_scalar(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return add_scalar(neg(a), c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Reductions to a single-element tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Structure ops.
Tensor concat_channels(const std::vector<Tensor>& parts); // NCHW, axis 1
Tensor cell_vector(const Tensor& t, int n, int y, int x); // NCHW -> {C}
Tensor slice1d(const Tensor& t, int offset, int length);  // rank-1 tensors
Tensor at(const Tensor& t, std::int64_t flat_index);      // -> {1}
Tensor stack_scalars(const std::vector<Tensor>& scalars); // k single elements -> {k}

/// Expectation of the index under softmax(logits), for a rank-1 tensor:
/// sum_j j * softmax(z)_j. The discrete-distribution box decode.
Tensor softmax_expect(const Tensor& logits);

struct ConvSpec {
    int kernel = 3;
    int stride = 1;
    int padding = 1;
    int in_channels = 0;
    int out_channels = 0;
};

/// 2-D cross-correlation over NCHW input; weight is {co, ci, k, k} and bias
/// {co}. Gradients flow to input, weight, and bias.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec);

/// Max over coordinates of |analytic - central difference| /
/// max(1e-8, |analytic| + |numeric|). `inputs` must be leaves with grad.
double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                 std::vector<Tensor>& inputs, double step);

/// Classic momentum SGD: v <- m v + g; p <- p - lr v. Velocity is keyed by
/// parameter node identity and persists across steps.
class SgdOptimizer {
public:
    SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step(std::vector<Tensor>& params);

private:
    double lr_;
    double momentum_;
    std::vector<std::pair<const void*, std::vector<double>>> velocity_;
};

// Weight checkpoint I/O: magic "HYOLO1", then per-parameter records of
// (u32 name length, name bytes, u32 rank, u32 dims..., f64 data, all LE).
// Round-trips are bit exact.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

} // namespace hyolo

#endif
