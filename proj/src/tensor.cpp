#include "hyolo/tensor.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

namespace hyolo {

namespace {

std::int64_t shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeMismatch("non-positive dimension");
        n *= d;
    }
    return n;
}

void check_finite(std::span<const double> v, const char* op) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NonFiniteValue(std::string("non-finite value produced by ") + op);
}

std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i)
        out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}

} // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    auto node = std::make_shared<detail::TensorNode>();
    node->data.assign(shape_size(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != static_cast<std::int64_t>(data.size()))
        throw ShapeMismatch("from_data: data length does not match shape");
    check_finite(data, "from_data");
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::size() const { return node_->size(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }

double Tensor::item() const {
    if (size() != 1) throw ShapeMismatch("item() on tensor of size " + std::to_string(size()));
    return node_->data[0];
}

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
    if (!node_->is_leaf)
        throw LogicError("mutable_data on a non-leaf tensor would desynchronize the graph");
    return node_->data;
}

std::span<const double> Tensor::grad() const {
    if (node_->grad.size() != node_->data.size())
        throw MissingGradient("gradient not populated");
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

void Tensor::backward() {
    if (size() != 1) throw ShapeMismatch("backward() requires a single-element tensor");
    // Topological order over the reachable graph.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::TensorNode* p = n->parent_node(next++);
            if (!seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (auto* n : order) n->ensure_grad();
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
    for (auto* n : order) check_finite(n->grad, "backward");
}

Tensor make_op(std::vector<int> shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backward_fn) {
    if (shape_size(shape) != static_cast<std::int64_t>(data.size()))
        throw ShapeMismatch("make_op: data length does not match shape");
    check_finite(data, "op");
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->is_leaf = false;
    for (const auto& p : parents)
        if (p.requires_grad()) node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
    return Tensor(std::move(node));
}

// --- elementwise ---

namespace {

using detail::TensorNode;

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 double (*fwd)(double, double),
                 void (*bwd)(double, double, double, double&, double&)) {
    require_same_shape(a, b, name);
    std::vector<double> out(a.size());
    auto da = a.data();
    auto db = b.data();
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = fwd(da[i], db[i]);
    return make_op(a.shape(), std::move(out), {a, b}, [bwd](TensorNode& self) {
        TensorNode* pa = self.parent_node(0);
        TensorNode* pb = self.parent_node(1);
        pa->ensure_grad();
        pb->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i) {
            double ga = 0, gb = 0;
            bwd(pa->data[i], pb->data[i], self.grad[i], ga, gb);
            pa->grad[i] += ga;
            pb->grad[i] += gb;
        }
    });
}

Tensor unary_op(const Tensor& a, double (*fwd)(double),
                double (*dfdx_from_xy)(double, double)) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = fwd(da[i]);
    return make_op(a.shape(), std::move(out), {a}, [dfdx_from_xy](TensorNode& self) {
        TensorNode* pa = self.parent_node(0);
        pa->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i)
            pa->grad[i] += dfdx_from_xy(pa->data[i], self.data[i]) * self.grad[i];
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                     [](double, double, double g, double& ga, double& gb) { ga = g; gb = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                     [](double, double, double g, double& ga, double& gb) { ga = g; gb = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                     [](double x, double y, double g, double& ga, double& gb) {
                         ga = g * y;
                         gb = g * x;
                     });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "div", [](double x, double y) { return x / y; },
                     [](double x, double y, double g, double& ga, double& gb) {
                         ga = g / y;
                         gb = -g * x / (y * y);
                     });
}

Tensor vmin(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "vmin", [](double x, double y) { return x <= y ? x : y; },
                     [](double x, double y, double g, double& ga, double& gb) {
                         if (x <= y) { ga = g; gb = 0; } else { ga = 0; gb = g; }
                     });
}

Tensor vmax(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "vmax", [](double x, double y) { return x >= y ? x : y; },
                     [](double x, double y, double g, double& ga, double& gb) {
                         if (x >= y) { ga = g; gb = 0; } else { ga = 0; gb = g; }
                     });
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = da[i] + c;
    return make_op(a.shape(), std::move(out), {a}, [](TensorNode& self) {
        TensorNode* pa = self.parent_node(0);
        pa->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i) pa->grad[i] += self.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = da[i] * c;
    return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& self) {
        TensorNode* pa = self.parent_node(0);
        pa->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i) pa->grad[i] += c * self.grad[i];
    });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor max_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    auto da = a.data();
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = da[i] >= c ? da[i] : c;
    return make_op(a.shape(), std::move(out), {a}, [c](TensorNode& self) {
        TensorNode* pa = self.parent_node(0);
        pa->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i)
            if (pa->data[i] >= c) pa->grad[i] += self.grad[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a,
                    [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                                 : std::exp(x) / (1.0 + std::exp(x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

Tensor atan(const Tensor& a) {
    return unary_op(a, [](double x) { return std::atan(x); },
                    [](double x, double) { return 1.0 / (1.0 + x * x); });
}

Tensor square(const Tensor& a) {
    return unary_op(a, [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

Tensor silu(const Tensor& a) { return mul(a, sigmoid(a)); }

// --- reductions ---

Tensor sum(const Tensor& a) {
    double s = 0;
    for (double x : a.data()) s += x;
    return make_op({1}, {s}, {a}, [](TensorNode& self) {
        TensorNode* pa = self.parent_node(0);
        pa->ensure_grad();
        const double g = self.grad[0];
        for (auto& gi : pa->grad) gi += g;
    });
}

Tensor mean(const Tensor& a) {
    double s = 0;
    for (double x : a.data()) s += x;
    const double inv_n = 1.0 / static_cast<double>(a.size());
    return make_op({1}, {s * inv_n}, {a}, [inv_n](TensorNode& self) {
        TensorNode* pa = self.parent_node(0);
        pa->ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (auto& gi : pa->grad) gi += g;
    });
}

// --- structure ---

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_channels: no inputs");
    const auto& s0 = parts[0].shape();
    if (s0.size() != 4) throw ShapeMismatch("concat_channels expects NCHW");
    int total_c = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
            throw ShapeMismatch("concat_channels: incompatible shapes");
        total_c += s[1];
    }
    const int n = s0[0], h = s0[2], w = s0[3];
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(n) * total_c * hw);
    std::int64_t c_off = 0;
    for (const auto& p : parts) {
        const int pc = p.shape()[1];
        auto src = p.data();
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < pc; ++ci) {
                const double* sp = src.data() + (static_cast<std::int64_t>(ni) * pc + ci) * hw;
                double* dp = out.data() + (static_cast<std::int64_t>(ni) * total_c + c_off + ci) * hw;
                for (std::int64_t i = 0; i < hw; ++i) dp[i] = sp[i];
            }
        c_off += pc;
    }
    return make_op({n, total_c, h, w}, std::move(out), parts, [](TensorNode& self) {
        const int n = self.shape[0], total_c = self.shape[1];
        const std::int64_t hw = static_cast<std::int64_t>(self.shape[2]) * self.shape[3];
        std::int64_t c_off = 0;
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
            TensorNode* p = self.parent_node(pi);
            p->ensure_grad();
            const int pc = p->shape[1];
            for (int ni = 0; ni < n; ++ni)
                for (int ci = 0; ci < pc; ++ci) {
                    double* dst = p->grad.data() + (static_cast<std::int64_t>(ni) * pc + ci) * hw;
                    const double* src =
                        self.grad.data() + (static_cast<std::int64_t>(ni) * total_c + c_off + ci) * hw;
                    for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
                }
            c_off += pc;
        }
    });
}

Tensor cell_vector(const Tensor& t, int n, int y, int x) {
    const auto& s = t.shape();
    if (s.size() != 4) throw ShapeMismatch("cell_vector expects NCHW");
    if (n < 0 || n >= s[0] || y < 0 || y >= s[2] || x < 0 || x >= s[3])
        throw ShapeMismatch("cell_vector: index out of range");
    const int c = s[1];
    const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
    const std::int64_t base = (static_cast<std::int64_t>(n) * c) * hw +
                              static_cast<std::int64_t>(y) * s[3] + x;
    std::vector<double> out(c);
    auto src = t.data();
    for (int ci = 0; ci < c; ++ci) out[ci] = src[base + ci * hw];
    return make_op({c}, std::move(out), {t}, [base, hw](TensorNode& self) {
        TensorNode* p = self.parent_node(0);
        p->ensure_grad();
        for (std::int64_t ci = 0; ci < self.size(); ++ci)
            p->grad[base + ci * hw] += self.grad[ci];
    });
}

Tensor slice1d(const Tensor& t, int offset, int length) {
    if (t.shape().size() != 1) throw ShapeMismatch("slice1d expects rank 1");
    if (offset < 0 || length <= 0 || offset + length > t.size())
        throw ShapeMismatch("slice1d: range out of bounds");
    std::vector<double> out(t.data().begin() + offset, t.data().begin() + offset + length);
    return make_op({length}, std::move(out), {t}, [offset](TensorNode& self) {
        TensorNode* p = self.parent_node(0);
        p->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i) p->grad[offset + i] += self.grad[i];
    });
}

Tensor at(const Tensor& t, std::int64_t flat_index) {
    if (flat_index < 0 || flat_index >= t.size())
        throw ShapeMismatch("at: index out of bounds");
    return make_op({1}, {t.data()[flat_index]}, {t}, [flat_index](TensorNode& self) {
        TensorNode* p = self.parent_node(0);
        p->ensure_grad();
        p->grad[flat_index] += self.grad[0];
    });
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) throw ShapeMismatch("stack_scalars: no inputs");
    std::vector<double> out;
    out.reserve(scalars.size());
    for (const auto& s : scalars) {
        if (s.size() != 1) throw ShapeMismatch("stack_scalars expects single-element tensors");
        out.push_back(s.data()[0]);
    }
    return make_op({static_cast<int>(scalars.size())}, std::move(out), scalars,
                   [](TensorNode& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            TensorNode* p = self.parent_node(i);
            p->ensure_grad();
            p->grad[0] += self.grad[i];
        }
    });
}

Tensor softmax_expect(const Tensor& logits) {
    if (logits.shape().size() != 1) throw ShapeMismatch("softmax_expect expects rank 1");
    auto z = logits.data();
    const std::int64_t n = logits.size();
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    std::vector<double> p(n);
    double den = 0;
    for (std::int64_t i = 0; i < n; ++i) { p[i] = std::exp(z[i] - zmax); den += p[i]; }
    double e = 0;
    for (std::int64_t i = 0; i < n; ++i) { p[i] /= den; e += static_cast<double>(i) * p[i]; }
    return make_op({1}, {e}, {logits}, [p = std::move(p), e](TensorNode& self) {
        TensorNode* pn = self.parent_node(0);
        pn->ensure_grad();
        const double g = self.grad[0];
        for (std::size_t j = 0; j < p.size(); ++j)
            pn->grad[j] += g * p[j] * (static_cast<double>(j) - e);
    });
}

} // namespace hyolo
