#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "gsplab/error.hpp"

namespace gsplab {

enum class OpKind { Leaf, Conv2d, Relu, MaxPool2d, Gsp, Gap, Linear, LossL1, LossMse };
enum class LossKind { L1, Mse };

namespace detail {

struct Node {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until first needed
    OpKind op = OpKind::Leaf;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    // Recorded so gradient checking can measure the distance to the nearest
    // non-smooth point of the graph without re-deriving op internals.
    int pool_k = 0;
    int pool_stride = 0;
    double l1_margin = std::numeric_limits<double>::infinity();

    std::size_t size() const { return values.size(); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

inline std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace detail

// Dense tensor of doubles; a cheap handle sharing one node of the reverse-mode
// graph. Leaves hold trainable values; op results record how to push gradients
// back to their parents. Graphs are built eagerly and die when the handles go
// out of scope.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        return Tensor(std::move(shape), 0.0);
    }

    static Tensor full(std::vector<int> shape, double v) {
        return Tensor(std::move(shape), v);
    }

    static Tensor from(std::vector<int> shape, std::vector<double> values) {
        const std::size_t n = detail::shape_product(shape);
        if (n != values.size())
            throw DimensionError("value count " + std::to_string(values.size()) +
                                 " does not match shape " + detail::shape_string(shape));
        Tensor t;
        t.n_ = std::make_shared<detail::Node>();
        t.n_->shape = std::move(shape);
        t.n_->values = std::move(values);
        return t;
    }

    static Tensor scalar(double v) { return from({}, {v}); }

    bool defined() const { return n_ != nullptr; }
    int rank() const { return static_cast<int>(node().shape.size()); }
    const std::vector<int>& shape() const { return node().shape; }
    std::size_t size() const { return node().values.size(); }

    std::span<double> values() { return node().values; }
    std::span<const double> values() const { return node().values; }

    double value() const {
        if (size() != 1) throw ContractError("value() requires a size-1 tensor, got shape " + detail::shape_string(shape()));
        return node().values[0];
    }

    // Row-major multi-index accessors, test convenience.
    double at(std::initializer_list<int> idx) const { return node().values[flat(idx)]; }
    double& at(std::initializer_list<int> idx) { return node().values[flat(idx)]; }

    bool has_grad() const { return !node().grad.empty(); }
    std::span<const double> grad() const { return node().grad; }
    std::span<double> grad_data() {
        node().ensure_grad();
        return node().grad;
    }
    void zero_grad() {
        auto& g = node().grad;
        std::fill(g.begin(), g.end(), 0.0);
    }

    bool is_leaf() const { return node().op == OpKind::Leaf; }

    bool all_finite() const {
        for (double v : node().values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Accumulates d(root)/d(leaf) into every reachable leaf's grad buffer.
    // Repeated calls keep accumulating until grads are zeroed.
    void backward(double seed = 1.0) const;

    std::shared_ptr<detail::Node> node_ptr() const { return n_; }
    detail::Node& node() {
        if (!n_) throw ContractError("operation on an empty tensor");
        return *n_;
    }
    const detail::Node& node() const {
        if (!n_) throw ContractError("operation on an empty tensor");
        return *n_;
    }

    static Tensor wrap(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.n_ = std::move(n);
        return t;
    }

private:
    Tensor(std::vector<int> shape, double fill) {
        const std::size_t n = detail::shape_product(shape);
        n_ = std::make_shared<detail::Node>();
        n_->shape = std::move(shape);
        n_->values.assign(n, fill);
    }

    std::size_t flat(std::initializer_list<int> idx) const {
        const auto& s = node().shape;
        if (idx.size() != s.size()) throw ContractError("index rank mismatch");
        std::size_t f = 0;
        std::size_t d = 0;
        for (int i : idx) {
            f = f * static_cast<std::size_t>(s[d]) + static_cast<std::size_t>(i);
            ++d;
        }
        return f;
    }

    std::shared_ptr<detail::Node> n_;
};

namespace detail {

inline void topo_order(Node* root, std::vector<Node*>& order) {
    // Iterative post-order DFS; the graph is a DAG (child -> parents).
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

} // namespace detail

inline void Tensor::backward(double seed) const {
    const detail::Node& root = node();
    if (root.values.size() != 1)
        throw ContractError("backward requires a scalar root, got shape " + detail::shape_string(root.shape));
    std::vector<detail::Node*> order;
    detail::topo_order(n_.get(), order);
    // Interior grads are scratch space for this pass; only leaf grads
    // accumulate across calls. Without the reset a repeated backward would
    // re-propagate stale interior grads and double-count.
    for (detail::Node* node : order)
        if (node->backprop && !node->grad.empty())
            std::fill(node->grad.begin(), node->grad.end(), 0.0);
    n_->ensure_grad();
    n_->grad[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backprop) node->backprop(*node);
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {

inline std::shared_ptr<Node> make_op(std::vector<int> shape, OpKind op,
                                     std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->values.assign(shape_product(shape), 0.0);
    n->shape = std::move(shape);
    n->op = op;
    n->parents = std::move(parents);
    return n;
}

inline long div_floor(long a, long b) {
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

inline long div_ceil(long a, long b) { return -div_floor(-a, b); }

} // namespace detail

// 2-D convolution over a single image, zero padding.
// input [C_in,H,W], kernel [C_out,C_in,k,k], bias [C_out] -> [C_out,H',W'].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     int stride = 1, int padding = 0) {
    if (stride < 1) throw ContractError("conv2d stride must be >= 1");
    if (padding < 0) throw ContractError("conv2d padding must be >= 0");
    if (input.rank() != 3)
        throw DimensionError("conv2d input must be rank 3, got " + detail::shape_string(input.shape()));
    if (kernel.rank() != 4)
        throw DimensionError("conv2d kernel must be rank 4, got " + detail::shape_string(kernel.shape()));
    const int ci = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const int co = kernel.shape()[0], kci = kernel.shape()[1], kh = kernel.shape()[2], kw = kernel.shape()[3];
    if (kh != kw)
        throw DimensionError("conv2d kernel must be square, got " + detail::shape_string(kernel.shape()));
    if (kci != ci)
        throw DimensionError("conv2d channel mismatch: input " + detail::shape_string(input.shape()) +
                             " vs kernel " + detail::shape_string(kernel.shape()));
    if (bias.rank() != 1 || bias.shape()[0] != co)
        throw DimensionError("conv2d bias must be [" + std::to_string(co) + "], got " +
                             detail::shape_string(bias.shape()));
    const int k = kh;
    if (k > h + 2 * padding || k > w + 2 * padding)
        throw DimensionError("conv2d kernel " + std::to_string(k) + " exceeds padded input " +
                             detail::shape_string(input.shape()) + " with padding " + std::to_string(padding));
    const int ho = (h + 2 * padding - k) / stride + 1;
    const int wo = (w + 2 * padding - k) / stride + 1;

    auto out = detail::make_op({co, ho, wo}, OpKind::Conv2d,
                               {input.node_ptr(), kernel.node_ptr(), bias.node_ptr()});
    const double* in = input.values().data();
    const double* kv = kernel.values().data();
    const double* bv = bias.values().data();
    double* ov = out->values.data();

    // Valid output-x range for a given kernel column kx:
    // ix = ox*stride - padding + kx must land in [0, w).
    auto ox_range = [&](int kx, int& lo, int& hi) {
        lo = static_cast<int>(std::max<long>(0, detail::div_ceil(padding - kx, stride)));
        hi = static_cast<int>(std::min<long>(wo, detail::div_floor(w - 1 - kx + padding, stride) + 1));
    };

    for (int c = 0; c < co; ++c) {
        double* out_plane = ov + static_cast<std::size_t>(c) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) out_plane[i] = bv[c];
        for (int ic = 0; ic < ci; ++ic) {
            const double* in_plane = in + static_cast<std::size_t>(ic) * h * w;
            const double* kplane = kv + (static_cast<std::size_t>(c) * ci + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wgt = kplane[ky * k + kx];
                    if (wgt == 0.0) continue;
                    int lo, hi;
                    ox_range(kx, lo, hi);
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* in_row = in_plane + static_cast<std::size_t>(iy) * w;
                        double* out_row = out_plane + static_cast<std::size_t>(oy) * wo;
                        const int off = kx - padding;
                        for (int ox = lo; ox < hi; ++ox)
                            out_row[ox] += wgt * in_row[ox * stride + off];
                    }
                }
            }
        }
    }

    auto in_node = input.node_ptr();
    auto k_node = kernel.node_ptr();
    auto b_node = bias.node_ptr();
    out->backprop = [=](detail::Node& self) {
        in_node->ensure_grad();
        k_node->ensure_grad();
        b_node->ensure_grad();
        const double* go = self.grad.data();
        const double* in = in_node->values.data();
        const double* kv = k_node->values.data();
        double* gin = in_node->grad.data();
        double* gk = k_node->grad.data();
        double* gb = b_node->grad.data();
        for (int c = 0; c < co; ++c) {
            const double* go_plane = go + static_cast<std::size_t>(c) * ho * wo;
            double acc_b = 0.0;
            for (int i = 0; i < ho * wo; ++i) acc_b += go_plane[i];
            gb[c] += acc_b;
            for (int ic = 0; ic < ci; ++ic) {
                const double* in_plane = in + static_cast<std::size_t>(ic) * h * w;
                double* gin_plane = gin + static_cast<std::size_t>(ic) * h * w;
                const std::size_t kbase = (static_cast<std::size_t>(c) * ci + ic) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const double wgt = kv[kbase + ky * k + kx];
                        double acc_w = 0.0;
                        int lo = static_cast<int>(std::max<long>(0, detail::div_ceil(padding - kx, stride)));
                        int hi = static_cast<int>(std::min<long>(wo, detail::div_floor(w - 1 - kx + padding, stride) + 1));
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride - padding + ky;
                            if (iy < 0 || iy >= h) continue;
                            const double* in_row = in_plane + static_cast<std::size_t>(iy) * w;
                            double* gin_row = gin_plane + static_cast<std::size_t>(iy) * w;
                            const double* go_row = go_plane + static_cast<std::size_t>(oy) * wo;
                            const int off = kx - padding;
                            for (int ox = lo; ox < hi; ++ox) {
                                const double g = go_row[ox];
                                gin_row[ox * stride + off] += wgt * g;
                                acc_w += in_row[ox * stride + off] * g;
                            }
                        }
                        gk[kbase + ky * k + kx] += acc_w;
                    }
                }
            }
        }
    };
    return Tensor::wrap(out);
}

inline Tensor relu(const Tensor& input) {
    auto out = detail::make_op(input.shape(), OpKind::Relu, {input.node_ptr()});
    const double* in = input.values().data();
    double* ov = out->values.data();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) ov[i] = in[i] > 0.0 ? in[i] : 0.0;
    auto in_node = input.node_ptr();
    out->backprop = [=](detail::Node& self) {
        in_node->ensure_grad();
        const double* in = in_node->values.data();
        double* gin = in_node->grad.data();
        const double* go = self.grad.data();
        for (std::size_t i = 0; i < self.size(); ++i)
            if (in[i] > 0.0) gin[i] += go[i]; // subgradient at 0 is 0
    };
    return Tensor::wrap(out);
}

// Windowed max over [C,H,W]; ties resolve to the first maximum in row-major
// window scan order so backward is deterministic.
inline Tensor maxpool2d(const Tensor& input, int k, int stride) {
    if (input.rank() != 3)
        throw DimensionError("maxpool2d input must be rank 3, got " + detail::shape_string(input.shape()));
    if (k < 1 || stride < 1) throw ContractError("maxpool2d window and stride must be >= 1");
    const int c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    if (k > h || k > w)
        throw DimensionError("maxpool2d window " + std::to_string(k) + " larger than input " +
                             detail::shape_string(input.shape()));
    const int ho = (h - k) / stride + 1;
    const int wo = (w - k) / stride + 1;
    auto out = detail::make_op({c, ho, wo}, OpKind::MaxPool2d, {input.node_ptr()});
    out->pool_k = k;
    out->pool_stride = stride;
    const double* in = input.values().data();
    double* ov = out->values.data();
    auto argmax = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(c) * ho * wo);
    std::size_t o = 0;
    for (int ic = 0; ic < c; ++ic) {
        const double* plane = in + static_cast<std::size_t>(ic) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox, ++o) {
                const int y0 = oy * stride, x0 = ox * stride;
                double best = plane[static_cast<std::size_t>(y0) * w + x0];
                std::size_t best_i = static_cast<std::size_t>(y0) * w + x0;
                for (int dy = 0; dy < k; ++dy) {
                    const double* row = plane + static_cast<std::size_t>(y0 + dy) * w;
                    for (int dx = 0; dx < k; ++dx) {
                        if (row[x0 + dx] > best) {
                            best = row[x0 + dx];
                            best_i = static_cast<std::size_t>(y0 + dy) * w + x0 + dx;
                        }
                    }
                }
                ov[o] = best;
                (*argmax)[o] = static_cast<std::size_t>(ic) * h * w + best_i;
            }
        }
    }
    auto in_node = input.node_ptr();
    out->backprop = [=](detail::Node& self) {
        in_node->ensure_grad();
        double* gin = in_node->grad.data();
        const double* go = self.grad.data();
        for (std::size_t i = 0; i < self.size(); ++i) gin[(*argmax)[i]] += go[i];
    };
    return Tensor::wrap(out);
}

// Global sum pooling: out[c] = sum over spatial locations of input[c,:,:].
inline Tensor gsp(const Tensor& input) {
    if (input.rank() != 3)
        throw DimensionError("gsp input must be rank 3, got " + detail::shape_string(input.shape()));
    const int c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    auto out = detail::make_op({c}, OpKind::Gsp, {input.node_ptr()});
    const double* in = input.values().data();
    for (int ic = 0; ic < c; ++ic) {
        double s = 0.0;
        const double* plane = in + static_cast<std::size_t>(ic) * h * w;
        for (int i = 0; i < h * w; ++i) s += plane[i];
        out->values[ic] = s;
    }
    auto in_node = input.node_ptr();
    out->backprop = [=](detail::Node& self) {
        in_node->ensure_grad();
        double* gin = in_node->grad.data();
        for (int ic = 0; ic < c; ++ic) {
            const double g = self.grad[ic];
            double* plane = gin + static_cast<std::size_t>(ic) * h * w;
            for (int i = 0; i < h * w; ++i) plane[i] += g;
        }
    };
    return Tensor::wrap(out);
}

// Global average pooling: gsp / (H*W).
inline Tensor gap(const Tensor& input) {
    if (input.rank() != 3)
        throw DimensionError("gap input must be rank 3, got " + detail::shape_string(input.shape()));
    const int c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const double area = static_cast<double>(h) * w;
    auto out = detail::make_op({c}, OpKind::Gap, {input.node_ptr()});
    const double* in = input.values().data();
    for (int ic = 0; ic < c; ++ic) {
        double s = 0.0;
        const double* plane = in + static_cast<std::size_t>(ic) * h * w;
        for (int i = 0; i < h * w; ++i) s += plane[i];
        out->values[ic] = s / area;
    }
    auto in_node = input.node_ptr();
    out->backprop = [=](detail::Node& self) {
        in_node->ensure_grad();
        double* gin = in_node->grad.data();
        for (int ic = 0; ic < c; ++ic) {
            const double g = self.grad[ic] / area;
            double* plane = gin + static_cast<std::size_t>(ic) * h * w;
            for (int i = 0; i < h * w; ++i) plane[i] += g;
        }
    };
    return Tensor::wrap(out);
}

// weight . input + bias -> scalar.
inline Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 1 || weight.rank() != 1 || input.shape()[0] != weight.shape()[0])
        throw DimensionError("linear length mismatch: input " + detail::shape_string(input.shape()) +
                             " vs weight " + detail::shape_string(weight.shape()));
    if (bias.size() != 1)
        throw DimensionError("linear bias must be a scalar, got " + detail::shape_string(bias.shape()));
    const int n = input.shape()[0];
    auto out = detail::make_op({}, OpKind::Linear,
                               {input.node_ptr(), weight.node_ptr(), bias.node_ptr()});
    double s = bias.values()[0];
    const double* x = input.values().data();
    const double* wv = weight.values().data();
    for (int i = 0; i < n; ++i) s += wv[i] * x[i];
    out->values[0] = s;
    auto x_node = input.node_ptr();
    auto w_node = weight.node_ptr();
    auto b_node = bias.node_ptr();
    out->backprop = [=](detail::Node& self) {
        x_node->ensure_grad();
        w_node->ensure_grad();
        b_node->ensure_grad();
        const double g = self.grad[0];
        const double* x = x_node->values.data();
        const double* wv = w_node->values.data();
        for (int i = 0; i < n; ++i) {
            x_node->grad[i] += g * wv[i];
            w_node->grad[i] += g * x[i];
        }
        b_node->grad[0] += g;
    };
    return Tensor::wrap(out);
}

// |pred - target| or (pred - target)^2 against a constant target.
inline Tensor loss(const Tensor& pred, double target, LossKind kind) {
    if (pred.size() != 1)
        throw DimensionError("loss prediction must be a scalar, got " + detail::shape_string(pred.shape()));
    if (!std::isfinite(target)) throw ContractError("loss target must be finite");
    const double d = pred.values()[0] - target;
    auto out = detail::make_op({}, kind == LossKind::L1 ? OpKind::LossL1 : OpKind::LossMse,
                               {pred.node_ptr()});
    out->values[0] = kind == LossKind::L1 ? std::fabs(d) : d * d;
    if (kind == LossKind::L1) out->l1_margin = std::fabs(d);
    auto p_node = pred.node_ptr();
    out->backprop = [=](detail::Node& self) {
        p_node->ensure_grad();
        const double g = self.grad[0];
        if (kind == LossKind::L1) {
            p_node->grad[0] += (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * g;
        } else {
            p_node->grad[0] += 2.0 * d * g;
        }
    };
    return Tensor::wrap(out);
}

// Smallest distance of any recorded graph value to a non-smooth point:
// |preactivation| for relu, winner margin for maxpool windows, |pred-target|
// for L1 loss. Finite-difference checks resample inputs when this is small.
inline double kink_margin(const Tensor& root) {
    std::vector<detail::Node*> order;
    detail::topo_order(root.node_ptr().get(), order);
    double margin = std::numeric_limits<double>::infinity();
    for (detail::Node* n : order) {
        switch (n->op) {
        case OpKind::Relu: {
            const auto& in = n->parents[0]->values;
            for (double v : in) margin = std::min(margin, std::fabs(v));
            break;
        }
        case OpKind::MaxPool2d: {
            const auto& p = *n->parents[0];
            // Over a relu input, a window of exact zeros is a flat clamped
            // region, not a tie: the relu margins of its own inputs already
            // guard it, so it doesn't force a resample.
            const bool relu_input = p.op == OpKind::Relu;
            const int c = p.shape[0], h = p.shape[1], w = p.shape[2];
            const int k = n->pool_k, stride = n->pool_stride;
            const int ho = (h - k) / stride + 1, wo = (w - k) / stride + 1;
            for (int ic = 0; ic < c; ++ic) {
                const double* plane = p.values.data() + static_cast<std::size_t>(ic) * h * w;
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox) {
                        double best = -std::numeric_limits<double>::infinity();
                        double second = -std::numeric_limits<double>::infinity();
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx) {
                                const double v = plane[static_cast<std::size_t>(oy * stride + dy) * w + ox * stride + dx];
                                if (v > best) {
                                    second = best;
                                    best = v;
                                } else if (v > second) {
                                    second = v;
                                }
                            }
                        if (k > 1 && !(relu_input && best == 0.0 && second == 0.0))
                            margin = std::min(margin, best - second);
                    }
                }
            }
            break;
        }
        case OpKind::LossL1:
            margin = std::min(margin, n->l1_margin);
            break;
        default:
            break;
        }
    }
    return margin;
}

// ---------------------------------------------------------------------------
// Serialization: "shape: d1 d2 ..." header then row-major values, shortest
// exact decimal per value. Shared with model checkpoints.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw FormatError("bad float '" + std::string(s) + "' in " + context);
    return v;
}

inline void save_tensor(std::ostream& os, const Tensor& t) {
    os << "shape:";
    for (int d : t.shape()) os << ' ' << d;
    os << '\n';
    const auto vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        os << format_double(vals[i]);
        os << (((i + 1) % 8 == 0 || i + 1 == vals.size()) ? '\n' : ' ');
    }
}

inline Tensor load_tensor(std::istream& is, const std::string& context = "tensor") {
    std::string line;
    do {
        if (!std::getline(is, line)) throw FormatError("missing shape header in " + context);
    } while (line.empty());
    std::istringstream hdr(line);
    std::string tag;
    hdr >> tag;
    if (tag != "shape:") throw FormatError("expected 'shape:' in " + context + ", got '" + tag + "'");
    std::vector<int> shape;
    int d;
    while (hdr >> d) shape.push_back(d);
    const std::size_t n = detail::shape_product(shape);
    std::vector<double> values;
    values.reserve(n);
    std::string tok;
    while (values.size() < n) {
        if (!(is >> tok)) throw FormatError("truncated tensor in " + context + ": expected " +
                                            std::to_string(n) + " values, got " + std::to_string(values.size()));
        values.push_back(parse_double(tok, context));
    }
    is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    return Tensor::from(std::move(shape), std::move(values));
}

} // namespace gsplab
