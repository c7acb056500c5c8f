#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace prseg {

/// Dense row-major shape. All dims must be >= 1.
using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 1) throw std::invalid_argument("invalid shape " + shape_str(s) + ": dims must be >= 1");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

namespace detail {

/// One node of the backward graph. Data is immutable after construction
/// except for leaf parameters (updated between steps by the optimizer)
/// and the gradient buffer.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into the parents' grad buffers.
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

/// Value-semantic handle to a dense f64 tensor with reverse-mode autodiff.
/// Copies share the underlying buffer; ops materialize new tensors.
class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> data) {
        const std::size_t n = shape_numel(shape);
        if (n != data.size())
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        return Tensor(std::move(node));
    }

    static Tensor full(Shape shape, double value) {
        const std::size_t n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<double>(n, value));
    }

    static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
    static Tensor scalar(double value) { return from_data({1}, {value}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return check().shape; }
    int rank() const { return static_cast<int>(check().shape.size()); }
    std::size_t size() const { return check().data.size(); }
    int dim(int axis) const { return check().shape.at(static_cast<std::size_t>(axis)); }

    const std::vector<double>& data() const { return check().data; }
    /// Mutable access; meant for leaf parameters between training steps.
    std::vector<double>& mutable_data() { return check().data; }

    double operator[](std::size_t flat) const { return check().data.at(flat); }

    double at(std::initializer_list<int> idx) const {
        const auto& n = check();
        if (idx.size() != n.shape.size())
            throw std::invalid_argument("index rank mismatch for shape " + shape_str(n.shape));
        std::size_t flat = 0;
        auto it = idx.begin();
        for (std::size_t a = 0; a < n.shape.size(); ++a, ++it) {
            if (*it < 0 || *it >= n.shape[a]) throw std::out_of_range("tensor index out of range");
            flat = flat * static_cast<std::size_t>(n.shape[a]) + static_cast<std::size_t>(*it);
        }
        return n.data[flat];
    }

    /// Value of a one-element tensor.
    double value() const {
        const auto& n = check();
        if (n.data.size() != 1)
            throw std::invalid_argument("value() requires a scalar, got shape " + shape_str(n.shape));
        return n.data[0];
    }

    bool requires_grad() const { return check().requires_grad; }
    void set_requires_grad(bool v) { check().requires_grad = v; }

    const std::vector<double>& grad() const {
        auto& n = const_cast<detail::Node&>(check());
        return n.ensure_grad();
    }
    void zero_grad() { check().grad.assign(check().data.size(), 0.0); }

    void backward() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    detail::Node& check() const {
        if (!node_) throw std::logic_error("operation on an empty tensor");
        return *node_;
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(inputs.size());
        for (const auto& t : inputs) node->parents.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

// Right-aligned broadcast of `in` against `out`: returns element strides
// for `in`, with 0 on broadcast axes. Throws if incompatible.
inline std::vector<std::size_t> broadcast_strides(const Shape& out, const Shape& in, const Shape& other,
                                                  const char* opname) {
    const std::size_t r = out.size();
    std::vector<std::size_t> strides(r, 0);
    std::size_t stride = 1;
    const std::size_t offset = r - in.size();
    for (std::size_t a = r; a-- > 0;) {
        if (a < offset) {
            strides[a] = 0;
            continue;
        }
        const int d = in[a - offset];
        if (d == out[a]) {
            strides[a] = stride;
        } else if (d == 1) {
            strides[a] = 0;
        } else {
            throw std::invalid_argument(std::string(opname) + ": incompatible shapes " + shape_str(in) +
                                        " and " + shape_str(other));
        }
        stride *= static_cast<std::size_t>(d);
    }
    return strides;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* opname) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument(std::string(opname) + ": incompatible shapes " + shape_str(a) +
                                        " and " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Odometer walk over `out`, yielding (flat_out, flat_a, flat_b).
template <class Fn>
inline void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                               const std::vector<std::size_t>& sb, Fn&& fn) {
    const std::size_t total = shape_numel(out);
    const std::size_t r = out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t io = 0; io < total; ++io) {
        fn(io, ia, ib);
        for (std::size_t a = r; a-- > 0;) {
            ++idx[a];
            ia += sa[a];
            ib += sb[a];
            if (idx[a] < static_cast<std::size_t>(out[a])) break;
            ia -= sa[a] * idx[a];
            ib -= sb[a] * idx[a];
            idx[a] = 0;
        }
    }
}

template <class F, class DFA, class DFB>
inline Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, F f, DFA dfa, DFB dfb) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb) {
        const auto& da = a.data();
        const auto& db = b.data();
        std::vector<double> out(da.size());
        for (std::size_t i = 0; i < da.size(); ++i) out[i] = f(da[i], db[i]);
        auto an = a.node();
        auto bn = b.node();
        return make_op(sa, std::move(out), {a, b}, [an, bn, dfa, dfb](Node& n) {
            const auto& g = n.grad;
            auto& ga = an->ensure_grad();
            auto& gb = bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * dfa(an->data[i], bn->data[i]);
                gb[i] += g[i] * dfb(an->data[i], bn->data[i]);
            }
        });
    }
    const Shape os = broadcast_shape(sa, sb, name);
    const auto stra = broadcast_strides(os, sa, sb, name);
    const auto strb = broadcast_strides(os, sb, sa, name);
    std::vector<double> out(shape_numel(os));
    const auto& da = a.data();
    const auto& db = b.data();
    for_each_broadcast(os, stra, strb,
                       [&](std::size_t io, std::size_t ia, std::size_t ib) { out[io] = f(da[ia], db[ib]); });
    auto an = a.node();
    auto bn = b.node();
    return make_op(os, std::move(out), {a, b}, [an, bn, os, stra, strb, dfa, dfb](Node& n) {
        auto& ga = an->ensure_grad();
        auto& gb = bn->ensure_grad();
        const auto& g = n.grad;
        for_each_broadcast(os, stra, strb, [&](std::size_t io, std::size_t ia, std::size_t ib) {
            ga[ia] += g[io] * dfa(an->data[ia], bn->data[ib]);
            gb[ib] += g[io] * dfb(an->data[ia], bn->data[ib]);
        });
    });
}

// df receives (x, y) where y = f(x).
template <class F, class DF>
inline Tensor unary_elementwise(const Tensor& x, F f, DF df) {
    const auto& dx = x.data();
    std::vector<double> out(dx.size());
    for (std::size_t i = 0; i < dx.size(); ++i) out[i] = f(dx[i]);
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {x}, [xn, df](Node& n) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i] * df(xn->data[i], n.data[i]);
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

/// a*x + b, elementwise.
inline Tensor affine(const Tensor& x, double a, double b) {
    return detail::unary_elementwise(
        x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; });
}

inline Tensor scale(const Tensor& x, double a) { return affine(x, a, 0.0); }
inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor relu(const Tensor& x) {
    return detail::unary_elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary_elementwise(
        x,
        [](double v) {
            // stable in both tails
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor log(const Tensor& x) {
    return detail::unary_elementwise(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
    return detail::unary_elementwise(
        x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

/// Value copy with no graph connection (stop-gradient).
inline Tensor detach(const Tensor& x) {
    return Tensor::from_data(x.shape(), x.data());
}

inline Tensor ones_like(const Tensor& x) { return Tensor::ones(x.shape()); }
inline Tensor zeros_like(const Tensor& x) { return Tensor::zeros(x.shape()); }

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    auto xn = x.node();
    return detail::make_op({1}, {acc}, {x}, [xn](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        const double g = n.grad[0];
        for (double& v : gx) v += g;
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto xn = x.node();
    return detail::make_op(std::move(shape), x.data(), {x}, [xn](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
    });
}

inline Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: empty input list");
    for (const auto& t : xs)
        if (!t.defined()) throw std::invalid_argument("concat: input list contains an empty tensor");
    const Shape& s0 = xs[0].shape();
    const int r = static_cast<int>(s0.size());
    if (axis < 0 || axis >= r) throw std::invalid_argument("concat: axis out of range");
    Shape out_shape = s0;
    int axis_total = 0;
    for (const auto& t : xs) {
        const Shape& s = t.shape();
        if (static_cast<int>(s.size()) != r)
            throw std::invalid_argument("concat: rank mismatch between " + shape_str(s0) + " and " + shape_str(s));
        for (int a = 0; a < r; ++a)
            if (a != axis && s[a] != s0[a])
                throw std::invalid_argument("concat: shape mismatch between " + shape_str(s0) + " and " +
                                            shape_str(s) + " outside axis " + std::to_string(axis));
        axis_total += s[axis];
    }
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(s0[a]);
    for (int a = axis + 1; a < r; ++a) inner *= static_cast<std::size_t>(s0[a]);

    std::vector<double> out(shape_numel(out_shape));
    const std::size_t out_row = static_cast<std::size_t>(axis_total) * inner;
    std::size_t axis_off = 0;
    for (const auto& t : xs) {
        const auto& d = t.data();
        const std::size_t rows = static_cast<std::size_t>(t.shape()[axis]) * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * rows), rows,
                        out.begin() + static_cast<std::ptrdiff_t>(o * out_row + axis_off));
        axis_off += rows;
    }

    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& t : xs) nodes.push_back(t.node());
    return detail::make_op(out_shape, std::move(out), xs, [nodes, outer, inner, out_row, axis](detail::Node& n) {
        std::size_t axis_off = 0;
        for (const auto& xn : nodes) {
            auto& gx = xn->ensure_grad();
            const std::size_t rows = static_cast<std::size_t>(xn->shape[static_cast<std::size_t>(axis)]) * inner;
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < rows; ++i) gx[o * rows + i] += n.grad[o * out_row + axis_off + i];
            axis_off += rows;
        }
    });
}

inline Tensor slice(const Tensor& x, int axis, int start, int len) {
    const Shape& s = x.shape();
    const int r = static_cast<int>(s.size());
    if (axis < 0 || axis >= r) throw std::invalid_argument("slice: axis out of range");
    if (start < 0 || len < 1 || start + len > s[axis])
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                    ") invalid for axis size " + std::to_string(s[axis]));
    Shape out_shape = s;
    out_shape[axis] = len;
    std::size_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a) outer *= static_cast<std::size_t>(s[a]);
    for (int a = axis + 1; a < r; ++a) inner *= static_cast<std::size_t>(s[a]);
    const std::size_t in_row = static_cast<std::size_t>(s[axis]) * inner;
    const std::size_t out_rows = static_cast<std::size_t>(len) * inner;
    const std::size_t off = static_cast<std::size_t>(start) * inner;

    std::vector<double> out(shape_numel(out_shape));
    const auto& d = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * in_row + off), out_rows,
                    out.begin() + static_cast<std::ptrdiff_t>(o * out_rows));
    auto xn = x.node();
    return detail::make_op(out_shape, std::move(out), {x}, [xn, outer, in_row, out_rows, off](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < out_rows; ++i) gx[o * in_row + off + i] += n.grad[o * out_rows + i];
    });
}

namespace detail {

inline void check_row_indices(const std::vector<int>& idx, int limit, const char* opname) {
    int prev = -1;
    for (int i : idx) {
        if (i < 0 || i >= limit)
            throw std::invalid_argument(std::string(opname) + ": index " + std::to_string(i) +
                                        " out of range [0," + std::to_string(limit) + ")");
        if (i <= prev) throw std::invalid_argument(std::string(opname) + ": indices must be strictly ascending");
        prev = i;
    }
}

}  // namespace detail

/// Select rows along axis 0 (channels), preserving ascending order.
inline Tensor gather_channels(const Tensor& x, const std::vector<int>& idx) {
    const Shape& s = x.shape();
    if (s.empty()) throw std::invalid_argument("gather_channels: rank-0 input");
    if (idx.empty()) throw std::invalid_argument("gather_channels: empty index list");
    detail::check_row_indices(idx, s[0], "gather_channels");
    const std::size_t row = x.size() / static_cast<std::size_t>(s[0]);
    Shape out_shape = s;
    out_shape[0] = static_cast<int>(idx.size());
    std::vector<double> out(row * idx.size());
    const auto& d = x.data();
    for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(idx[k]) * row), row,
                    out.begin() + static_cast<std::ptrdiff_t>(k * row));
    auto xn = x.node();
    return detail::make_op(out_shape, std::move(out), {x}, [xn, idx, row](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t i = 0; i < row; ++i) gx[static_cast<std::size_t>(idx[k]) * row + i] += n.grad[k * row + i];
    });
}

/// Place rows of x at positions idx along a new axis-0 of size `channels`,
/// zero elsewhere.
inline Tensor scatter_channels(const Tensor& x, const std::vector<int>& idx, int channels) {
    const Shape& s = x.shape();
    if (s.empty()) throw std::invalid_argument("scatter_channels: rank-0 input");
    if (static_cast<std::size_t>(s[0]) != idx.size())
        throw std::invalid_argument("scatter_channels: row count " + std::to_string(s[0]) +
                                    " does not match index count " + std::to_string(idx.size()));
    detail::check_row_indices(idx, channels, "scatter_channels");
    const std::size_t row = x.size() / static_cast<std::size_t>(s[0]);
    Shape out_shape = s;
    out_shape[0] = channels;
    std::vector<double> out(row * static_cast<std::size_t>(channels), 0.0);
    const auto& d = x.data();
    for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(k * row), row,
                    out.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(idx[k]) * row));
    auto xn = x.node();
    return detail::make_op(out_shape, std::move(out), {x}, [xn, idx, row](detail::Node& n) {
        auto& gx = xn->ensure_grad();
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t i = 0; i < row; ++i) gx[k * row + i] += n.grad[static_cast<std::size_t>(idx[k]) * row + i];
    });
}

/// Copy of `base` with rows idx replaced by the rows of `values`.
/// Untouched rows pass through bit-exactly.
inline Tensor replace_channels(const Tensor& base, const Tensor& values, const std::vector<int>& idx) {
    const Shape& sb = base.shape();
    const Shape& sv = values.shape();
    if (sb.size() != sv.size() || sb.empty())
        throw std::invalid_argument("replace_channels: rank mismatch between " + shape_str(sb) + " and " +
                                    shape_str(sv));
    for (std::size_t a = 1; a < sb.size(); ++a)
        if (sb[a] != sv[a])
            throw std::invalid_argument("replace_channels: row shape mismatch between " + shape_str(sb) + " and " +
                                        shape_str(sv));
    if (static_cast<std::size_t>(sv[0]) != idx.size())
        throw std::invalid_argument("replace_channels: value rows do not match index count");
    detail::check_row_indices(idx, sb[0], "replace_channels");
    const std::size_t row = base.size() / static_cast<std::size_t>(sb[0]);
    std::vector<double> out = base.data();
    const auto& dv = values.data();
    for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy_n(dv.begin() + static_cast<std::ptrdiff_t>(k * row), row,
                    out.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(idx[k]) * row));
    auto bn = base.node();
    auto vn = values.node();
    return detail::make_op(sb, std::move(out), {base, values}, [bn, vn, idx, row](detail::Node& n) {
        auto& gb = bn->ensure_grad();
        auto& gv = vn->ensure_grad();
        std::vector<char> replaced(bn->data.size() / row, 0);
        for (int i : idx) replaced[static_cast<std::size_t>(i)] = 1;
        for (std::size_t c = 0; c < replaced.size(); ++c)
            if (!replaced[c])
                for (std::size_t i = 0; i < row; ++i) gb[c * row + i] += n.grad[c * row + i];
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t i = 0; i < row; ++i) gv[k * row + i] += n.grad[static_cast<std::size_t>(idx[k]) * row + i];
    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

/// Reverse-mode sweep from a scalar. Leaf gradients accumulate across
/// calls; interior gradients are reset per sweep.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));

    // iterative post-order DFS over parents
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    struct Frame {
        detail::Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    detail::Node* root = loss.node().get();
    if (seen.insert(root).second) stack.push_back({root, 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::Node* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // interior nodes get a fresh buffer; leaves keep accumulating
    for (detail::Node* n : order)
        if (n->backward) n->ensure_grad().assign(n->data.size(), 0.0);

    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward && (*it)->requires_grad) (*it)->backward(**it);
}

inline void Tensor::backward() const { prseg::backward(*this); }

}  // namespace prseg
