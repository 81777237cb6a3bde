#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fnr/errors.hpp"
#include "fnr/parallel.hpp"
#include "fnr/rng.hpp"

namespace fnr {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

inline std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << ',';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // sized on first accumulation
    bool requires_grad = false;
    std::vector<NodePtr<T>> parents;
    std::function<void(Node<T>&)> backward;

    std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), T(0));
        }
    }

    void accumulate(const T* g) {
        ensure_grad();
        const std::size_t n = grad.size();
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] += g[i];
        }
    }
};

// Thread-local switch: when disabled, ops produce detached results.
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

} // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Value-semantic handle over a graph node. Copies share storage.
template <typename T>
class Tensor {
public:
    using Scalar = T;

    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_to_string(shape));
        }
        auto node = std::make_shared<detail::Node<T>>();
        node->shape = std::move(shape);
        node->value = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), T(0)), requires_grad);
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), T(1)), requires_grad);
    }

    static Tensor full(Shape shape, T fill, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), fill), requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), T mean = T(0), bool requires_grad = false) {
        const auto n = shape_numel(shape);
        std::vector<T> data(static_cast<std::size_t>(n));
        for (auto& v : data) {
            v = static_cast<T>(rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
        }
        return from_data(std::move(shape), std::move(data), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t ndim() const { return node_->shape.size(); }
    std::int64_t numel() const { return node_->numel(); }

    std::span<const T> values() const { return {node_->value.data(), node_->value.size()}; }
    std::span<T> values_mut() { return {node_->value.data(), node_->value.size()}; }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::span<const T> grad() const {
        if (!has_grad()) {
            throw Error("tensor has no gradient populated");
        }
        return {node_->grad.data(), node_->grad.size()};
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    T item() const {
        if (numel() != 1) {
            throw ShapeError("item() requires a single-element tensor, got shape " + shape_to_string(shape()));
        }
        return node_->value[0];
    }

    Tensor detach() const {
        auto node = std::make_shared<detail::Node<T>>();
        node->shape = node_->shape;
        node->value = node_->value;
        node->requires_grad = false;
        return Tensor(std::move(node));
    }

    void zero_grad() {
        if (node_->grad.size() == node_->value.size()) {
            std::fill(node_->grad.begin(), node_->grad.end(), T(0));
        }
    }

    // Reverse-mode sweep from a scalar root. Each node's backward hook runs
    // exactly once, in reverse topological order.
    void backward() const {
        if (numel() != 1) {
            throw ShapeError("backward() requires a scalar loss, got shape " + shape_to_string(shape()));
        }
        if (!node_->requires_grad) {
            throw Error("backward() called on a tensor that does not require grad");
        }
        std::vector<detail::Node<T>*> order;
        std::unordered_set<detail::Node<T>*> visited;
        // Iterative post-order DFS.
        std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            if (next_child < node->parents.size()) {
                detail::Node<T>* parent = node->parents[next_child].get();
                ++next_child;
                if (parent->requires_grad && visited.insert(parent).second) {
                    stack.emplace_back(parent, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward) {
                (*it)->backward(**it);
            }
        }
    }

    detail::NodePtr<T> node() const { return node_; }
    explicit Tensor(detail::NodePtr<T> node) : node_(std::move(node)) {}

private:
    detail::NodePtr<T> node_;
};

namespace detail {

// Builds an op result node. Parents and the backward hook are only retained
// when the result participates in gradient computation.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool needs = false;
    if (grad_mode_flag()) {
        for (const auto& p : parents) {
            needs = needs || p.requires_grad();
        }
    }
    node->requires_grad = needs;
    if (needs) {
        node->parents.reserve(parents.size());
        for (auto& p : parents) {
            node->parents.push_back(p.node());
        }
        node->backward = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

} // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] + bv[i];
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->accumulate(self.grad.data());
        }
        if (bn->requires_grad) {
            bn->accumulate(self.grad.data());
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] - bv[i];
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->accumulate(self.grad.data());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                bn->grad[i] -= self.grad[i];
            }
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] * bv[i];
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                an->grad[i] += self.grad[i] * bn->value[i];
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                bn->grad[i] += self.grad[i] * an->value[i];
            }
        }
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    const auto av = a.values();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] + c;
    }
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->accumulate(self.grad.data());
        }
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    const auto av = a.values();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] * c;
    }
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an, c](detail::Node<T>& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                an->grad[i] += self.grad[i] * c;
            }
        }
    });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return mul_scalar(a, T(-1));
}

// Multiply the whole tensor by a learned scalar (shape [1]) tensor.
template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s) {
    if (s.numel() != 1) {
        throw ShapeError("scale_by: scale must be a single-element tensor");
    }
    const T sv = s.values()[0];
    const auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xv[i] * sv;
    }
    auto xn = x.node();
    auto sn = s.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x, s}, [xn, sn, sv](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                xn->grad[i] += self.grad[i] * sv;
            }
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            T acc = T(0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                acc += self.grad[i] * xn->value[i];
            }
            sn->grad[0] += acc;
        }
    });
}

// ---- activations ----

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    const auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xv[i] > T(0) ? xv[i] : T(0);
    }
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x}, [xn](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            // Subgradient at 0 takes the negative-side value (0).
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                xn->grad[i] += xn->value[i] > T(0) ? self.grad[i] : T(0);
            }
        }
    });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    const auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
    }
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x}, [xn, slope](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            // Subgradient at 0 takes the negative-side value (slope).
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                xn->grad[i] += self.grad[i] * (xn->value[i] > T(0) ? T(1) : slope);
            }
        }
    });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
    const auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::tanh(xv[i]);
    }
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x}, [xn](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const T y = self.value[i];
                xn->grad[i] += self.grad[i] * (T(1) - y * y);
            }
        }
    });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    const auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        // max(x,0) + log1p(exp(-|x|)), stable for large |x|
        const T v = xv[i];
        out[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
    }
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x}, [xn](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const T v = xn->value[i];
                const T sig = T(1) / (T(1) + std::exp(-v));
                xn->grad[i] += self.grad[i] * sig;
            }
        }
    });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& x) {
    const auto xv = x.values();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::sqrt(xv[i]);
    }
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x}, [xn](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                xn->grad[i] += self.grad[i] / (T(2) * self.value[i]);
            }
        }
    });
}

// ---- reductions ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    const auto xv = x.values();
    T acc = T(0);
    for (auto v : xv) {
        acc += v;
    }
    auto xn = x.node();
    return detail::make_op<T>({1}, {acc}, {x}, [xn](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            const T g = self.grad[0];
            for (auto& v : xn->grad) {
                v += g;
            }
        }
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return mul_scalar(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

// Sum along one axis, keeping it as size 1.
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.ndim()) {
        throw ShapeError("sum_axis: axis out of range");
    }
    const auto& shape = x.shape();
    std::int64_t outer = 1;
    std::int64_t inner = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= shape[i];
    }
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    const std::int64_t len = shape[axis];
    Shape out_shape = shape;
    out_shape[axis] = 1;
    std::vector<T> out(static_cast<std::size_t>(outer * inner), T(0));
    const auto xv = x.values();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t k = 0; k < len; ++k) {
            const T* src = xv.data() + (o * len + k) * inner;
            T* dst = out.data() + o * inner;
            for (std::int64_t i = 0; i < inner; ++i) {
                dst[i] += src[i];
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<T>(std::move(out_shape), std::move(out), {x},
                              [xn, outer, inner, len](detail::Node<T>& self) {
                                  if (!xn->requires_grad) {
                                      return;
                                  }
                                  xn->ensure_grad();
                                  for (std::int64_t o = 0; o < outer; ++o) {
                                      const T* g = self.grad.data() + o * inner;
                                      for (std::int64_t k = 0; k < len; ++k) {
                                          T* dst = xn->grad.data() + (o * len + k) * inner;
                                          for (std::int64_t i = 0; i < inner; ++i) {
                                              dst[i] += g[i];
                                          }
                                      }
                                  }
                              });
}

// ---- shape manipulation ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw ShapeError("reshape: element count mismatch, " + shape_to_string(x.shape()) + " -> " +
                         shape_to_string(new_shape));
    }
    std::vector<T> out(x.values().begin(), x.values().end());
    auto xn = x.node();
    return detail::make_op<T>(std::move(new_shape), std::move(out), {x}, [xn](detail::Node<T>& self) {
        if (xn->requires_grad) {
            xn->accumulate(self.grad.data());
        }
    });
}

// Concatenate along axis 1 (channels) for rank-4 tensors.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 4 || b.ndim() != 4) {
        throw ShapeError("concat_channels expects rank-4 tensors");
    }
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3]) {
        throw ShapeError("concat_channels: incompatible shapes " + shape_to_string(as) + " vs " +
                         shape_to_string(bs));
    }
    const std::int64_t batch = as[0];
    const std::int64_t ca = as[1];
    const std::int64_t cb = bs[1];
    const std::int64_t hw = as[2] * as[3];
    std::vector<T> out(static_cast<std::size_t>(batch * (ca + cb) * hw));
    const auto av = a.values();
    const auto bv = b.values();
    for (std::int64_t n = 0; n < batch; ++n) {
        std::copy_n(av.data() + n * ca * hw, ca * hw, out.data() + n * (ca + cb) * hw);
        std::copy_n(bv.data() + n * cb * hw, cb * hw, out.data() + n * (ca + cb) * hw + ca * hw);
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op<T>({batch, ca + cb, as[2], as[3]}, std::move(out), {a, b},
                              [an, bn, batch, ca, cb, hw](detail::Node<T>& self) {
                                  if (an->requires_grad) {
                                      an->ensure_grad();
                                      for (std::int64_t n = 0; n < batch; ++n) {
                                          const T* g = self.grad.data() + n * (ca + cb) * hw;
                                          T* dst = an->grad.data() + n * ca * hw;
                                          for (std::int64_t i = 0; i < ca * hw; ++i) {
                                              dst[i] += g[i];
                                          }
                                      }
                                  }
                                  if (bn->requires_grad) {
                                      bn->ensure_grad();
                                      for (std::int64_t n = 0; n < batch; ++n) {
                                          const T* g = self.grad.data() + n * (ca + cb) * hw + ca * hw;
                                          T* dst = bn->grad.data() + n * cb * hw;
                                          for (std::int64_t i = 0; i < cb * hw; ++i) {
                                              dst[i] += g[i];
                                          }
                                      }
                                  }
                              });
}

// Select one batch item, keeping the batch axis (size 1).
template <typename T>
Tensor<T> narrow_batch(const Tensor<T>& x, std::int64_t index) {
    if (x.ndim() < 1 || index < 0 || index >= x.shape()[0]) {
        throw ShapeError("narrow_batch: index out of range");
    }
    const std::int64_t stride = x.numel() / x.shape()[0];
    Shape out_shape = x.shape();
    out_shape[0] = 1;
    std::vector<T> out(x.values().begin() + index * stride, x.values().begin() + (index + 1) * stride);
    auto xn = x.node();
    return detail::make_op<T>(std::move(out_shape), std::move(out), {x},
                              [xn, index, stride](detail::Node<T>& self) {
                                  if (xn->requires_grad) {
                                      xn->ensure_grad();
                                      T* dst = xn->grad.data() + index * stride;
                                      for (std::int64_t i = 0; i < stride; ++i) {
                                          dst[i] += self.grad[i];
                                      }
                                  }
                              });
}

// Concatenate along the batch axis.
template <typename T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& items) {
    if (items.empty()) {
        throw ShapeError("concat_batch: empty input");
    }
    Shape inner = items[0].shape();
    std::int64_t total = 0;
    for (const auto& t : items) {
        Shape s = t.shape();
        if (std::vector(s.begin() + 1, s.end()) != std::vector(inner.begin() + 1, inner.end())) {
            throw ShapeError("concat_batch: inner shapes differ");
        }
        total += s[0];
    }
    const std::int64_t stride = shape_numel(inner) / inner[0];
    Shape out_shape = inner;
    out_shape[0] = total;
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(total * stride));
    for (const auto& t : items) {
        out.insert(out.end(), t.values().begin(), t.values().end());
    }
    std::vector<detail::NodePtr<T>> nodes;
    nodes.reserve(items.size());
    for (const auto& t : items) {
        nodes.push_back(t.node());
    }
    return detail::make_op<T>(std::move(out_shape), std::move(out), items,
                              [nodes, stride](detail::Node<T>& self) {
                                  std::int64_t offset = 0;
                                  for (const auto& n : nodes) {
                                      const std::int64_t count = n->numel();
                                      if (n->requires_grad) {
                                          n->ensure_grad();
                                          for (std::int64_t i = 0; i < count; ++i) {
                                              n->grad[i] += self.grad[offset + i];
                                          }
                                      }
                                      offset += count;
                                  }
                              });
}

// ---- softmax ----

// Numerically stabilized softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.ndim()) {
        throw ShapeError("softmax: axis out of range");
    }
    const auto& shape = x.shape();
    std::int64_t outer = 1;
    std::int64_t inner = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= shape[i];
    }
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        inner *= shape[i];
    }
    const std::int64_t len = shape[axis];
    const auto xv = x.values();
    std::vector<T> out(xv.size());
    parallel_for(outer, [&](std::int64_t o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            const std::int64_t base = o * len * inner + i;
            T mx = xv[base];
            for (std::int64_t k = 1; k < len; ++k) {
                mx = std::max(mx, xv[base + k * inner]);
            }
            T sum = T(0);
            for (std::int64_t k = 0; k < len; ++k) {
                const T e = std::exp(xv[base + k * inner] - mx);
                out[base + k * inner] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (std::int64_t k = 0; k < len; ++k) {
                out[base + k * inner] *= inv;
            }
        }
    });
    auto xn = x.node();
    return detail::make_op<T>(x.shape(), std::move(out), {x},
                              [xn, outer, inner, len](detail::Node<T>& self) {
                                  if (!xn->requires_grad) {
                                      return;
                                  }
                                  xn->ensure_grad();
                                  // dx = p * (g - sum(g * p)) along the axis
                                  parallel_for(outer, [&](std::int64_t o) {
                                      for (std::int64_t i = 0; i < inner; ++i) {
                                          const std::int64_t base = o * len * inner + i;
                                          T dot = T(0);
                                          for (std::int64_t k = 0; k < len; ++k) {
                                              const std::int64_t idx = base + k * inner;
                                              dot += self.grad[idx] * self.value[idx];
                                          }
                                          for (std::int64_t k = 0; k < len; ++k) {
                                              const std::int64_t idx = base + k * inner;
                                              xn->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
                                          }
                                      }
                                  });
                              });
}

} // namespace fnr
