#pragma once

// Dense rank-0/1/2 tensors with reverse-mode gradient propagation. Every
// operation that touches a gradient-tracked input records a backward rule;
// backward(loss) replays the rules in reverse topological order. Graphs are
// confined to one thread; frozen tensors are immutable and shareable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ctrsgen/rng.hpp"

namespace ctrsgen {

template <class S>
struct TensorImpl {
    std::vector<int> shape;
    std::vector<S> value;
    std::vector<S> grad;  // same length as value once allocated
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl<S>>> parents;
    std::function<void(const std::vector<S>&)> backward_fn;  // argument: this node's grad

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), S(0));
        }
    }
};

namespace detail {

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) {
            throw std::invalid_argument("tensor: negative dimension in shape " + shape_str(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace detail

template <class S>
class TensorT {
public:
    TensorT() = default;

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }

    static TensorT filled(std::vector<int> shape, S v, bool requires_grad = false) {
        auto impl = std::make_shared<TensorImpl<S>>();
        impl->value.assign(detail::shape_numel(shape), v);
        impl->shape = std::move(shape);
        impl->requires_grad = requires_grad;
        if (requires_grad) impl->ensure_grad();
        return TensorT(std::move(impl));
    }

    static TensorT scalar(S v) {
        return from({}, {v});
    }

    static TensorT from(std::vector<int> shape, std::vector<S> values, bool requires_grad = false) {
        if (detail::shape_numel(shape) != values.size()) {
            throw std::invalid_argument("tensor: data length " + std::to_string(values.size()) +
                                        " does not match shape " + detail::shape_str(shape));
        }
        auto impl = std::make_shared<TensorImpl<S>>();
        impl->shape = std::move(shape);
        impl->value = std::move(values);
        impl->requires_grad = requires_grad;
        if (requires_grad) impl->ensure_grad();
        return TensorT(std::move(impl));
    }

    static TensorT uniform(std::vector<int> shape, S lo, S hi, Rng& rng, bool requires_grad = true) {
        std::vector<S> v(detail::shape_numel(shape));
        for (auto& x : v) {
            x = static_cast<S>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
        }
        return from(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::size_t size() const { return impl_->value.size(); }
    int dim(int i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }

    const std::vector<S>& value() const { return impl_->value; }
    std::vector<S>& mutable_value() { return impl_->value; }

    S item() const {
        if (size() != 1) {
            throw std::invalid_argument("tensor: item() on non-scalar of shape " +
                                        detail::shape_str(impl_->shape));
        }
        return impl_->value[0];
    }

    S at(int i) const { return impl_->value[static_cast<std::size_t>(i)]; }
    S at(int i, int j) const {
        return impl_->value[static_cast<std::size_t>(i) * static_cast<std::size_t>(impl_->shape[1]) +
                            static_cast<std::size_t>(j)];
    }

    bool requires_grad() const { return impl_->requires_grad; }

    const std::vector<S>& grad() const {
        if (!impl_->requires_grad) {
            throw std::logic_error("tensor: grad() on a tensor without gradient tracking");
        }
        const_cast<TensorImpl<S>*>(impl_.get())->ensure_grad();
        return impl_->grad;
    }

    std::vector<S>& mutable_grad() {
        if (!impl_->requires_grad) {
            throw std::logic_error("tensor: mutable_grad() on a tensor without gradient tracking");
        }
        impl_->ensure_grad();
        return impl_->grad;
    }

    void zero_grad() {
        if (impl_->requires_grad) {
            impl_->grad.assign(impl_->value.size(), S(0));
        }
    }

    bool all_finite() const {
        for (S v : impl_->value) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    const std::shared_ptr<TensorImpl<S>>& impl() const { return impl_; }

    explicit TensorT(std::shared_ptr<TensorImpl<S>> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<TensorImpl<S>> impl_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

namespace detail {

template <class S>
TensorT<S> make_node(std::vector<int> shape, std::vector<S> value,
                     const std::vector<TensorT<S>>& inputs,
                     std::function<void(const std::vector<S>&)> backward) {
    auto impl = std::make_shared<TensorImpl<S>>();
    impl->shape = std::move(shape);
    impl->value = std::move(value);
    for (const auto& in : inputs) {
        if (in.requires_grad()) {
            impl->requires_grad = true;
            impl->parents.push_back(in.impl());
        }
    }
    if (impl->requires_grad) {
        impl->backward_fn = std::move(backward);
    }
    return TensorT<S>(std::move(impl));
}

template <class S>
void require_rank(const TensorT<S>& t, int rank, const char* op) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    " tensor, got shape " + shape_str(t.shape()));
    }
}

template <class S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

// Accumulate into a parent's grad buffer if it participates in the graph.
template <class S>
std::vector<S>* grad_of(const TensorT<S>& t) {
    if (!t.requires_grad()) return nullptr;
    t.impl()->ensure_grad();
    return &t.impl()->grad;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return detail::make_node<S>(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
        if (auto* gb = detail::grad_of(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
        }
    });
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return detail::make_node<S>(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
        if (auto* gb = detail::grad_of(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        }
    });
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return detail::make_node<S>(a.shape(), std::move(out), {a, b}, [a, b](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
        }
        if (auto* gb = detail::grad_of(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
        }
    });
}

// n-ary same-shape sum; used to accumulate per-position loss terms in one node.
template <class S>
TensorT<S> add_n(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("add_n: empty input list");
    }
    std::vector<S> out(parts[0].size(), S(0));
    for (const auto& p : parts) {
        detail::require_same_shape(p, parts[0], "add_n");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.value()[i];
    }
    return detail::make_node<S>(parts[0].shape(), std::move(out), parts,
                                [parts](const std::vector<S>& g) {
                                    for (const auto& p : parts) {
                                        if (auto* gp = detail::grad_of(p)) {
                                            for (std::size_t i = 0; i < g.size(); ++i) (*gp)[i] += g[i];
                                        }
                                    }
                                });
}

template <class S>
TensorT<S> scalar_scale(const TensorT<S>& a, S c) {
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
    return detail::make_node<S>(a.shape(), std::move(out), {a}, [a, c](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c;
        }
    });
}

template <class S>
TensorT<S> add_const(const TensorT<S>& a, S c) {
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
    return detail::make_node<S>(a.shape(), std::move(out), {a}, [a](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
    });
}

template <class S>
TensorT<S> tanh(const TensorT<S>& a) {
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
    TensorT<S> result = detail::make_node<S>(a.shape(), std::move(out), {a}, nullptr);
    if (result.requires_grad()) {
        auto out_impl = result.impl();
        result.impl()->backward_fn = [a, out_impl](const std::vector<S>& g) {
            if (auto* ga = detail::grad_of(a)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const S y = out_impl->value[i];
                    (*ga)[i] += g[i] * (S(1) - y * y);
                }
            }
        };
    }
    return result;
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& a) {
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = S(1) / (S(1) + std::exp(-a.value()[i]));
    }
    TensorT<S> result = detail::make_node<S>(a.shape(), std::move(out), {a}, nullptr);
    if (result.requires_grad()) {
        auto out_impl = result.impl();
        result.impl()->backward_fn = [a, out_impl](const std::vector<S>& g) {
            if (auto* ga = detail::grad_of(a)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const S y = out_impl->value[i];
                    (*ga)[i] += g[i] * y * (S(1) - y);
                }
            }
        };
    }
    return result;
}

// log with a floor guarding exact zeros; gradient is zero in the clamped region.
template <class S>
TensorT<S> log_floored(const TensorT<S>& a, S floor) {
    std::vector<S> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::log(std::max(a.value()[i], floor));
    }
    return detail::make_node<S>(a.shape(), std::move(out), {a}, [a, floor](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (a.value()[i] > floor) {
                    (*ga)[i] += g[i] / a.value()[i];
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// matmul and friends
// ---------------------------------------------------------------------------

// Supports (m,k)x(k,n), (m,k)x(k), (k)x(k,n) and (k)x(k) -> scalar dot.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
    const int ra = a.rank();
    const int rb = b.rank();
    auto fail = [&]() {
        throw std::invalid_argument("matmul: incompatible shapes " + detail::shape_str(a.shape()) +
                                    " x " + detail::shape_str(b.shape()));
    };
    if (ra == 2 && rb == 2) {
        const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
        if (k != k2) fail();
        std::vector<S> out(static_cast<std::size_t>(m) * n, S(0));
        for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
                const S av = a.value()[static_cast<std::size_t>(i) * k + p];
                if (av == S(0)) continue;
                const S* brow = b.value().data() + static_cast<std::size_t>(p) * n;
                S* orow = out.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
        return detail::make_node<S>({m, n}, std::move(out), {a, b},
                                    [a, b, m, k, n](const std::vector<S>& g) {
                                        if (auto* ga = detail::grad_of(a)) {
                                            // dA = G B^T
                                            for (int i = 0; i < m; ++i)
                                                for (int p = 0; p < k; ++p) {
                                                    S acc = S(0);
                                                    for (int j = 0; j < n; ++j)
                                                        acc += g[static_cast<std::size_t>(i) * n + j] *
                                                               b.value()[static_cast<std::size_t>(p) * n + j];
                                                    (*ga)[static_cast<std::size_t>(i) * k + p] += acc;
                                                }
                                        }
                                        if (auto* gb = detail::grad_of(b)) {
                                            // dB = A^T G
                                            for (int p = 0; p < k; ++p)
                                                for (int j = 0; j < n; ++j) {
                                                    S acc = S(0);
                                                    for (int i = 0; i < m; ++i)
                                                        acc += a.value()[static_cast<std::size_t>(i) * k + p] *
                                                               g[static_cast<std::size_t>(i) * n + j];
                                                    (*gb)[static_cast<std::size_t>(p) * n + j] += acc;
                                                }
                                        }
                                    });
    }
    if (ra == 2 && rb == 1) {
        const int m = a.dim(0), k = a.dim(1);
        if (b.dim(0) != k) fail();
        std::vector<S> out(static_cast<std::size_t>(m), S(0));
        for (int i = 0; i < m; ++i) {
            S acc = S(0);
            const S* arow = a.value().data() + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) acc += arow[p] * b.value()[static_cast<std::size_t>(p)];
            out[static_cast<std::size_t>(i)] = acc;
        }
        return detail::make_node<S>({m}, std::move(out), {a, b},
                                    [a, b, m, k](const std::vector<S>& g) {
                                        if (auto* ga = detail::grad_of(a)) {
                                            for (int i = 0; i < m; ++i)
                                                for (int p = 0; p < k; ++p)
                                                    (*ga)[static_cast<std::size_t>(i) * k + p] +=
                                                        g[static_cast<std::size_t>(i)] * b.value()[static_cast<std::size_t>(p)];
                                        }
                                        if (auto* gb = detail::grad_of(b)) {
                                            for (int p = 0; p < k; ++p) {
                                                S acc = S(0);
                                                for (int i = 0; i < m; ++i)
                                                    acc += a.value()[static_cast<std::size_t>(i) * k + p] *
                                                           g[static_cast<std::size_t>(i)];
                                                (*gb)[static_cast<std::size_t>(p)] += acc;
                                            }
                                        }
                                    });
    }
    if (ra == 1 && rb == 2) {
        const int k = a.dim(0), n = b.dim(1);
        if (b.dim(0) != k) fail();
        std::vector<S> out(static_cast<std::size_t>(n), S(0));
        for (int p = 0; p < k; ++p) {
            const S av = a.value()[static_cast<std::size_t>(p)];
            if (av == S(0)) continue;
            const S* brow = b.value().data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += av * brow[j];
        }
        return detail::make_node<S>({n}, std::move(out), {a, b},
                                    [a, b, k, n](const std::vector<S>& g) {
                                        if (auto* ga = detail::grad_of(a)) {
                                            for (int p = 0; p < k; ++p) {
                                                S acc = S(0);
                                                const S* brow = b.value().data() + static_cast<std::size_t>(p) * n;
                                                for (int j = 0; j < n; ++j) acc += brow[j] * g[static_cast<std::size_t>(j)];
                                                (*ga)[static_cast<std::size_t>(p)] += acc;
                                            }
                                        }
                                        if (auto* gb = detail::grad_of(b)) {
                                            for (int p = 0; p < k; ++p)
                                                for (int j = 0; j < n; ++j)
                                                    (*gb)[static_cast<std::size_t>(p) * n + j] +=
                                                        a.value()[static_cast<std::size_t>(p)] * g[static_cast<std::size_t>(j)];
                                        }
                                    });
    }
    if (ra == 1 && rb == 1) {
        const int k = a.dim(0);
        if (b.dim(0) != k) fail();
        S acc = S(0);
        for (int p = 0; p < k; ++p) acc += a.value()[static_cast<std::size_t>(p)] * b.value()[static_cast<std::size_t>(p)];
        return detail::make_node<S>({}, {acc}, {a, b}, [a, b, k](const std::vector<S>& g) {
            if (auto* ga = detail::grad_of(a)) {
                for (int p = 0; p < k; ++p) (*ga)[static_cast<std::size_t>(p)] += g[0] * b.value()[static_cast<std::size_t>(p)];
            }
            if (auto* gb = detail::grad_of(b)) {
                for (int p = 0; p < k; ++p) (*gb)[static_cast<std::size_t>(p)] += g[0] * a.value()[static_cast<std::size_t>(p)];
            }
        });
    }
    fail();
    return {};
}

template <class S>
TensorT<S> transpose(const TensorT<S>& a) {
    detail::require_rank(a, 2, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    std::vector<S> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = a.value()[static_cast<std::size_t>(i) * n + j];
    return detail::make_node<S>({n, m}, std::move(out), {a}, [a, m, n](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    (*ga)[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
        }
    });
}

// Adds a row vector to every row of a matrix.
template <class S>
TensorT<S> add_rowvec(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_rank(a, 2, "add_rowvec");
    detail::require_rank(b, 1, "add_rowvec");
    const int m = a.dim(0), n = a.dim(1);
    if (b.dim(0) != n) {
        throw std::invalid_argument("add_rowvec: shape mismatch " + detail::shape_str(a.shape()) +
                                    " vs " + detail::shape_str(b.shape()));
    }
    std::vector<S> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(i) * n + j] =
                a.value()[static_cast<std::size_t>(i) * n + j] + b.value()[static_cast<std::size_t>(j)];
    return detail::make_node<S>(a.shape(), std::move(out), {a, b}, [a, b, m, n](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
        if (auto* gb = detail::grad_of(b)) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    (*gb)[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i) * n + j];
        }
    });
}

// out[i,:] = mask[i]*a[i,:] + (1-mask[i])*b[i,:] with a constant 0/1 mask.
// The masked GRU update: padded rows carry the previous state through.
template <class S>
TensorT<S> mask_lerp_rows(const TensorT<S>& a, const TensorT<S>& b, const std::vector<S>& mask) {
    detail::require_rank(a, 2, "mask_lerp_rows");
    detail::require_same_shape(a, b, "mask_lerp_rows");
    const int m = a.dim(0), n = a.dim(1);
    if (static_cast<int>(mask.size()) != m) {
        throw std::invalid_argument("mask_lerp_rows: mask length " + std::to_string(mask.size()) +
                                    " does not match rows " + std::to_string(m));
    }
    std::vector<S> out(a.size());
    for (int i = 0; i < m; ++i) {
        const S mi = mask[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * n + j;
            out[idx] = mi * a.value()[idx] + (S(1) - mi) * b.value()[idx];
        }
    }
    return detail::make_node<S>(a.shape(), std::move(out), {a, b}, [a, b, mask, m, n](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                    (*ga)[idx] += g[idx] * mask[static_cast<std::size_t>(i)];
                }
        }
        if (auto* gb = detail::grad_of(b)) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                    (*gb)[idx] += g[idx] * (S(1) - mask[static_cast<std::size_t>(i)]);
                }
        }
    });
}

// ---------------------------------------------------------------------------
// structure: concat / stack / slices
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat: empty input list");
    }
    std::vector<S> out;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        detail::require_rank(p, 1, "concat");
        offsets.push_back(out.size());
        out.insert(out.end(), p.value().begin(), p.value().end());
    }
    const int n = static_cast<int>(out.size());
    return detail::make_node<S>({n}, std::move(out), parts, [parts, offsets](const std::vector<S>& g) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
            if (auto* gp = detail::grad_of(parts[k])) {
                for (std::size_t i = 0; i < gp->size(); ++i) (*gp)[i] += g[offsets[k] + i];
            }
        }
    });
}

// Stack equal-length vectors as rows of a matrix.
template <class S>
TensorT<S> stack_rows(const std::vector<TensorT<S>>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("stack_rows: empty input list");
    }
    const int n = rows[0].dim(0);
    std::vector<S> out;
    out.reserve(rows.size() * static_cast<std::size_t>(n));
    for (const auto& r : rows) {
        detail::require_rank(r, 1, "stack_rows");
        detail::require_same_shape(r, rows[0], "stack_rows");
        out.insert(out.end(), r.value().begin(), r.value().end());
    }
    const int m = static_cast<int>(rows.size());
    return detail::make_node<S>({m, n}, std::move(out), rows, [rows, n](const std::vector<S>& g) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (auto* gr = detail::grad_of(rows[i])) {
                for (int j = 0; j < n; ++j) (*gr)[static_cast<std::size_t>(j)] += g[i * static_cast<std::size_t>(n) + j];
            }
        }
    });
}

// Concatenate two matrices along columns.
template <class S>
TensorT<S> hconcat(const TensorT<S>& a, const TensorT<S>& b) {
    detail::require_rank(a, 2, "hconcat");
    detail::require_rank(b, 2, "hconcat");
    if (a.dim(0) != b.dim(0)) {
        throw std::invalid_argument("hconcat: row mismatch " + detail::shape_str(a.shape()) + " vs " +
                                    detail::shape_str(b.shape()));
    }
    const int m = a.dim(0), na = a.dim(1), nb = b.dim(1);
    std::vector<S> out(static_cast<std::size_t>(m) * (na + nb));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < na; ++j)
            out[static_cast<std::size_t>(i) * (na + nb) + j] = a.value()[static_cast<std::size_t>(i) * na + j];
        for (int j = 0; j < nb; ++j)
            out[static_cast<std::size_t>(i) * (na + nb) + na + j] = b.value()[static_cast<std::size_t>(i) * nb + j];
    }
    return detail::make_node<S>({m, na + nb}, std::move(out), {a, b}, [a, b, m, na, nb](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < na; ++j)
                    (*ga)[static_cast<std::size_t>(i) * na + j] += g[static_cast<std::size_t>(i) * (na + nb) + j];
        }
        if (auto* gb = detail::grad_of(b)) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nb; ++j)
                    (*gb)[static_cast<std::size_t>(i) * nb + j] += g[static_cast<std::size_t>(i) * (na + nb) + na + j];
        }
    });
}

// Rows [r0, r1) of a matrix as a new matrix.
template <class S>
TensorT<S> row_slice(const TensorT<S>& a, int r0, int r1) {
    detail::require_rank(a, 2, "row_slice");
    const int m = a.dim(0), n = a.dim(1);
    if (r0 < 0 || r1 < r0 || r1 > m) {
        throw std::invalid_argument("row_slice: range [" + std::to_string(r0) + "," +
                                    std::to_string(r1) + ") out of bounds for " +
                                    detail::shape_str(a.shape()));
    }
    std::vector<S> out(a.value().begin() + static_cast<std::size_t>(r0) * n,
                       a.value().begin() + static_cast<std::size_t>(r1) * n);
    return detail::make_node<S>({r1 - r0, n}, std::move(out), {a}, [a, r0, n](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[static_cast<std::size_t>(r0) * n + i] += g[i];
            }
        }
    });
}

template <class S>
TensorT<S> row(const TensorT<S>& a, int i) {
    detail::require_rank(a, 2, "row");
    const int m = a.dim(0), n = a.dim(1);
    if (i < 0 || i >= m) {
        throw std::invalid_argument("row: index " + std::to_string(i) + " out of range for " +
                                    detail::shape_str(a.shape()));
    }
    std::vector<S> out(a.value().begin() + static_cast<std::size_t>(i) * n,
                       a.value().begin() + static_cast<std::size_t>(i + 1) * n);
    return detail::make_node<S>({n}, std::move(out), {a}, [a, i, n](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (int j = 0; j < n; ++j) (*ga)[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j)];
        }
    });
}

// ---------------------------------------------------------------------------
// reductions and selections
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> sum(const TensorT<S>& a) {
    S acc = S(0);
    for (S v : a.value()) acc += v;
    return detail::make_node<S>({}, {acc}, {a}, [a](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0];
        }
    });
}

template <class S>
TensorT<S> pick(const TensorT<S>& a, int i) {
    detail::require_rank(a, 1, "pick");
    if (i < 0 || i >= a.dim(0)) {
        throw std::invalid_argument("pick: index " + std::to_string(i) + " out of range for " +
                                    detail::shape_str(a.shape()));
    }
    return detail::make_node<S>({}, {a.value()[static_cast<std::size_t>(i)]}, {a},
                                [a, i](const std::vector<S>& g) {
                                    if (auto* ga = detail::grad_of(a)) {
                                        (*ga)[static_cast<std::size_t>(i)] += g[0];
                                    }
                                });
}

// Max over the last axis. Vector -> scalar, matrix -> per-row vector.
// Gradient routes to the first maximal element.
template <class S>
TensorT<S> max_over_axis(const TensorT<S>& a) {
    if (a.rank() == 1) {
        const int n = a.dim(0);
        if (n == 0) {
            throw std::invalid_argument("max_over_axis: empty vector");
        }
        int arg = 0;
        for (int j = 1; j < n; ++j) {
            if (a.value()[static_cast<std::size_t>(j)] > a.value()[static_cast<std::size_t>(arg)]) arg = j;
        }
        return detail::make_node<S>({}, {a.value()[static_cast<std::size_t>(arg)]}, {a},
                                    [a, arg](const std::vector<S>& g) {
                                        if (auto* ga = detail::grad_of(a)) {
                                            (*ga)[static_cast<std::size_t>(arg)] += g[0];
                                        }
                                    });
    }
    detail::require_rank(a, 2, "max_over_axis");
    const int m = a.dim(0), n = a.dim(1);
    if (n == 0) {
        throw std::invalid_argument("max_over_axis: empty rows");
    }
    std::vector<S> out(static_cast<std::size_t>(m));
    std::vector<int> args(static_cast<std::size_t>(m), 0);
    for (int i = 0; i < m; ++i) {
        int arg = 0;
        for (int j = 1; j < n; ++j) {
            if (a.value()[static_cast<std::size_t>(i) * n + j] > a.value()[static_cast<std::size_t>(i) * n + arg]) arg = j;
        }
        args[static_cast<std::size_t>(i)] = arg;
        out[static_cast<std::size_t>(i)] = a.value()[static_cast<std::size_t>(i) * n + arg];
    }
    return detail::make_node<S>({m}, std::move(out), {a}, [a, args, m, n](const std::vector<S>& g) {
        if (auto* ga = detail::grad_of(a)) {
            for (int i = 0; i < m; ++i)
                (*ga)[static_cast<std::size_t>(i) * n + args[static_cast<std::size_t>(i)]] += g[static_cast<std::size_t>(i)];
        }
    });
}

// ---------------------------------------------------------------------------
// masked softmax
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void check_mask(const std::vector<S>& mask, std::size_t n, const char* op) {
    if (mask.size() != n) {
        throw std::invalid_argument(std::string(op) + ": mask length " + std::to_string(mask.size()) +
                                    " does not match input length " + std::to_string(n));
    }
    bool any = false;
    for (S m : mask) {
        if (m != S(0) && m != S(1)) {
            throw std::invalid_argument(std::string(op) + ": mask entries must be 0 or 1");
        }
        if (m == S(1)) any = true;
    }
    if (!any) {
        throw std::invalid_argument(std::string(op) + ": all positions masked");
    }
}

template <class S>
void softmax_row(const S* x, const std::vector<S>& mask, S* y, std::size_t n) {
    S mx = -std::numeric_limits<S>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (mask[j] == S(1) && x[j] > mx) mx = x[j];
    }
    S total = S(0);
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = mask[j] == S(1) ? std::exp(x[j] - mx) : S(0);
        total += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
}

}  // namespace detail

// Probability distribution over the unmasked entries; masked entries are exactly 0.
template <class S>
TensorT<S> masked_softmax(const TensorT<S>& a, const std::vector<S>& mask) {
    detail::require_rank(a, 1, "masked_softmax");
    const std::size_t n = a.size();
    detail::check_mask(mask, n, "masked_softmax");
    std::vector<S> out(n);
    detail::softmax_row(a.value().data(), mask, out.data(), n);
    TensorT<S> result = detail::make_node<S>(a.shape(), std::move(out), {a}, nullptr);
    if (result.requires_grad()) {
        auto out_impl = result.impl();
        result.impl()->backward_fn = [a, out_impl](const std::vector<S>& g) {
            if (auto* ga = detail::grad_of(a)) {
                const std::vector<S>& y = out_impl->value;
                S dot = S(0);
                for (std::size_t j = 0; j < y.size(); ++j) dot += g[j] * y[j];
                for (std::size_t j = 0; j < y.size(); ++j) (*ga)[j] += y[j] * (g[j] - dot);
            }
        };
    }
    return result;
}

// Row-wise masked softmax of a matrix; one mask shared by every row.
template <class S>
TensorT<S> masked_softmax_rows(const TensorT<S>& a, const std::vector<S>& mask) {
    detail::require_rank(a, 2, "masked_softmax_rows");
    const int m = a.dim(0), n = a.dim(1);
    detail::check_mask(mask, static_cast<std::size_t>(n), "masked_softmax_rows");
    std::vector<S> out(a.size());
    for (int i = 0; i < m; ++i) {
        detail::softmax_row(a.value().data() + static_cast<std::size_t>(i) * n, mask,
                            out.data() + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(n));
    }
    TensorT<S> result = detail::make_node<S>(a.shape(), std::move(out), {a}, nullptr);
    if (result.requires_grad()) {
        auto out_impl = result.impl();
        result.impl()->backward_fn = [a, out_impl, m, n](const std::vector<S>& g) {
            if (auto* ga = detail::grad_of(a)) {
                for (int i = 0; i < m; ++i) {
                    const S* y = out_impl->value.data() + static_cast<std::size_t>(i) * n;
                    const S* gi = g.data() + static_cast<std::size_t>(i) * n;
                    S dot = S(0);
                    for (int j = 0; j < n; ++j) dot += gi[j] * y[j];
                    for (int j = 0; j < n; ++j)
                        (*ga)[static_cast<std::size_t>(i) * n + j] += y[j] * (gi[j] - dot);
                }
            }
        };
    }
    return result;
}

// ---------------------------------------------------------------------------
// embedding lookup
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> embed_row(const TensorT<S>& table, int id) {
    detail::require_rank(table, 2, "embedding_lookup");
    const int v = table.dim(0), e = table.dim(1);
    if (id < 0 || id >= v) {
        throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                    " out of range for vocabulary of " + std::to_string(v));
    }
    std::vector<S> out(table.value().begin() + static_cast<std::size_t>(id) * e,
                       table.value().begin() + static_cast<std::size_t>(id + 1) * e);
    return detail::make_node<S>({e}, std::move(out), {table}, [table, id, e](const std::vector<S>& g) {
        if (auto* gt = detail::grad_of(table)) {
            for (int j = 0; j < e; ++j) (*gt)[static_cast<std::size_t>(id) * e + j] += g[static_cast<std::size_t>(j)];
        }
    });
}

template <class S>
TensorT<S> embed_rows(const TensorT<S>& table, const std::vector<int>& ids) {
    detail::require_rank(table, 2, "embedding_lookup");
    const int v = table.dim(0), e = table.dim(1);
    std::vector<S> out;
    out.reserve(ids.size() * static_cast<std::size_t>(e));
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                        " out of range for vocabulary of " + std::to_string(v));
        }
        out.insert(out.end(), table.value().begin() + static_cast<std::size_t>(id) * e,
                   table.value().begin() + static_cast<std::size_t>(id + 1) * e);
    }
    const int m = static_cast<int>(ids.size());
    return detail::make_node<S>({m, e}, std::move(out), {table}, [table, ids, e](const std::vector<S>& g) {
        if (auto* gt = detail::grad_of(table)) {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                for (int j = 0; j < e; ++j)
                    (*gt)[static_cast<std::size_t>(ids[i]) * e + j] += g[i * static_cast<std::size_t>(e) + j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Topologically ordered record of the operations reachable from a root.
// Construction walks the DAG once; run_backward visits each node exactly once
// in reverse topological order.
template <class S>
class Graph {
public:
    explicit Graph(const TensorT<S>& root) : root_(root.impl()) {
        if (!root_ || !root_->requires_grad) {
            throw std::invalid_argument("Graph: root does not track gradients");
        }
        // Iterative post-order DFS: parents land in `order_` before consumers.
        std::unordered_set<const TensorImpl<S>*> visited;
        struct Frame {
            TensorImpl<S>* node;
            std::size_t next;
        };
        std::vector<Frame> stack;
        stack.push_back({root_.get(), 0});
        visited.insert(root_.get());
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next < f.node->parents.size()) {
                TensorImpl<S>* p = f.node->parents[f.next++].get();
                if (visited.insert(p).second) {
                    stack.push_back({p, 0});
                }
            } else {
                order_.push_back(f.node);
                stack.pop_back();
            }
        }
    }

    const std::vector<TensorImpl<S>*>& nodes() const { return order_; }

    void run_backward() {
        root_->ensure_grad();
        root_->grad[0] += S(1);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            TensorImpl<S>* node = *it;
            if (node->backward_fn) {
                node->ensure_grad();
                node->backward_fn(node->grad);
            }
        }
    }

private:
    std::shared_ptr<TensorImpl<S>> root_;
    std::vector<TensorImpl<S>*> order_;
};

// Populates d(loss)/d(leaf) for every gradient-tracked leaf reachable from a
// scalar loss. Gradients accumulate across calls until zeroed.
template <class S>
void backward(const TensorT<S>& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar tensor");
    }
    if (!loss.requires_grad()) {
        throw std::invalid_argument("backward: loss does not track gradients");
    }
    Graph<S> graph(loss);
    graph.run_backward();
}

}  // namespace ctrsgen
