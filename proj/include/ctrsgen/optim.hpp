#pragma once

// Gradient clipping by global norm and the Adam update. Both operate on the
// parameter list in place; the Adam state keeps moment buffers aligned with
// that list by position.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ctrsgen/tensor.hpp"

namespace ctrsgen {

template <class S>
double grad_global_norm(const std::vector<TensorT<S>*>& params) {
    double sum = 0.0;
    for (auto* p : params) {
        for (S g : p->grad()) {
            sum += static_cast<double>(g) * static_cast<double>(g);
        }
    }
    return std::sqrt(sum);
}

// Scales every gradient by max_norm/norm when the global L2 norm exceeds
// max_norm; returns the pre-clip norm.
template <class S>
double clip_global_norm(const std::vector<TensorT<S>*>& params, double max_norm) {
    const double norm = grad_global_norm(params);
    if (norm > max_norm) {
        const S scale = static_cast<S>(max_norm / norm);
        for (auto* p : params) {
            for (S& g : p->mutable_grad()) g *= scale;
        }
    }
    return norm;
}

template <class S>
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<S>> m, v;  // first/second moments, one entry per parameter

    void init(const std::vector<TensorT<S>*>& params) {
        step = 0;
        m.clear();
        v.clear();
        for (auto* p : params) {
            m.emplace_back(p->size(), S(0));
            v.emplace_back(p->size(), S(0));
        }
    }
};

template <class S>
void adam_step(const std::vector<TensorT<S>*>& params, AdamState<S>& state, S lr, S beta1, S beta2,
               S eps) {
    if (state.m.empty() && !params.empty()) {
        state.init(params);
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state holds " + std::to_string(state.m.size()) +
                                    " moment buffers for " + std::to_string(params.size()) +
                                    " parameters");
    }
    ++state.step;
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1), static_cast<double>(state.step)));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2), static_cast<double>(state.step)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        TensorT<S>& p = *params[i];
        if (state.m[i].size() != p.size()) {
            throw std::invalid_argument("adam_step: moment size mismatch for parameter " +
                                        std::to_string(i));
        }
        const std::vector<S>& g = p.grad();
        std::vector<S>& mi = state.m[i];
        std::vector<S>& vi = state.v[i];
        std::vector<S>& value = p.mutable_value();
        for (std::size_t j = 0; j < value.size(); ++j) {
            mi[j] = beta1 * mi[j] + (S(1) - beta1) * g[j];
            vi[j] = beta2 * vi[j] + (S(1) - beta2) * g[j] * g[j];
            const S m_hat = mi[j] / bc1;
            const S v_hat = vi[j] / bc2;
            value[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

}  // namespace ctrsgen
