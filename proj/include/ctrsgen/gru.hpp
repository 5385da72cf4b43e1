#pragma once

// Gated recurrent unit cell. One cell holds the nine weight blocks; step()
// advances a single state vector, step_rows() advances a batch of states with
// a 0/1 mask so padded rows carry their previous state unchanged.
//
//   z = sigmoid(x W_update + h U_update + b_update)
//   r = sigmoid(x W_reset  + h U_reset  + b_reset)
//   c = tanh   (x W_cand   + (h * r) U_cand + b_cand)
//   h' = (1 - z) * c + z * h

#include <functional>
#include <string>
#include <vector>

#include "ctrsgen/rng.hpp"
#include "ctrsgen/tensor.hpp"

namespace ctrsgen {

template <class S>
TensorT<S> one_minus(const TensorT<S>& t) {
    return add_const(scalar_scale(t, S(-1)), S(1));
}

template <class S>
struct GruCell {
    int in_dim = 0;
    int hidden_dim = 0;
    TensorT<S> w_update, u_update, b_update;
    TensorT<S> w_reset, u_reset, b_reset;
    TensorT<S> w_cand, u_cand, b_cand;

    void init(int in, int hidden, S range, Rng& rng) {
        in_dim = in;
        hidden_dim = hidden;
        w_update = TensorT<S>::uniform({in, hidden}, -range, range, rng);
        u_update = TensorT<S>::uniform({hidden, hidden}, -range, range, rng);
        b_update = TensorT<S>::zeros({hidden}, true);
        w_reset = TensorT<S>::uniform({in, hidden}, -range, range, rng);
        u_reset = TensorT<S>::uniform({hidden, hidden}, -range, range, rng);
        b_reset = TensorT<S>::zeros({hidden}, true);
        w_cand = TensorT<S>::uniform({in, hidden}, -range, range, rng);
        u_cand = TensorT<S>::uniform({hidden, hidden}, -range, range, rng);
        b_cand = TensorT<S>::zeros({hidden}, true);
    }

    void for_each_param(const std::string& prefix,
                        const std::function<void(const std::string&, TensorT<S>&)>& fn) {
        fn(prefix + ".w_update", w_update);
        fn(prefix + ".u_update", u_update);
        fn(prefix + ".b_update", b_update);
        fn(prefix + ".w_reset", w_reset);
        fn(prefix + ".u_reset", u_reset);
        fn(prefix + ".b_reset", b_reset);
        fn(prefix + ".w_cand", w_cand);
        fn(prefix + ".u_cand", u_cand);
        fn(prefix + ".b_cand", b_cand);
    }

    // x: [in_dim], h: [hidden_dim] -> [hidden_dim]
    TensorT<S> step(const TensorT<S>& x, const TensorT<S>& h) const {
        auto z = sigmoid(add(add(matmul(x, w_update), matmul(h, u_update)), b_update));
        auto r = sigmoid(add(add(matmul(x, w_reset), matmul(h, u_reset)), b_reset));
        auto c = tanh(add(add(matmul(x, w_cand), matmul(mul(h, r), u_cand)), b_cand));
        return add(mul(one_minus(z), c), mul(z, h));
    }

    // x: [rows, in_dim], h: [rows, hidden_dim], mask: per-row 0/1.
    // Rows with mask 0 keep their previous state.
    TensorT<S> step_rows(const TensorT<S>& x, const TensorT<S>& h,
                         const std::vector<S>& mask) const {
        auto z = sigmoid(add_rowvec(add(matmul(x, w_update), matmul(h, u_update)), b_update));
        auto r = sigmoid(add_rowvec(add(matmul(x, w_reset), matmul(h, u_reset)), b_reset));
        auto c = tanh(add_rowvec(add(matmul(x, w_cand), matmul(mul(h, r), u_cand)), b_cand));
        auto h_new = add(mul(one_minus(z), c), mul(z, h));
        return mask_lerp_rows(h_new, h, mask);
    }
};

}  // namespace ctrsgen
