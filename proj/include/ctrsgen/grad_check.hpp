#pragma once

// Finite-difference verification of the backward rules, always in double
// precision. The loss function is re-evaluated from the current leaf values
// on every call, so perturbing a leaf in place and calling it again yields
// the displaced loss.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctrsgen/corpus.hpp"
#include "ctrsgen/decoder.hpp"
#include "ctrsgen/encoders.hpp"
#include "ctrsgen/model.hpp"
#include "ctrsgen/tensor.hpp"

namespace ctrsgen {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_leaf;
    std::size_t worst_index = 0;
    std::size_t coords_checked = 0;
};

// Compares the analytic gradient of loss_fn with respect to every coordinate
// of every leaf against a central difference. Relative error is
// |analytic - numeric| / max(1, |analytic|).
inline GradCheckReport grad_check(const std::function<TensorD()>& loss_fn,
                                  const std::vector<std::pair<std::string, TensorD>>& leaves,
                                  double eps = 1e-5) {
    if (eps <= 0) {
        throw std::invalid_argument("grad_check: eps must be positive");
    }
    for (const auto& [name, leaf] : leaves) {
        if (!leaf.requires_grad()) {
            throw std::invalid_argument("grad_check: leaf \"" + name +
                                        "\" does not track gradients");
        }
        const_cast<TensorD&>(leaf).zero_grad();
    }
    TensorD loss = loss_fn();
    if (loss.size() != 1) {
        throw std::invalid_argument("grad_check: loss function must return a scalar");
    }
    if (!loss.all_finite()) {
        throw std::runtime_error("grad_check: non-finite loss value");
    }
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& [name, leaf] : leaves) {
        analytic.push_back(leaf.grad());
    }
    GradCheckReport report;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        TensorD leaf = leaves[k].second;
        std::vector<double>& value = leaf.mutable_value();
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double saved = value[j];
            value[j] = saved + eps;
            const double f_plus = loss_fn().item();
            value[j] = saved - eps;
            const double f_minus = loss_fn().item();
            value[j] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                throw std::runtime_error("grad_check: non-finite loss while perturbing \"" +
                                         leaves[k].first + "\"");
            }
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = analytic[k][j];
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_leaf = leaves[k].first;
                report.worst_index = j;
            }
        }
    }
    return report;
}

// The instance used for whole-model gradient checks: three query tokens, two
// mega-document sentences, one irrelevant document of two sentences, and a
// two-token description, all at hidden size 4 over a 20-id vocabulary.
inline EncodedQuadruple tiny_grad_check_instance() {
    return make_encoded({4, 5, 6}, {{7, 8, 9}, {10, 11}}, {{{12, 13}, {14, 15, 16}}}, {17, 18});
}

inline ModelConfig tiny_grad_check_config() {
    ModelConfig cfg;
    cfg.hidden = 4;
    cfg.embedding_dim = 8;
    cfg.vocab_size = 20;
    return cfg;
}

// Checks d(loss)/d(theta) for every coordinate of every model parameter on
// the tiny instance.
inline GradCheckReport grad_check_full_model(std::uint64_t seed, double eps = 1e-5) {
    Rng rng(seed);
    ModelParams<double> params;
    params.init(tiny_grad_check_config(), rng);
    EncodedQuadruple instance = tiny_grad_check_instance();
    auto loss_fn = [&]() {
        EncoderOutputs<double> enc = encode_instance(params, instance);
        return teacher_forced_loss(params, enc, instance.target_ids);
    };
    std::vector<std::pair<std::string, TensorD>> leaves;
    params.for_each_param(
        [&](const std::string& name, TensorD& t) { leaves.emplace_back(name, t); });
    return grad_check(loss_fn, leaves, eps);
}

}  // namespace ctrsgen
