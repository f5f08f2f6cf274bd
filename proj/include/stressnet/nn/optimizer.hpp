#pragma once

#include "stressnet/nn/model.hpp"

#include <cmath>

namespace stressnet::nn {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update of one flat tensor at step `t` (1-based).
template <typename P, typename G, typename M, typename V>
void adam_update(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad, Eigen::MatrixBase<M>& m,
                 Eigen::MatrixBase<V>& v, long t, const AdamHyper& h) {
    using Scalar = typename P::Scalar;
    const auto b1 = Scalar(h.beta1), b2 = Scalar(h.beta2);
    const Scalar c1 = Scalar(1) - Scalar(std::pow(h.beta1, static_cast<double>(t)));
    const Scalar c2 = Scalar(1) - Scalar(std::pow(h.beta2, static_cast<double>(t)));
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
    param.array() -= Scalar(h.lr) * (m.array() / c1) / ((v.array() / c2).sqrt() + Scalar(h.epsilon));
}

template <typename Scalar>
struct AdamState {
    ModelParams<Scalar> m;
    ModelParams<Scalar> v;
    long t = 0;
    AdamHyper hyper;

    static AdamState init(const ModelConfig& cfg, AdamHyper hyper = {}) {
        return {ModelParams<Scalar>::zeros(cfg), ModelParams<Scalar>::zeros(cfg), 0, hyper};
    }
};

/// One Adam step over every tensor. Throws non_finite_gradient without
/// touching the parameters when any gradient entry is NaN or infinite.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, AdamState<Scalar>& state) {
    if (!grads.all_finite()) throw Error("non_finite_gradient", "gradient contains NaN or Inf");
    ++state.t;
    auto p = params.flat();
    const auto g = grads.flat();
    auto m = state.m.flat();
    auto v = state.v.flat();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].size() != g[i].size() || m[i].size() != p[i].size())
            throw Error("shape_error", "optimizer state does not match parameter shapes");
        adam_update(p[i], g[i], m[i], v[i], state.t, state.hyper);
    }
}

/// Plain gradient descent behind the same interface, for ablation.
template <typename Scalar>
void sgd_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, double lr) {
    if (!grads.all_finite()) throw Error("non_finite_gradient", "gradient contains NaN or Inf");
    auto p = params.flat();
    const auto g = grads.flat();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= Scalar(lr) * g[i];
}

}  // namespace stressnet::nn
