#pragma once

// Architecture hyperparameters and the parameter set of the classifier:
//   conv(100, k=5) -> ReLU -> conv(100, k=10) -> ReLU -> global max pool
//   -> dense(128) -> ReLU -> dropout(0.3) -> dense(64) -> ReLU -> dropout(0.2)
//   -> dense(C) -> softmax

#include "stressnet/core.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace stressnet::nn {

struct ModelConfig {
    int conv1_filters = 100;
    int conv1_kernel = 5;
    int conv2_filters = 100;
    int conv2_kernel = 10;
    int dense1_units = 128;
    int dense2_units = 64;
    double dropout1 = 0.3;
    double dropout2 = 0.2;
    int num_classes = 2;
    int input_len = 240;
    int in_channels = 1;

    int conv1_len() const { return input_len - conv1_kernel + 1; }
    int conv2_len() const { return conv1_len() - conv2_kernel + 1; }

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Name and logical shape of each parameter tensor, in storage order.
struct TensorInfo {
    std::string name;
    std::vector<int> shape;
    std::size_t size() const;
};

std::vector<TensorInfo> tensor_layout(const ModelConfig& cfg);

/// All weights and biases. Convolution weights are [filters x in*kernel]
/// (flat order filter, channel, tap); dense weights are [in x out].
template <typename Scalar>
struct ModelParams {
    Mat<Scalar> conv1_w;
    Vec<Scalar> conv1_b;
    Mat<Scalar> conv2_w;
    Vec<Scalar> conv2_b;
    Mat<Scalar> dense1_w;
    Vec<Scalar> dense1_b;
    Mat<Scalar> dense2_w;
    Vec<Scalar> dense2_b;
    Mat<Scalar> out_w;
    Vec<Scalar> out_b;

    static constexpr std::size_t kTensorCount = 10;

    static ModelParams zeros(const ModelConfig& cfg) {
        ModelParams p;
        p.conv1_w = Mat<Scalar>::Zero(cfg.conv1_filters, cfg.in_channels * cfg.conv1_kernel);
        p.conv1_b = Vec<Scalar>::Zero(cfg.conv1_filters);
        p.conv2_w = Mat<Scalar>::Zero(cfg.conv2_filters, cfg.conv1_filters * cfg.conv2_kernel);
        p.conv2_b = Vec<Scalar>::Zero(cfg.conv2_filters);
        p.dense1_w = Mat<Scalar>::Zero(cfg.conv2_filters, cfg.dense1_units);
        p.dense1_b = Vec<Scalar>::Zero(cfg.dense1_units);
        p.dense2_w = Mat<Scalar>::Zero(cfg.dense1_units, cfg.dense2_units);
        p.dense2_b = Vec<Scalar>::Zero(cfg.dense2_units);
        p.out_w = Mat<Scalar>::Zero(cfg.dense2_units, cfg.num_classes);
        p.out_b = Vec<Scalar>::Zero(cfg.num_classes);
        return p;
    }

    /// Flat views of every tensor, in the order of tensor_layout().
    std::array<Eigen::Map<Vec<Scalar>>, kTensorCount> flat() {
        return {flat_of(conv1_w), flat_of(conv1_b), flat_of(conv2_w), flat_of(conv2_b), flat_of(dense1_w),
                flat_of(dense1_b), flat_of(dense2_w), flat_of(dense2_b), flat_of(out_w), flat_of(out_b)};
    }
    std::array<Eigen::Map<const Vec<Scalar>>, kTensorCount> flat() const {
        return {cflat_of(conv1_w), cflat_of(conv1_b), cflat_of(conv2_w), cflat_of(conv2_b), cflat_of(dense1_w),
                cflat_of(dense1_b), cflat_of(dense2_w), cflat_of(dense2_b), cflat_of(out_w), cflat_of(out_b)};
    }

    template <typename To>
    ModelParams<To> cast() const {
        ModelParams<To> p;
        p.conv1_w = conv1_w.template cast<To>();
        p.conv1_b = conv1_b.template cast<To>();
        p.conv2_w = conv2_w.template cast<To>();
        p.conv2_b = conv2_b.template cast<To>();
        p.dense1_w = dense1_w.template cast<To>();
        p.dense1_b = dense1_b.template cast<To>();
        p.dense2_w = dense2_w.template cast<To>();
        p.dense2_b = dense2_b.template cast<To>();
        p.out_w = out_w.template cast<To>();
        p.out_b = out_b.template cast<To>();
        return p;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : flat()) n += static_cast<std::size_t>(t.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& t : flat())
            if (!t.allFinite()) return false;
        return true;
    }

    /// True when every tensor has the shape cfg declares.
    bool matches(const ModelConfig& cfg) const {
        const auto layout = tensor_layout(cfg);
        const auto views = flat();
        for (std::size_t i = 0; i < kTensorCount; ++i)
            if (static_cast<std::size_t>(views[i].size()) != layout[i].size()) return false;
        const auto ref = zeros(cfg);
        return conv1_w.rows() == ref.conv1_w.rows() && conv2_w.rows() == ref.conv2_w.rows() &&
               dense1_w.rows() == ref.dense1_w.rows() && dense2_w.rows() == ref.dense2_w.rows() &&
               out_w.rows() == ref.out_w.rows();
    }

private:
    template <typename M>
    static Eigen::Map<Vec<Scalar>> flat_of(M& m) {
        return Eigen::Map<Vec<Scalar>>(m.data(), m.size());
    }
    template <typename M>
    static Eigen::Map<const Vec<Scalar>> cflat_of(const M& m) {
        return Eigen::Map<const Vec<Scalar>>(m.data(), m.size());
    }
};

using Params = ModelParams<double>;

/// He-uniform weights for ReLU layers, Glorot-uniform for the output layer,
/// zero biases. Bitwise deterministic per seed.
Params init_model(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace stressnet::nn
