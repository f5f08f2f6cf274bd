#include "stressnet/nn/model.hpp"

#include <numeric>

namespace stressnet::nn {

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw Error("config_error", std::string(name) + " must be >= 1");
    };
    positive(conv1_filters, "conv1_filters");
    positive(conv1_kernel, "conv1_kernel");
    positive(conv2_filters, "conv2_filters");
    positive(conv2_kernel, "conv2_kernel");
    positive(dense1_units, "dense1_units");
    positive(dense2_units, "dense2_units");
    if (in_channels != 1) throw Error("config_error", "only single-channel input is supported");
    if (num_classes < 2) throw Error("config_error", "num_classes must be >= 2");
    if (input_len <= conv1_kernel + conv2_kernel - 2)
        throw Error("config_error", "input_len too short for the two valid convolutions");
    if (!(dropout1 >= 0.0 && dropout1 < 1.0) || !(dropout2 >= 0.0 && dropout2 < 1.0))
        throw Error("config_error", "dropout rates must lie in [0, 1)");
}

std::size_t TensorInfo::size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

std::vector<TensorInfo> tensor_layout(const ModelConfig& c) {
    return {
        {"conv1_w", {c.conv1_filters, c.in_channels, c.conv1_kernel}},
        {"conv1_b", {c.conv1_filters}},
        {"conv2_w", {c.conv2_filters, c.conv1_filters, c.conv2_kernel}},
        {"conv2_b", {c.conv2_filters}},
        {"dense1_w", {c.conv2_filters, c.dense1_units}},
        {"dense1_b", {c.dense1_units}},
        {"dense2_w", {c.dense1_units, c.dense2_units}},
        {"dense2_b", {c.dense2_units}},
        {"out_w", {c.dense2_units, c.num_classes}},
        {"out_b", {c.num_classes}},
    };
}

namespace {

void fill_uniform(Mat<double>& w, double limit, Rng& rng) {
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
}

}  // namespace

Params init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Params p = Params::zeros(cfg);
    auto he = [](double fan_in) { return std::sqrt(6.0 / fan_in); };
    fill_uniform(p.conv1_w, he(cfg.in_channels * cfg.conv1_kernel), rng);
    fill_uniform(p.conv2_w, he(cfg.conv1_filters * cfg.conv2_kernel), rng);
    fill_uniform(p.dense1_w, he(cfg.conv2_filters), rng);
    fill_uniform(p.dense2_w, he(cfg.dense1_units), rng);
    fill_uniform(p.out_w, std::sqrt(6.0 / (cfg.dense2_units + cfg.num_classes)), rng);
    return p;
}

}  // namespace stressnet::nn
