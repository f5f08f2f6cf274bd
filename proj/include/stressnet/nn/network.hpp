#pragma once

// Batched forward and analytic backward pass through the full stack.

#include "stressnet/nn/layers.hpp"
#include "stressnet/nn/model.hpp"

#include <span>

namespace stressnet::nn {

/// Inverted-dropout masks for the two dense layers, one column per sample.
/// Empty masks mean inference mode.
template <typename Scalar>
struct DropoutMasks {
    Mat<Scalar> dense1;
    Mat<Scalar> dense2;

    bool active() const { return dense1.size() > 0; }
};

template <typename Scalar>
DropoutMasks<Scalar> draw_dropout_masks(const ModelConfig& cfg, Index batch, Rng& rng) {
    return {dropout_mask<Scalar>(cfg.dense1_units, batch, cfg.dropout1, rng),
            dropout_mask<Scalar>(cfg.dense2_units, batch, cfg.dropout2, rng)};
}

/// Activations retained by forward_batch for the backward pass. Reusing one
/// cache across batches also reuses its buffers.
template <typename Scalar>
struct ForwardCache {
    Index batch = 0;
    Mat<Scalar> patches1;  // im2col of the input
    Mat<Scalar> act1;      // ReLU(conv1)
    Mat<Scalar> patches2;  // im2col of act1
    Mat<Scalar> act2;      // ReLU(conv2)
    MaxPoolResult<Scalar> pool;
    Mat<Scalar> act2_at_max;  // 1 where the pooled conv2 activation is positive
    Mat<Scalar> hidden1;      // ReLU(dense1), before dropout
    Mat<Scalar> dropped1;
    Mat<Scalar> hidden2;
    Mat<Scalar> dropped2;
    DropoutMasks<Scalar> masks;
};

/// Stacks windows into the [in_channels x input_len*B] batch layout.
template <typename Scalar>
Mat<Scalar> stack_windows(std::span<const VecD* const> windows, const ModelConfig& cfg) {
    const Index len = cfg.input_len;
    Mat<Scalar> x(1, len * static_cast<Index>(windows.size()));
    for (std::size_t b = 0; b < windows.size(); ++b) {
        if (windows[b]->size() != len)
            throw Error("shape_error", "window has " + std::to_string(windows[b]->size()) +
                                           " samples, model expects " + std::to_string(len));
        x.row(0).segment(static_cast<Index>(b) * len, len) = windows[b]->transpose().template cast<Scalar>();
    }
    return x;
}

/// Logits [num_classes x B] for a batch of inputs. Dropout is applied only
/// when `masks` is non-null and active. When `cache` is non-null every
/// activation needed by backward_batch is stored there.
template <typename Scalar>
Mat<Scalar> forward_batch(const ModelConfig& cfg, const ModelParams<Scalar>& p, const Mat<Scalar>& input,
                          Index batch, const DropoutMasks<Scalar>* masks = nullptr,
                          ForwardCache<Scalar>* cache = nullptr) {
    if (input.rows() != cfg.in_channels || input.cols() != static_cast<Index>(cfg.input_len) * batch)
        throw Error("shape_error", "input batch does not have " + std::to_string(cfg.input_len) +
                                       " samples per window");
    ForwardCache<Scalar> local;
    ForwardCache<Scalar>& c = cache ? *cache : local;
    c.batch = batch;

    conv1d_forward_into(input, p.conv1_w, p.conv1_b, cfg.conv1_kernel, batch, c.patches1, c.act1);
    c.act1.array() = c.act1.array().max(Scalar(0));
    conv1d_forward_into(c.act1, p.conv2_w, p.conv2_b, cfg.conv2_kernel, batch, c.patches2, c.act2);
    c.act2.array() = c.act2.array().max(Scalar(0));
    c.pool = global_max_pool(c.act2, batch);
    c.act2_at_max = relu_mask(c.pool.pooled);

    const bool dropout = masks && masks->active();
    c.hidden1 = relu(dense_forward(c.pool.pooled, p.dense1_w, p.dense1_b));
    c.dropped1 = dropout ? Mat<Scalar>(c.hidden1.cwiseProduct(masks->dense1)) : c.hidden1;
    c.hidden2 = relu(dense_forward(c.dropped1, p.dense2_w, p.dense2_b));
    c.dropped2 = dropout ? Mat<Scalar>(c.hidden2.cwiseProduct(masks->dense2)) : c.hidden2;
    if (dropout) c.masks = *masks;
    else c.masks = {};
    return dense_forward(c.dropped2, p.out_w, p.out_b);
}

template <typename Scalar>
struct LossAndGrad {
    Scalar loss = 0;  // mean over the batch
    ModelParams<Scalar> grads;
};

/// Mean cross-entropy over the batch and its exact gradient with respect to
/// every parameter, reusing the activations and dropout masks in `cache`.
template <typename Scalar>
LossAndGrad<Scalar> backward_batch(const ModelConfig& cfg, const ModelParams<Scalar>& p, const Mat<Scalar>& logits,
                                   const ForwardCache<Scalar>& cache, std::span<const int> labels) {
    const Index batch = cache.batch;
    if (static_cast<Index>(labels.size()) != batch) throw Error("shape_error", "label count differs from batch size");
    const Scalar inv_batch = Scalar(1) / Scalar(batch);

    LossAndGrad<Scalar> r;
    Mat<Scalar> g_logits(logits.rows(), batch);
    for (Index b = 0; b < batch; ++b) {
        const auto sl = softmax_cross_entropy(logits.col(b), labels[static_cast<std::size_t>(b)]);
        r.loss += sl.loss * inv_batch;
        g_logits.col(b) = sl.grad_logits * inv_batch;
    }

    auto& g = r.grads;
    // output layer
    g.out_w = cache.dropped2 * g_logits.transpose();
    g.out_b = g_logits.rowwise().sum();
    Mat<Scalar> g_h2 = p.out_w * g_logits;
    if (cache.masks.active()) g_h2 = g_h2.cwiseProduct(cache.masks.dense2);
    g_h2 = g_h2.cwiseProduct(relu_mask(cache.hidden2));

    // dense2
    g.dense2_w = cache.dropped1 * g_h2.transpose();
    g.dense2_b = g_h2.rowwise().sum();
    Mat<Scalar> g_h1 = p.dense2_w * g_h2;
    if (cache.masks.active()) g_h1 = g_h1.cwiseProduct(cache.masks.dense1);
    g_h1 = g_h1.cwiseProduct(relu_mask(cache.hidden1));

    // dense1
    g.dense1_w = cache.pool.pooled * g_h1.transpose();
    g.dense1_b = g_h1.rowwise().sum();
    const Mat<Scalar> g_pooled = (p.dense1_w * g_h1).cwiseProduct(cache.act2_at_max);

    // max pool routes each channel's gradient to its argmax column of conv2
    std::vector<SparseEntry<Scalar>> g_conv2;
    g_conv2.reserve(static_cast<std::size_t>(g_pooled.size()));
    for (Index c = 0; c < g_pooled.rows(); ++c)
        for (Index b = 0; b < batch; ++b) g_conv2.push_back({c, cache.pool.argmax(c, b), g_pooled(c, b)});

    auto conv2 = conv1d_backward_sparse(g_conv2, cache.patches2, p.conv2_w, cfg.conv2_kernel, cfg.conv1_len(),
                                        batch, true);
    g.conv2_w = std::move(conv2.weights);
    g.conv2_b = std::move(conv2.bias);

    const Mat<Scalar> g_conv1 = conv2.input.cwiseProduct(relu_mask(cache.act1));
    auto conv1 = conv1d_backward(g_conv1, cache.patches1, p.conv1_w, cfg.conv1_kernel, cfg.input_len, batch, false);
    g.conv1_w = std::move(conv1.weights);
    g.conv1_b = std::move(conv1.bias);
    return r;
}

/// Single-window logits. Training mode draws fresh dropout masks from `rng`.
template <typename Scalar>
Vec<Scalar> forward(const ModelConfig& cfg, const ModelParams<Scalar>& p, const VecD& window, bool training,
                    Rng* rng = nullptr) {
    const VecD* ptr = &window;
    const Mat<Scalar> x = stack_windows<Scalar>(std::span<const VecD* const>(&ptr, 1), cfg);
    DropoutMasks<Scalar> masks;
    if (training) {
        if (!rng) throw Error("config_error", "training-mode forward needs a random stream");
        masks = draw_dropout_masks<Scalar>(cfg, 1, *rng);
    }
    return forward_batch(cfg, p, x, 1, &masks).col(0);
}

/// Mean loss and gradient over a batch of windows. In training mode dropout
/// masks are drawn from `rng` once and shared by the forward and backward pass.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_gradients(const ModelConfig& cfg, const ModelParams<Scalar>& p,
                                       std::span<const VecD* const> windows, std::span<const int> labels,
                                       Rng* dropout_rng = nullptr) {
    const auto batch = static_cast<Index>(windows.size());
    const Mat<Scalar> x = stack_windows<Scalar>(windows, cfg);
    DropoutMasks<Scalar> masks;
    if (dropout_rng) masks = draw_dropout_masks<Scalar>(cfg, batch, *dropout_rng);
    ForwardCache<Scalar> cache;
    const Mat<Scalar> logits = forward_batch(cfg, p, x, batch, &masks, &cache);
    return backward_batch(cfg, p, logits, cache, labels);
}

}  // namespace stressnet::nn
