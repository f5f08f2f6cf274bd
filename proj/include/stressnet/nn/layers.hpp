#pragma once

// Layer primitives for the 1D convolutional classifier.
//
// Activations of a batch are stored channel-major with the batch laid out
// along the column axis: a tensor with C channels, length L and batch B is a
// C x (L*B) row-major matrix whose sample b occupies columns [b*L, (b+1)*L).
// With B = 1 this is the plain [C x L] layout of a single window.

#include "stressnet/core.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace stressnet::nn {

using Eigen::Index;

/// Valid-convolution output length; throws shape_error when L < K.
inline Index conv_output_length(Index length, Index kernel) {
    if (kernel < 1 || length < kernel)
        throw Error("shape_error", "convolution input length " + std::to_string(length) +
                                       " is shorter than kernel " + std::to_string(kernel));
    return length - kernel + 1;
}

/// Unfolds sliding windows into columns: row c*K + j, column b*L_out + i
/// holds input(c, b*L_in + i + j).
/// Writes into `patches`, reusing its storage when the shape is unchanged.
template <typename Scalar>
void im2col_into(const Mat<Scalar>& input, Index kernel, Index batch, Mat<Scalar>& patches) {
    if (batch < 1 || input.cols() % batch != 0)
        throw Error("shape_error", "input columns are not a multiple of the batch size");
    const Index in_len = input.cols() / batch;
    const Index out_len = conv_output_length(in_len, kernel);
    const Index channels = input.rows();

    patches.resize(channels * kernel, out_len * batch);
    for (Index c = 0; c < channels; ++c)
        for (Index j = 0; j < kernel; ++j)
            for (Index b = 0; b < batch; ++b)
                patches.row(c * kernel + j).segment(b * out_len, out_len) =
                    input.row(c).segment(b * in_len + j, out_len);
}

template <typename Scalar>
Mat<Scalar> im2col(const Mat<Scalar>& input, Index kernel, Index batch) {
    Mat<Scalar> patches;
    im2col_into(input, kernel, batch, patches);
    return patches;
}

/// Adjoint of im2col: scatters column gradients back onto the input layout.
template <typename Scalar>
Mat<Scalar> col2im(const Mat<Scalar>& grad_patches, Index channels, Index kernel, Index in_len, Index batch) {
    const Index out_len = in_len - kernel + 1;
    Mat<Scalar> grad_input = Mat<Scalar>::Zero(channels, in_len * batch);
    for (Index c = 0; c < channels; ++c)
        for (Index j = 0; j < kernel; ++j)
            for (Index b = 0; b < batch; ++b)
                grad_input.row(c).segment(b * in_len + j, out_len) +=
                    grad_patches.row(c * kernel + j).segment(b * out_len, out_len);
    return grad_input;
}

/// Cross-correlation, stride 1, no padding:
///   out(f, i) = bias(f) + sum_{c,j} input(c, i + j) * weights(f, c*K + j)
/// `weights` is [C_out x C_in*K]. When `patches` is given the unfolded input
/// is stored there for the backward pass.
template <typename Scalar>
void conv1d_forward_into(const Mat<Scalar>& input, const Mat<Scalar>& weights, const Vec<Scalar>& bias,
                         Index kernel, Index batch, Mat<Scalar>& patches, Mat<Scalar>& out) {
    if (weights.cols() != input.rows() * kernel || bias.size() != weights.rows())
        throw Error("shape_error", "convolution weight shape does not match input channels and kernel");
    im2col_into(input, kernel, batch, patches);
    out.resize(weights.rows(), patches.cols());
    out.noalias() = weights * patches;
    out.colwise() += bias;
}

template <typename Scalar>
Mat<Scalar> conv1d_forward(const Mat<Scalar>& input, const Mat<Scalar>& weights, const Vec<Scalar>& bias,
                           Index kernel, Index batch = 1) {
    Mat<Scalar> patches, out;
    conv1d_forward_into(input, weights, bias, kernel, batch, patches, out);
    return out;
}

template <typename Scalar>
struct ConvGradients {
    Mat<Scalar> weights;
    Vec<Scalar> bias;
    Mat<Scalar> input;  // empty unless requested
};

/// Dense backward pass of conv1d_forward.
template <typename Scalar>
ConvGradients<Scalar> conv1d_backward(const Mat<Scalar>& grad_out, const Mat<Scalar>& patches,
                                      const Mat<Scalar>& weights, Index kernel, Index in_len, Index batch,
                                      bool want_input_grad) {
    ConvGradients<Scalar> g;
    g.weights = grad_out * patches.transpose();
    g.bias = grad_out.rowwise().sum();
    if (want_input_grad) {
        const Mat<Scalar> grad_patches = weights.transpose() * grad_out;
        g.input = col2im(grad_patches, weights.cols() / kernel, kernel, in_len, batch);
    }
    return g;
}

/// One non-zero entry of an output gradient: (channel, column, value).
template <typename Scalar>
struct SparseEntry {
    Index channel;
    Index column;
    Scalar value;
};

/// Backward pass for an output gradient with few non-zeros, as produced by a
/// global max pool. Equivalent to conv1d_backward on the densified gradient.
template <typename Scalar>
ConvGradients<Scalar> conv1d_backward_sparse(const std::vector<SparseEntry<Scalar>>& grad_out,
                                             const Mat<Scalar>& patches, const Mat<Scalar>& weights,
                                             Index kernel, Index in_len, Index batch, bool want_input_grad) {
    const Index channels_in = weights.cols() / kernel;
    const Index out_len = in_len - kernel + 1;
    ConvGradients<Scalar> g;
    g.weights = Mat<Scalar>::Zero(weights.rows(), weights.cols());
    g.bias = Vec<Scalar>::Zero(weights.rows());
    if (want_input_grad) g.input = Mat<Scalar>::Zero(channels_in, in_len * batch);

    for (const auto& e : grad_out) {
        if (e.value == Scalar(0)) continue;
        g.bias(e.channel) += e.value;
        g.weights.row(e.channel) += e.value * patches.col(e.column).transpose();
        if (want_input_grad) {
            const Index b = e.column / out_len;
            const Index i = e.column % out_len;
            for (Index c = 0; c < channels_in; ++c)
                g.input.row(c).segment(b * in_len + i, kernel) +=
                    e.value * weights.row(e.channel).segment(c * kernel, kernel);
        }
    }
    return g;
}

/// Elementwise max(0, x).
template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(typename Derived::Scalar(0));
}

/// 1 where the activation passed through ReLU, else 0 (derivative at 0 is 0).
template <typename Derived>
auto relu_mask(const Eigen::MatrixBase<Derived>& activation) {
    using Scalar = typename Derived::Scalar;
    return (activation.array() > Scalar(0)).template cast<Scalar>().matrix();
}

template <typename Scalar>
struct MaxPoolResult {
    Mat<Scalar> pooled;                                   // C x B
    Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> argmax;  // absolute column per (c, b)
};

/// Per-channel maximum over time. Ties resolve to the first maximal index.
template <typename Scalar>
MaxPoolResult<Scalar> global_max_pool(const Mat<Scalar>& x, Index batch = 1) {
    if (batch < 1 || x.cols() % batch != 0 || x.cols() == 0)
        throw Error("shape_error", "global max pool needs a non-empty time axis");
    const Index len = x.cols() / batch;
    MaxPoolResult<Scalar> r;
    r.pooled.resize(x.rows(), batch);
    r.argmax.resize(x.rows(), batch);
    for (Index c = 0; c < x.rows(); ++c) {
        for (Index b = 0; b < batch; ++b) {
            const Scalar* row = x.row(c).data() + b * len;
            Index best = 0;
            for (Index i = 1; i < len; ++i)
                if (row[i] > row[best]) best = i;
            r.pooled(c, b) = row[best];
            r.argmax(c, b) = b * len + best;
        }
    }
    return r;
}

/// out = w^T x + b for each column of x. `w` is [N x M], x is [N x B].
template <typename Scalar, typename Derived>
Mat<Scalar> dense_forward(const Eigen::MatrixBase<Derived>& x, const Mat<Scalar>& w, const Vec<Scalar>& b) {
    if (x.rows() != w.rows() || b.size() != w.cols())
        throw Error("shape_error", "dense layer expects " + std::to_string(w.rows()) + " inputs, got " +
                                       std::to_string(x.rows()));
    Mat<Scalar> out = w.transpose() * x;
    out.colwise() += b;
    return out;
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// 1/(1 - rate).
template <typename Scalar>
Mat<Scalar> dropout_mask(Index rows, Index cols, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("config_error", "dropout rate must lie in [0, 1)");
    const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
    Mat<Scalar> mask(rows, cols);
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? Scalar(0) : keep_scale;
    return mask;
}

/// Identity in inference mode; otherwise applies a freshly drawn mask.
template <typename Scalar>
Mat<Scalar> dropout_apply(const Mat<Scalar>& x, double rate, bool training, Rng& rng) {
    if (!training || rate == 0.0) return x;
    return x.cwiseProduct(dropout_mask<Scalar>(x.rows(), x.cols(), rate, rng));
}

template <typename Scalar>
struct SoftmaxLoss {
    Scalar loss;
    Vec<Scalar> probs;
    Vec<Scalar> grad_logits;
};

/// Numerically stable softmax probabilities. Entries that would underflow
/// are floored at the smallest normal number so every probability is > 0.
template <typename Derived>
Vec<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    const Scalar shift = logits.maxCoeff();
    Vec<Scalar> e = (logits.array() - shift).exp().matrix();
    e /= e.sum();
    return e.cwiseMax(std::numeric_limits<Scalar>::min());
}

/// Loss -ln softmax(logits)[label] and its gradient p - onehot(label).
template <typename Derived>
SoftmaxLoss<typename Derived::Scalar> softmax_cross_entropy(const Eigen::MatrixBase<Derived>& logits, int label) {
    using Scalar = typename Derived::Scalar;
    if (logits.size() < 2) throw Error("shape_error", "softmax needs at least two classes");
    if (label < 0 || label >= logits.size())
        throw Error("label_error", "label " + std::to_string(label) + " outside [0, " +
                                       std::to_string(logits.size()) + ")");
    const Scalar shift = logits.maxCoeff();
    const Vec<Scalar> shifted = (logits.array() - shift).matrix();
    const Scalar log_sum = std::log(shifted.array().exp().sum());
    SoftmaxLoss<Scalar> r;
    r.probs = (shifted.array() - log_sum).exp().matrix().cwiseMax(std::numeric_limits<Scalar>::min());
    r.loss = log_sum - shifted(label);
    r.grad_logits = r.probs;
    r.grad_logits(label) -= Scalar(1);
    return r;
}

/// Index of the largest entry, first on ties.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return static_cast<int>(best);
}

}  // namespace stressnet::nn
