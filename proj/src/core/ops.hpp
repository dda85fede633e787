#pragma once

#include <vector>

#include "rng.hpp"
#include "tape.hpp"

namespace hgr {

using TapeRef = std::int32_t;

enum class Pad { same, valid };
enum class Mode { train, eval };

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  Pad pad = Pad::same;
};

/// Output shape of conv2d for validation and for building nets without
/// running them. Throws the same errors as the op itself.
Shape4 conv2d_output_shape(const Shape4& input, const Shape4& kernel,
                           const ConvSpec& spec);

Shape4 max_pool2d_output_shape(const Shape4& input, int size, int stride);

/// 2-D convolution, NHWC activations against a (kh, kw, in, out) kernel.
/// `same` keeps the stride-1 output size equal to the input size
/// (symmetric zero padding of dilation*(k-1)/2 per side); `valid` pads
/// nothing. Differentiable w.r.t. input, kernel and bias.
template <typename T>
TapeRef conv2d(Tape<T>& tape, TapeRef x, Variable<T>& kernel,
               Variable<T>* bias, const ConvSpec& spec);

/// Max pooling with no padding; gradient flows to each window's argmax only.
template <typename T>
TapeRef max_pool2d(Tape<T>& tape, TapeRef x, int size, int stride);

/// Spatial mean per channel; output is N x 1 x 1 x C.
template <typename T>
TapeRef global_avg_pool(Tape<T>& tape, TapeRef x);

/// Running statistics and bookkeeping owned by a batch-norm layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;  // length-C vectors, stored 1x1x1xC
  Tensor<T> running_var;
  bool ever_trained = false;
  bool warned = false;

  explicit BatchNormState(std::int64_t channels = 0)
      : running_mean(Shape4{1, 1, 1, channels}),
        running_var(Shape4{1, 1, 1, channels}) {
    running_var.fill(T(1));
  }
};

/// Train mode normalizes with per-channel batch statistics over (N,H,W) and
/// updates the running averages; eval mode uses the running statistics.
/// Eval before any train-mode call is allowed but emits a diagnostic.
template <typename T>
TapeRef batch_norm(Tape<T>& tape, TapeRef x, Variable<T>& gamma,
                   Variable<T>& beta, BatchNormState<T>& state, Mode mode,
                   T momentum, T epsilon);

template <typename T>
TapeRef relu(Tape<T>& tape, TapeRef x);

template <typename T>
TapeRef sigmoid(Tape<T>& tape, TapeRef x);

/// Softmax over the channel axis of an N x 1 x 1 x C tensor, computed with
/// max subtraction.
template <typename T>
TapeRef softmax(Tape<T>& tape, TapeRef x);

/// Integer-factor bilinear upsampling, align-corners-false convention:
/// source coordinate = (i + 0.5)/factor - 0.5, edge-clamped.
template <typename T>
TapeRef bilinear_upsample(Tape<T>& tape, TapeRef x, int factor);

/// y = xW + b on per-item vectors (N x 1 x 1 x Din).
template <typename T>
TapeRef dense(Tape<T>& tape, TapeRef x, Variable<T>& weight,
              Variable<T>& bias);

/// Inverted dropout: train mode zeroes entries with probability `rate` and
/// scales survivors by 1/(1-rate); eval mode returns the input node itself.
template <typename T>
TapeRef dropout(Tape<T>& tape, TapeRef x, double rate, Mode mode, Rng& rng);

template <typename T>
TapeRef concat_channels(Tape<T>& tape, const std::vector<TapeRef>& xs);

template <typename T>
TapeRef add(Tape<T>& tape, TapeRef a, TapeRef b);

/// Mean over all elements of -[y log p + (1-y) log(1-p)], with p clamped
/// 1e-7 from both ends. Used per-pixel for segmentation and, through
/// cross_entropy_loss, per-class for recognition.
template <typename T>
TapeRef bce_loss(Tape<T>& tape, TapeRef p, TapeRef y);

/// Categorical cross-entropy -log p[true] against one-hot rows, averaged
/// over the batch. Inputs are N x 1 x 1 x C probability rows.
template <typename T>
TapeRef cross_entropy_loss(Tape<T>& tape, TapeRef probs, TapeRef onehot);

/// Sum of all elements, as a scalar node.
template <typename T>
TapeRef sum(Tape<T>& tape, TapeRef x);

}  // namespace hgr
