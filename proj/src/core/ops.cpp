#include "ops.hpp"

#include <algorithm>
#include <cmath>

#include "blas.hpp"
#include "common.hpp"

namespace hgr {

namespace {
template <typename T>
constexpr T kProbClamp = T(1e-7);  // guards log(0) in the losses
}

Shape4 max_pool2d_output_shape(const Shape4& input, int size, int stride) {
  if (size < 1 || stride < 1)
    throw ConfigError("max_pool2d: size and stride must be >= 1");
  if (size > input.h || size > input.w)
    throw ConfigError("max_pool2d: window " + std::to_string(size) +
                      " larger than input " + std::to_string(input.h) + "x" +
                      std::to_string(input.w));
  return Shape4{input.n, (input.h - size) / stride + 1,
                (input.w - size) / stride + 1, input.c};
}

template <typename T>
TapeRef max_pool2d(Tape<T>& tape, TapeRef x, int size, int stride) {
  const Tensor<T>& in = tape.value(x);
  const Shape4 os = max_pool2d_output_shape(in.shape(), size, stride);
  const Shape4 is = in.shape();

  Tensor<T> out(os);
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(os.numel()));
  for (std::int64_t n = 0; n < os.n; ++n) {
    const T* xn = in.data() + n * is.h * is.w * is.c;
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        for (std::int64_t c = 0; c < os.c; ++c) {
          T best = -std::numeric_limits<T>::infinity();
          std::int32_t best_idx = 0;
          for (std::int64_t ky = 0; ky < size; ++ky) {
            const std::int64_t iy = oy * stride + ky;
            for (std::int64_t kx = 0; kx < size; ++kx) {
              const std::int64_t ix = ox * stride + kx;
              const std::int64_t idx = (iy * is.w + ix) * is.c + c;
              if (xn[idx] > best) {
                best = xn[idx];
                best_idx = static_cast<std::int32_t>(idx);
              }
            }
          }
          const std::int64_t oidx = ((n * os.h + oy) * os.w + ox) * os.c + c;
          out[oidx] = best;
          argmax[static_cast<std::size_t>(oidx)] = best_idx;
        }
      }
    }
  }

  return tape.emit(std::move(out), tape.requires_grad(x),
                   [x, is, argmax = std::move(argmax)](
                       Tape<T>& t, typename Tape<T>::Node& node) {
                     Tensor<T>& dx = t.grad_buffer(x);
                     const Tensor<T>& dy = node.grad;
                     const std::int64_t per_item = is.h * is.w * is.c;
                     const std::int64_t out_per_item =
                         dy.size() / dy.shape().n;
                     for (std::int64_t i = 0; i < dy.size(); ++i) {
                       const std::int64_t n = i / out_per_item;
                       dx[n * per_item + argmax[static_cast<std::size_t>(i)]] +=
                           dy[i];
                     }
                   });
}

template <typename T>
TapeRef global_avg_pool(Tape<T>& tape, TapeRef x) {
  const Tensor<T>& in = tape.value(x);
  const Shape4 is = in.shape();
  if (is.h < 1 || is.w < 1)
    throw ShapeError("global_avg_pool: empty spatial extent " + is.str());

  Tensor<T> out(Shape4{is.n, 1, 1, is.c});
  const std::int64_t spatial = is.h * is.w;
  for (std::int64_t n = 0; n < is.n; ++n) {
    const T* xn = in.data() + n * spatial * is.c;
    std::vector<double> acc(static_cast<std::size_t>(is.c), 0.0);
    for (std::int64_t p = 0; p < spatial; ++p)
      for (std::int64_t c = 0; c < is.c; ++c) acc[c] += xn[p * is.c + c];
    for (std::int64_t c = 0; c < is.c; ++c)
      out[n * is.c + c] = static_cast<T>(acc[c] / spatial);
  }

  return tape.emit(std::move(out), tape.requires_grad(x),
                   [x, is](Tape<T>& t, typename Tape<T>::Node& node) {
                     Tensor<T>& dx = t.grad_buffer(x);
                     const Tensor<T>& dy = node.grad;
                     const std::int64_t spatial = is.h * is.w;
                     const T inv = T(1) / static_cast<T>(spatial);
                     for (std::int64_t n = 0; n < is.n; ++n)
                       for (std::int64_t p = 0; p < spatial; ++p)
                         for (std::int64_t c = 0; c < is.c; ++c)
                           dx[(n * spatial + p) * is.c + c] +=
                               dy[n * is.c + c] * inv;
                   });
}

template <typename T>
TapeRef batch_norm(Tape<T>& tape, TapeRef x, Variable<T>& gamma,
                   Variable<T>& beta, BatchNormState<T>& state, Mode mode,
                   T momentum, T epsilon) {
  const Tensor<T>& in = tape.value(x);
  const Shape4 is = in.shape();
  const std::int64_t channels = is.c;
  if (gamma.value.size() != channels || beta.value.size() != channels ||
      state.running_mean.size() != channels)
    throw ShapeError("batch_norm: parameter length does not match " +
                     std::to_string(channels) + " channels");

  std::vector<T> mean(static_cast<std::size_t>(channels));
  std::vector<T> invstd(static_cast<std::size_t>(channels));
  const std::int64_t rows = is.n * is.h * is.w;

  if (mode == Mode::train) {
    std::vector<double> sum(static_cast<std::size_t>(channels), 0.0);
    std::vector<double> sumsq(static_cast<std::size_t>(channels), 0.0);
    const T* p = in.data();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < channels; ++c) {
        const double v = p[r * channels + c];
        sum[c] += v;
        sumsq[c] += v * v;
      }
    for (std::int64_t c = 0; c < channels; ++c) {
      const double m = sum[c] / rows;
      const double var = std::max(0.0, sumsq[c] / rows - m * m);
      mean[c] = static_cast<T>(m);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + double(epsilon)));
      state.running_mean[c] =
          momentum * state.running_mean[c] + (T(1) - momentum) * T(m);
      state.running_var[c] =
          momentum * state.running_var[c] + (T(1) - momentum) * T(var);
    }
    state.ever_trained = true;
  } else {
    if (!state.ever_trained && !state.warned) {
      note_diagnostic(
          "batch_norm: eval mode before any training; using initial running "
          "statistics");
      state.warned = true;
    }
    for (std::int64_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      invstd[c] = static_cast<T>(
          1.0 / std::sqrt(double(state.running_var[c]) + double(epsilon)));
    }
  }

  Tensor<T> out(is);
  {
    const T* p = in.data();
    T* y = out.data();
    const T* g = gamma.value.data();
    const T* b = beta.value.data();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < channels; ++c)
        y[r * channels + c] =
            g[c] * (p[r * channels + c] - mean[c]) * invstd[c] + b[c];
  }

  const bool needs_grad =
      tape.requires_grad(x) || gamma.trainable || beta.trainable;
  const bool batch_stats = mode == Mode::train;
  return tape.emit(
      std::move(out), needs_grad,
      [x, &gamma, &beta, mean = std::move(mean), invstd = std::move(invstd),
       rows, channels, batch_stats](Tape<T>& t, typename Tape<T>::Node& node) {
        const Tensor<T>& dy = node.grad;
        const Tensor<T>& in = t.value(x);
        const T* p = in.data();
        const T* dyp = dy.data();

        // Per-channel reductions; xhat is recomputed from the cached
        // mean/invstd instead of being stored.
        std::vector<double> sum_dy(static_cast<std::size_t>(channels), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<std::size_t>(channels),
                                        0.0);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < channels; ++c) {
            const double xhat =
                (p[r * channels + c] - mean[c]) * invstd[c];
            sum_dy[c] += dyp[r * channels + c];
            sum_dy_xhat[c] += dyp[r * channels + c] * xhat;
          }

        if (gamma.trainable)
          for (std::int64_t c = 0; c < channels; ++c)
            gamma.grad[c] += static_cast<T>(sum_dy_xhat[c]);
        if (beta.trainable)
          for (std::int64_t c = 0; c < channels; ++c)
            beta.grad[c] += static_cast<T>(sum_dy[c]);

        if (!t.requires_grad(x)) return;
        Tensor<T>& dx = t.grad_buffer(x);
        const T* g = gamma.value.data();
        if (batch_stats) {
          for (std::int64_t c = 0; c < channels; ++c) {
            sum_dy[c] /= rows;
            sum_dy_xhat[c] /= rows;
          }
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < channels; ++c) {
              const double xhat =
                  (p[r * channels + c] - mean[c]) * invstd[c];
              dx[r * channels + c] += static_cast<T>(
                  double(g[c]) * invstd[c] *
                  (dyp[r * channels + c] - sum_dy[c] - xhat * sum_dy_xhat[c]));
            }
        } else {
          // Running statistics are constants: the op is affine in x.
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < channels; ++c)
              dx[r * channels + c] +=
                  dyp[r * channels + c] * g[c] * invstd[c];
        }
      });
}

template <typename T>
TapeRef relu(Tape<T>& tape, TapeRef x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::int64_t i = 0; i < in.size(); ++i)
    out[i] = in[i] > T(0) ? in[i] : T(0);
  return tape.emit(std::move(out), tape.requires_grad(x),
                   [x](Tape<T>& t, typename Tape<T>::Node& node) {
                     Tensor<T>& dx = t.grad_buffer(x);
                     const Tensor<T>& in = t.value(x);
                     for (std::int64_t i = 0; i < in.size(); ++i)
                       if (in[i] > T(0)) dx[i] += node.grad[i];
                   });
}

template <typename T>
TapeRef sigmoid(Tape<T>& tape, TapeRef x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.shape());
  for (std::int64_t i = 0; i < in.size(); ++i) {
    const T v = in[i];
    out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                       : std::exp(v) / (T(1) + std::exp(v));
  }
  return tape.emit(std::move(out), tape.requires_grad(x),
                   [x](Tape<T>& t, typename Tape<T>::Node& node) {
                     Tensor<T>& dx = t.grad_buffer(x);
                     const Tensor<T>& y = node.value;
                     for (std::int64_t i = 0; i < y.size(); ++i)
                       dx[i] += node.grad[i] * y[i] * (T(1) - y[i]);
                   });
}

template <typename T>
TapeRef softmax(Tape<T>& tape, TapeRef x) {
  const Tensor<T>& in = tape.value(x);
  const Shape4 is = in.shape();
  if (is.h != 1 || is.w != 1)
    throw ShapeError("softmax: expects N x 1 x 1 x C rows, got " + is.str());

  Tensor<T> out(is);
  for (std::int64_t n = 0; n < is.n; ++n) {
    const T* z = in.data() + n * is.c;
    T* y = out.data() + n * is.c;
    T m = z[0];
    for (std::int64_t c = 1; c < is.c; ++c) m = std::max(m, z[c]);
    double total = 0.0;
    for (std::int64_t c = 0; c < is.c; ++c) {
      y[c] = std::exp(z[c] - m);
      total += y[c];
    }
    for (std::int64_t c = 0; c < is.c; ++c)
      y[c] = static_cast<T>(y[c] / total);
  }
  return tape.emit(std::move(out), tape.requires_grad(x),
                   [x, is](Tape<T>& t, typename Tape<T>::Node& node) {
                     Tensor<T>& dx = t.grad_buffer(x);
                     const Tensor<T>& y = node.value;
                     const Tensor<T>& dy = node.grad;
                     for (std::int64_t n = 0; n < is.n; ++n) {
                       double dot = 0.0;
                       for (std::int64_t c = 0; c < is.c; ++c)
                         dot += double(dy[n * is.c + c]) * y[n * is.c + c];
                       for (std::int64_t c = 0; c < is.c; ++c)
                         dx[n * is.c + c] +=
                             y[n * is.c + c] *
                             (dy[n * is.c + c] - static_cast<T>(dot));
                     }
                   });
}

namespace {
// Precomputed 1-D taps for align-corners-false interpolation.
template <typename T>
struct Taps {
  std::vector<std::int32_t> lo, hi;
  std::vector<T> frac;
};

template <typename T>
Taps<T> make_taps(std::int64_t out_size, std::int64_t in_size, int factor) {
  Taps<T> taps;
  taps.lo.resize(static_cast<std::size_t>(out_size));
  taps.hi.resize(static_cast<std::size_t>(out_size));
  taps.frac.resize(static_cast<std::size_t>(out_size));
  for (std::int64_t i = 0; i < out_size; ++i) {
    double src = (i + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, double(in_size - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    const auto hi = std::min(lo + 1, in_size - 1);
    taps.lo[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(lo);
    taps.hi[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(hi);
    taps.frac[static_cast<std::size_t>(i)] = static_cast<T>(src - double(lo));
  }
  return taps;
}
}  // namespace

template <typename T>
TapeRef bilinear_upsample(Tape<T>& tape, TapeRef x, int factor) {
  if (factor < 1) throw ConfigError("bilinear_upsample: factor must be >= 1");
  const Tensor<T>& in = tape.value(x);
  const Shape4 is = in.shape();
  const Shape4 os{is.n, is.h * factor, is.w * factor, is.c};

  const Taps<T> ty = make_taps<T>(os.h, is.h, factor);
  const Taps<T> tx = make_taps<T>(os.w, is.w, factor);

  Tensor<T> out(os);
  for (std::int64_t n = 0; n < os.n; ++n) {
    const T* xn = in.data() + n * is.h * is.w * is.c;
    T* yn = out.data() + n * os.h * os.w * os.c;
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      const std::int64_t y0 = ty.lo[oy], y1 = ty.hi[oy];
      const T fy = ty.frac[oy];
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        const std::int64_t x0 = tx.lo[ox], x1 = tx.hi[ox];
        const T fx = tx.frac[ox];
        const T* p00 = xn + (y0 * is.w + x0) * is.c;
        const T* p01 = xn + (y0 * is.w + x1) * is.c;
        const T* p10 = xn + (y1 * is.w + x0) * is.c;
        const T* p11 = xn + (y1 * is.w + x1) * is.c;
        T* dst = yn + (oy * os.w + ox) * os.c;
        for (std::int64_t c = 0; c < os.c; ++c)
          dst[c] = (T(1) - fy) * ((T(1) - fx) * p00[c] + fx * p01[c]) +
                   fy * ((T(1) - fx) * p10[c] + fx * p11[c]);
      }
    }
  }

  return tape.emit(
      std::move(out), tape.requires_grad(x),
      [x, is, os, ty, tx](Tape<T>& t, typename Tape<T>::Node& node) {
        Tensor<T>& dx = t.grad_buffer(x);
        const Tensor<T>& dy = node.grad;
        for (std::int64_t n = 0; n < os.n; ++n) {
          T* dxn = dx.data() + n * is.h * is.w * is.c;
          const T* dyn = dy.data() + n * os.h * os.w * os.c;
          for (std::int64_t oy = 0; oy < os.h; ++oy) {
            const std::int64_t y0 = ty.lo[oy], y1 = ty.hi[oy];
            const T fy = ty.frac[oy];
            for (std::int64_t ox = 0; ox < os.w; ++ox) {
              const std::int64_t x0 = tx.lo[ox], x1 = tx.hi[ox];
              const T fx = tx.frac[ox];
              const T* src = dyn + (oy * os.w + ox) * os.c;
              for (std::int64_t c = 0; c < os.c; ++c) {
                dxn[(y0 * is.w + x0) * is.c + c] +=
                    (T(1) - fy) * (T(1) - fx) * src[c];
                dxn[(y0 * is.w + x1) * is.c + c] += (T(1) - fy) * fx * src[c];
                dxn[(y1 * is.w + x0) * is.c + c] += fy * (T(1) - fx) * src[c];
                dxn[(y1 * is.w + x1) * is.c + c] += fy * fx * src[c];
              }
            }
          }
        }
      });
}

template <typename T>
TapeRef dense(Tape<T>& tape, TapeRef x, Variable<T>& weight,
              Variable<T>& bias) {
  const Tensor<T>& in = tape.value(x);
  const Shape4 is = in.shape();
  const Shape4 ws = weight.value.shape();  // (1, 1, Din, Dout)
  if (is.h != 1 || is.w != 1)
    throw ShapeError("dense: expects N x 1 x 1 x Din rows, got " + is.str());
  if (is.c != ws.w)
    throw ShapeError("dense: input width " + std::to_string(is.c) +
                     " does not match weight Din " + std::to_string(ws.w));
  if (bias.value.size() != ws.c)
    throw ShapeError("dense: bias length does not match Dout");

  const std::int64_t din = ws.w, dout = ws.c, batch = is.n;
  Tensor<T> out(Shape4{batch, 1, 1, dout});
  gemm(false, false, batch, dout, din, T(1), in.data(), din,
       weight.value.data(), dout, T(0), out.data(), dout);
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t c = 0; c < dout; ++c)
      out[n * dout + c] += bias.value[c];

  const bool needs_grad =
      tape.requires_grad(x) || weight.trainable || bias.trainable;
  return tape.emit(
      std::move(out), needs_grad,
      [x, &weight, &bias, batch, din,
       dout](Tape<T>& t, typename Tape<T>::Node& node) {
        const Tensor<T>& dy = node.grad;
        const Tensor<T>& in = t.value(x);
        if (bias.trainable)
          for (std::int64_t n = 0; n < batch; ++n)
            for (std::int64_t c = 0; c < dout; ++c)
              bias.grad[c] += dy[n * dout + c];
        if (weight.trainable)
          gemm(true, false, din, dout, batch, T(1), in.data(), din, dy.data(),
               dout, T(1), weight.grad.data(), dout);
        if (t.requires_grad(x)) {
          Tensor<T>& dx = t.grad_buffer(x);
          gemm(false, true, batch, din, dout, T(1), dy.data(), dout,
               weight.value.data(), dout, T(1), dx.data(), din);
        }
      });
}

template <typename T>
TapeRef dropout(Tape<T>& tape, TapeRef x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0, 1), got " +
                      std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return x;  // identity

  const Tensor<T>& in = tape.value(x);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(in.size()));
  Tensor<T> out(in.shape());
  for (std::int64_t i = 0; i < in.size(); ++i) {
    const bool k = !(rng.uniform(0.0, 1.0) < rate);
    keep[static_cast<std::size_t>(i)] = k;
    out[i] = k ? in[i] * scale : T(0);
  }
  return tape.emit(std::move(out), tape.requires_grad(x),
                   [x, scale, keep = std::move(keep)](
                       Tape<T>& t, typename Tape<T>::Node& node) {
                     Tensor<T>& dx = t.grad_buffer(x);
                     for (std::int64_t i = 0; i < node.grad.size(); ++i)
                       if (keep[static_cast<std::size_t>(i)])
                         dx[i] += node.grad[i] * scale;
                   });
}

template <typename T>
TapeRef concat_channels(Tape<T>& tape, const std::vector<TapeRef>& xs) {
  if (xs.empty()) throw ConfigError("concat_channels: no inputs");
  if (xs.size() == 1) return xs[0];

  const Shape4 first = tape.value(xs[0]).shape();
  std::int64_t channels = 0;
  bool needs_grad = false;
  for (TapeRef r : xs) {
    const Shape4 s = tape.value(r).shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw ShapeError("concat_channels: spatial mismatch " + first.str() +
                       " vs " + s.str());
    channels += s.c;
    needs_grad = needs_grad || tape.requires_grad(r);
  }

  const Shape4 os{first.n, first.h, first.w, channels};
  Tensor<T> out(os);
  const std::int64_t rows = os.n * os.h * os.w;
  std::int64_t offset = 0;
  for (TapeRef r : xs) {
    const Tensor<T>& part = tape.value(r);
    const std::int64_t pc = part.shape().c;
    for (std::int64_t row = 0; row < rows; ++row)
      std::copy_n(part.data() + row * pc, pc,
                  out.data() + row * channels + offset);
    offset += pc;
  }

  return tape.emit(std::move(out), needs_grad,
                   [xs, rows, channels](Tape<T>& t,
                                        typename Tape<T>::Node& node) {
                     std::int64_t offset = 0;
                     for (TapeRef r : xs) {
                       const std::int64_t pc = t.value(r).shape().c;
                       if (t.requires_grad(r)) {
                         Tensor<T>& dx = t.grad_buffer(r);
                         for (std::int64_t row = 0; row < rows; ++row)
                           for (std::int64_t c = 0; c < pc; ++c)
                             dx[row * pc + c] +=
                                 node.grad[row * channels + offset + c];
                       }
                       offset += pc;
                     }
                   });
}

template <typename T>
TapeRef add(Tape<T>& tape, TapeRef a, TapeRef b) {
  const Tensor<T>& ta = tape.value(a);
  const Tensor<T>& tb = tape.value(b);
  require_same_shape(ta, tb, "add");
  Tensor<T> out(ta.shape());
  for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + tb[i];
  return tape.emit(std::move(out),
                   tape.requires_grad(a) || tape.requires_grad(b),
                   [a, b](Tape<T>& t, typename Tape<T>::Node& node) {
                     if (t.requires_grad(a)) t.accumulate(a, node.grad);
                     if (t.requires_grad(b)) t.accumulate(b, node.grad);
                   });
}

template <typename T>
TapeRef bce_loss(Tape<T>& tape, TapeRef p, TapeRef y) {
  const Tensor<T>& tp = tape.value(p);
  const Tensor<T>& ty = tape.value(y);
  require_same_shape(tp, ty, "bce_loss");
  const std::int64_t count = tp.size();
  if (count == 0) throw ShapeError("bce_loss: empty input");

  double acc = 0.0;
  for (std::int64_t i = 0; i < count; ++i) {
    const double ph = std::clamp(double(tp[i]), double(kProbClamp<T>),
                                 1.0 - double(kProbClamp<T>));
    acc -= double(ty[i]) * std::log(ph) +
           (1.0 - double(ty[i])) * std::log(1.0 - ph);
  }
  Tensor<T> out(Shape4{1, 1, 1, 1});
  out[0] = static_cast<T>(acc / count);

  return tape.emit(
      std::move(out), tape.requires_grad(p) || tape.requires_grad(y),
      [p, y, count](Tape<T>& t, typename Tape<T>::Node& node) {
        const T upstream = node.grad[0];
        const Tensor<T>& tp = t.value(p);
        const Tensor<T>& ty = t.value(y);
        const T inv = upstream / static_cast<T>(count);
        if (t.requires_grad(p)) {
          Tensor<T>& dp = t.grad_buffer(p);
          for (std::int64_t i = 0; i < count; ++i) {
            if (tp[i] <= kProbClamp<T> || tp[i] >= T(1) - kProbClamp<T>)
              continue;  // clamped: flat
            dp[i] += inv * (-ty[i] / tp[i] + (T(1) - ty[i]) / (T(1) - tp[i]));
          }
        }
        if (t.requires_grad(y)) {
          Tensor<T>& dyv = t.grad_buffer(y);
          for (std::int64_t i = 0; i < count; ++i) {
            const T ph = std::clamp(tp[i], kProbClamp<T>, T(1) - kProbClamp<T>);
            dyv[i] += inv * (std::log(T(1) - ph) - std::log(ph));
          }
        }
      });
}

template <typename T>
TapeRef cross_entropy_loss(Tape<T>& tape, TapeRef probs, TapeRef onehot) {
  const Tensor<T>& tp = tape.value(probs);
  const Tensor<T>& ty = tape.value(onehot);
  require_same_shape(tp, ty, "cross_entropy_loss");
  const Shape4 s = tp.shape();
  if (s.h != 1 || s.w != 1)
    throw ShapeError("cross_entropy_loss: expects N x 1 x 1 x C rows");

  double acc = 0.0;
  for (std::int64_t i = 0; i < tp.size(); ++i) {
    if (ty[i] == T(0)) continue;
    const double ph = std::clamp(double(tp[i]), double(kProbClamp<T>), 1.0);
    acc -= double(ty[i]) * std::log(ph);
  }
  Tensor<T> out(Shape4{1, 1, 1, 1});
  out[0] = static_cast<T>(acc / s.n);

  return tape.emit(std::move(out), tape.requires_grad(probs),
                   [probs, onehot, s](Tape<T>& t,
                                      typename Tape<T>::Node& node) {
                     const T inv = node.grad[0] / static_cast<T>(s.n);
                     const Tensor<T>& tp = t.value(probs);
                     const Tensor<T>& ty = t.value(onehot);
                     Tensor<T>& dp = t.grad_buffer(probs);
                     for (std::int64_t i = 0; i < tp.size(); ++i) {
                       if (ty[i] == T(0) || tp[i] <= kProbClamp<T>) continue;
                       dp[i] += -inv * ty[i] / tp[i];
                     }
                   });
}

template <typename T>
TapeRef sum(Tape<T>& tape, TapeRef x) {
  const Tensor<T>& in = tape.value(x);
  double acc = 0.0;
  for (std::int64_t i = 0; i < in.size(); ++i) acc += in[i];
  Tensor<T> out(Shape4{1, 1, 1, 1});
  out[0] = static_cast<T>(acc);
  return tape.emit(std::move(out), tape.requires_grad(x),
                   [x](Tape<T>& t, typename Tape<T>::Node& node) {
                     Tensor<T>& dx = t.grad_buffer(x);
                     for (std::int64_t i = 0; i < dx.size(); ++i)
                       dx[i] += node.grad[0];
                   });
}

#define HGR_INSTANTIATE_OPS(T)                                                \
  template TapeRef max_pool2d<T>(Tape<T>&, TapeRef, int, int);                \
  template TapeRef global_avg_pool<T>(Tape<T>&, TapeRef);                     \
  template TapeRef batch_norm<T>(Tape<T>&, TapeRef, Variable<T>&,            \
                                 Variable<T>&, BatchNormState<T>&, Mode, T,  \
                                 T);                                          \
  template TapeRef relu<T>(Tape<T>&, TapeRef);                                \
  template TapeRef sigmoid<T>(Tape<T>&, TapeRef);                             \
  template TapeRef softmax<T>(Tape<T>&, TapeRef);                             \
  template TapeRef bilinear_upsample<T>(Tape<T>&, TapeRef, int);              \
  template TapeRef dense<T>(Tape<T>&, TapeRef, Variable<T>&, Variable<T>&);   \
  template TapeRef dropout<T>(Tape<T>&, TapeRef, double, Mode, Rng&);         \
  template TapeRef concat_channels<T>(Tape<T>&, const std::vector<TapeRef>&); \
  template TapeRef add<T>(Tape<T>&, TapeRef, TapeRef);                        \
  template TapeRef bce_loss<T>(Tape<T>&, TapeRef, TapeRef);                   \
  template TapeRef cross_entropy_loss<T>(Tape<T>&, TapeRef, TapeRef);         \
  template TapeRef sum<T>(Tape<T>&, TapeRef);

HGR_INSTANTIATE_OPS(float)
HGR_INSTANTIATE_OPS(double)

#undef HGR_INSTANTIATE_OPS

}  // namespace hgr
