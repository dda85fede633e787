#include <cstring>

#include "blas.hpp"
#include "ops.hpp"

namespace hgr {

namespace {

struct ConvGeometry {
  std::int64_t kh, kw, cin, cout;
  std::int64_t stride, dilation;
  std::int64_t pad_h, pad_w;
  std::int64_t oh, ow;
  bool pointwise;  // 1x1, stride 1, no padding: GEMM straight on the input
};

ConvGeometry resolve(const Shape4& input, const Shape4& kernel,
                     const ConvSpec& spec) {
  if (spec.stride < 1 || spec.dilation < 1)
    throw ConfigError("conv2d: stride and dilation must be >= 1");
  if (input.c != kernel.w)
    throw ShapeError("conv2d: input has " + std::to_string(input.c) +
                     " channels but kernel expects " + std::to_string(kernel.w));

  ConvGeometry g;
  g.kh = kernel.n;
  g.kw = kernel.h;
  g.cin = kernel.w;
  g.cout = kernel.c;
  g.stride = spec.stride;
  g.dilation = spec.dilation;

  const std::int64_t span_h = g.dilation * (g.kh - 1);
  const std::int64_t span_w = g.dilation * (g.kw - 1);
  if (spec.pad == Pad::same) {
    if (span_h % 2 != 0 || span_w % 2 != 0)
      throw ConfigError("conv2d: same padding requires odd kernel size");
    g.pad_h = span_h / 2;
    g.pad_w = span_w / 2;
  } else {
    g.pad_h = 0;
    g.pad_w = 0;
  }

  g.oh = (input.h + 2 * g.pad_h - span_h - 1) / g.stride + 1;
  g.ow = (input.w + 2 * g.pad_w - span_w - 1) / g.stride + 1;
  if (input.h + 2 * g.pad_h - span_h - 1 < 0 || g.oh < 1)
    throw ConfigError("conv2d: output height < 1 (input height " +
                      std::to_string(input.h) + ", effective kernel " +
                      std::to_string(span_h + 1) + ")");
  if (input.w + 2 * g.pad_w - span_w - 1 < 0 || g.ow < 1)
    throw ConfigError("conv2d: output width < 1 (input width " +
                      std::to_string(input.w) + ", effective kernel " +
                      std::to_string(span_w + 1) + ")");

  g.pointwise = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad_h == 0 &&
                g.pad_w == 0;
  return g;
}

template <typename T>
std::vector<T>& scratch_buffer(int which, std::size_t size) {
  thread_local std::vector<T> buffers[2];
  if (buffers[which].size() < size) buffers[which].resize(size);
  return buffers[which];
}

// One row per output pixel, kh*kw*cin columns. Channel runs are contiguous
// in NHWC, so each (ky,kx) tap is a single memcpy or zero fill.
template <typename T>
void im2col(const T* x, std::int64_t h, std::int64_t w, const ConvGeometry& g,
            T* col) {
  const std::int64_t row_len = g.kh * g.kw * g.cin;
  for (std::int64_t oy = 0; oy < g.oh; ++oy) {
    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
      T* row = col + (oy * g.ow + ox) * row_len;
      for (std::int64_t ky = 0; ky < g.kh; ++ky) {
        const std::int64_t iy = oy * g.stride - g.pad_h + ky * g.dilation;
        for (std::int64_t kx = 0; kx < g.kw; ++kx) {
          const std::int64_t ix = ox * g.stride - g.pad_w + kx * g.dilation;
          T* dst = row + (ky * g.kw + kx) * g.cin;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
            std::memset(dst, 0, sizeof(T) * g.cin);
          } else {
            std::memcpy(dst, x + (iy * w + ix) * g.cin, sizeof(T) * g.cin);
          }
        }
      }
    }
  }
}

// Scatter-add of a column panel back into the input gradient.
template <typename T>
void col2im_add(const T* col, std::int64_t h, std::int64_t w,
                const ConvGeometry& g, T* dx) {
  const std::int64_t row_len = g.kh * g.kw * g.cin;
  for (std::int64_t oy = 0; oy < g.oh; ++oy) {
    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
      const T* row = col + (oy * g.ow + ox) * row_len;
      for (std::int64_t ky = 0; ky < g.kh; ++ky) {
        const std::int64_t iy = oy * g.stride - g.pad_h + ky * g.dilation;
        if (iy < 0 || iy >= h) continue;
        for (std::int64_t kx = 0; kx < g.kw; ++kx) {
          const std::int64_t ix = ox * g.stride - g.pad_w + kx * g.dilation;
          if (ix < 0 || ix >= w) continue;
          const T* src = row + (ky * g.kw + kx) * g.cin;
          T* dst = dx + (iy * w + ix) * g.cin;
          for (std::int64_t c = 0; c < g.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

Shape4 conv2d_output_shape(const Shape4& input, const Shape4& kernel,
                           const ConvSpec& spec) {
  const ConvGeometry g = resolve(input, kernel, spec);
  return Shape4{input.n, g.oh, g.ow, g.cout};
}

template <typename T>
TapeRef conv2d(Tape<T>& tape, TapeRef x, Variable<T>& kernel,
               Variable<T>* bias, const ConvSpec& spec) {
  const Tensor<T>& in = tape.value(x);
  const ConvGeometry g = resolve(in.shape(), kernel.value.shape(), spec);
  if (bias && bias->value.size() != g.cout)
    throw ShapeError("conv2d: bias length " +
                     std::to_string(bias->value.size()) +
                     " does not match output channels " +
                     std::to_string(g.cout));

  const std::int64_t batch = in.shape().n;
  const std::int64_t h = in.shape().h, w = in.shape().w;
  const std::int64_t pixels = g.oh * g.ow;
  const std::int64_t row_len = g.kh * g.kw * g.cin;

  Tensor<T> out(Shape4{batch, g.oh, g.ow, g.cout});
  for (std::int64_t n = 0; n < batch; ++n) {
    const T* xin = in.data() + n * h * w * g.cin;
    T* yout = out.data() + n * pixels * g.cout;
    const T* panel = xin;
    if (!g.pointwise) {
      std::vector<T>& col =
          scratch_buffer<T>(0, static_cast<std::size_t>(pixels * row_len));
      im2col(xin, h, w, g, col.data());
      panel = col.data();
    }
    gemm(false, false, pixels, g.cout, row_len, T(1), panel, row_len,
         kernel.value.data(), g.cout, T(0), yout, g.cout);
    if (bias) {
      const T* b = bias->value.data();
      for (std::int64_t p = 0; p < pixels; ++p)
        for (std::int64_t c = 0; c < g.cout; ++c) yout[p * g.cout + c] += b[c];
    }
  }

  const bool needs_grad = tape.requires_grad(x) || kernel.trainable ||
                          (bias && bias->trainable);
  return tape.emit(
      std::move(out), needs_grad,
      [x, &kernel, bias, g, h, w, batch, pixels,
       row_len](Tape<T>& t, typename Tape<T>::Node& node) {
        const Tensor<T>& dout = node.grad;
        const Tensor<T>& in = t.value(x);
        const bool need_dx = t.requires_grad(x);
        const bool need_dw = kernel.trainable;

        if (bias && bias->trainable) {
          T* db = bias->grad.data();
          const T* dy = dout.data();
          for (std::int64_t i = 0; i < batch * pixels; ++i)
            for (std::int64_t c = 0; c < g.cout; ++c)
              db[c] += dy[i * g.cout + c];
        }
        if (!need_dx && !need_dw) return;

        Tensor<T>* dx = need_dx ? &t.grad_buffer(x) : nullptr;
        for (std::int64_t n = 0; n < batch; ++n) {
          const T* xin = in.data() + n * h * w * g.cin;
          const T* dy = dout.data() + n * pixels * g.cout;
          if (need_dw) {
            const T* panel = xin;
            if (!g.pointwise) {
              std::vector<T>& col = scratch_buffer<T>(
                  0, static_cast<std::size_t>(pixels * row_len));
              im2col(xin, h, w, g, col.data());
              panel = col.data();
            }
            // dW[K x Cout] += col^T [K x P] * dY [P x Cout]
            gemm(true, false, row_len, g.cout, pixels, T(1), panel, row_len,
                 dy, g.cout, T(1), kernel.grad.data(), g.cout);
          }
          if (need_dx) {
            T* dxn = dx->data() + n * h * w * g.cin;
            if (g.pointwise) {
              gemm(false, true, pixels, g.cin, g.cout, T(1), dy, g.cout,
                   kernel.value.data(), g.cout, T(1), dxn, g.cin);
            } else {
              std::vector<T>& dcol = scratch_buffer<T>(
                  1, static_cast<std::size_t>(pixels * row_len));
              gemm(false, true, pixels, row_len, g.cout, T(1), dy, g.cout,
                   kernel.value.data(), g.cout, T(0), dcol.data(), row_len);
              col2im_add(dcol.data(), h, w, g, dxn);
            }
          }
        }
      });
}

template TapeRef conv2d<float>(Tape<float>&, TapeRef, Variable<float>&,
                               Variable<float>*, const ConvSpec&);
template TapeRef conv2d<double>(Tape<double>&, TapeRef, Variable<double>&,
                                Variable<double>*, const ConvSpec&);

}  // namespace hgr
