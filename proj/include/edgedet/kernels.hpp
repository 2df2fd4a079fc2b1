#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "edgedet/shape_inference.hpp"
#include "edgedet/tensor.hpp"

namespace edgedet {

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }
inline float silu(float x) { return x * sigmoid(x); }

namespace detail {

// Accumulates a direct convolution into `acc` (C_out x H_out x W_out, pre-filled with
// the bias). Terms are added in (c, u, v) order for every output element, so two
// calls with identical operands give bit-identical results. Padded taps contribute
// nothing, which is zero padding as long as `in` holds zero-centered values.
template <typename In, typename W, typename Acc>
void conv_accumulate(std::span<const In> in, const Shape& in_shape, std::span<const W> kernel,
                     std::int64_t c_out, int k, int stride, int padding, std::span<Acc> acc,
                     std::int64_t h_out, std::int64_t w_out) {
  const std::int64_t c_in = in_shape.c, h_in = in_shape.h, w_in = in_shape.w;
  std::vector<std::int64_t> x_lo(static_cast<std::size_t>(k)), x_hi(static_cast<std::size_t>(k));
  for (int v = 0; v < k; ++v) {
    // valid x: 0 <= x*stride - padding + v < w_in
    std::int64_t lo = padding - v > 0 ? (padding - v + stride - 1) / stride : 0;
    std::int64_t hi = (w_in - 1 + padding - v) >= 0 ? (w_in - 1 + padding - v) / stride + 1 : 0;
    x_lo[static_cast<std::size_t>(v)] = std::min(lo, w_out);
    x_hi[static_cast<std::size_t>(v)] = std::clamp<std::int64_t>(hi, 0, w_out);
  }
  const std::int64_t plane_out = h_out * w_out;
  for (std::int64_t o = 0; o < c_out; ++o) {
    Acc* out = acc.data() + o * plane_out;
    for (std::int64_t c = 0; c < c_in; ++c) {
      const In* src = in.data() + c * h_in * w_in;
      const W* wk = kernel.data() + (o * c_in + c) * k * k;
      for (int u = 0; u < k; ++u) {
        for (int v = 0; v < k; ++v) {
          const Acc wv = static_cast<Acc>(wk[u * k + v]);
          const std::int64_t lo = x_lo[static_cast<std::size_t>(v)];
          const std::int64_t hi = x_hi[static_cast<std::size_t>(v)];
          if (lo >= hi) continue;
          const std::int64_t count = hi - lo;
          for (std::int64_t y = 0; y < h_out; ++y) {
            const std::int64_t iy = y * stride - padding + u;
            if (iy < 0 || iy >= h_in) continue;
            const In* row = src + iy * w_in + (lo * stride - padding + v);
            Acc* dst = out + y * w_out + lo;
            if (stride == 1) {
              for (std::int64_t x = 0; x < count; ++x) dst[x] += wv * static_cast<Acc>(row[x]);
            } else {
              for (std::int64_t x = 0; x < count; ++x)
                dst[x] += wv * static_cast<Acc>(row[x * stride]);
            }
          }
        }
      }
    }
  }
}

// Max over the window; out-of-bounds taps are skipped (-inf padding).
template <typename T>
void maxpool_planes(std::span<const T> in, const Shape& s, int k, int stride, int padding,
                    std::span<T> out, std::int64_t h_out, std::int64_t w_out) {
  for (std::int64_t c = 0; c < s.c; ++c) {
    const T* src = in.data() + c * s.h * s.w;
    T* dst = out.data() + c * h_out * w_out;
    for (std::int64_t y = 0; y < h_out; ++y) {
      const std::int64_t y0 = std::max<std::int64_t>(y * stride - padding, 0);
      const std::int64_t y1 = std::min<std::int64_t>(y * stride - padding + k, s.h);
      for (std::int64_t x = 0; x < w_out; ++x) {
        const std::int64_t x0 = std::max<std::int64_t>(x * stride - padding, 0);
        const std::int64_t x1 = std::min<std::int64_t>(x * stride - padding + k, s.w);
        T m = std::numeric_limits<T>::lowest();
        for (std::int64_t iy = y0; iy < y1; ++iy)
          for (std::int64_t ix = x0; ix < x1; ++ix) m = std::max(m, src[iy * s.w + ix]);
        dst[y * w_out + x] = m;
      }
    }
  }
}

template <typename T>
void upsample_planes(std::span<const T> in, const Shape& s, std::span<T> out) {
  const std::int64_t w2 = s.w * 2;
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t y = 0; y < s.h * 2; ++y) {
      const T* src = in.data() + (c * s.h + y / 2) * s.w;
      T* dst = out.data() + (c * s.h * 2 + y) * w2;
      for (std::int64_t x = 0; x < w2; ++x) dst[x] = src[x / 2];
    }
}

inline void require_f32(const TensorBuf& t, const char* what) {
  if (t.spec.dtype != DType::f32 || dtype_of(t.data) != DType::f32)
    throw InvalidArgument(std::string(what) + ": expected an f32 tensor");
  if (static_cast<std::int64_t>(size_of(t.data)) != t.shape().elements())
    throw InvalidArgument(std::string(what) + ": data length does not match shape " +
                          t.shape().str());
}

}  // namespace detail

// out[o,y,x] = bias[o] + sum_{c,u,v} in[c, y*s-p+u, x*s-p+v] * k[o,c,u,v], zero padding.
inline TensorBuf conv2d_ref(const TensorBuf& input, const Constant& kernel, const Constant* bias,
                            int stride, int padding) {
  detail::require_f32(input, "conv2d_ref");
  const Shape& s = input.shape();
  if (kernel.dims.size() != 4 || kernel.dims[2] != kernel.dims[3])
    throw InvalidArgument("conv2d_ref: kernel must be (C_out, C_in, k, k)");
  if (kernel.dims[1] != s.c) throw InvalidArgument("conv2d_ref: kernel/input channel mismatch");
  const int k = static_cast<int>(kernel.dims[2]);
  if (stride < 1 || padding < 0) throw InvalidArgument("conv2d_ref: bad stride or padding");
  if (s.h + 2 * padding < k || s.w + 2 * padding < k)
    throw InvalidArgument("conv2d_ref: kernel larger than padded input");
  const std::int64_t c_out = kernel.dims[0];
  Shape os{s.n, c_out, conv_out_extent(s.h, k, stride, padding),
           conv_out_extent(s.w, k, stride, padding)};
  TensorBuf out = TensorBuf::zeros(os);
  auto& acc = out.f32();
  if (bias) {
    const auto& b = bias->values<float>();
    if (static_cast<std::int64_t>(b.size()) != c_out)
      throw InvalidArgument("conv2d_ref: bias length != output channels");
    for (std::int64_t o = 0; o < c_out; ++o)
      std::fill_n(acc.begin() + o * os.h * os.w, os.h * os.w, b[static_cast<std::size_t>(o)]);
  }
  detail::conv_accumulate<float, float, float>(input.f32(), s, kernel.values<float>(), c_out, k,
                                               stride, padding, std::span<float>(acc), os.h, os.w);
  return out;
}

inline TensorBuf map_elementwise(const TensorBuf& input, float (*f)(float)) {
  detail::require_f32(input, "elementwise");
  TensorBuf out = input;
  for (float& v : out.f32()) v = f(v);
  return out;
}

inline TensorBuf silu(const TensorBuf& input) {
  return map_elementwise(input, static_cast<float (*)(float)>(&silu));
}
inline TensorBuf sigmoid(const TensorBuf& input) {
  return map_elementwise(input, static_cast<float (*)(float)>(&sigmoid));
}

template <typename T = float>
TensorBuf maxpool2d_ref(const TensorBuf& input, int k, int stride, int padding) {
  const Shape& s = input.shape();
  if (s.h + 2 * padding < k || s.w + 2 * padding < k || k < 1 || stride < 1)
    throw InvalidArgument("maxpool2d_ref: window larger than padded input");
  Shape os{s.n, s.c, conv_out_extent(s.h, k, stride, padding),
           conv_out_extent(s.w, k, stride, padding)};
  TensorBuf out = TensorBuf::zeros(os, input.spec.dtype);
  out.spec.quant = input.spec.quant;
  detail::maxpool_planes<T>(input.values<T>(), s, k, stride, padding, out.values<T>(), os.h, os.w);
  return out;
}

template <typename T = float>
TensorBuf upsample_nearest2x(const TensorBuf& input) {
  const Shape& s = input.shape();
  TensorBuf out = TensorBuf::zeros({s.n, s.c, s.h * 2, s.w * 2}, input.spec.dtype);
  out.spec.quant = input.spec.quant;
  detail::upsample_planes<T>(input.values<T>(), s, out.values<T>());
  return out;
}

inline TensorBuf concat_channels(std::span<const TensorBuf* const> inputs) {
  if (inputs.empty()) throw InvalidArgument("concat_channels: no inputs");
  Shape os = inputs[0]->shape();
  os.c = 0;
  for (const TensorBuf* t : inputs) {
    detail::require_f32(*t, "concat_channels");
    const Shape& s = t->shape();
    if (s.n != os.n || s.h != os.h || s.w != os.w)
      throw InvalidArgument("concat_channels: spatial shape mismatch " + s.str());
    os.c += s.c;
  }
  TensorBuf out = TensorBuf::zeros(os);
  auto dst = out.f32().begin();
  for (const TensorBuf* t : inputs) dst = std::copy(t->f32().begin(), t->f32().end(), dst);
  return out;
}

inline TensorBuf add(const TensorBuf& a, const TensorBuf& b) {
  detail::require_f32(a, "add");
  detail::require_f32(b, "add");
  if (!(a.shape() == b.shape()))
    throw InvalidArgument("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  TensorBuf out = a;
  auto& o = out.f32();
  const auto& y = b.f32();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
  return out;
}

inline TensorBuf batchnorm_ref(const TensorBuf& input, const std::vector<float>& gamma,
                               const std::vector<float>& beta, const std::vector<float>& mean,
                               const std::vector<float>& var, float eps) {
  detail::require_f32(input, "batchnorm");
  const Shape& s = input.shape();
  TensorBuf out = input;
  auto& o = out.f32();
  const std::int64_t plane = s.h * s.w;
  for (std::int64_t c = 0; c < s.c; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const float inv = gamma[i] / std::sqrt(var[i] + eps);
    for (std::int64_t j = 0; j < plane; ++j) {
      float& v = o[static_cast<std::size_t>(c * plane + j)];
      v = (v - mean[i]) * inv + beta[i];
    }
  }
  return out;
}

}  // namespace edgedet
