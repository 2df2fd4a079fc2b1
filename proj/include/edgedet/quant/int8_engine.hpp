#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "edgedet/engine.hpp"
#include "edgedet/quant/quantize.hpp"

namespace edgedet {

using Lut = std::array<std::int8_t, 256>;

// 256-entry table: q_out = quantize(f(dequantize(q_in))).
inline Lut make_lut(float (*f)(float), const QuantParams& in, const QuantParams& out) {
  Lut t{};
  for (int q = -128; q <= 127; ++q) {
    const float x = dequantize_value(static_cast<std::int8_t>(q), in.scale[0], in.zero_point);
    t[static_cast<std::size_t>(q + 128)] = quantize_value(f(x), out.scale[0], out.zero_point);
  }
  return t;
}

namespace detail {

inline const QuantParams& qparams(const TensorBuf& t, const Node& n) {
  if (!t.spec.quant)
    throw InvalidArgument("node '" + n.name + "': int8 input has no quant params");
  return *t.spec.quant;
}

inline TensorBuf run_int8_conv(const Node& n, const TensorBuf& in, const TensorSpec& out_spec) {
  const QuantParams& qin = qparams(in, n);
  const QuantParams& qout = *out_spec.quant;
  const Constant& kernel = n.w(weight::kKernel);
  const auto& bias = n.w(weight::kBias).values<std::int32_t>();
  const std::int64_t c_out = kernel.dims[0];
  if (static_cast<std::int64_t>(n.requant.size()) != c_out)
    throw InvalidArgument("node '" + n.name + "': missing requantization multipliers");
  const ConvAttrs a = n.conv();
  const Shape& s = in.shape();
  const Shape os{s.n, c_out, conv_out_extent(s.h, a.kernel, a.stride, a.padding),
                 conv_out_extent(s.w, a.kernel, a.stride, a.padding)};

  // Zero-centered input, so padded taps (absent from the sum) equal real zero.
  std::vector<std::int16_t> centered(in.i8().size());
  for (std::size_t i = 0; i < centered.size(); ++i)
    centered[i] = static_cast<std::int16_t>(in.i8()[i] - qin.zero_point);

  const std::int64_t plane = os.h * os.w;
  std::vector<std::int32_t> acc(static_cast<std::size_t>(c_out * plane));
  for (std::int64_t o = 0; o < c_out; ++o)
    std::fill_n(acc.begin() + o * plane, plane, bias[static_cast<std::size_t>(o)]);
  conv_accumulate<std::int16_t, std::int8_t, std::int32_t>(
      centered, s, kernel.values<std::int8_t>(), c_out, a.kernel, a.stride, a.padding,
      std::span<std::int32_t>(acc), os.h, os.w);

  TensorBuf out = TensorBuf::zeros(os, DType::i8);
  out.spec.quant = qout;
  auto& dst = out.i8();
  for (std::int64_t o = 0; o < c_out; ++o) {
    const RequantMultiplier& m = n.requant[static_cast<std::size_t>(o)];
    for (std::int64_t j = 0; j < plane; ++j) {
      const auto i = static_cast<std::size_t>(o * plane + j);
      dst[i] = saturate_i8(apply_multiplier(acc[i], m) + qout.zero_point);
    }
  }
  return out;
}

inline TensorBuf run_int8_node(const Graph& g, const Node& n,
                               const std::vector<const TensorBuf*>& in) {
  const TensorSpec& out_spec = g.tensor(n.outputs.front());
  if (!out_spec.quant)
    throw InvalidArgument("node '" + n.name + "': output tensor has no quant params");
  const QuantParams& qout = *out_spec.quant;
  switch (n.kind) {
    case OpKind::Conv2d:
    case OpKind::Detect:
      return run_int8_conv(n, *in[0], out_spec);
    case OpKind::SiLU:
    case OpKind::Sigmoid: {
      const Lut lut = make_lut(n.kind == OpKind::SiLU ? static_cast<float (*)(float)>(&silu)
                                                      : static_cast<float (*)(float)>(&sigmoid),
                               qparams(*in[0], n), qout);
      TensorBuf out = *in[0];
      out.spec.quant = qout;
      for (auto& v : out.i8()) v = lut[static_cast<std::size_t>(v + 128)];
      return out;
    }
    case OpKind::MaxPool2d: {
      const PoolAttrs& p = n.pool();
      TensorBuf out = maxpool2d_ref<std::int8_t>(*in[0], p.kernel, p.stride, p.padding);
      out.spec.quant = qout;
      return out;
    }
    case OpKind::UpsampleNearest2x: {
      TensorBuf out = upsample_nearest2x<std::int8_t>(*in[0]);
      out.spec.quant = qout;
      return out;
    }
    case OpKind::ConcatChannels: {
      if (n.requant.size() != in.size())
        throw InvalidArgument("node '" + n.name + "': missing requantization multipliers");
      Shape os = in[0]->shape();
      os.c = 0;
      for (const TensorBuf* t : in) os.c += t->shape().c;
      TensorBuf out = TensorBuf::zeros(os, DType::i8);
      out.spec.quant = qout;
      auto dst = out.i8().begin();
      for (std::size_t k = 0; k < in.size(); ++k) {
        const QuantParams& qi = qparams(*in[k], n);
        if (qi == qout) {
          dst = std::copy(in[k]->i8().begin(), in[k]->i8().end(), dst);
          continue;
        }
        for (std::int8_t v : in[k]->i8())
          *dst++ = saturate_i8(apply_multiplier(v - qi.zero_point, n.requant[k]) + qout.zero_point);
      }
      return out;
    }
    case OpKind::Add: {
      if (n.requant.size() != 2)
        throw InvalidArgument("node '" + n.name + "': missing requantization multipliers");
      const QuantParams& qa = qparams(*in[0], n);
      const QuantParams& qb = qparams(*in[1], n);
      const auto& ma = n.requant[0];
      const auto& mb = n.requant[1];
      TensorBuf out = TensorBuf::zeros(in[0]->shape(), DType::i8);
      out.spec.quant = qout;
      const auto& a = in[0]->i8();
      const auto& b = in[1]->i8();
      auto& dst = out.i8();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const std::int64_t sum = static_cast<std::int64_t>(a[i] - qa.zero_point) * ma.mantissa +
                                 static_cast<std::int64_t>(b[i] - qb.zero_point) * mb.mantissa;
        dst[i] = saturate_i8(rounding_shift(sum, ma.right_shift) + qout.zero_point);
      }
      return out;
    }
    case OpKind::BatchNorm:
      break;
  }
  throw InvalidArgument("node '" + n.name + "': unsupported kind in int8 graph");
}

}  // namespace detail

// Integer-only execution of a quantized graph. `input` must already be quantized with
// the graph input's params (see quantize_input).
inline TensorMap execute_int8(const Graph& qg, const TensorBuf& input, ExecTrace* trace = nullptr) {
  if (!qg.is_quantized()) throw InvalidArgument("execute_int8: graph is not quantized");
  detail::check_input(qg, input, DType::i8);
  TensorBuf x = input;
  x.spec.quant = qg.tensor(qg.input_id).quant;
  return detail::walk(qg, std::move(x), trace,
                      [&](const Node& n, const std::vector<const TensorBuf*>& in) {
                        return detail::run_int8_node(qg, n, in);
                      });
}

inline TensorBuf quantize_input(const Graph& qg, const TensorBuf& x) {
  const auto& spec = qg.tensor(qg.input_id);
  if (!spec.quant) throw InvalidArgument("graph input has no quant params");
  return quantize_tensor(x, *spec.quant);
}

// Runs a float or int8 graph on a float input and returns float outputs.
inline TensorMap run_graph(const Graph& g, const TensorBuf& x, ExecTrace* trace = nullptr) {
  if (!g.is_quantized()) return execute_float(g, x, trace);
  TensorMap raw = execute_int8(g, quantize_input(g, x), trace);
  TensorMap out;
  for (auto& [id, t] : raw) out.emplace(id, dequantize_tensor(t));
  return out;
}

}  // namespace edgedet
