#pragma once

#include <cmath>
#include <string>

#include "edgedet/quant/calibrate.hpp"
#include "edgedet/quant/requant.hpp"

namespace edgedet {

inline std::int8_t quantize_value(float x, float scale, int zero_point) {
  return saturate_i8(std::llround(static_cast<double>(x) / scale) + zero_point);
}

inline float dequantize_value(std::int8_t q, float scale, int zero_point) {
  return static_cast<float>((static_cast<int>(q) - zero_point) * static_cast<double>(scale));
}

// Symmetric weight quantization: clamp(round(w / scale), -127, 127).
inline std::int8_t quantize_weight(float w, float scale) {
  const auto q = std::llround(static_cast<double>(w) / scale);
  return static_cast<std::int8_t>(std::clamp<long long>(q, -127, 127));
}

inline Constant quantize_kernel(const Constant& kernel, const QuantParams& qp) {
  const auto& w = kernel.values<float>();
  const std::int64_t c_out = kernel.dims.at(0);
  if (static_cast<std::int64_t>(qp.scale.size()) != c_out)
    throw InvalidArgument("quantize_kernel: scale count != output channels");
  const std::int64_t per = kernel.elements() / c_out;
  std::vector<std::int8_t> q(w.size());
  for (std::int64_t o = 0; o < c_out; ++o)
    for (std::int64_t j = 0; j < per; ++j) {
      const auto i = static_cast<std::size_t>(o * per + j);
      q[i] = quantize_weight(w[i], qp.scale[static_cast<std::size_t>(o)]);
    }
  return {kernel.dims, std::move(q), qp};
}

inline TensorBuf quantize_tensor(const TensorBuf& x, const QuantParams& qp) {
  TensorBuf out = TensorBuf::zeros(x.shape(), DType::i8);
  out.spec.quant = qp;
  const auto& src = x.f32();
  auto& dst = out.i8();
  const float s = qp.scale.at(0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = quantize_value(src[i], s, qp.zero_point);
  return out;
}

inline TensorBuf dequantize_tensor(const TensorBuf& q) {
  if (!q.spec.quant) throw InvalidArgument("dequantize_tensor: tensor has no quant params");
  const QuantParams& qp = *q.spec.quant;
  TensorBuf out = TensorBuf::zeros(q.shape());
  const auto& src = q.i8();
  auto& dst = out.f32();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = dequantize_value(src[i], qp.scale.at(0), qp.zero_point);
  return out;
}

// Fixed-point rescales of an int8 graph, derived from its stored scales: one per output
// channel for Conv/Detect (s_in * s_w / s_out), one per input for Concat and Add.
inline void assign_requant(Graph& q) {
  auto scale_of = [&](TensorId id, const Node& n) {
    const auto& qp = q.tensor(id).quant;
    if (!qp) throw InvalidArgument("node '" + n.name + "': tensor " + std::to_string(id) + " has no quant params");
    return static_cast<double>(qp->scale.at(0));
  };
  for (Node& n : q.nodes) {
    n.requant.clear();
    const double s_out = scale_of(n.outputs.front(), n);
    switch (n.kind) {
      case OpKind::Conv2d:
      case OpKind::Detect: {
        const Constant& kernel = n.w(weight::kKernel);
        if (!kernel.quant) throw InvalidArgument("node '" + n.name + "': kernel has no quant params");
        const double s_in = scale_of(n.inputs.front(), n);
        for (std::int64_t o = 0; o < kernel.dims[0]; ++o)
          n.requant.push_back(detail::make_multiplier(s_in * kernel.quant->scale_at(static_cast<std::size_t>(o)) / s_out));
        break;
      }
      case OpKind::ConcatChannels:
        for (TensorId in : n.inputs) n.requant.push_back(detail::make_multiplier(scale_of(in, n) / s_out));
        break;
      case OpKind::Add: {
        const double rs[2] = {scale_of(n.inputs[0], n) / s_out, scale_of(n.inputs[1], n) / s_out};
        n.requant = shared_shift_multipliers(rs);
        break;
      }
      default:
        break;
    }
  }
}

// Converts a BN-folded float graph into an int8 graph: i8 activations (per-tensor
// affine), i8 kernels (per-channel symmetric), i32 biases at scale s_in * s_w, and a
// fixed-point requantization multiplier per conv output channel. Pools and upsampling
// reuse their input's params; Concat and Add carry one rescale per input.
inline Graph quantize_graph(const Graph& g, const Calibration& cal) {
  if (has_batchnorm(g)) throw InvalidArgument("quantize_graph: fold BatchNorm nodes first");
  if (g.is_quantized()) throw InvalidArgument("quantize_graph: graph is already quantized");
  validate(g);
  Graph q = g;
  auto act = [&](TensorId id) -> const QuantParams& {
    auto it = cal.activations.find(id);
    if (it == cal.activations.end())
      throw InvalidArgument("quantize_graph: missing QuantParams for tensor " + std::to_string(id));
    return it->second;
  };
  auto& input = q.tensor(q.input_id);
  input.dtype = DType::i8;
  input.quant = act(q.input_id);

  for (Node& n : q.nodes) {
    TensorSpec& out = q.tensor(n.outputs.front());
    out.dtype = DType::i8;
    if (n.kind == OpKind::MaxPool2d || n.kind == OpKind::UpsampleNearest2x) {
      out.quant = q.tensor(n.inputs.front()).quant;
      continue;
    }
    out.quant = act(out.id);
    switch (n.kind) {
      case OpKind::Conv2d:
      case OpKind::Detect: {
        auto wit = cal.weights.find(n.name);
        if (wit == cal.weights.end())
          throw InvalidArgument("quantize_graph: missing QuantParams for weights of node '" +
                                n.name + "'");
        const QuantParams& wq = wit->second;
        const Constant& kernel = n.w(weight::kKernel);
        const std::int64_t c_out = kernel.dims[0];
        const float s_in = q.tensor(n.inputs.front()).quant->scale[0];
        std::vector<float> bias_f(static_cast<std::size_t>(c_out), 0.0f);
        if (n.has_weight(weight::kBias)) bias_f = n.w(weight::kBias).values<float>();
        std::vector<std::int32_t> bias_q(bias_f.size());
        for (std::size_t o = 0; o < bias_f.size(); ++o)
          bias_q[o] = saturate_i32(bias_f[o] / (static_cast<double>(s_in) * wq.scale[o]));
        n.weights[weight::kKernel] = quantize_kernel(kernel, wq);
        n.weights[weight::kBias] = Constant{{c_out}, std::move(bias_q), std::nullopt};
        break;
      }
      case OpKind::ConcatChannels:
      case OpKind::Add:
      case OpKind::SiLU:
      case OpKind::Sigmoid:
        break;
      default:
        throw InvalidArgument("quantize_graph: unsupported node '" + n.name + "'");
    }
  }
  assign_requant(q);
  return q;
}

}  // namespace edgedet
