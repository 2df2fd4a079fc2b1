#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>

#include "edgedet/batchnorm_fold.hpp"
#include "edgedet/engine.hpp"

namespace edgedet {

inline constexpr float kMinScale = 1e-8f;

// Observed value range of one tensor; merging is associative and commutative, so
// ranges gathered on separate input shards can be combined in any order.
struct Range {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();

  void observe(std::span<const float> values) {
    for (float v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  Range& merge(const Range& o) {
    lo = std::min(lo, o.lo);
    hi = std::max(hi, o.hi);
    return *this;
  }
  bool empty() const { return lo > hi; }
};

// Maps [lo, hi] (widened to contain zero, so zero padding is exact) onto [-128, 127].
inline QuantParams affine_params(Range r) {
  const double lo = std::min(0.0f, r.empty() ? 0.0f : r.lo);
  const double hi = std::max(0.0f, r.empty() ? 0.0f : r.hi);
  const float scale = std::max(static_cast<float>((hi - lo) / 255.0), kMinScale);
  const long zp = -128 - std::lround(lo / scale);
  return QuantParams::affine(scale, static_cast<int>(std::clamp(zp, -128L, 127L)));
}

// Per-output-channel symmetric scales: max|w_channel| / 127, clamped below at 1e-8.
inline QuantParams weight_params(const Constant& kernel) {
  const auto& w = kernel.values<float>();
  const std::int64_t c_out = kernel.dims.at(0);
  const std::int64_t per = kernel.elements() / c_out;
  std::vector<float> scales(static_cast<std::size_t>(c_out));
  for (std::int64_t o = 0; o < c_out; ++o) {
    float m = 0.0f;
    for (std::int64_t j = 0; j < per; ++j)
      m = std::max(m, std::fabs(w[static_cast<std::size_t>(o * per + j)]));
    scales[static_cast<std::size_t>(o)] = std::max(m / 127.0f, kMinScale);
  }
  return QuantParams::symmetric(std::move(scales));
}

struct Calibration {
  std::map<TensorId, Range> ranges;
  std::map<TensorId, QuantParams> activations;
  std::map<std::string, QuantParams> weights;  // node name -> kernel params
};

inline std::map<TensorId, Range> observe_ranges(const Graph& g, const TensorBuf& input) {
  std::map<TensorId, Range> ranges;
  ExecTrace trace;
  execute_float(g, input, &trace);
  ranges[g.input_id].observe(input.f32());
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    ranges[g.nodes[i].outputs.front()].observe(trace.entries[i].output.f32());
  return ranges;
}

// Min/max calibration over every input: per-tensor affine activation params and
// per-channel symmetric weight params.
inline Calibration calibrate(const Graph& g, std::span<const TensorBuf> inputs) {
  if (inputs.empty()) throw InvalidArgument("calibrate: calibration set is empty");
  if (has_batchnorm(g)) throw InvalidArgument("calibrate: fold BatchNorm nodes first");
  Calibration cal;
  for (const TensorBuf& x : inputs)
    for (const auto& [id, r] : observe_ranges(g, x)) cal.ranges[id].merge(r);
  for (const auto& [id, r] : cal.ranges) cal.activations[id] = affine_params(r);
  for (const Node& n : g.nodes)
    if (n.is_conv_like()) cal.weights[n.name] = weight_params(n.w(weight::kKernel));
  return cal;
}

}  // namespace edgedet
