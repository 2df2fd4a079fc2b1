#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

#include "edgedet/graph.hpp"
#include "edgedet/kernels.hpp"

namespace edgedet {

struct NodeTrace {
  std::string node;
  OpKind kind = OpKind::Conv2d;
  TensorBuf output;
  double micros = 0.0;
};

// One entry per executed node, in execution order.
struct ExecTrace {
  std::vector<NodeTrace> entries;

  double total_micros() const {
    double t = 0.0;
    for (const auto& e : entries) t += e.micros;
    return t;
  }
};

using TensorMap = std::map<TensorId, TensorBuf>;

namespace detail {

// Index of the last node reading each tensor; graph outputs are pinned past the end.
inline std::map<TensorId, std::size_t> last_reads(const Graph& g) {
  std::map<TensorId, std::size_t> last;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (TensorId in : g.nodes[i].inputs) last[in] = i;
  for (TensorId out : g.output_ids) last[out] = g.nodes.size();
  return last;
}

inline void check_input(const Graph& g, const TensorBuf& input, DType expected) {
  const TensorSpec& spec = g.tensor(g.input_id);
  if (input.spec.dtype != expected || dtype_of(input.data) != expected)
    throw InvalidArgument("input tensor " + std::to_string(g.input_id) + ": expected dtype " +
                          std::string(to_string(expected)));
  if (!(input.shape() == spec.shape))
    throw InvalidArgument("input tensor " + std::to_string(g.input_id) + ": shape " +
                          input.shape().str() + " does not match graph input " + spec.shape.str());
  if (static_cast<std::int64_t>(size_of(input.data)) != spec.shape.elements())
    throw InvalidArgument("input tensor " + std::to_string(g.input_id) + ": data length mismatch");
}

// Topological walk shared by the float and int8 executors. `run` maps a node and its
// input buffers to the output buffer.
template <typename RunNode>
TensorMap walk(const Graph& g, TensorBuf input, ExecTrace* trace, RunNode&& run) {
  const auto last = last_reads(g);
  TensorMap live;
  input.spec.id = g.input_id;
  live.emplace(g.input_id, std::move(input));
  std::vector<const TensorBuf*> args;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    args.clear();
    for (TensorId in : n.inputs) {
      auto it = live.find(in);
      if (it == live.end())
        throw InvalidArgument("node '" + n.name + "': input tensor " + std::to_string(in) +
                              " is not available");
      args.push_back(&it->second);
    }
    const auto t0 = std::chrono::steady_clock::now();
    TensorBuf out = run(n, args);
    const auto t1 = std::chrono::steady_clock::now();
    out.spec.id = n.outputs.front();
    if (trace) {
      trace->entries.push_back(
          {n.name, n.kind, out, std::chrono::duration<double, std::micro>(t1 - t0).count()});
    }
    live.insert_or_assign(n.outputs.front(), std::move(out));
    for (TensorId in : n.inputs) {
      auto it = last.find(in);
      if (it != last.end() && it->second == i) live.erase(in);
    }
  }
  TensorMap outputs;
  for (TensorId out : g.output_ids) outputs.emplace(out, std::move(live.at(out)));
  return outputs;
}

inline TensorBuf run_float_node(const Node& n, const std::vector<const TensorBuf*>& in) {
  switch (n.kind) {
    case OpKind::Conv2d:
    case OpKind::Detect: {
      const ConvAttrs a = n.conv();
      const Constant* bias = n.has_weight(weight::kBias) ? &n.w(weight::kBias) : nullptr;
      return conv2d_ref(*in[0], n.w(weight::kKernel), bias, a.stride, a.padding);
    }
    case OpKind::BatchNorm:
      return batchnorm_ref(*in[0], n.w(weight::kGamma).values<float>(),
                           n.w(weight::kBeta).values<float>(), n.w(weight::kMean).values<float>(),
                           n.w(weight::kVar).values<float>(), std::get<BatchNormAttrs>(n.attrs).eps);
    case OpKind::SiLU: return silu(*in[0]);
    case OpKind::Sigmoid: return sigmoid(*in[0]);
    case OpKind::MaxPool2d: {
      const PoolAttrs& p = n.pool();
      return maxpool2d_ref<float>(*in[0], p.kernel, p.stride, p.padding);
    }
    case OpKind::UpsampleNearest2x: return upsample_nearest2x<float>(*in[0]);
    case OpKind::ConcatChannels: return concat_channels(in);
    case OpKind::Add: return add(*in[0], *in[1]);
  }
  throw InvalidArgument("node '" + n.name + "': unsupported kind");
}

}  // namespace detail

// Reference float execution. Deterministic: identical inputs give bit-identical outputs.
inline TensorMap execute_float(const Graph& g, const TensorBuf& input, ExecTrace* trace = nullptr) {
  if (g.is_quantized()) throw InvalidArgument("execute_float: graph is quantized; use execute_int8");
  detail::check_input(g, input, DType::f32);
  return detail::walk(g, input, trace, detail::run_float_node);
}

}  // namespace edgedet
