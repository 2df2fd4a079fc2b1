#pragma once

#include <cmath>
#include <map>

#include "edgedet/graph.hpp"

namespace edgedet {

// Absorbs every BatchNorm into the convolution that feeds it:
//   w' = w * gamma / sqrt(var + eps),  b' = (b - mean) * gamma / sqrt(var + eps) + beta
// The BN output tensor is rewired to the convolution output.
inline Graph fold_batchnorm(const Graph& g) {
  validate(g);
  Graph out;
  out.tensors = g.tensors;
  out.input_id = g.input_id;
  out.output_ids = g.output_ids;
  out.metadata = g.metadata;
  std::map<TensorId, TensorId> renamed;  // BN output -> conv output
  auto resolve = [&](TensorId id) {
    auto it = renamed.find(id);
    return it == renamed.end() ? id : it->second;
  };

  for (const Node& node : g.nodes) {
    if (node.kind != OpKind::BatchNorm) {
      Node copy = node;
      for (TensorId& in : copy.inputs) in = resolve(in);
      out.nodes.push_back(std::move(copy));
      continue;
    }
    const TensorId src = resolve(node.inputs.at(0));
    Node* conv = out.nodes.empty() ? nullptr : &out.nodes.back();
    if (!conv || conv->kind != OpKind::Conv2d || conv->outputs.front() != src)
      throw InvalidArgument("BatchNorm '" + node.name + "' is not immediately preceded by a Conv2d");
    if (g.consumers(node.inputs.at(0)).size() != 1 || g.is_output(node.inputs.at(0)))
      throw InvalidArgument("BatchNorm '" + node.name + "': conv output has other consumers");

    const auto& gamma = node.w(weight::kGamma).values<float>();
    const auto& beta = node.w(weight::kBeta).values<float>();
    const auto& mean = node.w(weight::kMean).values<float>();
    const auto& var = node.w(weight::kVar).values<float>();
    const double eps = std::get<BatchNormAttrs>(node.attrs).eps;

    Constant& kernel = conv->w(weight::kKernel);
    const std::int64_t c_out = kernel.dims[0];
    const std::int64_t per_channel = kernel.elements() / c_out;
    if (static_cast<std::int64_t>(gamma.size()) != c_out)
      throw InvalidArgument("BatchNorm '" + node.name + "': parameter length != conv channels");
    auto& w = kernel.values<float>();
    std::vector<float> bias(static_cast<std::size_t>(c_out), 0.0f);
    if (conv->has_weight(weight::kBias)) bias = conv->w(weight::kBias).values<float>();

    for (std::int64_t o = 0; o < c_out; ++o) {
      const auto i = static_cast<std::size_t>(o);
      const double f = gamma[i] / std::sqrt(static_cast<double>(var[i]) + eps);
      for (std::int64_t j = 0; j < per_channel; ++j) {
        float& v = w[static_cast<std::size_t>(o * per_channel + j)];
        v = static_cast<float>(v * f);
      }
      bias[i] = static_cast<float>((bias[i] - static_cast<double>(mean[i])) * f + beta[i]);
    }
    conv->weights[weight::kBias] = Constant::f32({c_out}, std::move(bias));

    const TensorId bn_out = node.outputs.front();
    renamed[bn_out] = src;
    out.tensors.erase(bn_out);
    for (TensorId& o : out.output_ids)
      if (o == bn_out) o = src;
    if (out.input_id == bn_out) out.input_id = src;
  }
  validate(out);
  return out;
}

inline bool has_batchnorm(const Graph& g) {
  for (const Node& n : g.nodes)
    if (n.kind == OpKind::BatchNorm) return true;
  return false;
}

}  // namespace edgedet
