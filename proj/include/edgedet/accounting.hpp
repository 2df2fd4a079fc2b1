#pragma once

#include <cstdint>

#include "edgedet/graph.hpp"

namespace edgedet {

inline std::int64_t node_params(const Node& n) {
  std::int64_t total = 0;
  for (const auto& [name, c] : n.weights) total += c.elements();
  return total;
}

// Total element count across all constant tensors.
inline std::int64_t count_params(const Graph& g) {
  std::int64_t total = 0;
  for (const Node& n : g.nodes) total += node_params(n);
  return total;
}

// C_out * H_out * W_out * C_in * k^2 for convolutions; every other kind is zero.
inline std::int64_t node_macs(const Graph& g, const Node& n) {
  if (!n.is_conv_like()) return 0;
  const Shape& in = g.tensor(n.inputs.front()).shape;
  const Shape& out = g.tensor(n.outputs.front()).shape;
  if (!in.complete() || !out.complete())
    throw InvalidArgument("count_macs: node '" + n.name + "' has no inferred shapes");
  const std::int64_t k = n.conv().kernel;
  return out.c * out.h * out.w * in.c * k * k;
}

inline std::int64_t count_macs(const Graph& g) {
  std::int64_t total = 0;
  for (const Node& n : g.nodes) total += node_macs(g, n);
  return total;
}

}  // namespace edgedet
