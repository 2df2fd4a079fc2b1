#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edgedet/error.hpp"
#include "edgedet/quant/requant.hpp"
#include "edgedet/tensor.hpp"

namespace edgedet {

enum class OpKind {
  Conv2d,
  BatchNorm,
  SiLU,
  Sigmoid,
  MaxPool2d,
  UpsampleNearest2x,
  ConcatChannels,
  Add,
  Detect,
};

inline constexpr std::string_view to_string(OpKind k) {
  switch (k) {
    case OpKind::Conv2d: return "Conv2d";
    case OpKind::BatchNorm: return "BatchNorm";
    case OpKind::SiLU: return "SiLU";
    case OpKind::Sigmoid: return "Sigmoid";
    case OpKind::MaxPool2d: return "MaxPool2d";
    case OpKind::UpsampleNearest2x: return "UpsampleNearest2x";
    case OpKind::ConcatChannels: return "ConcatChannels";
    case OpKind::Add: return "Add";
    case OpKind::Detect: return "Detect";
  }
  return "?";
}

inline OpKind op_kind_from_string(std::string_view s) {
  for (auto k : {OpKind::Conv2d, OpKind::BatchNorm, OpKind::SiLU, OpKind::Sigmoid,
                 OpKind::MaxPool2d, OpKind::UpsampleNearest2x, OpKind::ConcatChannels,
                 OpKind::Add, OpKind::Detect})
    if (to_string(k) == s) return k;
  throw DataError("unknown node kind '" + std::string(s) + "'");
}

enum class Region { backbone, neck, head };

inline constexpr std::string_view to_string(Region r) {
  switch (r) {
    case Region::backbone: return "backbone";
    case Region::neck: return "neck";
    case Region::head: return "head";
  }
  return "?";
}

inline Region region_from_string(std::string_view s) {
  if (s == "backbone") return Region::backbone;
  if (s == "neck") return Region::neck;
  if (s == "head") return Region::head;
  throw DataError("unknown region '" + std::string(s) + "'");
}

struct ConvAttrs {
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  friend bool operator==(const ConvAttrs&, const ConvAttrs&) = default;
};

struct PoolAttrs {
  int kernel = 2;
  int stride = 2;
  int padding = 0;
  friend bool operator==(const PoolAttrs&, const PoolAttrs&) = default;
};

struct BatchNormAttrs {
  float eps = 1e-3f;
  friend bool operator==(const BatchNormAttrs&, const BatchNormAttrs&) = default;
};

// A detection head: a biased 1x1 convolution producing raw logits laid out as
// (anchor, [tx, ty, tw, th, obj, cls...]) along the channel axis.
struct DetectAttrs {
  int stride = 8;
  std::vector<std::array<float, 2>> anchors;  // (w, h) in input pixels
  int num_classes = 1;
  friend bool operator==(const DetectAttrs&, const DetectAttrs&) = default;
};

using NodeAttrs = std::variant<std::monostate, ConvAttrs, PoolAttrs, BatchNormAttrs, DetectAttrs>;

namespace weight {
inline constexpr const char* kKernel = "kernel";
inline constexpr const char* kBias = "bias";
inline constexpr const char* kGamma = "gamma";
inline constexpr const char* kBeta = "beta";
inline constexpr const char* kMean = "mean";
inline constexpr const char* kVar = "var";
}  // namespace weight

struct Node {
  std::string name;
  OpKind kind = OpKind::Conv2d;
  Region region = Region::backbone;
  NodeAttrs attrs;
  std::vector<TensorId> inputs;
  std::vector<TensorId> outputs;
  std::map<std::string, Constant> weights;
  // Int8 graphs only. Conv/Detect: one per output channel. Add/Concat: one per input.
  std::vector<RequantMultiplier> requant;

  bool is_conv_like() const { return kind == OpKind::Conv2d || kind == OpKind::Detect; }

  // Detect heads are 1x1, stride 1, unpadded convolutions.
  ConvAttrs conv() const {
    if (kind == OpKind::Detect) return ConvAttrs{1, 1, 0};
    return std::get<ConvAttrs>(attrs);
  }
  const PoolAttrs& pool() const { return std::get<PoolAttrs>(attrs); }
  const DetectAttrs& detect() const { return std::get<DetectAttrs>(attrs); }

  const Constant& w(const std::string& key) const {
    auto it = weights.find(key);
    if (it == weights.end())
      throw InvalidArgument("node '" + name + "' has no weight '" + key + "'");
    return it->second;
  }
  Constant& w(const std::string& key) {
    auto it = weights.find(key);
    if (it == weights.end())
      throw InvalidArgument("node '" + name + "' has no weight '" + key + "'");
    return it->second;
  }
  bool has_weight(const std::string& key) const { return weights.count(key) != 0; }

  friend bool operator==(const Node&, const Node&) = default;
};

struct GraphMetadata {
  int num_classes = 0;
  int input_size = 0;
  double width_mult = 0.0;
  double depth_mult = 0.0;
  friend bool operator==(const GraphMetadata&, const GraphMetadata&) = default;
};

struct Graph {
  std::vector<Node> nodes;
  std::map<TensorId, TensorSpec> tensors;
  TensorId input_id = -1;
  std::vector<TensorId> output_ids;
  GraphMetadata metadata;

  const TensorSpec& tensor(TensorId id) const {
    auto it = tensors.find(id);
    if (it == tensors.end()) throw InvalidArgument("unknown tensor id " + std::to_string(id));
    return it->second;
  }
  TensorSpec& tensor(TensorId id) {
    auto it = tensors.find(id);
    if (it == tensors.end()) throw InvalidArgument("unknown tensor id " + std::to_string(id));
    return it->second;
  }

  TensorId add_tensor(DType dtype = DType::f32, Shape shape = {}) {
    TensorId id = tensors.empty() ? 0 : tensors.rbegin()->first + 1;
    tensors[id] = TensorSpec{id, dtype, shape, std::nullopt};
    return id;
  }

  // Index of the node producing `id`, or nullopt for the graph input.
  std::optional<std::size_t> producer(TensorId id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (TensorId o : nodes[i].outputs)
        if (o == id) return i;
    return std::nullopt;
  }

  std::vector<std::size_t> consumers(TensorId id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (std::find(nodes[i].inputs.begin(), nodes[i].inputs.end(), id) != nodes[i].inputs.end())
        out.push_back(i);
    return out;
  }

  std::optional<std::size_t> find_node(std::string_view name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return i;
    return std::nullopt;
  }

  bool is_output(TensorId id) const {
    return std::find(output_ids.begin(), output_ids.end(), id) != output_ids.end();
  }

  bool is_quantized() const {
    return std::any_of(tensors.begin(), tensors.end(),
                       [](const auto& kv) { return kv.second.dtype == DType::i8; });
  }

  friend bool operator==(const Graph&, const Graph&) = default;
};

// Structural checks: every tensor referenced exists, each tensor has at most one
// producer, node inputs are produced earlier (or are the graph input), outputs exist.
inline void validate(const Graph& g) {
  if (!g.tensors.count(g.input_id)) throw InvalidArgument("graph input tensor is missing");
  if (g.output_ids.empty()) throw InvalidArgument("graph has no outputs");
  std::set<TensorId> available{g.input_id};
  for (const auto& node : g.nodes) {
    for (TensorId in : node.inputs) {
      if (!g.tensors.count(in))
        throw InvalidArgument("node '" + node.name + "' reads unknown tensor " + std::to_string(in));
      if (!available.count(in))
        throw InvalidArgument("node '" + node.name + "' reads tensor " + std::to_string(in) +
                              " before it is produced");
    }
    for (TensorId out : node.outputs) {
      if (!g.tensors.count(out))
        throw InvalidArgument("node '" + node.name + "' writes unknown tensor " + std::to_string(out));
      if (!available.insert(out).second)
        throw InvalidArgument("tensor " + std::to_string(out) + " has more than one producer");
    }
  }
  for (TensorId out : g.output_ids)
    if (!available.count(out))
      throw InvalidArgument("graph output " + std::to_string(out) + " is never produced");
}

// Detector graphs additionally expose exactly three Detect outputs.
inline void validate_detector(const Graph& g) {
  validate(g);
  if (g.output_ids.size() != 3)
    throw InvalidArgument("detector graph must have exactly three head outputs");
  for (TensorId out : g.output_ids) {
    auto p = g.producer(out);
    if (!p || g.nodes[*p].kind != OpKind::Detect)
      throw InvalidArgument("graph output " + std::to_string(out) + " is not produced by a Detect head");
  }
}

}  // namespace edgedet
