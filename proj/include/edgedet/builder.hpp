#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "edgedet/graph.hpp"
#include "edgedet/rng.hpp"
#include "edgedet/shape_inference.hpp"

namespace edgedet {

// Incremental graph construction with seeded pseudo-random weights. Shapes are
// inferred as nodes are appended, so the finished graph is fully shaped.
class GraphBuilder {
 public:
  GraphBuilder(Shape input, std::uint64_t seed = kDefaultWeightSeed) : rng_(seed) {
    graph_.input_id = graph_.add_tensor(DType::f32, input);
  }

  TensorId input() const { return graph_.input_id; }
  const Shape& shape(TensorId id) const { return graph_.tensor(id).shape; }
  std::int64_t channels(TensorId id) const { return shape(id).c; }
  Rng& rng() { return rng_; }

  TensorId conv(TensorId x, std::int64_t c_out, int k, int stride, int padding, Region region,
                const std::string& name, bool bias = false) {
    const std::int64_t c_in = channels(x);
    const std::int64_t fan_in = c_in * k * k;
    // He-uniform: variance 2 / fan_in.
    const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    Node n{name, OpKind::Conv2d, region, ConvAttrs{k, stride, padding}, {x}, {}, {}, {}};
    n.weights[weight::kKernel] = random_constant({c_out, c_in, k, k}, -bound, bound);
    if (bias) n.weights[weight::kBias] = random_constant({c_out}, -0.1f, 0.1f);
    return append(std::move(n));
  }

  TensorId batchnorm(TensorId x, Region region, const std::string& name, float eps = 1e-3f) {
    const std::int64_t c = channels(x);
    Node n{name, OpKind::BatchNorm, region, BatchNormAttrs{eps}, {x}, {}, {}, {}};
    n.weights[weight::kGamma] = random_constant({c}, 0.9f, 1.1f);
    n.weights[weight::kBeta] = random_constant({c}, -0.1f, 0.1f);
    n.weights[weight::kMean] = random_constant({c}, -0.1f, 0.1f);
    n.weights[weight::kVar] = random_constant({c}, 0.9f, 1.1f);
    return append(std::move(n));
  }

  TensorId unary(OpKind kind, TensorId x, Region region, const std::string& name) {
    return append(Node{name, kind, region, std::monostate{}, {x}, {}, {}, {}});
  }
  TensorId silu(TensorId x, Region region, const std::string& name) {
    return unary(OpKind::SiLU, x, region, name);
  }
  TensorId sigmoid(TensorId x, Region region, const std::string& name) {
    return unary(OpKind::Sigmoid, x, region, name);
  }
  TensorId upsample(TensorId x, Region region, const std::string& name) {
    return unary(OpKind::UpsampleNearest2x, x, region, name);
  }

  TensorId maxpool(TensorId x, int k, int stride, int padding, Region region,
                   const std::string& name) {
    return append(Node{name, OpKind::MaxPool2d, region, PoolAttrs{k, stride, padding}, {x}, {}, {}, {}});
  }

  TensorId concat(std::vector<TensorId> xs, Region region, const std::string& name) {
    return append(Node{name, OpKind::ConcatChannels, region, std::monostate{}, std::move(xs), {}, {}, {}});
  }

  TensorId add(TensorId a, TensorId b, Region region, const std::string& name) {
    return append(Node{name, OpKind::Add, region, std::monostate{}, {a, b}, {}, {}, {}});
  }

  TensorId detect(TensorId x, int stride, std::vector<std::array<float, 2>> anchors,
                  int num_classes, const std::string& name) {
    const std::int64_t c_in = channels(x);
    const auto c_out = static_cast<std::int64_t>(anchors.size()) * (5 + num_classes);
    const float bound = static_cast<float>(std::sqrt(3.0 / static_cast<double>(c_in)));
    Node n{name, OpKind::Detect, Region::head,
           DetectAttrs{stride, std::move(anchors), num_classes}, {x}, {}, {}, {}};
    n.weights[weight::kKernel] = random_constant({c_out, c_in, 1, 1}, -bound, bound);
    n.weights[weight::kBias] = random_constant({c_out}, -0.5f, 0.5f);
    return append(std::move(n));
  }

  // Conv -> BatchNorm -> SiLU. Padding defaults to k/2.
  TensorId conv_bn_silu(TensorId x, std::int64_t c_out, int k, int stride, Region region,
                        const std::string& name, int padding = -1) {
    TensorId y = conv(x, c_out, k, stride, padding < 0 ? k / 2 : padding, region, name + ".conv");
    y = batchnorm(y, region, name + ".bn");
    return silu(y, region, name + ".act");
  }

  TensorId append(Node n) {
    n.outputs = {graph_.add_tensor()};
    graph_.tensor(n.outputs[0]).shape = detail::infer_node(graph_, n);
    graph_.nodes.push_back(std::move(n));
    return graph_.nodes.back().outputs[0];
  }

  Graph finish(std::vector<TensorId> outputs, GraphMetadata metadata = {}) {
    graph_.output_ids = std::move(outputs);
    graph_.metadata = metadata;
    validate(graph_);
    return std::move(graph_);
  }

 private:
  Constant random_constant(std::vector<std::int64_t> dims, float lo, float hi) {
    Constant c{std::move(dims), std::vector<float>{}, std::nullopt};
    auto& v = c.values<float>();
    v.resize(static_cast<std::size_t>(c.elements()));
    for (float& x : v) x = rng_.uniform(lo, hi);
    return c;
  }

  Graph graph_;
  Rng rng_;
};

struct YoloConfig {
  int num_classes = 80;
  int input_size = 640;
  double width_mult = 0.25;
  double depth_mult = 0.33;
  std::uint64_t seed = kDefaultWeightSeed;
};

// Public YOLOv5 anchors at the 640-pixel base, (w, h) per anchor, P3/P4/P5.
inline constexpr std::array<std::array<std::array<float, 2>, 3>, 3> kBaseAnchors{{
    {{{10, 13}, {16, 30}, {33, 23}}},
    {{{30, 61}, {62, 45}, {59, 119}}},
    {{{116, 90}, {156, 198}, {373, 326}}},
}};
inline constexpr std::array<int, 3> kHeadStrides{8, 16, 32};

inline std::vector<std::array<float, 2>> scaled_anchors(int level, int input_size) {
  const float f = static_cast<float>(input_size) / 640.0f;
  std::vector<std::array<float, 2>> out;
  for (const auto& a : kBaseAnchors.at(static_cast<std::size_t>(level)))
    out.push_back({a[0] * f, a[1] * f});
  return out;
}

namespace detail {

class YoloAssembler {
 public:
  YoloAssembler(GraphBuilder& b, const YoloConfig& cfg) : b_(b), cfg_(cfg) {}

  std::int64_t width(int base) const {
    return static_cast<std::int64_t>(std::ceil(base * cfg_.width_mult / 8.0)) * 8;
  }
  int depth(int base) const {
    return std::max(1, static_cast<int>(std::lround(base * cfg_.depth_mult)));
  }

  TensorId c3(TensorId x, std::int64_t c_out, int n, bool shortcut, Region r,
              const std::string& name) {
    const std::int64_t hidden = c_out / 2;
    TensorId a = b_.conv_bn_silu(x, hidden, 1, 1, r, name + ".cv1");
    for (int i = 0; i < n; ++i) {
      const std::string m = name + ".m" + std::to_string(i);
      TensorId h = b_.conv_bn_silu(a, hidden, 1, 1, r, m + ".cv1");
      h = b_.conv_bn_silu(h, hidden, 3, 1, r, m + ".cv2");
      a = shortcut ? b_.add(a, h, r, m + ".add") : h;
    }
    TensorId c = b_.conv_bn_silu(x, hidden, 1, 1, r, name + ".cv2");
    TensorId cat = b_.concat({a, c}, r, name + ".cat");
    return b_.conv_bn_silu(cat, c_out, 1, 1, r, name + ".cv3");
  }

  // 1x1 reduce, three chained 5x5 stride-1 max pools, concat of all four, 1x1 expand.
  TensorId sppf(TensorId x, std::int64_t c_out, const std::string& name) {
    const Region r = Region::backbone;
    TensorId a = b_.conv_bn_silu(x, b_.channels(x) / 2, 1, 1, r, name + ".cv1");
    TensorId p1 = b_.maxpool(a, 5, 1, 2, r, name + ".pool1");
    TensorId p2 = b_.maxpool(p1, 5, 1, 2, r, name + ".pool2");
    TensorId p3 = b_.maxpool(p2, 5, 1, 2, r, name + ".pool3");
    TensorId cat = b_.concat({a, p1, p2, p3}, r, name + ".cat");
    return b_.conv_bn_silu(cat, c_out, 1, 1, r, name + ".cv2");
  }

 private:
  GraphBuilder& b_;
  const YoloConfig& cfg_;
};

}  // namespace detail

inline Graph build_yolov5n(const YoloConfig& cfg) {
  if (cfg.num_classes <= 0) throw InvalidArgument("num_classes must be positive");
  if (cfg.input_size <= 0 || cfg.input_size % 32 != 0)
    throw InvalidArgument("input_size " + std::to_string(cfg.input_size) +
                          " must be a positive multiple of 32 (the largest head stride); "
                          "round it up to " + std::to_string((std::max(cfg.input_size, 1) + 31) / 32 * 32));
  if (!(cfg.width_mult > 0.0) || !(cfg.depth_mult > 0.0))
    throw InvalidArgument("width and depth multipliers must be positive");

  const std::int64_t s = cfg.input_size;
  GraphBuilder b({1, 3, s, s}, cfg.seed);
  detail::YoloAssembler y(b, cfg);
  const Region bb = Region::backbone, nk = Region::neck;

  TensorId x = b.conv_bn_silu(b.input(), y.width(64), 6, 2, bb, "backbone.0", 2);
  x = b.conv_bn_silu(x, y.width(128), 3, 2, bb, "backbone.1");
  x = y.c3(x, y.width(128), y.depth(3), true, bb, "backbone.2");
  x = b.conv_bn_silu(x, y.width(256), 3, 2, bb, "backbone.3");
  TensorId p3 = y.c3(x, y.width(256), y.depth(6), true, bb, "backbone.4");
  x = b.conv_bn_silu(p3, y.width(512), 3, 2, bb, "backbone.5");
  TensorId p4 = y.c3(x, y.width(512), y.depth(9), true, bb, "backbone.6");
  x = b.conv_bn_silu(p4, y.width(1024), 3, 2, bb, "backbone.7");
  x = y.c3(x, y.width(1024), y.depth(3), true, bb, "backbone.8");
  x = y.sppf(x, y.width(1024), "backbone.9");

  TensorId n10 = b.conv_bn_silu(x, y.width(512), 1, 1, nk, "neck.10");
  x = b.upsample(n10, nk, "neck.11");
  x = b.concat({x, p4}, nk, "neck.12");
  x = y.c3(x, y.width(512), y.depth(3), false, nk, "neck.13");
  TensorId n14 = b.conv_bn_silu(x, y.width(256), 1, 1, nk, "neck.14");
  x = b.upsample(n14, nk, "neck.15");
  x = b.concat({x, p3}, nk, "neck.16");
  TensorId out_p3 = y.c3(x, y.width(256), y.depth(3), false, nk, "neck.17");
  x = b.conv_bn_silu(out_p3, y.width(256), 3, 2, nk, "neck.18");
  x = b.concat({x, n14}, nk, "neck.19");
  TensorId out_p4 = y.c3(x, y.width(512), y.depth(3), false, nk, "neck.20");
  x = b.conv_bn_silu(out_p4, y.width(512), 3, 2, nk, "neck.21");
  x = b.concat({x, n10}, nk, "neck.22");
  TensorId out_p5 = y.c3(x, y.width(1024), y.depth(3), false, nk, "neck.23");

  std::vector<TensorId> heads;
  const TensorId levels[3] = {out_p3, out_p4, out_p5};
  for (int i = 0; i < 3; ++i)
    heads.push_back(b.detect(levels[i], kHeadStrides[static_cast<std::size_t>(i)],
                             scaled_anchors(i, cfg.input_size), cfg.num_classes,
                             "head.detect" + std::to_string(i)));

  return b.finish(heads, {cfg.num_classes, cfg.input_size, cfg.width_mult, cfg.depth_mult});
}

}  // namespace edgedet
