#pragma once

#include <string>

#include "edgedet/graph.hpp"

namespace edgedet {

inline std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

inline void expect_inputs(const Node& n, std::size_t count) {
  if (n.inputs.size() != count || n.outputs.size() != 1)
    throw InvalidArgument("node '" + n.name + "' (" + std::string(to_string(n.kind)) +
                          ") expects " + std::to_string(count) + " input(s) and one output");
}

inline Shape infer_node(const Graph& g, const Node& n) {
  auto in = [&](std::size_t i) -> const Shape& {
    const Shape& s = g.tensor(n.inputs.at(i)).shape;
    if (!s.complete())
      throw InvalidArgument("node '" + n.name + "' input " + std::to_string(n.inputs.at(i)) +
                            " has no inferred shape");
    return s;
  };
  switch (n.kind) {
    case OpKind::Conv2d:
    case OpKind::Detect: {
      expect_inputs(n, 1);
      const Shape& x = in(0);
      const Constant& k = n.w(weight::kKernel);
      ConvAttrs a = n.conv();
      if (k.dims.size() != 4 || k.dims[2] != a.kernel || k.dims[3] != a.kernel)
        throw InvalidArgument("node '" + n.name + "': kernel dims do not match attrs");
      if (k.dims[1] != x.c)
        throw InvalidArgument("node '" + n.name + "': kernel expects " + std::to_string(k.dims[1]) +
                              " input channels, got " + std::to_string(x.c));
      if (n.has_weight(weight::kBias) && n.w(weight::kBias).elements() != k.dims[0])
        throw InvalidArgument("node '" + n.name + "': bias length != output channels");
      if (x.h + 2 * a.padding < a.kernel || x.w + 2 * a.padding < a.kernel)
        throw InvalidArgument("node '" + n.name + "': kernel larger than padded input");
      if (n.kind == OpKind::Detect) {
        const auto& d = n.detect();
        if (static_cast<std::int64_t>(d.anchors.size()) * (5 + d.num_classes) != k.dims[0])
          throw InvalidArgument("node '" + n.name + "': channels != anchors*(5+num_classes)");
      }
      return {x.n, k.dims[0], conv_out_extent(x.h, a.kernel, a.stride, a.padding),
              conv_out_extent(x.w, a.kernel, a.stride, a.padding)};
    }
    case OpKind::BatchNorm: {
      expect_inputs(n, 1);
      const Shape& x = in(0);
      for (const char* key : {weight::kGamma, weight::kBeta, weight::kMean, weight::kVar})
        if (n.w(key).elements() != x.c)
          throw InvalidArgument("node '" + n.name + "': BN '" + key + "' length != channels");
      return x;
    }
    case OpKind::SiLU:
    case OpKind::Sigmoid:
      expect_inputs(n, 1);
      return in(0);
    case OpKind::MaxPool2d: {
      expect_inputs(n, 1);
      const Shape& x = in(0);
      const PoolAttrs& p = n.pool();
      if (x.h + 2 * p.padding < p.kernel || x.w + 2 * p.padding < p.kernel)
        throw InvalidArgument("node '" + n.name + "': pool window larger than padded input");
      return {x.n, x.c, conv_out_extent(x.h, p.kernel, p.stride, p.padding),
              conv_out_extent(x.w, p.kernel, p.stride, p.padding)};
    }
    case OpKind::UpsampleNearest2x: {
      expect_inputs(n, 1);
      const Shape& x = in(0);
      return {x.n, x.c, x.h * 2, x.w * 2};
    }
    case OpKind::ConcatChannels: {
      if (n.inputs.empty() || n.outputs.size() != 1)
        throw InvalidArgument("node '" + n.name + "' (ConcatChannels) needs inputs and one output");
      Shape out = in(0);
      for (std::size_t i = 1; i < n.inputs.size(); ++i) {
        const Shape& s = in(i);
        if (s.n != out.n || s.h != out.h || s.w != out.w)
          throw InvalidArgument("shape mismatch at ConcatChannels node '" + n.name + "': " +
                                out.str() + " vs " + s.str());
        out.c += s.c;
      }
      return out;
    }
    case OpKind::Add: {
      expect_inputs(n, 2);
      if (!(in(0) == in(1)))
        throw InvalidArgument("shape mismatch at Add node '" + n.name + "': " + in(0).str() +
                              " vs " + in(1).str());
      return in(0);
    }
  }
  throw InvalidArgument("unhandled node kind");
}

}  // namespace detail

// Returns a copy of `g` with every activation shape recomputed from the input shape.
inline Graph infer_shapes(const Graph& g) {
  validate(g);
  Graph out = g;
  const Shape& input = out.tensor(out.input_id).shape;
  if (!input.complete()) throw InvalidArgument("graph input shape is unknown");
  if (input.n != 1) throw InvalidArgument("only batch size 1 is supported");
  for (const Node& n : out.nodes) out.tensor(n.outputs.front()).shape = detail::infer_node(out, n);
  return out;
}

}  // namespace edgedet
