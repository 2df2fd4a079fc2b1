#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "edgedet/accounting.hpp"
#include "edgedet/graph.hpp"
#include "edgedet/planner.hpp"
#include "edgedet/shape_inference.hpp"

namespace edgedet {

// L1 norm of each output-channel slice of the kernel (bias excluded).
inline std::vector<double> channel_importance(const Node& conv) {
  const Constant& k = conv.w(weight::kKernel);
  const std::int64_t c_out = k.dims.at(0);
  const std::int64_t per = k.elements() / c_out;
  std::vector<double> score(static_cast<std::size_t>(c_out), 0.0);
  std::visit(
      [&](const auto& w) {
        for (std::int64_t o = 0; o < c_out; ++o)
          for (std::int64_t j = 0; j < per; ++j)
            score[static_cast<std::size_t>(o)] +=
                std::fabs(static_cast<double>(w[static_cast<std::size_t>(o * per + j)]));
      },
      k.data);
  return score;
}

struct PruneOptions {
  double ratio = 0.10;
  std::set<Region> scope{Region::backbone};
  std::size_t min_channels = 8;
  std::size_t channel_multiple = 4;
};

struct LayerPrune {
  std::string node;
  std::int64_t channels_before = 0;
  std::int64_t channels_after = 0;
  std::string note;  // non-empty when the layer was left untouched
};

struct PruneReport {
  double ratio = 0.0;
  std::vector<LayerPrune> layers;
  std::vector<std::string> ineligible;  // convs in scope whose outputs are coupled
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  std::size_t flash_before = 0;
  std::size_t flash_after = 0;
};

struct PruneResult {
  Graph graph;
  PruneReport report;
};

namespace detail {

template <typename T>
std::vector<T> gather_rows(const std::vector<T>& v, std::int64_t rows, std::int64_t row_len,
                           const std::vector<std::int64_t>& keep) {
  (void)rows;
  std::vector<T> out;
  out.reserve(keep.size() * static_cast<std::size_t>(row_len));
  for (std::int64_t r : keep)
    out.insert(out.end(), v.begin() + r * row_len, v.begin() + (r + 1) * row_len);
  return out;
}

// Keeps the listed indices along axis `axis` (0 or 1) of a constant.
inline void select_axis(Constant& c, int axis, const std::vector<std::int64_t>& keep) {
  std::visit(
      [&](auto& v) {
        using Vec = std::decay_t<decltype(v)>;
        if (axis == 0) {
          const std::int64_t row = c.elements() / c.dims[0];
          v = gather_rows(v, c.dims[0], row, keep);
        } else {
          const std::int64_t outer = c.dims[0];
          const std::int64_t inner = c.elements() / (c.dims[0] * c.dims[1]);
          Vec out;
          out.reserve(static_cast<std::size_t>(outer) * keep.size() * static_cast<std::size_t>(inner));
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i : keep) {
              auto first = v.begin() + (o * c.dims[1] + i) * inner;
              out.insert(out.end(), first, first + inner);
            }
          v = std::move(out);
        }
      },
      c.data);
  c.dims[static_cast<std::size_t>(axis)] = static_cast<std::int64_t>(keep.size());
  if (c.quant && c.quant->scale.size() > 1 && axis == 0) {
    std::vector<float> s;
    for (std::int64_t i : keep) s.push_back(c.quant->scale[static_cast<std::size_t>(i)]);
    c.quant->scale = std::move(s);
  }
}

// True when removing channels of `t` only touches channel-preserving ops, Concats in
// scope, and ends at convolution inputs.
inline bool channels_decoupled(const Graph& g, TensorId t, const std::set<Region>& scope) {
  if (g.is_output(t)) return false;
  for (std::size_t ci : g.consumers(t)) {
    const Node& c = g.nodes[ci];
    switch (c.kind) {
      case OpKind::Conv2d:
        break;
      case OpKind::BatchNorm:
      case OpKind::SiLU:
      case OpKind::Sigmoid:
      case OpKind::MaxPool2d:
      case OpKind::UpsampleNearest2x:
        if (!channels_decoupled(g, c.outputs.front(), scope)) return false;
        break;
      case OpKind::ConcatChannels:
        if (!scope.count(c.region)) return false;
        if (!channels_decoupled(g, c.outputs.front(), scope)) return false;
        break;
      case OpKind::Add:
      case OpKind::Detect:
        return false;
    }
  }
  return true;
}

// Rewrites every node downstream of conv `producer`, whose output (formerly `old_c`
// channels wide) keeps only `keep`. Nodes are visited once in topological order so a
// Concat reached along several paths sees all of its pruned inputs together.
inline void propagate_keep(Graph& g, std::size_t producer, const std::vector<std::int64_t>& keep,
                           std::int64_t old_c) {
  struct Pending {
    std::vector<std::int64_t> keep;
    std::int64_t old_c;
  };
  std::map<TensorId, Pending> touched{{g.nodes[producer].outputs.front(), {keep, old_c}}};
  for (std::size_t i = producer + 1; i < g.nodes.size(); ++i) {
    Node& n = g.nodes[i];
    auto first = touched.find(n.inputs.front());
    bool reached = false;
    for (TensorId in : n.inputs) reached = reached || touched.count(in);
    if (!reached) continue;
    const TensorId out = n.outputs.front();
    switch (n.kind) {
      case OpKind::Conv2d:
        select_axis(n.w(weight::kKernel), 1, first->second.keep);
        break;
      case OpKind::BatchNorm:
        for (const char* key : {weight::kGamma, weight::kBeta, weight::kMean, weight::kVar})
          select_axis(n.w(key), 0, first->second.keep);
        touched[out] = first->second;
        break;
      case OpKind::SiLU:
      case OpKind::Sigmoid:
      case OpKind::MaxPool2d:
      case OpKind::UpsampleNearest2x:
        touched[out] = first->second;
        break;
      case OpKind::ConcatChannels: {
        Pending cat{{}, 0};
        for (TensorId in : n.inputs) {
          auto it = touched.find(in);
          if (it != touched.end()) {
            for (std::int64_t k : it->second.keep) cat.keep.push_back(cat.old_c + k);
            cat.old_c += it->second.old_c;
          } else {
            const std::int64_t c = g.tensor(in).shape.c;
            for (std::int64_t k = 0; k < c; ++k) cat.keep.push_back(cat.old_c + k);
            cat.old_c += c;
          }
        }
        touched[out] = std::move(cat);
        break;
      }
      case OpKind::Add:
      case OpKind::Detect:
        throw InvalidArgument("prune: channel removal reached coupled node '" + n.name + "'");
    }
  }
  for (const auto& [id, p] : touched) g.tensor(id).shape.c = static_cast<std::int64_t>(p.keep.size());
}

}  // namespace detail

// Structured channel pruning: for each eligible Conv2d in scope, drop the floor(ratio *
// C_out) lowest-L1 output channels, keeping a multiple of `channel_multiple` and at
// least `min_channels`. Removal is propagated into the following BN, through
// channel-preserving ops and Concats, into the input axis of every consuming conv.
// Importance is scored on the unpruned weights.
// A conv is eligible only when its output never reaches an Add, a Detect head, a graph
// output, or a Concat outside the scope.
inline PruneResult prune_channels(const Graph& g, const PruneOptions& opt = {}) {
  if (!(opt.ratio >= 0.0 && opt.ratio < 1.0))
    throw InvalidArgument("prune_channels: ratio must be in [0, 1)");
  if (g.is_quantized()) throw InvalidArgument("prune_channels: prune before quantization");
  const std::size_t multiple = std::max<std::size_t>(opt.channel_multiple, 1);
  PruneResult res{infer_shapes(g), {}};
  Graph& out = res.graph;
  PruneReport& rep = res.report;
  rep.ratio = opt.ratio;
  rep.params_before = count_params(g);
  rep.flash_before = estimate_flash(g);

  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    if (out.nodes[i].kind != OpKind::Conv2d || !opt.scope.count(out.nodes[i].region)) continue;
    const std::string name = out.nodes[i].name;
    const TensorId y = out.nodes[i].outputs.front();
    if (!detail::channels_decoupled(out, y, opt.scope)) {
      rep.ineligible.push_back(name);
      continue;
    }
    const std::int64_t c = out.nodes[i].w(weight::kKernel).dims[0];
    const auto remove = static_cast<std::int64_t>(std::floor(opt.ratio * static_cast<double>(c)));
    if (remove == 0) continue;
    const auto m = static_cast<std::int64_t>(multiple);
    const std::int64_t kept = std::min(c, (c - remove + m - 1) / m * m);
    LayerPrune layer{name, c, c, {}};
    if (kept < static_cast<std::int64_t>(opt.min_channels)) {
      layer.note = "skipped: would keep " + std::to_string(kept) + " < " +
                   std::to_string(opt.min_channels) + " channels";
      rep.layers.push_back(std::move(layer));
      continue;
    }
    if (kept == c) continue;

    const auto score = channel_importance(g.nodes[i]);
    std::vector<std::int64_t> order(static_cast<std::size_t>(c));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
    });
    std::vector<std::int64_t> keep(order.begin(), order.begin() + kept);
    std::sort(keep.begin(), keep.end());

    Node& conv = out.nodes[i];
    detail::select_axis(conv.w(weight::kKernel), 0, keep);
    if (conv.has_weight(weight::kBias)) detail::select_axis(conv.w(weight::kBias), 0, keep);
    detail::propagate_keep(out, i, keep, c);
    layer.channels_after = kept;
    rep.layers.push_back(std::move(layer));
  }
  out = infer_shapes(out);
  rep.params_after = count_params(out);
  rep.flash_after = estimate_flash(out);
  return res;
}

}  // namespace edgedet
