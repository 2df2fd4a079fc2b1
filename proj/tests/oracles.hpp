#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "edgedet/edgedet.hpp"

namespace edgedet::testing {

// Channels that survive, recomputed from the kernel without the library helpers.
inline std::vector<std::int64_t> oracle_keep(const Constant& kernel, double ratio, std::int64_t multiple,
                                      std::int64_t min_channels) {
  const std::int64_t c = kernel.dims[0];
  const std::int64_t per = kernel.elements() / c;
  std::vector<std::pair<double, std::int64_t>> scored;
  for (std::int64_t o = 0; o < c; ++o) {
    double s = 0;
    for (std::int64_t j = 0; j < per; ++j) s += std::fabs(static_cast<double>(kernel.values<float>()[static_cast<std::size_t>(o * per + j)]));
    scored.push_back({-s, o});
  }
  std::sort(scored.begin(), scored.end());
  const auto remove = static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(c)));
  std::int64_t kept = c - remove;
  kept = std::min(c, (kept + multiple - 1) / multiple * multiple);
  if (remove == 0 || kept < min_channels) kept = c;
  std::vector<std::int64_t> keep;
  for (std::int64_t i = 0; i < kept; ++i) keep.push_back(scored[static_cast<std::size_t>(i)].second);
  std::sort(keep.begin(), keep.end());
  return keep;
}

inline std::vector<float> pick(const std::vector<float>& v, const std::vector<std::int64_t>& idx) {
  std::vector<float> out;
  for (auto i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

// Builds a new dense graph holding only the listed output channels of the given convs.
// `live` tracks, per tensor, which original channel indices survive.
inline Graph dense_rebuild(const Graph& g, const std::map<std::string, std::vector<std::int64_t>>& keeps) {
  std::map<TensorId, std::vector<std::int64_t>> live;
  auto all = [](std::int64_t n) {
    std::vector<std::int64_t> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
  };
  live[g.input_id] = all(g.tensor(g.input_id).shape.c);
  GraphBuilder b(g.tensor(g.input_id).shape);
  std::map<TensorId, TensorId> remap{{g.input_id, b.input()}};
  for (const Node& n : g.nodes) {
    Node m = n;
    const TensorId out = n.outputs[0];
    m.inputs.clear();
    for (TensorId in : n.inputs) m.inputs.push_back(remap.at(in));
    switch (n.kind) {
      case OpKind::Conv2d:
      case OpKind::Detect: {
        const Constant& k = n.w(weight::kKernel);
        auto it = keeps.find(n.name);
        const auto rows = it == keeps.end() ? all(k.dims[0]) : it->second;
        const auto& cols = live.at(n.inputs[0]);
        const std::int64_t kk = k.dims[2] * k.dims[3];
        std::vector<float> w;
        for (auto o : rows)
          for (auto c : cols)
            for (std::int64_t t = 0; t < kk; ++t)
              w.push_back(k.values<float>()[static_cast<std::size_t>((o * k.dims[1] + c) * kk + t)]);
        m.weights[weight::kKernel] = Constant::f32({static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(cols.size()), k.dims[2], k.dims[3]}, w);
        if (n.has_weight(weight::kBias))
          m.weights[weight::kBias] = Constant::f32({static_cast<std::int64_t>(rows.size())}, pick(n.w(weight::kBias).values<float>(), rows));
        live[out] = rows;
        break;
      }
      case OpKind::BatchNorm:
        for (const char* key : {weight::kGamma, weight::kBeta, weight::kMean, weight::kVar}) {
          const auto& kept = live.at(n.inputs[0]);
          m.weights[key] = Constant::f32({static_cast<std::int64_t>(kept.size())}, pick(n.w(key).values<float>(), kept));
        }
        live[out] = live.at(n.inputs[0]);
        break;
      case OpKind::ConcatChannels: {
        std::vector<std::int64_t> cat;
        std::int64_t offset = 0;
        for (TensorId in : n.inputs) {
          for (auto c : live.at(in)) cat.push_back(offset + c);
          offset += g.tensor(in).shape.c;
        }
        live[out] = cat;
        break;
      }
      default:
        live[out] = live.at(n.inputs[0]);
    }
    remap[out] = b.append(std::move(m));
  }
  std::vector<TensorId> outs;
  for (TensorId o : g.output_ids) outs.push_back(remap.at(o));
  return b.finish(outs, g.metadata);
}

// Random backbone-only toy graph. `variant` 0 is a chain, 1 joins two branches with a Concat,
// 2 concatenates a tensor with two chained pools of itself.
inline Graph toy_graph(std::uint64_t seed, int variant, std::vector<std::string>* prunable) {
  Rng rng(seed);
  auto pick_c = [&](int lo, int hi) { return static_cast<std::int64_t>(4 * (lo + static_cast<int>(rng.uniform(0.0f, 0.999f) * static_cast<float>(hi - lo + 1)))); };
  const std::int64_t hw = 6 + static_cast<std::int64_t>(rng.uniform(0.0f, 6.0f));
  GraphBuilder b({1, 3, hw, hw}, seed * 31 + 7);
  const Region r = Region::backbone;
  TensorId s1 = b.conv_bn_silu(b.input(), pick_c(2, 6), rng.uniform(0, 1) < 0.5f ? 3 : 1, 1, r, "l1");
  TensorId y;
  if (variant == 0) {
    TensorId p = rng.uniform(0, 1) < 0.5f ? b.maxpool(s1, 3, 1, 1, r, "pool") : s1;
    TensorId s2 = b.conv_bn_silu(p, pick_c(2, 6), 3, 1, r, "l2");
    y = b.conv(s2, pick_c(1, 3), 1, 1, 0, r, "l3", true);
  } else if (variant == 2) {
    TensorId p1 = b.maxpool(s1, 3, 1, 1, r, "pool1");
    TensorId p2 = b.maxpool(p1, 3, 1, 1, r, "pool2");
    TensorId s2 = b.conv_bn_silu(b.concat({s1, p1, p2}, r, "cat"), pick_c(2, 6), 1, 1, r, "l2");
    y = b.conv(s2, pick_c(1, 3), 1, 1, 0, r, "l3", true);
  } else {
    TensorId s2 = b.conv_bn_silu(s1, pick_c(2, 6), 3, 1, r, "l2");
    TensorId cat = b.concat({s1, s2}, r, "cat");
    y = b.conv(cat, pick_c(1, 3), 1, 1, 0, r, "l3", true);
  }
  *prunable = {"l1.conv", "l2.conv"};
  return b.finish({y});
}

// Full step curve, then for each of the 101 recall levels the best precision among
// prefixes reaching that recall.
inline double brute_force_ap(std::vector<std::pair<float, bool>> labels, std::int64_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::stable_sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> prec, rec;
  int tp = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    tp += labels[k].second;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    double best = 0;
    for (std::size_t k = 0; k < prec.size(); ++k)
      if (rec[k] >= r / 100.0) best = std::max(best, prec[k]);
    sum += best;
  }
  return sum / 101.0;
}

inline bool ranks_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
  return a.box.y1 < b.box.y1;
}

inline double box_iou(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  const double u = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - w * h;
  return w * h / u;
}

// Enumerates every subset and returns each one where each detection is kept exactly when
// no higher-ranked kept detection of its class overlaps it at or above the threshold.
inline std::vector<std::vector<Detection>> exhaustive_nms(const std::vector<Detection>& in, double thresh) {
  std::vector<Detection> d = in;
  std::stable_sort(d.begin(), d.end(), ranks_before);
  const std::size_t n = d.size();
  std::vector<std::vector<Detection>> found;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      bool suppressed = false;
      for (std::size_t j = 0; j < i; ++j)
        if ((mask >> j & 1u) && d[j].class_id == d[i].class_id && box_iou(d[j].box, d[i].box) >= thresh)
          suppressed = true;
      ok = ((mask >> i & 1u) != 0) == !suppressed;
    }
    if (!ok) continue;
    std::vector<Detection> s;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) s.push_back(d[i]);
    found.push_back(s);
  }
  return found;
}

}  // namespace edgedet::testing
