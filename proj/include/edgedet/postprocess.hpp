#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "edgedet/graph.hpp"
#include "edgedet/kernels.hpp"

namespace edgedet {

struct Box {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  float area() const { return std::max(0.0f, x2 - x1) * std::max(0.0f, y2 - y1); }
  bool operator==(const Box&) const = default;
};

struct Detection {
  Box box;
  int class_id = 0;
  float confidence = 0;

  bool operator==(const Detection&) const = default;
};

struct AnchorLevel {
  int stride = 0;
  std::vector<std::array<float, 2>> anchors;
};

struct AnchorSet {
  std::vector<AnchorLevel> levels;
};

// Anchors and strides as recorded on the graph's Detect nodes, in output order.
inline AnchorSet anchor_set(const Graph& g) {
  AnchorSet s;
  for (TensorId id : g.output_ids) {
    const auto p = g.producer(id);
    if (!p || g.nodes[*p].kind != OpKind::Detect)
      throw InvalidArgument("anchor_set: output " + std::to_string(id) + " is not a Detect head");
    const DetectAttrs& d = g.nodes[*p].detect();
    s.levels.push_back({d.stride, d.anchors});
  }
  return s;
}

inline double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, static_cast<double>(std::min(a.x2, b.x2)) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, static_cast<double>(std::min(a.y2, b.y2)) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = static_cast<double>(a.area()) + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// YOLOv5 head decode. Channel layout per level is [anchor][x, y, w, h, obj, classes...].
// Boxes are in network-input pixels, clipped to [0, image_w] x [0, image_h].
inline std::vector<Detection> decode_predictions(const std::vector<const TensorBuf*>& heads,
                                                 const AnchorSet& anchors, float conf_thresh,
                                                 int num_classes, float image_w, float image_h) {
  if (heads.size() != anchors.levels.size())
    throw InvalidArgument("decode_predictions: " + std::to_string(heads.size()) +
                          " head tensors but " + std::to_string(anchors.levels.size()) +
                          " anchor levels");
  std::vector<Detection> out;
  const std::int64_t attrs = 5 + num_classes;
  for (std::size_t l = 0; l < heads.size(); ++l) {
    const TensorBuf& t = *heads[l];
    detail::require_f32(t, "decode_predictions");
    const AnchorLevel& lv = anchors.levels[l];
    const Shape& s = t.shape();
    const auto na = static_cast<std::int64_t>(lv.anchors.size());
    if (s.c != na * attrs)
      throw InvalidArgument("decode_predictions: head " + std::to_string(l) + " has " +
                            std::to_string(s.c) + " channels, expected " +
                            std::to_string(na * attrs));
    const auto& v = t.f32();
    const std::int64_t plane = s.h * s.w;
    const auto stride = static_cast<float>(lv.stride);
    for (std::int64_t a = 0; a < na; ++a) {
      const auto at = [&](std::int64_t k, std::int64_t i, std::int64_t j) {
        return v[static_cast<std::size_t>((a * attrs + k) * plane + i * s.w + j)];
      };
      const auto& anc = lv.anchors[static_cast<std::size_t>(a)];
      for (std::int64_t i = 0; i < s.h; ++i)
        for (std::int64_t j = 0; j < s.w; ++j) {
          const float obj = sigmoid(at(4, i, j));
          if (obj < conf_thresh) continue;
          int best = 0;
          float best_p = -1.0f;
          for (int c = 0; c < num_classes; ++c) {
            const float p = sigmoid(at(5 + c, i, j));
            if (p > best_p) {
              best_p = p;
              best = c;
            }
          }
          const float conf = obj * best_p;
          if (conf < conf_thresh) continue;
          const float bx = (2.0f * sigmoid(at(0, i, j)) - 0.5f + static_cast<float>(j)) * stride;
          const float by = (2.0f * sigmoid(at(1, i, j)) - 0.5f + static_cast<float>(i)) * stride;
          const float sw = 2.0f * sigmoid(at(2, i, j));
          const float sh = 2.0f * sigmoid(at(3, i, j));
          const float bw = sw * sw * anc[0];
          const float bh = sh * sh * anc[1];
          Box b{std::clamp(bx - bw / 2, 0.0f, image_w), std::clamp(by - bh / 2, 0.0f, image_h),
                std::clamp(bx + bw / 2, 0.0f, image_w), std::clamp(by + bh / 2, 0.0f, image_h)};
          out.push_back({b, best, conf});
        }
    }
  }
  return out;
}

// Orders detections by confidence descending; ties by class, x1, y1.
inline void sort_detections(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
    return a.box.y1 < b.box.y1;
  });
}

// Class-wise greedy NMS.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
  sort_detections(dets);
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) >= iou_thresh;
    });
    if (clear) kept.push_back(d);
  }
  return kept;
}

}  // namespace edgedet
