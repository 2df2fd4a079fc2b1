#pragma once

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgedet/error.hpp"
#include "edgedet/postprocess.hpp"

namespace edgedet {

struct GroundTruth {
  Box box;
  int class_id = 0;
};

// Keyed by image name; iteration order (sorted names) is the canonical image order.
using ImagePredictions = std::map<std::string, std::vector<Detection>>;
using ImageTruths = std::map<std::string, std::vector<GroundTruth>>;

// TP/FP label for each prediction of one image, aligned with `preds`. Predictions are
// visited by descending confidence; each takes the unmatched same-class truth of highest
// IoU, provided that IoU is at least `iou_thresh`.
inline std::vector<bool> match_detections(const std::vector<Detection>& preds,
                                          const std::vector<GroundTruth>& gts, double iou_thresh) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });
  std::vector<bool> matched(gts.size(), false), tp(preds.size(), false);
  for (std::size_t p : order) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].class_id != preds[p].class_id) continue;
      const double v = iou(preds[p].box, gts[g].box);
      if (v >= iou_thresh && v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size()) {
      matched[best_g] = true;
      tp[p] = true;
    }
  }
  return tp;
}

struct ScoredLabel {
  float confidence = 0;
  bool tp = false;
};

struct PRPoint {
  float confidence = 0;
  std::int64_t cum_tp = 0;
  std::int64_t cum_fp = 0;
};

struct PRCurve {
  std::vector<PRPoint> points;
  std::int64_t n_gt = 0;

  double recall(std::size_t i) const {
    return n_gt > 0 ? static_cast<double>(points[i].cum_tp) / static_cast<double>(n_gt) : 0.0;
  }
  double precision(std::size_t i) const {
    const auto n = points[i].cum_tp + points[i].cum_fp;
    return n > 0 ? static_cast<double>(points[i].cum_tp) / static_cast<double>(n) : 0.0;
  }
};

// Labels must be in canonical order (image, then prediction); the sort is stable.
inline PRCurve make_curve(std::vector<ScoredLabel> labels, std::int64_t n_gt) {
  std::stable_sort(labels.begin(), labels.end(), [](const ScoredLabel& a, const ScoredLabel& b) {
    return a.confidence > b.confidence;
  });
  PRCurve c;
  c.n_gt = n_gt;
  std::int64_t tp = 0, fp = 0;
  for (const ScoredLabel& l : labels) {
    (l.tp ? tp : fp) += 1;
    c.points.push_back({l.confidence, tp, fp});
  }
  return c;
}

struct PrecisionRecall {
  double precision = 0;
  double recall = 0;
};

inline PrecisionRecall precision_recall(const std::vector<bool>& labels, std::int64_t n_gt) {
  const auto tp = std::count(labels.begin(), labels.end(), true);
  PrecisionRecall r;
  if (!labels.empty()) r.precision = static_cast<double>(tp) / static_cast<double>(labels.size());
  if (n_gt > 0) r.recall = static_cast<double>(tp) / static_cast<double>(n_gt);
  return r;
}

// 101-point interpolated AP.
inline double average_precision(const PRCurve& c) {
  if (c.n_gt <= 0) return 0.0;
  std::vector<double> envelope(c.points.size());
  double run = 0.0;
  for (std::size_t i = c.points.size(); i-- > 0;) {
    run = std::max(run, c.precision(i));
    envelope[i] = run;
  }
  double sum = 0.0;
  std::size_t i = 0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    while (i < c.points.size() && c.recall(i) < level) ++i;
    if (i < c.points.size()) sum += envelope[i];
  }
  return sum / 101.0;
}

inline constexpr std::array<double, 10> kCocoIouThresholds{0.50, 0.55, 0.60, 0.65, 0.70,
                                                           0.75, 0.80, 0.85, 0.90, 0.95};

struct ClassRow {
  std::string name;
  std::int64_t n_images = 0;
  std::int64_t n_labels = 0;
  double precision = 0;
  double recall = 0;
  double ap50 = 0;
  double ap50_95 = 0;
};

struct EvalReport {
  std::vector<ClassRow> classes;
  ClassRow all;
  std::int64_t n_images = 0;
  // Confidence threshold of the reported precision/recall (max mean F1); 0 without predictions.
  double operating_conf = 0;
  std::vector<PRCurve> curves;  // per class at IoU 0.5
};

namespace detail {

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

// Precision and recall counting only points with confidence >= tau.
inline PrecisionRecall at_threshold(const PRCurve& c, double tau) {
  std::size_t n = 0;
  while (n < c.points.size() && c.points[n].confidence >= tau) ++n;
  if (n == 0) return {};
  return {c.precision(n - 1), c.recall(n - 1)};
}

}  // namespace detail

// Per-class AP@0.5 and AP@[0.5:0.95], plus precision/recall at the single confidence
// threshold maximizing the class-mean F1 (ties go to the higher threshold). The "All"
// row holds unweighted class means. Images are the union of both maps' keys.
inline EvalReport evaluate(const ImagePredictions& preds, const ImageTruths& gts,
                           const std::vector<std::string>& class_names) {
  const int nc = static_cast<int>(class_names.size());
  for (const auto& [img, ds] : preds)
    for (const Detection& d : ds)
      if (d.class_id < 0 || d.class_id >= nc)
        throw DataError("evaluate: unknown class id " + std::to_string(d.class_id) +
                        " in predictions for image '" + img + "'");
  for (const auto& [img, gs] : gts)
    for (const GroundTruth& g : gs)
      if (g.class_id < 0 || g.class_id >= nc)
        throw DataError("evaluate: unknown class id " + std::to_string(g.class_id) +
                        " in labels for image '" + img + "'");

  std::set<std::string> images;
  for (const auto& kv : preds) images.insert(kv.first);
  for (const auto& kv : gts) images.insert(kv.first);
  static const std::vector<Detection> kNoPreds;
  static const std::vector<GroundTruth> kNoTruths;

  EvalReport rep;
  rep.n_images = static_cast<std::int64_t>(images.size());
  std::vector<std::int64_t> n_gt(static_cast<std::size_t>(nc), 0);
  for (const auto& [img, gs] : gts)
    for (const GroundTruth& g : gs) ++n_gt[static_cast<std::size_t>(g.class_id)];

  // labels[t][c] in canonical order
  std::vector<std::vector<std::vector<ScoredLabel>>> labels(
      kCocoIouThresholds.size(), std::vector<std::vector<ScoredLabel>>(static_cast<std::size_t>(nc)));
  for (const std::string& img : images) {
    auto pit = preds.find(img);
    auto git = gts.find(img);
    const auto& ps = pit == preds.end() ? kNoPreds : pit->second;
    const auto& gs = git == gts.end() ? kNoTruths : git->second;
    for (std::size_t t = 0; t < kCocoIouThresholds.size(); ++t) {
      const auto tp = match_detections(ps, gs, kCocoIouThresholds[t]);
      for (std::size_t i = 0; i < ps.size(); ++i)
        labels[t][static_cast<std::size_t>(ps[i].class_id)].push_back({ps[i].confidence, tp[i]});
    }
  }

  std::set<float> confidences;
  for (int c = 0; c < nc; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    ClassRow row{class_names[ci], rep.n_images, n_gt[ci], 0, 0, 0, 0};
    double sum = 0;
    for (std::size_t t = 0; t < kCocoIouThresholds.size(); ++t) {
      PRCurve curve = make_curve(labels[t][ci], n_gt[ci]);
      const double ap = average_precision(curve);
      sum += ap;
      if (t == 0) {
        row.ap50 = ap;
        for (const auto& p : curve.points) confidences.insert(p.confidence);
        rep.curves.push_back(std::move(curve));
      }
    }
    row.ap50_95 = sum / static_cast<double>(kCocoIouThresholds.size());
    rep.classes.push_back(std::move(row));
  }

  double best_f1 = -1.0;
  for (auto it = confidences.rbegin(); it != confidences.rend(); ++it) {
    double f = 0;
    for (const PRCurve& c : rep.curves) {
      const auto pr = detail::at_threshold(c, *it);
      f += detail::f1(pr.precision, pr.recall);
    }
    // Highest threshold first, so ">" keeps it on ties.
    if (nc > 0 && f / nc > best_f1) {
      best_f1 = f / nc;
      rep.operating_conf = *it;
    }
  }
  if (!confidences.empty())
    for (std::size_t c = 0; c < rep.classes.size(); ++c) {
      const auto pr = detail::at_threshold(rep.curves[c], rep.operating_conf);
      rep.classes[c].precision = pr.precision;
      rep.classes[c].recall = pr.recall;
    }

  rep.all = {"All", rep.n_images, 0, 0, 0, 0, 0};
  for (const ClassRow& r : rep.classes) {
    rep.all.n_labels += r.n_labels;
    rep.all.precision += r.precision;
    rep.all.recall += r.recall;
    rep.all.ap50 += r.ap50;
    rep.all.ap50_95 += r.ap50_95;
  }
  if (nc > 0) {
    rep.all.precision /= nc;
    rep.all.recall /= nc;
    rep.all.ap50 /= nc;
    rep.all.ap50_95 /= nc;
  }
  return rep;
}

namespace detail {

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Ten decimals, so reports do not depend on floating-point summation order.
inline double round10(double v) { return std::round(v * 1e10) / 1e10; }

inline nlohmann::ordered_json row_json(const ClassRow& r) {
  return {{"class", r.name},
          {"images", r.n_images},
          {"labels", r.n_labels},
          {"precision", round10(r.precision)},
          {"recall", round10(r.recall)},
          {"map50", round10(r.ap50)},
          {"map50_95", round10(r.ap50_95)}};
}

}  // namespace detail

inline std::string render_text(const EvalReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %10s %8s %9s %13s\n", "Class", "Images", "Labels",
                "Precision", "Recall", "mAP@0.5", "mAP@0.5:0.95");
  out += line;
  auto row = [&](const ClassRow& c) {
    std::snprintf(line, sizeof line, "%-16s %8lld %8lld %10s %8s %9s %13s\n", c.name.c_str(),
                  static_cast<long long>(c.n_images), static_cast<long long>(c.n_labels),
                  detail::fmt3(c.precision).c_str(), detail::fmt3(c.recall).c_str(),
                  detail::fmt3(c.ap50).c_str(), detail::fmt3(c.ap50_95).c_str());
    out += line;
  };
  row(r.all);
  for (const ClassRow& c : r.classes) row(c);
  return out;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["images"] = r.n_images;
  j["operating_confidence"] = r.operating_conf;
  j["all"] = detail::row_json(r.all);
  j["classes"] = nlohmann::ordered_json::array();
  for (const ClassRow& c : r.classes) j["classes"].push_back(detail::row_json(c));
  return j;
}

// CSV with columns class,recall,precision; one row per curve point.
inline std::string pr_curves_csv(const EvalReport& r) {
  std::string out = "class,recall,precision\n";
  char line[128];
  for (std::size_t c = 0; c < r.curves.size(); ++c)
    for (std::size_t i = 0; i < r.curves[c].points.size(); ++i) {
      std::snprintf(line, sizeof line, "%s,%.6f,%.6f\n", r.classes[c].name.c_str(),
                    r.curves[c].recall(i), r.curves[c].precision(i));
      out += line;
    }
  return out;
}

}  // namespace edgedet
