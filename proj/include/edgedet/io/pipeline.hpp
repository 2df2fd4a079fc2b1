#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "edgedet/batchnorm_fold.hpp"
#include "edgedet/io/dataset.hpp"
#include "edgedet/io/image.hpp"
#include "edgedet/postprocess.hpp"
#include "edgedet/quant/int8_engine.hpp"

namespace edgedet::io {

struct DetectOptions {
  float conf_thresh = 0.25f;
  double nms_iou = 0.45;
};

// Letterbox, run (float or int8), decode, NMS, map back to image pixels, then round to
// the output resolution.
inline std::vector<Detection> detect_image(const Graph& g, const Image& img,
                                           const DetectOptions& opt = {}) {
  const int size = g.metadata.input_size;
  Letterbox lb;
  const TensorBuf x = letterbox(img, size, &lb);
  const TensorMap outs = run_graph(g, x);
  std::vector<const TensorBuf*> heads;
  for (TensorId id : g.output_ids) heads.push_back(&outs.at(id));
  auto dets = nms(decode_predictions(heads, anchor_set(g), opt.conf_thresh, g.metadata.num_classes,
                                     static_cast<float>(size), static_cast<float>(size)),
                  opt.nms_iou);
  for (Detection& d : dets) d = quantize_for_output({unletterbox(d.box, lb, img.width, img.height), d.class_id, d.confidence});
  return dets;
}

// Image files (PNG/PPM) directly inside `dir`, sorted by path.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_extension(e.path().extension().string())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Folds BN if needed, calibrates on the letterboxed images and quantizes.
inline Graph quantize_with_images(const Graph& g, const std::vector<Image>& images) {
  if (images.empty()) throw DataError("calibration set is empty");
  const Graph f = has_batchnorm(g) ? fold_batchnorm(g) : g;
  std::vector<TensorBuf> inputs;
  for (const Image& im : images) inputs.push_back(letterbox(im, g.metadata.input_size));
  return quantize_graph(f, calibrate(f, inputs));
}

}  // namespace edgedet::io
