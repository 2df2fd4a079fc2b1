#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgedet/io/image.hpp"
#include "edgedet/metrics.hpp"

namespace edgedet::io {

namespace fs = std::filesystem;

struct Sample {
  std::string name;  // image file stem
  fs::path image;
  fs::path label;
};

// `root/images/*.{png,ppm}` paired by stem with `root/labels/*.txt`, sorted by name.
struct Dataset {
  fs::path root;
  std::vector<Sample> samples;
};

inline Dataset load_dataset(const fs::path& root) {
  const fs::path img_dir = root / "images";
  const fs::path lbl_dir = root / "labels";
  if (!fs::is_directory(img_dir)) throw DataError("dataset: missing directory '" + img_dir.string() + "'");
  if (!fs::is_directory(lbl_dir)) throw DataError("dataset: missing directory '" + lbl_dir.string() + "'");
  std::map<std::string, fs::path> images, labels;
  for (const auto& e : fs::directory_iterator(img_dir))
    if (e.is_regular_file() && is_image_extension(e.path().extension().string())) {
      const std::string stem = e.path().stem().string();
      if (images.count(stem)) throw DataError("dataset: two images share the name '" + stem + "'");
      images[stem] = e.path();
    }
  for (const auto& e : fs::directory_iterator(lbl_dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") labels[e.path().stem().string()] = e.path();

  std::vector<std::string> orphans;
  for (const auto& [stem, p] : images)
    if (!labels.count(stem)) orphans.push_back("images/" + p.filename().string() + " (no label file)");
  for (const auto& [stem, p] : labels)
    if (!images.count(stem)) orphans.push_back("labels/" + p.filename().string() + " (no image)");
  if (!orphans.empty()) {
    std::string msg = "dataset: unpaired files:";
    for (const auto& o : orphans) msg += "\n  " + o;
    throw DataError(msg);
  }
  Dataset ds{root, {}};
  for (const auto& [stem, p] : images) ds.samples.push_back({stem, p, labels[stem]});
  return ds;
}

// YOLO label lines `class cx cy w h` (normalized) to pixel boxes.
inline std::vector<GroundTruth> parse_labels(const std::string& text, int width, int height,
                                             const std::string& what = "labels") {
  std::vector<GroundTruth> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    double cls = 0, cx = 0, cy = 0, w = 0, h = 0;
    std::string extra;
    if (!(ls >> cls >> cx >> cy >> w >> h) || (ls >> extra) || cls < 0 || cls != std::floor(cls))
      throw DataError(what + ":" + std::to_string(line_no) + ": expected 'class cx cy w h'");
    if (w < 0 || h < 0) throw DataError(what + ":" + std::to_string(line_no) + ": negative box size");
    const Box b{static_cast<float>((cx - w / 2) * width), static_cast<float>((cy - h / 2) * height),
                static_cast<float>((cx + w / 2) * width), static_cast<float>((cy + h / 2) * height)};
    out.push_back({b, static_cast<int>(cls)});
  }
  return out;
}

inline std::string read_text(const fs::path& p) {
  const auto b = read_file(p.string());
  return {b.begin(), b.end()};
}

// Ground truth for every sample; image headers are decoded for their size.
inline ImageTruths load_truths(const Dataset& ds) {
  ImageTruths out;
  for (const Sample& s : ds.samples) {
    const Image img = read_image(s.image.string());
    out[s.name] = parse_labels(read_text(s.label), img.width, img.height, s.label.string());
  }
  return out;
}

// Emitted detections carry 0.01 px and 1e-6 confidence resolution, so results
// computed in memory and results re-read from a file are identical.
inline double round_to(float v, double per_unit) { return std::round(v * per_unit) / per_unit; }

inline Detection quantize_for_output(const Detection& d) {
  auto px = [](float v) { return static_cast<float>(round_to(v, 100)); };
  return {{px(d.box.x1), px(d.box.y1), px(d.box.x2), px(d.box.y2)}, d.class_id,
          static_cast<float>(round_to(d.confidence, 1e6))};
}

inline std::string detections_jsonl(const std::string& image, const std::vector<Detection>& dets) {
  std::string out;
  for (const Detection& d : dets) {
    nlohmann::ordered_json j;
    j["image"] = image;
    j["class_id"] = d.class_id;
    j["confidence"] = round_to(d.confidence, 1e6);
    j["x1"] = round_to(d.box.x1, 100);
    j["y1"] = round_to(d.box.y1, 100);
    j["x2"] = round_to(d.box.x2, 100);
    j["y2"] = round_to(d.box.y2, 100);
    out += j.dump() + "\n";
  }
  return out;
}

inline ImagePredictions parse_detections_jsonl(const std::string& text, const std::string& what = "predictions") {
  ImagePredictions out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Detection d;
      d.class_id = j.at("class_id").get<int>();
      d.confidence = j.at("confidence").get<float>();
      d.box = {j.at("x1").get<float>(), j.at("y1").get<float>(), j.at("x2").get<float>(),
               j.at("y2").get<float>()};
      out[j.at("image").get<std::string>()].push_back(d);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(what + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// Manifest lines `<split> <image>`; returns image count per split.
inline std::map<std::string, std::int64_t> manifest_counts(const std::string& text,
                                                           const std::string& what = "manifest") {
  std::map<std::string, std::int64_t> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string split, image;
    if (!(ls >> split)) continue;
    if (!(ls >> image)) throw DataError(what + ":" + std::to_string(line_no) + ": expected '<split> <image>'");
    ++out[split];
  }
  return out;
}

// Image stems listed under `split` in a manifest.
inline std::vector<std::string> manifest_images(const std::string& text, const std::string& split) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string s, image;
    if (ls >> s >> image && s == split) out.push_back(fs::path(image).stem().string());
  }
  return out;
}

// One class name per line; blank lines ignored.
inline std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline std::vector<std::string> default_names(int num_classes) {
  std::vector<std::string> out;
  for (int i = 0; i < num_classes; ++i) out.push_back("class" + std::to_string(i));
  return out;
}

}  // namespace edgedet::io
