#include <chrono>
#include <cstdio>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "edgedet/edgedet.hpp"
#include "edgedet/io/dataset.hpp"
#include "edgedet/io/pipeline.hpp"
#include "edgedet/io/svg.hpp"

namespace fs = std::filesystem;
using namespace edgedet;
using ojson = nlohmann::ordered_json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNoFit = 2, kDataError = 3 };

// "655360", "640K", "2M" (1024-based).
std::size_t parse_bytes(const std::string& s) {
  if (s.empty()) throw CLI::ValidationError("empty size");
  std::size_t mult = 1;
  std::string digits = s;
  const char last = static_cast<char>(std::toupper(static_cast<unsigned char>(s.back())));
  if (last == 'K' || last == 'M') {
    mult = last == 'K' ? 1024 : 1024 * 1024;
    digits.pop_back();
  }
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
    throw CLI::ValidationError("invalid size '" + s + "' (use bytes, or a K/M suffix)");
  return std::stoull(digits) * mult;
}

struct BudgetFlags {
  std::string ram = "640K";
  std::string flash = "2M";
  std::string reserve = "0";

  void add(CLI::App* cmd) {
    cmd->add_option("--ram-budget", ram, "RAM budget in bytes (K/M suffix allowed)")->capture_default_str();
    cmd->add_option("--flash-budget", flash, "FLASH budget in bytes (K/M suffix allowed)")->capture_default_str();
    cmd->add_option("--reserve-ram", reserve, "RAM held outside the arena, e.g. a frame buffer")->capture_default_str();
  }
  Budgets get() const { return {parse_bytes(ram), parse_bytes(flash), parse_bytes(reserve)}; }
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    io::write_file(path, text);
}

std::vector<std::string> class_names(const Graph& g, const std::string& names_path) {
  if (names_path.empty()) return io::default_names(g.metadata.num_classes);
  auto names = io::parse_names(io::read_text(names_path));
  if (static_cast<int>(names.size()) != g.metadata.num_classes)
    throw DataError(names_path + ": " + std::to_string(names.size()) + " names for a model with " +
                    std::to_string(g.metadata.num_classes) + " classes");
  return names;
}

std::string host_description() {
  std::string s;
#if defined(__clang__)
  s = "clang " __clang_version__;
#elif defined(__GNUC__)
  s = "gcc " __VERSION__;
#else
  s = "unknown compiler";
#endif
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgedet: build, compress, analyze, run and evaluate a small YOLO-style detector"};
  app.set_config("--config", "", "key=value config file; flags override it");
  app.require_subcommand(1);

  // build
  auto* build = app.add_subcommand("build", "Build a YOLOv5n-shaped float model with seeded weights");
  YoloConfig ycfg;
  std::string build_out;
  build->add_option("--random-weights", ycfg.seed, "Weight seed")->capture_default_str();
  build->add_option("--num-classes", ycfg.num_classes)->capture_default_str()->check(CLI::PositiveNumber);
  build->add_option("--input-size", ycfg.input_size)->capture_default_str()->check(CLI::PositiveNumber);
  build->add_option("--out,-o", build_out, "Output .edm")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Estimate parameters, MACs, FLASH and RAM");
  std::string analyze_model;
  BudgetFlags analyze_budgets;
  bool analyze_json = false, analyze_layers = false;
  analyze->add_option("model", analyze_model, "Model .edm")->required();
  analyze_budgets.add(analyze);
  analyze->add_flag("--json", analyze_json, "Emit JSON");
  analyze->add_flag("--layers", analyze_layers, "Per-node table in the text report");

  // quantize
  auto* quantize = app.add_subcommand("quantize", "Fold BatchNorm and quantize to int8");
  std::string q_model, q_cal, q_out;
  quantize->add_option("model", q_model, "Float model .edm")->required();
  quantize->add_option("--calibration-dir", q_cal, "Directory of PNG/PPM images")->required();
  quantize->add_option("--out,-o", q_out, "Output .edm")->required();

  // prune
  auto* prune = app.add_subcommand("prune", "Channel-prune backbone convolutions");
  std::string p_model, p_out;
  double p_ratio = 0.10;
  bool p_json = false;
  prune->add_option("model", p_model, "Float model .edm")->required();
  prune->add_option("--ratio", p_ratio, "Fraction of output channels to remove")->capture_default_str()->check(CLI::Range(0.0, 0.99));
  prune->add_option("--out,-o", p_out, "Output .edm")->required();
  prune->add_flag("--json", p_json, "Emit JSON");

  // infer
  auto* infer = app.add_subcommand("infer", "Run detection on images");
  std::string i_model, i_dataset, i_out, i_svg, i_names;
  std::vector<std::string> i_images;
  io::DetectOptions i_opt;
  infer->add_option("model", i_model, "Model .edm")->required();
  auto* i_img_opt = infer->add_option("--image", i_images, "Input image (repeatable)");
  auto* i_ds_opt = infer->add_option("--dataset", i_dataset, "Dataset root (uses its images/)");
  i_img_opt->excludes(i_ds_opt);
  infer->add_option("--conf", i_opt.conf_thresh)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  infer->add_option("--nms-iou", i_opt.nms_iou)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  infer->add_option("--out,-o", i_out, "JSON-lines output (default stdout)");
  infer->add_option("--svg", i_svg, "Directory for annotated SVGs");
  infer->add_option("--names", i_names, "Class names file");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate detections against a labelled dataset");
  std::string e_model, e_preds, e_dataset, e_manifest, e_split, e_names, e_csv, e_svg;
  io::DetectOptions e_opt;
  bool e_json = false;
  int e_classes = 0;
  auto* e_model_opt = eval->add_option("--model", e_model, "Model .edm to run");
  auto* e_pred_opt = eval->add_option("--predictions", e_preds, "Precomputed JSON-lines detections");
  e_model_opt->excludes(e_pred_opt);
  eval->add_option("--dataset", e_dataset, "Dataset root")->required();
  eval->add_option("--manifest", e_manifest, "Split manifest: '<split> <image>' lines");
  eval->add_option("--split", e_split, "Evaluate only this manifest split");
  eval->add_option("--names", e_names, "Class names file");
  eval->add_option("--num-classes", e_classes, "Class count when evaluating predictions without --names");
  eval->add_option("--conf", e_opt.conf_thresh)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval->add_option("--nms-iou", e_opt.nms_iou)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval->add_flag("--json", e_json, "Emit JSON");
  eval->add_option("--pr-csv", e_csv, "Write PR curves as CSV");
  eval->add_option("--pr-svg-dir", e_svg, "Write one PR-curve SVG per class");

  // bench
  auto* bench = app.add_subcommand("bench", "Time preprocess + inference + postprocess");
  std::string b_model, b_image;
  int b_runs = 10;
  bool b_json = false;
  io::DetectOptions b_opt;
  bench->add_option("model", b_model, "Model .edm")->required();
  bench->add_option("--image", b_image, "Input image (default: uniform gray)");
  bench->add_option("--runs", b_runs)->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_flag("--json", b_json, "Emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*build) {
      const Graph g = build_yolov5n(ycfg);
      write_edm_file(g, build_out);
      std::printf("wrote %s: %d classes, input %d, %lld params, %lld MACs\n", build_out.c_str(),
                  g.metadata.num_classes, g.metadata.input_size, static_cast<long long>(count_params(g)),
                  static_cast<long long>(count_macs(g)));
      return kOk;
    }

    if (*analyze) {
      const Graph g = read_edm_file(analyze_model);
      const AnalyzeReport r = analyze_report(g, analyze_budgets.get());
      if (analyze_json)
        std::cout << to_json(r).dump(2) << "\n";
      else
        std::cout << render_text(r, analyze_layers);
      return r.fits() ? kOk : kNoFit;
    }

    if (*quantize) {
      const Graph g = read_edm_file(q_model);
      std::vector<io::Image> images;
      for (const auto& p : io::list_images(q_cal)) images.push_back(io::read_image(p.string()));
      if (images.empty()) throw DataError("calibration directory '" + q_cal + "' contains no PNG/PPM images");
      const Graph q = io::quantize_with_images(g, images);
      write_edm_file(q, q_out);
      std::printf("calibrated on %zu images\nFLASH: %zu B -> %zu B\nwrote %s\n", images.size(),
                  estimate_flash(g), estimate_flash(q), q_out.c_str());
      return kOk;
    }

    if (*prune) {
      const Graph g = read_edm_file(p_model);
      PruneOptions opt;
      opt.ratio = p_ratio;
      const PruneResult res = prune_channels(g, opt);
      write_edm_file(res.graph, p_out);
      if (p_json)
        std::cout << to_json(res.report).dump(2) << "\n";
      else
        std::cout << render_text(res.report);
      return kOk;
    }

    if (*infer) {
      const Graph g = read_edm_file(i_model);
      std::vector<std::pair<std::string, fs::path>> inputs;
      if (!i_dataset.empty())
        for (const auto& s : io::load_dataset(i_dataset).samples) inputs.emplace_back(s.name, s.image);
      for (const auto& p : i_images) inputs.emplace_back(fs::path(p).stem().string(), p);
      if (inputs.empty()) throw CLI::ValidationError("infer: give --image or --dataset");
      const auto names = class_names(g, i_names);
      if (!i_svg.empty()) fs::create_directories(i_svg);
      std::string out;
      for (const auto& [name, path] : inputs) {
        const io::Image img = io::read_image(path.string());
        const auto dets = io::detect_image(g, img, i_opt);
        out += io::detections_jsonl(name, dets);
        if (!i_svg.empty()) io::write_file((fs::path(i_svg) / (name + ".svg")).string(), io::annotated_svg(img, dets, names));
      }
      emit(out, i_out);
      return kOk;
    }

    if (*eval) {
      if (e_model.empty() == e_preds.empty()) throw CLI::ValidationError("eval: give exactly one of --model or --predictions");
      io::Dataset ds = io::load_dataset(e_dataset);
      if (!e_manifest.empty()) {
        const std::string text = io::read_text(e_manifest);
        for (const auto& [split, n] : io::manifest_counts(text, e_manifest))
          std::fprintf(stderr, "split %s: %lld images\n", split.c_str(), static_cast<long long>(n));
        if (!e_split.empty()) {
          const auto keep = io::manifest_images(text, e_split);
          std::erase_if(ds.samples, [&](const io::Sample& s) {
            return std::find(keep.begin(), keep.end(), s.name) == keep.end();
          });
        }
      } else if (!e_split.empty()) {
        throw CLI::ValidationError("eval: --split needs --manifest");
      }
      const ImageTruths truths = io::load_truths(ds);
      ImagePredictions preds;
      std::vector<std::string> names;
      if (!e_model.empty()) {
        const Graph g = read_edm_file(e_model);
        names = class_names(g, e_names);
        for (const auto& s : ds.samples) preds[s.name] = io::detect_image(g, io::read_image(s.image.string()), e_opt);
      } else {
        if (!e_names.empty())
          names = io::parse_names(io::read_text(e_names));
        else if (e_classes > 0)
          names = io::default_names(e_classes);
        else
          throw CLI::ValidationError("eval: --predictions needs --names or --num-classes");
        for (auto& [img, dets] : io::parse_detections_jsonl(io::read_text(e_preds), e_preds))
          if (truths.count(img)) preds[img] = std::move(dets);
      }
      const EvalReport rep = evaluate(preds, truths, names);
      if (e_json)
        std::cout << to_json(rep).dump(2) << "\n";
      else
        std::cout << render_text(rep);
      if (!e_csv.empty()) io::write_file(e_csv, pr_curves_csv(rep));
      if (!e_svg.empty()) {
        fs::create_directories(e_svg);
        for (std::size_t c = 0; c < rep.classes.size(); ++c)
          io::write_file((fs::path(e_svg) / ("pr_" + rep.classes[c].name + ".svg")).string(),
                         io::pr_curve_svg(rep.curves[c], rep.classes[c].name, rep.classes[c].ap50));
      }
      return kOk;
    }

    if (*bench) {
      const Graph g = read_edm_file(b_model);
      io::Image img;
      if (b_image.empty()) {
        img.width = img.height = g.metadata.input_size;
        img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 114);
      } else {
        img = io::read_image(b_image);
      }
      std::vector<double> ms;
      std::size_t n_dets = 0;
      for (int r = 0; r < b_runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        n_dets = io::detect_image(g, img, b_opt).size();
        const auto t1 = std::chrono::steady_clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      double mean = 0;
      for (double v : ms) mean += v;
      mean /= static_cast<double>(ms.size());
      ojson j;
      j["model"] = fs::path(b_model).filename().string();
      j["input_size"] = g.metadata.input_size;
      j["int8"] = g.is_quantized();
      j["macs"] = count_macs(g);
      j["detections"] = n_dets;
      j["runs"] = b_runs;
      j["host"] = {{"compiler", host_description()},
                   {"hardware_threads", std::thread::hardware_concurrency()}};
      j["run_ms"] = ms;
      j["mean_ms"] = mean;
      if (b_json) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::printf("model: %s (input %d, %s, %lld MACs)\n", b_model.c_str(), g.metadata.input_size,
                    g.is_quantized() ? "int8" : "float", static_cast<long long>(count_macs(g)));
        std::printf("host: %s, %u hardware threads\n", host_description().c_str(), std::thread::hardware_concurrency());
        for (std::size_t r = 0; r < ms.size(); ++r) std::printf("run %zu: %.3f ms\n", r + 1, ms[r]);
        std::printf("mean: %.3f ms over %d runs\n", mean, b_runs);
      }
      return kOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  }
  return kUsage;
}
