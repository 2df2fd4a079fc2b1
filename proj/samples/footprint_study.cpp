// Sweeps the network input size and prints the int8 arena, FLASH and MAC estimates,
// with and without 10% backbone channel pruning.
#include <cstdio>
#include <vector>

#include "edgedet/edgedet.hpp"

using namespace edgedet;

namespace {

Graph to_int8(const Graph& g, int size) {
  const Graph f = fold_batchnorm(g);
  Rng rng(7);
  std::vector<TensorBuf> cal;
  for (int i = 0; i < 2; ++i) {
    std::vector<float> v(static_cast<std::size_t>(3 * size * size));
    for (float& x : v) x = static_cast<float>(rng.uniform());
    cal.push_back(TensorBuf::from({1, 3, size, size}, std::move(v)));
  }
  return quantize_graph(f, calibrate(f, cal));
}

}  // namespace

int main() {
  std::printf("%6s %12s %12s %14s %12s %12s\n", "input", "RAM KiB", "FLASH KiB", "MACs", "pruned RAM", "pruned FLASH");
  for (int size : {160, 192, 224, 256, 320}) {
    YoloConfig cfg;
    cfg.num_classes = 2;
    cfg.input_size = size;
    const Graph g = build_yolov5n(cfg);
    const AnalyzeReport dense = analyze_report(to_int8(g, size));
    const AnalyzeReport pruned = analyze_report(to_int8(prune_channels(g).graph, size));
    std::printf("%6d %12.1f %12.1f %14lld %12.1f %12.1f\n", size, dense.ram_bytes / 1024.0,
                dense.flash_bytes / 1024.0, static_cast<long long>(dense.macs), pruned.ram_bytes / 1024.0,
                pruned.flash_bytes / 1024.0);
  }
}
