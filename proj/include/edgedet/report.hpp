#pragma once

#include <cstdio>
#include <string>

#include "json.hpp"

#include "edgedet/engine.hpp"
#include "edgedet/planner.hpp"
#include "edgedet/prune.hpp"

namespace edgedet {

namespace detail {

inline std::string kib(std::size_t bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f KiB", static_cast<double>(bytes) / 1024.0);
  return buf;
}

}  // namespace detail

inline std::string render_text(const AnalyzeReport& r, bool layers = false) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof line, "params: %lld\nMACs: %lld\n", static_cast<long long>(r.params),
                static_cast<long long>(r.macs));
  s += line;
  std::snprintf(line, sizeof line, "FLASH: %zu B (%s), budget %zu B: %s\n", r.flash_bytes,
                detail::kib(r.flash_bytes).c_str(), r.budgets.flash_bytes,
                std::string(to_string(r.flash_verdict)).c_str());
  s += line;
  std::snprintf(line, sizeof line, "RAM: %zu B (%s) arena + %zu B reserved, budget %zu B: %s\n",
                r.ram_bytes, detail::kib(r.ram_bytes).c_str(), r.budgets.reserved_ram_bytes,
                r.budgets.ram_bytes, std::string(to_string(r.ram_verdict)).c_str());
  s += line;
  const std::string peak = r.rows.empty() ? "-" : r.rows[r.peak_node].name;
  std::snprintf(line, sizeof line, "RAM lower bound: %zu B, peak at node %zu (%s)\n",
                r.ram_lower_bound, r.peak_node, peak.c_str());
  s += line;
  if (layers) {
    std::snprintf(line, sizeof line, "%4s  %-28s %-18s %-20s %10s %12s %6s %6s %10s\n", "#", "node",
                  "kind", "output", "params", "MACs", "first", "last", "offset");
    s += line;
    for (const NodeRow& n : r.rows) {
      std::snprintf(line, sizeof line, "%4zu  %-28s %-18s %-20s %10lld %12lld %6zu %6zu %10zu\n",
                    n.index, n.name.c_str(), std::string(to_string(n.kind)).c_str(),
                    n.out_shape.str().c_str(), static_cast<long long>(n.params),
                    static_cast<long long>(n.macs), n.lifetime.first_use, n.lifetime.last_use, n.offset);
      s += line;
    }
  }
  for (const auto& w : r.warnings) s += "warning: " + w + "\n";
  s += std::string("fits: ") + (r.fits() ? "yes" : "no") + "\n";
  return s;
}

inline nlohmann::ordered_json to_json(const AnalyzeReport& r) {
  nlohmann::ordered_json j;
  j["params"] = r.params;
  j["macs"] = r.macs;
  j["flash_bytes"] = r.flash_bytes;
  j["ram_bytes"] = r.ram_bytes;
  j["ram_lower_bound"] = r.ram_lower_bound;
  j["reserved_ram_bytes"] = r.budgets.reserved_ram_bytes;
  j["peak_node"] = r.peak_node;
  j["budgets"] = {{"ram_bytes", r.budgets.ram_bytes}, {"flash_bytes", r.budgets.flash_bytes}};
  j["ram_fits"] = to_string(r.ram_verdict);
  j["flash_fits"] = to_string(r.flash_verdict);
  j["fits"] = r.fits() ? "yes" : "no";
  j["nodes"] = nlohmann::ordered_json::array();
  for (const NodeRow& n : r.rows)
    j["nodes"].push_back({{"index", n.index},
                          {"name", n.name},
                          {"kind", to_string(n.kind)},
                          {"region", to_string(n.region)},
                          {"shape", {n.out_shape.n, n.out_shape.c, n.out_shape.h, n.out_shape.w}},
                          {"dtype", to_string(n.dtype)},
                          {"params", n.params},
                          {"macs", n.macs},
                          {"first_use", n.lifetime.first_use},
                          {"last_use", n.lifetime.last_use},
                          {"bytes", n.lifetime.size_bytes},
                          {"offset", n.offset}});
  j["warnings"] = r.warnings;
  return j;
}

inline double percent_drop(double before, double after) {
  return before > 0 ? 100.0 * (before - after) / before : 0.0;
}

inline std::string render_text(const PruneReport& r) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof line, "ratio: %.3f\n", r.ratio);
  s += line;
  for (const LayerPrune& l : r.layers) {
    std::snprintf(line, sizeof line, "  %-28s %4lld -> %4lld%s%s\n", l.node.c_str(),
                  static_cast<long long>(l.channels_before), static_cast<long long>(l.channels_after),
                  l.note.empty() ? "" : "  ", l.note.c_str());
    s += line;
  }
  if (!r.ineligible.empty()) {
    s += "coupled (not pruned):";
    for (const auto& n : r.ineligible) s += " " + n;
    s += "\n";
  }
  std::snprintf(line, sizeof line, "params: %lld -> %lld (-%.2f%%)\nFLASH: %zu B -> %zu B (-%.2f%%)\n",
                static_cast<long long>(r.params_before), static_cast<long long>(r.params_after),
                percent_drop(static_cast<double>(r.params_before), static_cast<double>(r.params_after)),
                r.flash_before, r.flash_after,
                percent_drop(static_cast<double>(r.flash_before), static_cast<double>(r.flash_after)));
  s += line;
  return s;
}

inline nlohmann::ordered_json to_json(const PruneReport& r) {
  nlohmann::ordered_json j;
  j["ratio"] = r.ratio;
  j["layers"] = nlohmann::ordered_json::array();
  for (const LayerPrune& l : r.layers)
    j["layers"].push_back({{"node", l.node},
                           {"before", l.channels_before},
                           {"after", l.channels_after},
                           {"note", l.note}});
  j["coupled"] = r.ineligible;
  j["params_before"] = r.params_before;
  j["params_after"] = r.params_after;
  j["flash_before"] = r.flash_before;
  j["flash_after"] = r.flash_after;
  return j;
}

inline nlohmann::ordered_json to_json(const ExecTrace& t) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const NodeTrace& e : t.entries) {
    const Shape& s = e.output.shape();
    j.push_back({{"node", e.node},
                 {"kind", to_string(e.kind)},
                 {"shape", {s.n, s.c, s.h, s.w}},
                 {"micros", e.micros}});
  }
  return j;
}

}  // namespace edgedet
