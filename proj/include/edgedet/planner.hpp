#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edgedet/accounting.hpp"
#include "edgedet/container.hpp"
#include "edgedet/graph.hpp"

namespace edgedet {

inline constexpr std::size_t kArenaAlignment = 16;

// Live range of one activation tensor, in node indices (inclusive on both ends).
struct Lifetime {
  TensorId tensor_id = -1;
  std::size_t first_use = 0;
  std::size_t last_use = 0;
  std::size_t size_bytes = 0;

  bool overlaps(const Lifetime& o) const {
    return first_use <= o.last_use && o.first_use <= last_use;
  }
};

// A tensor is live from its producer through its last consumer. The graph input is
// live from node 0; graph outputs stay live through the final node. Produced tensors
// nobody reads collapse to their producer index and are reported in `warnings`.
inline std::vector<Lifetime> tensor_lifetimes(const Graph& g,
                                              std::vector<std::string>* warnings = nullptr,
                                              std::size_t alignment = kArenaAlignment) {
  std::vector<Lifetime> out;
  if (g.nodes.empty()) return out;
  const std::size_t last_node = g.nodes.size() - 1;
  std::map<TensorId, Lifetime> by_id;
  auto size_of_tensor = [&](TensorId id) {
    const TensorSpec& s = g.tensor(id);
    if (!s.shape.complete())
      throw InvalidArgument("tensor_lifetimes: tensor " + std::to_string(id) + " has no shape");
    return align_up(s.byte_size(), alignment);
  };
  by_id[g.input_id] = {g.input_id, 0, 0, size_of_tensor(g.input_id)};
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (TensorId in : g.nodes[i].inputs) by_id.at(in).last_use = i;
    for (TensorId o : g.nodes[i].outputs) by_id[o] = {o, i, i, size_of_tensor(o)};
  }
  for (TensorId o : g.output_ids) by_id.at(o).last_use = last_node;
  for (const auto& [id, lt] : by_id) {
    if (warnings && id != g.input_id && !g.is_output(id) && g.consumers(id).empty())
      warnings->push_back("tensor " + std::to_string(id) + " is produced but never used");
    out.push_back(lt);
  }
  return out;
}

struct ArenaPlan {
  std::map<TensorId, std::size_t> offsets;
  std::size_t total_bytes = 0;
  std::size_t peak_node = 0;
  // max over nodes of the summed sizes of simultaneously live tensors
  std::size_t lower_bound = 0;
};

// Greedy placement: largest tensors first, each at the lowest aligned offset that does
// not collide with an already placed tensor whose lifetime overlaps.
inline ArenaPlan plan_arena(const std::vector<Lifetime>& lifetimes,
                            std::size_t alignment = kArenaAlignment) {
  ArenaPlan plan;
  if (lifetimes.empty()) return plan;
  std::vector<std::size_t> order(lifetimes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Lifetime& x = lifetimes[a];
    const Lifetime& y = lifetimes[b];
    if (x.size_bytes != y.size_bytes) return x.size_bytes > y.size_bytes;
    if (x.first_use != y.first_use) return x.first_use < y.first_use;
    return x.tensor_id < y.tensor_id;
  });

  struct Placed {
    std::size_t offset, end, index;
  };
  std::vector<Placed> placed;
  for (std::size_t idx : order) {
    const Lifetime& lt = lifetimes[idx];
    std::vector<Placed> conflicts;
    for (const Placed& p : placed)
      if (lifetimes[p.index].overlaps(lt)) conflicts.push_back(p);
    std::sort(conflicts.begin(), conflicts.end(),
              [](const Placed& a, const Placed& b) { return a.offset < b.offset; });
    std::size_t candidate = 0;
    for (const Placed& c : conflicts) {
      if (candidate + lt.size_bytes <= c.offset) break;
      candidate = std::max(candidate, align_up(c.end, alignment));
    }
    placed.push_back({candidate, candidate + lt.size_bytes, idx});
    plan.offsets[lt.tensor_id] = candidate;
  }

  std::size_t last = 0;
  for (const Lifetime& lt : lifetimes) last = std::max(last, lt.last_use);
  for (std::size_t node = 0; node <= last; ++node) {
    std::size_t watermark = 0, live = 0;
    for (const Placed& p : placed) {
      const Lifetime& lt = lifetimes[p.index];
      if (lt.first_use <= node && node <= lt.last_use) {
        watermark = std::max(watermark, p.end);
        live += lt.size_bytes;
      }
    }
    if (watermark > plan.total_bytes) {
      plan.total_bytes = watermark;
      plan.peak_node = node;
    }
    plan.lower_bound = std::max(plan.lower_bound, live);
  }
  return plan;
}

inline std::size_t constant_flash_bytes(const Constant& c) {
  std::size_t bytes = c.byte_size();
  if (c.quant) bytes += c.quant->scale.size() * 4;
  return bytes;
}

// Weight bytes at their stored dtype (i8 x1, i32 x4, f32 x4), plus 4 bytes per
// per-channel scale, plus the container header.
inline std::size_t estimate_flash(const Graph& g) {
  std::size_t total = edm_header_size(g);
  for (const Node& n : g.nodes)
    for (const auto& [name, c] : n.weights) total += constant_flash_bytes(c);
  return total;
}

struct Budgets {
  std::size_t ram_bytes = 640 * 1024;
  std::size_t flash_bytes = 2 * 1024 * 1024;
  // RAM held outside the arena, e.g. a camera frame buffer.
  std::size_t reserved_ram_bytes = 0;
};

enum class Verdict { fits, tight, no_fit };

inline constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::fits: return "yes";
    case Verdict::tight: return "tight";
    case Verdict::no_fit: return "no";
  }
  return "?";
}

// Over budget is "no"; within the last 10% of the budget is "tight".
inline Verdict budget_verdict(std::size_t used, std::size_t budget) {
  if (used > budget || budget == 0) return Verdict::no_fit;
  if (used * 10 > budget * 9) return Verdict::tight;
  return Verdict::fits;
}

struct NodeRow {
  std::size_t index = 0;
  std::string name;
  OpKind kind = OpKind::Conv2d;
  Region region = Region::backbone;
  Shape out_shape;
  DType dtype = DType::f32;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  Lifetime lifetime;
  std::size_t offset = 0;
};

struct AnalyzeReport {
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::size_t flash_bytes = 0;
  std::size_t ram_bytes = 0;
  std::size_t ram_lower_bound = 0;
  std::size_t peak_node = 0;
  Budgets budgets;
  Verdict ram_verdict = Verdict::fits;
  Verdict flash_verdict = Verdict::fits;
  std::vector<NodeRow> rows;
  std::vector<std::string> warnings;

  bool fits() const {
    return ram_verdict != Verdict::no_fit && flash_verdict != Verdict::no_fit;
  }
};

inline AnalyzeReport analyze_report(const Graph& g, const Budgets& budgets = {}) {
  validate(g);
  AnalyzeReport r;
  r.budgets = budgets;
  const auto lifetimes = tensor_lifetimes(g, &r.warnings);
  const ArenaPlan plan = plan_arena(lifetimes);
  std::map<TensorId, Lifetime> lt_by_id;
  for (const auto& lt : lifetimes) lt_by_id[lt.tensor_id] = lt;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    const TensorSpec& out = g.tensor(n.outputs.front());
    NodeRow row{i, n.name, n.kind, n.region, out.shape, out.dtype, node_params(n),
                node_macs(g, n), lt_by_id.at(out.id), plan.offsets.at(out.id)};
    r.params += row.params;
    r.macs += row.macs;
    r.rows.push_back(std::move(row));
  }
  r.flash_bytes = estimate_flash(g);
  r.ram_bytes = plan.total_bytes;
  r.ram_lower_bound = plan.lower_bound;
  r.peak_node = plan.peak_node;
  r.ram_verdict = budget_verdict(r.ram_bytes + budgets.reserved_ram_bytes, budgets.ram_bytes);
  r.flash_verdict = budget_verdict(r.flash_bytes, budgets.flash_bytes);
  return r;
}

}  // namespace edgedet
