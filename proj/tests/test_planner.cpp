#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "test_support.hpp"

using namespace edgedet;
using edgedet::testing::quantized;
using edgedet::testing::small_yolo;

namespace {

std::size_t max_live(const std::vector<Lifetime>& lts) {
  std::size_t last = 0, best = 0;
  for (const auto& l : lts) last = std::max(last, l.last_use);
  for (std::size_t t = 0; t <= last; ++t) {
    std::size_t sum = 0;
    for (const auto& l : lts)
      if (l.first_use <= t && t <= l.last_use) sum += l.size_bytes;
    best = std::max(best, sum);
  }
  return best;
}

void expect_disjoint(const std::vector<Lifetime>& lts, const ArenaPlan& plan) {
  for (std::size_t i = 0; i < lts.size(); ++i)
    for (std::size_t j = i + 1; j < lts.size(); ++j) {
      if (!lts[i].overlaps(lts[j])) continue;
      const std::size_t a = plan.offsets.at(lts[i].tensor_id), b = plan.offsets.at(lts[j].tensor_id);
      EXPECT_TRUE(a + lts[i].size_bytes <= b || b + lts[j].size_bytes <= a)
          << lts[i].tensor_id << " and " << lts[j].tensor_id;
    }
  for (const auto& [id, off] : plan.offsets) EXPECT_EQ(off % kArenaAlignment, 0u);
}

// Smallest arena over every placement order, each tensor dropped at its lowest free
// offset given the tensors placed before it.
std::size_t brute_force_arena(std::vector<Lifetime> lts) {
  std::vector<std::size_t> order(lts.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t best = SIZE_MAX;
  do {
    std::vector<std::pair<std::size_t, std::size_t>> placed(lts.size(), {0, 0});
    std::vector<bool> done(lts.size(), false);
    std::size_t total = 0;
    for (std::size_t i : order) {
      std::size_t off = 0;
      for (bool moved = true; moved;) {
        moved = false;
        for (std::size_t j = 0; j < lts.size(); ++j)
          if (done[j] && lts[i].overlaps(lts[j]) && off < placed[j].second && placed[j].first < off + lts[i].size_bytes) {
            off = align_up(placed[j].second, kArenaAlignment);
            moved = true;
          }
      }
      placed[i] = {off, off + lts[i].size_bytes};
      done[i] = true;
      total = std::max(total, off + lts[i].size_bytes);
    }
    best = std::min(best, total);
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

Graph unary_chain(int length, Shape s) {
  GraphBuilder b(s);
  TensorId x = b.input();
  for (int i = 0; i < length; ++i) x = b.silu(x, Region::backbone, "n" + std::to_string(i));
  return b.finish({x});
}

}  // namespace

TEST(Lifetimes, ChainOfThreeNodes) {
  // A is produced by node 0, read by node 1; B by node 1, read by node 2; C is the output.
  const Graph g = unary_chain(3, {1, 1, 2, 2});
  const auto lts = tensor_lifetimes(g);
  std::map<TensorId, Lifetime> by_id;
  for (const auto& l : lts) by_id[l.tensor_id] = l;
  const TensorId a = g.nodes[0].outputs[0], b = g.nodes[1].outputs[0], c = g.nodes[2].outputs[0];
  EXPECT_EQ(by_id[a].first_use, 0u);
  EXPECT_EQ(by_id[a].last_use, 1u);
  EXPECT_EQ(by_id[b].first_use, 1u);
  EXPECT_EQ(by_id[b].last_use, 2u);
  EXPECT_EQ(by_id[c].first_use, 2u);
  EXPECT_EQ(by_id[c].last_use, 2u);
  EXPECT_EQ(by_id[g.input_id].first_use, 0u);
  EXPECT_EQ(by_id[g.input_id].last_use, 0u);
  EXPECT_EQ(by_id[a].size_bytes, 16u);
}

TEST(Lifetimes, DiamondSplitLivesUntilMerge) {
  GraphBuilder b({1, 1, 4, 4});
  const TensorId split = b.silu(b.input(), Region::backbone, "split");
  TensorId left = b.silu(split, Region::backbone, "l1");
  left = b.silu(left, Region::backbone, "l2");
  const TensorId right = b.sigmoid(split, Region::backbone, "r");
  const TensorId merge = b.add(left, right, Region::backbone, "merge");
  const Graph g = b.finish({merge});
  for (const auto& l : tensor_lifetimes(g))
    if (l.tensor_id == split) {
      EXPECT_EQ(l.first_use, 0u);
      EXPECT_EQ(l.last_use, 3u);
    } else if (l.tensor_id == right) {
      EXPECT_EQ(l.last_use, 4u);
    }
}

TEST(Lifetimes, UnusedTensorWarns) {
  GraphBuilder b({1, 1, 2, 2});
  b.silu(b.input(), Region::backbone, "dead");
  const Graph g = b.finish({b.sigmoid(b.input(), Region::backbone, "live")});
  std::vector<std::string> warnings;
  const auto lts = tensor_lifetimes(g, &warnings);
  ASSERT_EQ(warnings.size(), 1u);
  for (const auto& l : lts)
    if (l.tensor_id == g.nodes[0].outputs[0]) { EXPECT_EQ(l.last_use, 0u); }
}

TEST(Lifetimes, YoloSkipTensorsSpanToNeckConcat) {
  const Graph g = small_yolo(192, 2);
  std::map<TensorId, Lifetime> by_id;
  for (const auto& l : tensor_lifetimes(g)) by_id[l.tensor_id] = l;
  const std::pair<const char*, const char*> skips[] = {{"backbone.4.cv3.act", "neck.16"},
                                                       {"backbone.6.cv3.act", "neck.12"},
                                                       {"neck.10.act", "neck.22"},
                                                       {"neck.14.act", "neck.19"}};
  for (const auto& [from, to] : skips) {
    const std::size_t p = *g.find_node(from), c = *g.find_node(to);
    const Lifetime& l = by_id.at(g.nodes[p].outputs[0]);
    EXPECT_EQ(l.first_use, p) << from;
    EXPECT_EQ(l.last_use, c) << from;
  }
  for (TensorId o : g.output_ids) EXPECT_EQ(by_id.at(o).last_use, g.nodes.size() - 1);
}

TEST(Arena, SingleTensorAligned) {
  const ArenaPlan p = plan_arena({{0, 0, 0, align_up(1000, kArenaAlignment)}});
  EXPECT_EQ(p.total_bytes, 1008u);
}

TEST(Arena, ThreeTensorChain) {
  const std::vector<Lifetime> lts{{1, 0, 1, 100 * 1024}, {2, 1, 2, 200 * 1024}, {3, 2, 2, 50 * 1024}};
  const ArenaPlan p = plan_arena(lts);
  EXPECT_EQ(p.total_bytes, 300u * 1024);
  EXPECT_EQ(p.total_bytes, brute_force_arena(lts));
  EXPECT_EQ(p.lower_bound, 300u * 1024);
  expect_disjoint(lts, p);
}

TEST(Arena, RandomLifetimesStayWithinBounds) {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 7;
    std::vector<Lifetime> lts;
    for (int i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(rng.uniform(0.0f, 10.0f));
      const auto len = static_cast<std::size_t>(rng.uniform(0.0f, 5.0f));
      lts.push_back({i, a, a + len, align_up(static_cast<std::size_t>(rng.uniform(1.0f, 5000.0f)), 16)});
    }
    const ArenaPlan p = plan_arena(lts);
    expect_disjoint(lts, p);
    EXPECT_EQ(p.lower_bound, max_live(lts));
    EXPECT_GE(p.total_bytes, p.lower_bound);
    EXPECT_LE(p.total_bytes, 2 * p.lower_bound);
    if (n <= 6) { EXPECT_LE(p.total_bytes, 2 * brute_force_arena(lts)); }
  }
}

TEST(Arena, YoloPlanIsSound) {
  for (const Graph& g : {small_yolo(192, 2), quantized(small_yolo(160, 2), 1)}) {
    const auto lts = tensor_lifetimes(g);
    const ArenaPlan p = plan_arena(lts);
    expect_disjoint(lts, p);
    EXPECT_EQ(p.lower_bound, max_live(lts));
    EXPECT_LE(p.total_bytes, 2 * p.lower_bound);
  }
}

TEST(Flash, EmptyGraphIsHeaderOnly) {
  const Graph g;
  EXPECT_EQ(estimate_flash(g), edm_header_size(g));
}

TEST(Flash, SingleQuantizedConv) {
  GraphBuilder b({1, 16, 8, 8});
  const Graph g = b.finish({b.conv(b.input(), 32, 3, 1, 1, Region::backbone, "c", true)});
  ASSERT_EQ(count_params(g), 4640);
  const Graph q = quantized(g, 1);
  EXPECT_EQ(estimate_flash(q), 4608u * 1 + 32u * 4 + 32u * 4 + edm_header_size(q));
  EXPECT_EQ(estimate_flash(g), 4640u * 4 + edm_header_size(g));
}

TEST(Flash, MonotoneInParams) {
  std::size_t prev = 0;
  std::int64_t prev_params = 0;
  for (std::int64_t c : {8, 16, 24, 32}) {
    GraphBuilder b({1, 8, 4, 4});
    const Graph g = quantized(b.finish({b.conv(b.input(), c, 3, 1, 1, Region::backbone, "c", true)}), 1);
    const std::size_t f = estimate_flash(g);
    EXPECT_GT(count_params(g), prev_params);
    EXPECT_GT(f, prev);
    prev = f;
    prev_params = count_params(g);
  }
}

TEST(Report, DefaultBudgetsFitAt192) {
  const AnalyzeReport r = analyze_report(quantized(small_yolo(192, 2), 1));
  EXPECT_EQ(r.ram_verdict, Verdict::fits);
  EXPECT_EQ(r.flash_verdict, Verdict::fits);
  EXPECT_TRUE(r.fits());
  EXPECT_EQ(r.rows.size(), r.rows.back().index + 1);
  EXPECT_GE(r.ram_bytes, r.ram_lower_bound);
}

TEST(Report, ZeroBudgetsNeverFit) {
  Budgets b;
  b.ram_bytes = 0;
  b.flash_bytes = 0;
  const AnalyzeReport r = analyze_report(quantized(small_yolo(192, 2), 1), b);
  EXPECT_EQ(r.ram_verdict, Verdict::no_fit);
  EXPECT_EQ(r.flash_verdict, Verdict::no_fit);
  EXPECT_FALSE(r.fits());
}

TEST(Report, FrameBufferTipsLargerInputOver) {
  const Graph q = quantized(small_yolo(256, 2), 1);
  const AnalyzeReport bare = analyze_report(q);
  EXPECT_NE(bare.ram_verdict, Verdict::no_fit);
  Budgets b;
  b.reserved_ram_bytes = 256 * 256 * 3;
  const AnalyzeReport with_frame = analyze_report(q, b);
  EXPECT_NE(with_frame.ram_verdict, Verdict::fits);
}

TEST(Report, VerdictThresholds) {
  EXPECT_EQ(budget_verdict(90, 100), Verdict::fits);
  EXPECT_EQ(budget_verdict(91, 100), Verdict::tight);
  EXPECT_EQ(budget_verdict(100, 100), Verdict::tight);
  EXPECT_EQ(budget_verdict(101, 100), Verdict::no_fit);
}
