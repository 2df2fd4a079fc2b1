#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace edgedet;
using edgedet::testing::random_input;
using edgedet::testing::small_yolo;

namespace {

Graph single_conv(std::int64_t c_in, std::int64_t c_out, int k, bool bias, Shape in) {
  in.c = c_in;
  GraphBuilder b(in, 3);
  TensorId y = b.conv(b.input(), c_out, k, 1, k / 2, Region::backbone, "conv", bias);
  return b.finish({y});
}

}  // namespace

TEST(BuildYolo, ParameterCountNearOnePointNineMillion) {
  const Graph g = small_yolo(640, 80);
  const double p = static_cast<double>(count_params(g));
  EXPECT_NEAR(p / 1.9e6, 1.0, 0.05) << p;
  EXPECT_NO_THROW(validate_detector(g));
}

TEST(BuildYolo, HeadShapesAt192WithTwoClasses) {
  const Graph g = small_yolo(192, 2);
  ASSERT_EQ(g.output_ids.size(), 3u);
  const Shape expected[3] = {{1, 21, 24, 24}, {1, 21, 12, 12}, {1, 21, 6, 6}};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.tensor(g.output_ids[i]).shape, expected[i]) << i;
}

TEST(BuildYolo, ArchitectureIndependentOfInputSize) {
  const Graph a = small_yolo(192, 2);
  const Graph b = small_yolo(224, 2);
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    EXPECT_EQ(a.nodes[i].name, b.nodes[i].name);
    EXPECT_EQ(a.nodes[i].weights, b.nodes[i].weights);
    const Shape& sa = a.tensor(a.nodes[i].outputs[0]).shape;
    const Shape& sb = b.tensor(b.nodes[i].outputs[0]).shape;
    EXPECT_EQ(sa.c, sb.c);
    EXPECT_EQ(sa.h * 7, sb.h * 6);
  }
  EXPECT_EQ(count_params(a), count_params(b));
}

TEST(BuildYolo, RejectsSizesNotDivisibleBy32) {
  try {
    small_yolo(240, 2);
    FAIL() << "expected rejection";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("32"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("256"), std::string::npos) << e.what();
  }
}

TEST(BuildYolo, RegionsAndStructure) {
  const Graph g = small_yolo(192, 2);
  int regions[3] = {0, 0, 0};
  int detects = 0, adds = 0, pools = 0, upsamples = 0;
  for (const Node& n : g.nodes) {
    ++regions[static_cast<int>(n.region)];
    detects += n.kind == OpKind::Detect;
    pools += n.kind == OpKind::MaxPool2d;
    upsamples += n.kind == OpKind::UpsampleNearest2x;
    if (n.kind == OpKind::Add) {
      ++adds;
      EXPECT_EQ(n.region, Region::backbone) << n.name;
    }
  }
  EXPECT_GT(regions[0], 0);
  EXPECT_GT(regions[1], 0);
  EXPECT_EQ(regions[2], 3);
  EXPECT_EQ(detects, 3);
  EXPECT_EQ(pools, 3);
  EXPECT_EQ(upsamples, 2);
  // bottlenecks with shortcuts: 1 + 2 + 3 + 1 in the four backbone C3 blocks
  EXPECT_EQ(adds, 7);
  const Node& stem = g.nodes.front();
  EXPECT_EQ(stem.conv().kernel, 6);
  EXPECT_EQ(stem.conv().stride, 2);
  EXPECT_EQ(stem.conv().padding, 2);
  EXPECT_EQ(g.tensor(stem.outputs[0]).shape, (Shape{1, 16, 96, 96}));
}

TEST(BuildYolo, DeterministicForSeed) {
  EXPECT_EQ(small_yolo(192, 2, 5), small_yolo(192, 2, 5));
  EXPECT_NE(small_yolo(192, 2, 5), small_yolo(192, 2, 6));
}

TEST(ShapeInference, ConvFloorFormula) {
  GraphBuilder b({1, 3, 192, 192});
  TensorId y = b.conv(b.input(), 16, 3, 2, 1, Region::backbone, "c");
  EXPECT_EQ(b.shape(y), (Shape{1, 16, 96, 96}));
  EXPECT_EQ(conv_out_extent(5, 3, 2, 1), 3);
}

TEST(ShapeInference, UpsampleAndConcat) {
  GraphBuilder b({1, 64, 12, 12});
  TensorId u = b.upsample(b.input(), Region::neck, "up");
  EXPECT_EQ(b.shape(u), (Shape{1, 64, 24, 24}));
  GraphBuilder b2({1, 32, 24, 24});
  TensorId c = b2.concat({b2.input(), b2.input()}, Region::neck, "cat");
  EXPECT_EQ(b2.shape(c), (Shape{1, 64, 24, 24}));
}

TEST(ShapeInference, MismatchNamesTheNode) {
  GraphBuilder b({1, 8, 16, 16});
  TensorId small = b.maxpool(b.input(), 2, 2, 0, Region::neck, "pool");
  try {
    b.concat({b.input(), small}, Region::neck, "bad_concat");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("bad_concat"), std::string::npos) << e.what();
  }
  try {
    b.add(b.input(), small, Region::backbone, "bad_add");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("bad_add"), std::string::npos) << e.what();
  }
}

TEST(ShapeInference, Idempotent) {
  const Graph g = small_yolo(192, 2);
  const Graph once = infer_shapes(g);
  EXPECT_EQ(once, infer_shapes(once));
  EXPECT_EQ(once, g);
}

TEST(ShapeInference, RejectsBatchAboveOne) {
  Graph g = small_yolo(192, 2);
  g.tensor(g.input_id).shape.n = 2;
  EXPECT_THROW(infer_shapes(g), InvalidArgument);
}

TEST(Accounting, EmptyGraph) {
  Graph g;
  EXPECT_EQ(count_params(g), 0);
  EXPECT_EQ(count_macs(g), 0);
}

TEST(Accounting, SingleConvClosedForm) {
  const Graph g = single_conv(16, 32, 3, true, {1, 16, 8, 8});
  EXPECT_EQ(count_params(g), 16 * 32 * 9 + 32);
  EXPECT_EQ(count_params(g), 4640);
}

TEST(Accounting, PointwiseMacs) {
  const Graph g = single_conv(1, 1, 1, false, {1, 1, 4, 4});
  EXPECT_EQ(count_macs(g), 16);
}

TEST(Accounting, MacsScaleWithArea) {
  const Graph a = single_conv(3, 8, 3, false, {1, 3, 16, 16});
  const Graph b = single_conv(3, 8, 3, false, {1, 3, 32, 32});
  EXPECT_EQ(count_macs(b), 4 * count_macs(a));
  const auto m192 = count_macs(small_yolo(192, 2));
  const auto m224 = count_macs(small_yolo(224, 2));
  EXPECT_EQ(m224 * 36, m192 * 49);
}

TEST(Accounting, MacsNeedShapes) {
  Graph g = single_conv(3, 8, 3, false, {1, 3, 16, 16});
  g.tensor(g.output_ids[0]).shape = {};
  EXPECT_THROW(count_macs(g), InvalidArgument);
}

TEST(BatchNormFold, IdentityNormalizationKeepsWeights) {
  GraphBuilder b({1, 2, 5, 5}, 9);
  TensorId y = b.conv(b.input(), 3, 3, 1, 1, Region::backbone, "c");
  y = b.batchnorm(y, Region::backbone, "bn", 0.0f);
  Graph g = b.finish({y});
  Node& bn = g.nodes[1];
  bn.w(weight::kGamma).values<float>().assign(3, 1.0f);
  bn.w(weight::kBeta).values<float>().assign(3, 0.0f);
  bn.w(weight::kMean).values<float>().assign(3, 0.0f);
  bn.w(weight::kVar).values<float>().assign(3, 1.0f);
  const Graph f = fold_batchnorm(g);
  ASSERT_EQ(f.nodes.size(), 1u);
  EXPECT_EQ(f.nodes[0].w(weight::kKernel), g.nodes[0].w(weight::kKernel));
  for (float v : f.nodes[0].w(weight::kBias).values<float>()) EXPECT_EQ(v, 0.0f);
}

TEST(BatchNormFold, HandEvaluatedScalarCase) {
  GraphBuilder b({1, 1, 1, 1});
  TensorId y = b.conv(b.input(), 1, 1, 1, 0, Region::backbone, "c", true);
  y = b.batchnorm(y, Region::backbone, "bn", 0.0f);
  Graph g = b.finish({y});
  g.nodes[0].w(weight::kKernel).values<float>() = {2.0f};
  g.nodes[0].w(weight::kBias).values<float>() = {1.0f};
  g.nodes[1].w(weight::kGamma).values<float>() = {2.0f};
  g.nodes[1].w(weight::kBeta).values<float>() = {3.0f};
  g.nodes[1].w(weight::kMean).values<float>() = {1.0f};
  g.nodes[1].w(weight::kVar).values<float>() = {4.0f};
  const Graph f = fold_batchnorm(g);
  EXPECT_FLOAT_EQ(f.nodes[0].w(weight::kKernel).values<float>()[0], 2.0f);
  EXPECT_FLOAT_EQ(f.nodes[0].w(weight::kBias).values<float>()[0], 3.0f);
}

TEST(BatchNormFold, TwoLayerGraphMatchesUnfolded) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GraphBuilder b({1, 3, 9, 9}, seed);
    TensorId y = b.conv_bn_silu(b.input(), 8, 3, 1, Region::backbone, "l1");
    y = b.conv_bn_silu(y, 4, 3, 2, Region::backbone, "l2");
    const Graph g = b.finish({y});
    const Graph f = fold_batchnorm(g);
    EXPECT_FALSE(has_batchnorm(f));
    EXPECT_LE(count_params(f), count_params(g));
    const TensorBuf x = random_input({1, 3, 9, 9}, seed, -1.0f, 1.0f);
    const auto& a = execute_float(g, x).at(g.output_ids[0]).f32();
    const auto& c = execute_float(f, x).at(f.output_ids[0]).f32();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], c[i], 1e-5) << i;
  }
}

TEST(BatchNormFold, FullModelStaysClose) {
  const Graph g = small_yolo(192, 2);
  const Graph f = fold_batchnorm(g);
  EXPECT_NO_THROW(validate_detector(f));
  EXPECT_LT(count_params(f), count_params(g));
  const TensorBuf x = random_input({1, 3, 192, 192}, 4);
  const auto a = execute_float(g, x);
  const auto c = execute_float(f, x);
  for (TensorId id : g.output_ids) {
    const auto& va = a.at(id).f32();
    const auto& vc = c.at(id).f32();
    double worst = 0;
    for (std::size_t i = 0; i < va.size(); ++i) worst = std::max(worst, static_cast<double>(std::fabs(va[i] - vc[i])));
    EXPECT_LT(worst, 1e-3) << id;
  }
}

TEST(BatchNormFold, RequiresPrecedingConv) {
  GraphBuilder b({1, 2, 4, 4});
  TensorId y = b.silu(b.input(), Region::backbone, "act");
  y = b.batchnorm(y, Region::backbone, "bn");
  EXPECT_THROW(fold_batchnorm(b.finish({y})), InvalidArgument);
}

TEST(Container, RoundTripFloatModel) {
  const Graph g = small_yolo(192, 2);
  const auto bytes = save_edm(g);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "EDM1");
  EXPECT_EQ(load_edm(bytes), g);
  EXPECT_EQ(save_edm(load_edm(bytes)), bytes);
}

TEST(Container, RoundTripInt8Model) {
  const Graph q = edgedet::testing::quantized(small_yolo(192, 2));
  const Graph back = load_edm(save_edm(q));
  EXPECT_EQ(back, q);
}

TEST(Container, BlobsAreAligned) {
  const Graph g = small_yolo(192, 2);
  const auto bytes = save_edm(g);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[4 + static_cast<std::size_t>(i)]) << (8 * i);
  const auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  for (const auto& n : header.at("nodes"))
    for (const auto& [k, w] : n.at("weights").items()) EXPECT_EQ(w.at("offset").get<std::size_t>() % 16, 0u);
  EXPECT_EQ(edm_header_size(g), 8 + static_cast<std::size_t>(len));
}

TEST(Container, ParseErrorsCarryOffsets) {
  const auto good = save_edm(small_yolo(192, 2));
  auto bad_magic = good;
  bad_magic[1] = 'X';
  try {
    load_edm(bad_magic);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  try {
    load_edm(std::vector<std::uint8_t>(good.begin(), good.begin() + 6));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 6u);
  }
  try {
    load_edm(std::vector<std::uint8_t>(good.begin(), good.begin() + 100));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  auto bad_json = good;
  bad_json[8 + 20] = '}';
  try {
    load_edm(bad_json);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GE(e.offset(), 8u);
  }
  try {
    load_edm(std::vector<std::uint8_t>(good.begin(), good.end() - 64));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 8u);
  }
}

TEST(Validate, RejectsForwardReferences) {
  Graph g = small_yolo(192, 2);
  std::swap(g.nodes[0], g.nodes[1]);
  EXPECT_THROW(validate(g), InvalidArgument);
}

TEST(Validate, DetectorNeedsThreeHeads) {
  Graph g = small_yolo(192, 2);
  g.output_ids.pop_back();
  EXPECT_THROW(validate_detector(g), InvalidArgument);
}
