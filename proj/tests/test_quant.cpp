#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace edgedet;
using edgedet::testing::quantized;
using edgedet::testing::random_input;
using edgedet::testing::small_yolo;

TEST(Multiplier, ExactPowersOfTwo) {
  EXPECT_EQ(quantize_multiplier(0.5), (RequantMultiplier{1 << 30, 31}));
  EXPECT_EQ(quantize_multiplier(0.25), (RequantMultiplier{1 << 30, 32}));
}

TEST(Multiplier, OneThird) {
  const RequantMultiplier m = quantize_multiplier(1.0 / 3.0);
  EXPECT_EQ(m.mantissa, 1431655765);
  EXPECT_EQ(m.right_shift, 32);
  EXPECT_LE(std::fabs(m.real() - 1.0 / 3.0), (1.0 / 3.0) * std::ldexp(1.0, -30));
}

TEST(Multiplier, NormalizedAndAccurate) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double r = std::exp(rng.uniform(-20.0f, -0.0001f));
    const RequantMultiplier m = quantize_multiplier(r);
    EXPECT_GE(m.mantissa, std::int64_t{1} << 30);
    EXPECT_LT(m.mantissa, std::int64_t{1} << 31);
    EXPECT_LE(std::fabs(m.real() - r), r * std::ldexp(1.0, -30)) << r;
  }
}

TEST(Multiplier, RejectsOutOfRange) {
  for (double r : {0.0, -0.5, 1.0, 2.0, std::nan("")}) EXPECT_THROW(quantize_multiplier(r), InvalidArgument) << r;
}

TEST(Multiplier, TiesRoundAwayFromZero) {
  const RequantMultiplier half{1 << 30, 31};
  EXPECT_EQ(apply_multiplier(1, half), 1);
  EXPECT_EQ(apply_multiplier(-1, half), -1);
  EXPECT_EQ(apply_multiplier(3, half), 2);
  EXPECT_EQ(apply_multiplier(-3, half), -2);
  EXPECT_EQ(apply_multiplier(4, half), 2);
  EXPECT_EQ(rounding_shift(6, 2), 2);
  EXPECT_EQ(rounding_shift(-6, 2), -2);
}

TEST(Multiplier, Monotone) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const RequantMultiplier m = quantize_multiplier(std::exp(rng.uniform(-12.0f, -0.01f)));
    std::int64_t prev = apply_multiplier(-100000, m);
    for (std::int64_t acc = -99999; acc <= 100000; acc += 37) {
      const std::int64_t cur = apply_multiplier(acc, m);
      ASSERT_LE(prev, cur);
      prev = cur;
    }
  }
}

TEST(Calibrate, WeightScaleFromMaxAbs) {
  const Constant k = Constant::f32({2, 1, 1, 2}, {-0.5f, 0.25f, 0.0f, 0.0f});
  const QuantParams qp = weight_params(k);
  EXPECT_EQ(qp.scheme, QuantScheme::per_channel_symmetric);
  EXPECT_EQ(qp.zero_point, 0);
  EXPECT_NEAR(qp.scale[0], 0.0039370, 1e-7);
  EXPECT_EQ(qp.scale[1], kMinScale);
  const Constant q = quantize_kernel(k, qp);
  EXPECT_EQ(q.values<std::int8_t>(), (std::vector<std::int8_t>{-127, 64, 0, 0}));
}

TEST(Calibrate, ActivationRangeZeroToSix) {
  Range r;
  const float v[] = {0.0f, 2.5f, 6.0f};
  r.observe(v);
  const QuantParams qp = affine_params(r);
  EXPECT_FLOAT_EQ(qp.scale[0], 6.0f / 255.0f);
  EXPECT_EQ(qp.zero_point, -128);
}

TEST(Calibrate, ConstantZeroTensorClamps) {
  Range r;
  const float v[] = {0.0f, 0.0f};
  r.observe(v);
  EXPECT_EQ(affine_params(r).scale[0], kMinScale);
}

TEST(Calibrate, MergeIsOrderFree) {
  Range a, b, c;
  const float x[] = {-1.0f, 3.0f}, y[] = {0.5f, 7.0f}, z[] = {-4.0f};
  a.observe(x);
  b.observe(y);
  c.observe(z);
  Range ab = a;
  ab.merge(b).merge(c);
  Range cb = c;
  cb.merge(b).merge(a);
  EXPECT_EQ(ab.lo, cb.lo);
  EXPECT_EQ(ab.hi, cb.hi);
  EXPECT_EQ(ab.lo, -4.0f);
  EXPECT_EQ(ab.hi, 7.0f);
}

TEST(Calibrate, Errors) {
  const Graph g = small_yolo(192, 2);
  EXPECT_THROW(calibrate(g, std::vector<TensorBuf>{}), InvalidArgument);
  EXPECT_THROW(calibrate(g, std::vector<TensorBuf>{random_input({1, 3, 192, 192}, 1)}), InvalidArgument);
}

TEST(QuantizeWeights, HandExamples) {
  EXPECT_EQ(quantize_weight(0.25f, 0.5f / 127.0f), 64);
  EXPECT_EQ(quantize_weight(0.0f, 0.5f / 127.0f), 0);
  EXPECT_EQ(quantize_weight(0.0f, 123.0f), 0);
}

TEST(QuantizeWeights, RoundTripWithinHalfScale) {
  const Graph f = fold_batchnorm(small_yolo(192, 2));
  std::size_t checked = 0;
  for (const Node& n : f.nodes) {
    if (!n.is_conv_like()) continue;
    const Constant& k = n.w(weight::kKernel);
    const QuantParams qp = weight_params(k);
    const Constant q = quantize_kernel(k, qp);
    const std::int64_t per = k.elements() / k.dims[0];
    for (std::size_t i = 0; i < k.values<float>().size(); ++i) {
      const double s = qp.scale[i / static_cast<std::size_t>(per)];
      const double back = q.values<std::int8_t>()[i] * s;
      ASSERT_LE(std::fabs(back - k.values<float>()[i]), s / 2 * (1 + 1e-6)) << n.name << " " << i;
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000000u);
}

TEST(QuantizeGraph, StructureAndRequant) {
  const Graph q = quantized(small_yolo(192, 2));
  EXPECT_TRUE(q.is_quantized());
  for (const Node& n : q.nodes) {
    const TensorSpec& out = q.tensor(n.outputs[0]);
    EXPECT_EQ(out.dtype, DType::i8);
    ASSERT_TRUE(out.quant.has_value()) << n.name;
    if (n.is_conv_like()) {
      EXPECT_EQ(n.w(weight::kKernel).dtype(), DType::i8);
      EXPECT_EQ(n.w(weight::kBias).dtype(), DType::i32);
      EXPECT_EQ(static_cast<std::int64_t>(n.requant.size()), n.w(weight::kKernel).dims[0]);
      const double s_in = q.tensor(n.inputs[0]).quant->scale[0];
      const double s_w = n.w(weight::kKernel).quant->scale[0];
      const double want = s_in * s_w / out.quant->scale[0];
      EXPECT_NEAR(n.requant[0].real(), want, want * 1e-6) << n.name;
    }
  }
}

TEST(QuantizeGraph, MissingParamsNamed) {
  const Graph f = fold_batchnorm(small_yolo(192, 2));
  const TensorBuf x = random_input({1, 3, 192, 192}, 1);
  Calibration cal = calibrate(f, std::span<const TensorBuf>(&x, 1));
  const TensorId victim = f.nodes[5].outputs[0];
  cal.activations.erase(victim);
  try {
    quantize_graph(f, cal);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("tensor " + std::to_string(victim)), std::string::npos) << e.what();
  }
}

namespace {

// 1x1 single channel conv, weight 1, equal input and output params.
Graph identity_int8(float scale, int zp) {
  GraphBuilder b({1, 1, 4, 4});
  Graph g = b.finish({b.conv(b.input(), 1, 1, 1, 0, Region::backbone, "id", true)});
  g.nodes[0].w(weight::kKernel).values<float>() = {1.0f};
  g.nodes[0].w(weight::kBias).values<float>() = {0.0f};
  Calibration cal;
  cal.activations[g.input_id] = QuantParams::affine(scale, zp);
  cal.activations[g.output_ids[0]] = QuantParams::affine(scale, zp);
  cal.weights["id"] = weight_params(g.nodes[0].w(weight::kKernel));
  return quantize_graph(g, cal);
}

}  // namespace

TEST(ExecuteInt8, IdentityConvWithinOneQuantum) {
  const Graph q = identity_int8(0.05f, 3);
  TensorBuf x = TensorBuf::zeros({1, 1, 4, 4}, DType::i8);
  for (std::size_t i = 0; i < 16; ++i) x.i8()[i] = static_cast<std::int8_t>(-120 + 15 * static_cast<int>(i));
  const TensorBuf y = execute_int8(q, x).at(q.output_ids[0]);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_LE(std::abs(y.i8()[i] - x.i8()[i]), 1) << i;
}

TEST(ExecuteInt8, ZeroInputZeroOutput) {
  const Graph q = identity_int8(0.1f, 0);
  const TensorBuf y = execute_int8(q, TensorBuf::zeros({1, 1, 4, 4}, DType::i8)).at(q.output_ids[0]);
  for (auto v : y.i8()) EXPECT_EQ(v, 0);
}

TEST(ExecuteInt8, MissingRequantRaises) {
  Graph q = identity_int8(0.1f, 0);
  q.nodes[0].requant.clear();
  EXPECT_THROW(execute_int8(q, TensorBuf::zeros({1, 1, 4, 4}, DType::i8)), InvalidArgument);
}

TEST(ExecuteInt8, LutMatchesFloatFunction) {
  const QuantParams in = QuantParams::affine(0.05f, 0), out = QuantParams::affine(0.03f, -20);
  const Lut t = make_lut(static_cast<float (*)(float)>(&silu), in, out);
  for (int q = -128; q <= 127; ++q) {
    const float want = silu(q * 0.05f);
    const float got = (t[static_cast<std::size_t>(q + 128)] + 20) * 0.03f;
    if (want / 0.03f - 20 < 127.5f) { EXPECT_LE(std::fabs(got - want), 0.015f + 1e-6f) << q; }
  }
}

TEST(ExecuteInt8, HeadsTrackFloatWithinThreeQuanta) {
  const Graph f = fold_batchnorm(small_yolo(192, 2));
  std::vector<TensorBuf> cal;
  for (std::uint64_t s = 0; s < 4; ++s) cal.push_back(random_input({1, 3, 192, 192}, 100 + s));
  const Graph q = quantize_graph(f, calibrate(f, cal));
  const TensorBuf x = random_input({1, 3, 192, 192}, 555);
  const auto fo = execute_float(f, x);
  const auto qo = run_graph(q, x);
  for (TensorId id : q.output_ids) {
    const double s_out = q.tensor(id).quant->scale[0];
    const auto& a = fo.at(id).f32();
    const auto& b = qo.at(id).f32();
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(a[i] - b[i]);
    EXPECT_LE(sum / static_cast<double>(a.size()) / s_out, 3.0) << id;
  }
}

TEST(ExecuteInt8, RejectsFloatGraph) {
  const Graph g = small_yolo(192, 2);
  EXPECT_THROW(execute_int8(g, TensorBuf::zeros({1, 3, 192, 192}, DType::i8)), InvalidArgument);
}
