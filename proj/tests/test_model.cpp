#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "invnet/error.hpp"
#include "invnet/layers.hpp"
#include "invnet/model.hpp"
#include "invnet/rng.hpp"
#include "support/gradcheck.hpp"

namespace invnet {
namespace {

using testing::random_tensor;

struct ExpectedRow {
  const char* type;
  Shape shape;
  std::int64_t params;
};

// Layer-wise breakdown for hybrid(3), transcribed row by row.
const std::vector<ExpectedRow> kTable = {
    {"Input Layer", {48, 48, 3}, 0},
    {"Involution Layer", {48, 48, 3}, 26},
    {"Involution Layer", {48, 48, 3}, 26},
    {"Involution Layer", {48, 48, 3}, 26},
    {"Convolution Layer", {46, 46, 32}, 896},
    {"2D Max Pooling", {23, 23, 32}, 0},
    {"Convolution Layer", {21, 21, 64}, 18496},
    {"Batch Normalization", {21, 21, 64}, 256},
    {"2D Max Pooling", {10, 10, 64}, 0},
    {"Convolution Layer", {8, 8, 128}, 73856},
    {"Batch Normalization", {8, 8, 128}, 512},
    {"2D Max Pooling", {4, 4, 128}, 0},
    {"Flatten", {2048}, 0},
    {"Dense", {128}, 262272},
    {"Dropout", {128}, 0},
    {"Dense", {2}, 258},
};

TEST(ModelSummary, HybridThreeMatchesTableRowForRow) {
  Rng rng(1);
  const ModelSummary s = summarize(build_model(ModelVariant::hybrid(3), rng));
  ASSERT_EQ(s.rows.size(), kTable.size());
  for (std::size_t i = 0; i < kTable.size(); ++i) {
    EXPECT_EQ(s.rows[i].layer_type, kTable[i].type) << "row " << i;
    EXPECT_EQ(s.rows[i].output_shape, kTable[i].shape) << "row " << i;
    EXPECT_EQ(s.rows[i].params, kTable[i].params) << "row " << i;
    if (i >= 1 && i <= 3) {
      ASSERT_TRUE(s.rows[i].aux_shape.has_value());
      EXPECT_EQ(format_shape_with_batch(*s.rows[i].aux_shape), "(None, 48, 48, 9, 1, 1)");
    }
  }
  EXPECT_EQ(s.totals, (ParamCount{356624, 356234, 390}));
  std::int64_t row_sum = 0;
  for (const SummaryRow& r : s.rows) row_sum += r.params;
  EXPECT_EQ(row_sum, s.totals.total);
  EXPECT_NE(s.to_string().find("Total parameters: 356,624 (1.36 MB)"), std::string::npos);
}

TEST(ModelSummary, InvOnlyTotalAndFlattenWidth) {
  Rng rng(2);
  const Model m = build_model(ModelVariant::inv_only(), rng);
  const ModelSummary s = summarize(m);
  EXPECT_EQ(s.totals.total, 885200);
  bool found_flatten = false;
  for (const SummaryRow& r : s.rows) {
    if (r.layer_type == "Flatten") {
      EXPECT_EQ(r.output_shape, (Shape{6912}));
      found_flatten = true;
    }
  }
  EXPECT_TRUE(found_flatten);
}

TEST(ModelZoo, HybridFamilyTotalsAndForwardShape) {
  for (int n = 0; n <= kMaxInvolutionLayers; ++n) {
    Rng rng(static_cast<std::uint64_t>(n));
    Model m = build_model(ModelVariant::hybrid(n), rng);
    EXPECT_EQ(m.param_count().total, 356546 + 26 * n) << "n=" << n;
    const Tensor y = m.predict(random_tensor({1, 48, 48, 3}, rng, 0.0, 1.0));
    EXPECT_EQ(y.shape(), (Shape{1, 2})) << "n=" << n;
  }
}

TEST(ModelZoo, HybridZeroIsConvOnly) {
  EXPECT_EQ(ModelVariant::hybrid(0), ModelVariant::conv_only());
  Rng rng(3);
  const Model m = build_model(ModelVariant::hybrid(0), rng);
  EXPECT_EQ(m.layer(0).kind(), LayerKind::Conv2D);
  EXPECT_EQ(m.layer(0).param_count().total, 896);
}

TEST(ModelZoo, VariantParsingAndErrors) {
  EXPECT_EQ(ModelVariant::parse("hybrid(4)"), ModelVariant::hybrid(4));
  EXPECT_EQ(ModelVariant::parse("hybrid", 2), ModelVariant::hybrid(2));
  EXPECT_EQ(ModelVariant::parse("inv-only"), ModelVariant::inv_only());
  EXPECT_EQ(ModelVariant::parse("conv-only"), ModelVariant::conv_only());
  EXPECT_EQ(ModelVariant::hybrid(5).label(), "hybrid(5)");
  EXPECT_THROW(ModelVariant::hybrid(7), ArgumentError);
  EXPECT_THROW(ModelVariant::hybrid(-1), ArgumentError);
  EXPECT_THROW(ModelVariant::parse("resnet"), ArgumentError);
}

TEST(ModelZoo, SameSeedSameWeights) {
  Rng a(9), b(9);
  Model ma = build_model(ModelVariant::hybrid(3), a);
  Model mb = build_model(ModelVariant::hybrid(3), b);
  const auto pa = ma.parameters();
  const auto pb = mb.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].value, *pb[i].value);
}

TEST(ModelZoo, ParameterSlotsMatchCounts) {
  Rng rng(4);
  Model m = build_model(ModelVariant::hybrid(3), rng);
  ParamCount counted;
  for (const ParamSlot& s : m.parameters()) {
    const auto n = static_cast<std::int64_t>(s.value->size());
    counted.total += n;
    (s.trainable ? counted.trainable : counted.non_trainable) += n;
  }
  EXPECT_EQ(counted, m.param_count());
}

TEST(StorageSize, MegabytesFromParameterCount) {
  EXPECT_NEAR(storage_size_mb(356624), 1.3604, 5e-5);
  EXPECT_NEAR(storage_size_mb(885200), 3.3768, 5e-5);
  EXPECT_EQ(storage_size_mb(0), 0.0);
  EXPECT_EQ(std::round(storage_size_mb(356624) * 100.0) / 100.0, 1.36);
  EXPECT_EQ(std::round(storage_size_mb(885200) * 100.0) / 100.0, 3.38);
}

class ModelFile : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("invnet_model_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(ModelFile, RoundTripPreservesSummaryAndOutputs) {
  for (const ModelVariant& v : {ModelVariant::hybrid(3), ModelVariant::inv_only(), ModelVariant::conv_only()}) {
    Rng rng(5);
    Model m = build_model(v, rng);
    // Move BN running statistics off their defaults so they are exercised too.
    for (int step = 0; step < 2; ++step) m.forward(random_tensor({4, 48, 48, 3}, rng, 0.0, 1.0), Mode::Train, rng);
    const std::filesystem::path path = dir_ / "m.ivcn";
    save_model(m, path);
    Model loaded = load_model(path);
    EXPECT_EQ(loaded.variant(), v);
    EXPECT_EQ(summarize(loaded).to_string(), summarize(m).to_string());
    const Tensor x = random_tensor({2, 48, 48, 3}, rng, 0.0, 1.0);
    const Tensor a = m.predict(x);
    const Tensor b = loaded.predict(x);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
    auto pa = m.parameters();
    auto pb = loaded.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t s = 0; s < pa.size(); ++s) {
      ASSERT_EQ(pa[s].name, pb[s].name);
      for (std::size_t i = 0; i < pa[s].value->size(); ++i)
        ASSERT_EQ(static_cast<double>(static_cast<float>((*pa[s].value)[i])), (*pb[s].value)[i]);
    }
  }
}

TEST_F(ModelFile, PayloadIsFourBytesPerParameterPlusHeader) {
  Rng rng(6);
  const Model m = build_model(ModelVariant::hybrid(3), rng);
  const std::vector<std::uint8_t> bytes = serialize_model(m);
  // Header and per-layer/per-tensor metadata, counted independently from the layout.
  std::size_t meta = 4 + 4 + 1 + 1 + 2;
  Model copy = m;
  for (std::size_t l = 0; l < copy.layer_count(); ++l) {
    meta += 2 + copy.layer(l).name().size() + 2;
    for (const ParamSlot& s : copy.layer(l).parameters()) meta += 1 + 4 * s.value->rank();
  }
  EXPECT_EQ(bytes.size(), 356624u * 4u + meta);
  EXPECT_EQ(bytes[0], 'I');
  EXPECT_EQ(bytes[1], 'V');
  EXPECT_EQ(bytes[2], 'C');
  EXPECT_EQ(bytes[3], 'N');
  save_model(m, dir_ / "m.ivcn");
  EXPECT_EQ(std::filesystem::file_size(dir_ / "m.ivcn"), bytes.size());
}

TEST_F(ModelFile, TruncatedFileIsFormatError) {
  Rng rng(7);
  const std::vector<std::uint8_t> bytes = serialize_model(build_model(ModelVariant::hybrid(1), rng));
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{11}, std::size_t{40}, bytes.size() / 2,
                           bytes.size() - 1}) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    EXPECT_THROW(deserialize_model(cut), FormatError) << "kept " << keep;
  }
  const std::filesystem::path path = dir_ / "cut.ivcn";
  {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() / 3));
  }
  EXPECT_THROW(load_model(path), FormatError);
}

TEST_F(ModelFile, CorruptHeaderNamesTheField) {
  Rng rng(8);
  const std::vector<std::uint8_t> good = serialize_model(build_model(ModelVariant::hybrid(2), rng));
  auto field_of = [](const std::vector<std::uint8_t>& bytes) -> std::string {
    try {
      deserialize_model(bytes);
    } catch (const FormatError& e) {
      return e.field();
    }
    return "";
  };
  std::vector<std::uint8_t> bad = good;
  bad[0] = 'X';
  EXPECT_EQ(field_of(bad), "magic");
  bad = good;
  bad[4] = 2;
  EXPECT_EQ(field_of(bad), "version");
  bad = good;
  bad.push_back(0);
  EXPECT_EQ(field_of(bad), "trailer");
  EXPECT_THROW(load_model(dir_ / "missing.ivcn"), DataError);
}

}  // namespace
}  // namespace invnet

namespace invnet {
namespace {

// End-to-end gradient of the softmax cross-entropy through every layer
// wrapper, checked on a sample of elements of every trainable slot.
TEST(ModelGradients, BackwardMatchesFiniteDifferences) {
  for (const ModelVariant& v : {ModelVariant::hybrid(0), ModelVariant::hybrid(2), ModelVariant::inv_only()}) {
    Rng rng(21);
    Model m = build_model(v, rng);
    // Zero-initialized biases put many pre-activations exactly on the ReLU
    // kink, where central differences straddle two slopes.
    for (const ParamSlot& s : m.parameters())
      if (s.trainable && (s.name.ends_with("bias") || s.name.ends_with("bias1") || s.name.ends_with("beta")))
        *s.value = random_tensor(s.value->shape(), rng, 0.05, 0.2);
    const Tensor x = random_tensor({3, 48, 48, 3}, rng, 0.0, 1.0);
    const Tensor labels = one_hot({0, 1, 1}, 2);
    const Rng dropout_seed(5);
    // A short step keeps the perturbation from crossing ReLU kinks or
    // max-pool switches among the thousands of units it touches.
    const double kStep = 1e-7;
    auto loss = [&] {
      Rng r = dropout_seed;
      Model scratch = m;
      return softmax_xent(scratch.forward(x, Mode::Train, r), labels).loss;
    };
    Rng r = dropout_seed;
    Model probe = m;
    probe.backward(softmax_xent(probe.forward(x, Mode::Train, r), labels).dlogits);
    auto analytic = probe.parameters();
    auto params = m.parameters();
    ASSERT_EQ(analytic.size(), params.size());
    for (std::size_t s = 0; s < params.size(); ++s) {
      if (!params[s].trainable) continue;
      Tensor& p = *params[s].value;
      const Tensor& g = *analytic[s].grad;
      for (int k = 0; k < 6; ++k) {
        const std::size_t i = rng.below(p.size());
        const double saved = p[i];
        p[i] = saved + kStep;
        const double up = loss();
        p[i] = saved - kStep;
        const double down = loss();
        p[i] = saved;
        const double numeric = (up - down) / (2.0 * kStep);
        // Biases followed by batch norm have exactly zero gradient; the
        // absolute term covers the difference quotient's round-off there.
        EXPECT_LE(std::abs(g[i] - numeric), testing::kRelTolerance * std::max(std::abs(g[i]), std::abs(numeric)) + 1e-7)
            << v.label() << " " << params[s].name << "[" << i << "] analytic " << g[i] << " numeric " << numeric;
      }
    }
  }
}

}  // namespace
}  // namespace invnet
