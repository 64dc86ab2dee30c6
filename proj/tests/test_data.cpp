#include <gtest/gtest.h>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "invnet/data.hpp"
#include "invnet/error.hpp"
#include "invnet/image_io.hpp"
#include "invnet/rng.hpp"
#include "support/gradcheck.hpp"

namespace invnet {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / (std::string("invnet_data_") +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

void write_png_rgb(const fs::path& path, int width, int height, std::uint8_t value) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width * height * 3), value);
  ASSERT_NE(png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr), 0);
}

Dataset unsplit(std::size_t n) {
  Dataset ds;
  for (std::size_t k = 0; k < n; ++k) {
    Item it;
    it.image = Tensor({48, 48, 3}, static_cast<double>(k % 7) / 7.0);
    it.label = k % 3 == 0 ? Label::TD : Label::ASD;
    it.source = std::to_string(k);
    ds.items.push_back(std::move(it));
  }
  return ds;
}

// ---------------------------------------------------------------- loading

TEST_F(TempDir, LoadsPngPerClassWithLabels) {
  fs::create_directories(root_ / "ASD");
  fs::create_directories(root_ / "TD");
  write_png_rgb(root_ / "ASD" / "b.png", 64, 64, 255);
  write_png_rgb(root_ / "ASD" / "a.png", 48, 48, 0);
  write_png_rgb(root_ / "TD" / "x.png", 20, 30, 128);
  write_png_rgb(root_ / "TD" / "y.png", 100, 50, 51);
  const Dataset ds = load_directory(root_);
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.count(Label::ASD), 2u);
  EXPECT_EQ(ds.count(Label::TD), 2u);
  // Lexicographic order inside each class.
  EXPECT_EQ(fs::path(ds.items[0].source).filename(), "a.png");
  EXPECT_EQ(ds.items[0].image[0], 0.0);
  EXPECT_EQ(ds.items[1].image[0], 1.0);
  for (const Item& it : ds.items) {
    EXPECT_EQ(it.image.shape(), (Shape{48, 48, 3}));
    EXPECT_EQ(it.split, Split::Unassigned);
  }
  EXPECT_NEAR(ds.items[2].image[100], 128.0 / 255.0, 1e-12);
}

TEST_F(TempDir, UndecodableFilesAreSkippedWithWarning) {
  fs::create_directories(root_ / "ASD");
  fs::create_directories(root_ / "TD");
  write_png_rgb(root_ / "ASD" / "ok.png", 48, 48, 10);
  write_png_rgb(root_ / "TD" / "ok.png", 48, 48, 20);
  std::ofstream(root_ / "TD" / "broken.png") << "not a png";
  std::vector<std::string> warnings;
  const Dataset ds = load_directory(root_, [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(ds.size(), 2u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("broken.png"), std::string::npos);
}

TEST_F(TempDir, EmptyClassIsErrorNamingTheClass) {
  fs::create_directories(root_ / "ASD");
  fs::create_directories(root_ / "TD");
  write_png_rgb(root_ / "TD" / "ok.png", 48, 48, 20);
  try {
    load_directory(root_);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ASD"), std::string::npos);
  }
}

TEST_F(TempDir, MissingRootOrClassDirectoryIsDataError) {
  EXPECT_THROW(load_directory(root_ / "missing"), DataError);
  fs::create_directories(root_ / "ASD");
  write_png_rgb(root_ / "ASD" / "ok.png", 48, 48, 20);
  EXPECT_THROW(load_directory(root_), DataError);
}

TEST_F(TempDir, SyntheticExportRoundTripsThroughLoader) {
  Rng rng(3);
  SyntheticSpec spec;
  spec.per_class = 4;
  const Dataset ds = generate_synthetic(spec, rng);
  export_dataset(ds, root_);
  const Dataset back = load_directory(root_);
  ASSERT_EQ(back.size(), 8u);
  EXPECT_EQ(back.count(Label::ASD), 4u);
  std::size_t asd_seen = 0;
  for (const Item& original : ds.items) {
    if (original.label != Label::ASD) continue;
    const Item& loaded = back.items[asd_seen++];
    for (std::size_t i = 0; i < original.image.size(); ++i)
      ASSERT_NEAR(loaded.image[i], original.image[i], 0.5 / 255.0 + 1e-12);
  }
}

TEST_F(TempDir, PpmReaderHandlesSixteenBitAndGray) {
  {
    std::ofstream out(root_ / "g.pgm", std::ios::binary);
    out << "P5\n# comment\n2 1\n255\n";
    out.put(static_cast<char>(0)).put(static_cast<char>(255));
  }
  const Tensor g = read_image(root_ / "g.pgm");
  EXPECT_EQ(g.shape(), (Shape{1, 2, 3}));
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[5], 1.0);
  {
    std::ofstream out(root_ / "w.ppm", std::ios::binary);
    out << "P6 1 1 65535\n";
    for (int c = 0; c < 3; ++c) out.put(static_cast<char>(0x80)).put(static_cast<char>(0x00));
  }
  EXPECT_NEAR(read_image(root_ / "w.ppm")[0], 32768.0 / 65535.0, 1e-12);
}

// ---------------------------------------------------------------- resize

TEST(Resize, IdentityIsBitExact) {
  Rng rng(4);
  const Tensor img = random_tensor({48, 48, 3}, rng, 0.0, 1.0);
  EXPECT_EQ(resize_bilinear(img, 48, 48), img);
}

TEST(Resize, ConstantStaysConstant) {
  for (auto [h, w] : {std::pair{7, 13}, std::pair{100, 60}, std::pair{1, 1}}) {
    const Tensor img({h, w, 3}, 0.37);
    const Tensor out = resize_bilinear(img, 48, 48);
    for (double v : out.data()) ASSERT_EQ(v, 0.37);
  }
}

TEST(Resize, CheckerboardKeepsRangeAndMean) {
  Tensor img({96, 96, 3});
  double in_mean = 0.0;
  for (std::int64_t i = 0; i < 96; ++i)
    for (std::int64_t j = 0; j < 96; ++j)
      for (std::int64_t c = 0; c < 3; ++c) {
        const double v = ((i / 8 + j / 8) % 2 == 0) ? 1.0 : 0.0;
        img[static_cast<std::size_t>((i * 96 + j) * 3 + c)] = v;
        in_mean += v;
      }
  in_mean /= static_cast<double>(img.size());
  const Tensor out = resize_bilinear(img, 48, 48);
  double out_mean = 0.0;
  for (double v : out.data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
    out_mean += v;
  }
  out_mean /= static_cast<double>(out.size());
  EXPECT_LT(std::abs(out_mean - in_mean), 0.02 * in_mean);
}

TEST(Resize, StaysWithinInputRange) {
  Rng rng(5);
  const Tensor img = random_tensor({31, 77, 3}, rng, 0.2, 0.6);
  const Tensor out = resize_bilinear(img, 48, 48);
  for (double v : out.data()) {
    ASSERT_GE(v, 0.2);
    ASSERT_LE(v, 0.6);
  }
}

// ---------------------------------------------------------------- split

TEST(Split, SizesFollowFloorArithmetic) {
  const SplitSizes a = split_sizes(100);
  EXPECT_EQ(a.train, 80u);
  EXPECT_EQ(a.val, 10u);
  EXPECT_EQ(a.test, 10u);
  const SplitSizes b = split_sizes(547);
  EXPECT_EQ(b.train, 439u);
  EXPECT_EQ(b.val, 54u);
  EXPECT_EQ(b.test, 54u);
  for (std::size_t n = 10; n < 300; ++n) {
    const SplitSizes s = split_sizes(n);
    EXPECT_EQ(s.train + s.val + s.test, n);
    EXPECT_EQ(s.val, n / 10);
    EXPECT_EQ(s.test, n / 10);
  }
  EXPECT_THROW(split_dataset(unsplit(9), 1), DataError);
}

TEST(Split, SeededAndComplete) {
  const Dataset a = split_dataset(unsplit(547), 7);
  const Dataset b = split_dataset(unsplit(547), 7);
  const Dataset c = split_dataset(unsplit(547), 8);
  EXPECT_EQ(a.count(Split::Train), 439u);
  EXPECT_EQ(a.count(Split::Val), 54u);
  EXPECT_EQ(a.count(Split::Test), 54u);
  EXPECT_EQ(a.count(Split::Unassigned), 0u);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a.items[i].source == b.items[i].source && a.items[i].split == b.items[i].split;
    differs = differs || a.items[i].split != c.items[i].split || a.items[i].source != c.items[i].source;
  }
  EXPECT_TRUE(same);
  EXPECT_TRUE(differs);
  std::set<std::string> sources;
  for (const Item& it : a.items) sources.insert(it.source);
  EXPECT_EQ(sources.size(), 547u);
}

// ---------------------------------------------------------------- augment

TEST(Augment, TrainOnlyQuadruplesTrainSplit) {
  Rng rng(6);
  const Dataset split = split_dataset(unsplit(547), 1);
  const Dataset aug = augment_dataset(split, AugmentSpec{}, rng);
  EXPECT_EQ(aug.count(Split::Train), 1756u);
  EXPECT_EQ(aug.count(Split::Val), 54u);
  EXPECT_EQ(aug.count(Split::Test), 54u);
  for (const Item& it : aug.items) {
    if (it.provenance == Provenance::Augmented) {
      EXPECT_EQ(it.split, Split::Train);
    }
    ASSERT_EQ(it.image.shape(), (Shape{48, 48, 3}));
    for (double v : it.image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Augment, AugmentBeforeSplitQuadruplesWholeDataset) {
  Rng rng(7);
  const Dataset aug = augment_all(unsplit(547), AugmentSpec{}, rng);
  EXPECT_EQ(aug.size(), 2188u);
  EXPECT_EQ(split_dataset(aug, 2).count(Split::Train), 2188u - 2u * 218u);
}

TEST(Augment, IdentityParametersReproduceImage) {
  Rng rng(8);
  const Tensor img = random_tensor({48, 48, 3}, rng, 0.0, 1.0);
  const Tensor out = affine_augment(img, AffineParams{});
  for (std::size_t i = 0; i < img.size(); ++i) ASSERT_NEAR(out[i], img[i], 1e-9);
}

TEST(Augment, WidthShiftMovesColumnsAndZeroFills) {
  Tensor img({48, 48, 3});
  for (std::int64_t i = 0; i < 48; ++i)
    for (std::int64_t j = 0; j < 48; ++j)
      for (std::int64_t c = 0; c < 3; ++c) img[static_cast<std::size_t>((i * 48 + j) * 3 + c)] = j == 10 ? 1.0 : 0.5;
  // A whole-pixel shift (0.125 * 48 = 6) keeps samples on the grid.
  const Tensor out = affine_augment(img, AffineParams{0.0, 0.0, 0.125});
  for (std::int64_t i = 0; i < 48; ++i) {
    EXPECT_NEAR(out[static_cast<std::size_t>((i * 48 + 16) * 3)], 1.0, 1e-9);
    EXPECT_NEAR(out[static_cast<std::size_t>((i * 48 + 2) * 3)], 0.0, 1e-9);
  }
}

TEST(Augment, SampledParametersStayInRange) {
  Rng rng(9);
  const AugmentSpec spec;
  for (int k = 0; k < 1000; ++k) {
    const AffineParams p = sample_affine(spec, rng);
    ASSERT_LE(std::abs(p.rotation_deg), 20.0);
    ASSERT_LE(std::abs(p.shear), 0.2);
    ASSERT_LE(std::abs(p.width_shift_frac), 0.1);
  }
}

// ---------------------------------------------------------------- synthetic

TEST(Synthetic, CountsDeterminismAndRange) {
  SyntheticSpec spec;
  Rng a(7), b(7);
  const Dataset da = generate_synthetic(spec, a);
  const Dataset db = generate_synthetic(spec, b);
  ASSERT_EQ(da.size(), 500u);
  EXPECT_EQ(da.count(Label::ASD), 250u);
  EXPECT_EQ(da.count(Label::TD), 250u);
  for (std::size_t i = 0; i < da.size(); ++i) {
    ASSERT_EQ(da.items[i].image, db.items[i].image);
    ASSERT_EQ(da.items[i].image.shape(), (Shape{48, 48, 3}));
    for (double v : da.items[i].image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

// Radial second moment of intensity about the intensity centroid, computed
// without the library's dispersion helper.
double radial_moment(const Tensor& img) {
  const std::int64_t h = img.dim(0), w = img.dim(1);
  double mass = 0.0, ci = 0.0, cj = 0.0;
  for (std::int64_t i = 0; i < h; ++i)
    for (std::int64_t j = 0; j < w; ++j) {
      double v = 0.0;
      for (std::int64_t c = 0; c < 3; ++c) v += img[static_cast<std::size_t>((i * w + j) * 3 + c)];
      mass += v;
      ci += v * static_cast<double>(i);
      cj += v * static_cast<double>(j);
    }
  ci /= mass;
  cj /= mass;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < h; ++i)
    for (std::int64_t j = 0; j < w; ++j) {
      double v = 0.0;
      for (std::int64_t c = 0; c < 3; ++c) v += img[static_cast<std::size_t>((i * w + j) * 3 + c)];
      m2 += v * ((static_cast<double>(i) - ci) * (static_cast<double>(i) - ci) +
                 (static_cast<double>(j) - cj) * (static_cast<double>(j) - cj));
    }
  return m2 / mass;
}

TEST(Synthetic, AsdIsMoreDispersedThanTd) {
  Rng rng(7);
  const Dataset ds = generate_synthetic(SyntheticSpec{}, rng);
  double asd = 0.0, td = 0.0;
  for (const Item& it : ds.items) (it.label == Label::ASD ? asd : td) += radial_moment(it.image);
  EXPECT_GT(asd / 250.0, td / 250.0);
  const ClassMeans means = class_mean_images(ds);
  EXPECT_GT(means.dispersion_asd, means.dispersion_td);
  EXPECT_EQ(means.count_asd, 250u);
  EXPECT_NEAR(intensity_dispersion(means.mean_td), radial_moment(means.mean_td), 1e-6);
}

// ---------------------------------------------------------------- class means

TEST(ClassMeans, IdenticalImagesAndHalfway) {
  Rng rng(10);
  const Tensor img = random_tensor({48, 48, 3}, rng, 0.0, 1.0);
  Dataset ds;
  for (int k = 0; k < 3; ++k) ds.items.push_back(Item{img, Label::ASD, Split::Unassigned, Provenance::Original, ""});
  ds.items.push_back(Item{Tensor({48, 48, 3}, 0.0), Label::TD, Split::Unassigned, Provenance::Original, ""});
  ds.items.push_back(Item{Tensor({48, 48, 3}, 1.0), Label::TD, Split::Unassigned, Provenance::Original, ""});
  const ClassMeans m = class_mean_images(ds);
  for (std::size_t i = 0; i < img.size(); ++i) ASSERT_NEAR(m.mean_asd[i], img[i], 1e-15);
  for (double v : m.mean_td.data()) ASSERT_EQ(v, 0.5);
  ds.items.pop_back();
  ds.items.pop_back();
  EXPECT_THROW(class_mean_images(ds), DataError);
}

TEST(Batching, StackAndLabels) {
  const Dataset ds = unsplit(5);
  const Tensor x = stack_images(ds, {4, 0});
  EXPECT_EQ(x.shape(), (Shape{2, 48, 48, 3}));
  EXPECT_EQ(x[0], ds.items[4].image[0]);
  EXPECT_EQ(labels_of(ds, {3, 1}), (std::vector<int>{1, 0}));
}

}  // namespace
}  // namespace invnet
