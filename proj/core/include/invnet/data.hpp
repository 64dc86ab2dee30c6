#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "invnet/tensor.hpp"

namespace invnet {

class Rng;

/// Class index; ASD is index 0 and the positive class.
enum class Label : int { ASD = 0, TD = 1 };
enum class Split : std::uint8_t { Unassigned, Train, Val, Test };
enum class Provenance : std::uint8_t { Original, Augmented };

inline constexpr std::array<std::string_view, 2> kClassNames = {"ASD", "TD"};

std::string_view split_name(Split split);

struct Item {
  Tensor image;  // (48, 48, 3), values in [0, 1]
  Label label = Label::ASD;
  Split split = Split::Unassigned;
  Provenance provenance = Provenance::Original;
  std::string source;
};

struct Dataset {
  std::vector<Item> items;

  std::size_t size() const noexcept { return items.size(); }
  std::size_t count(Split split) const;
  std::size_t count(Label label) const;
  std::vector<std::size_t> indices(Split split) const;
};

using WarningSink = std::function<void(const std::string&)>;

/// Reads root/ASD/* and root/TD/* (PNG or PPM), resizing to 48x48.
/// Files are visited in lexicographic order. Undecodable files are reported
/// through `warn` and skipped. Throws DataError for a missing or empty class.
Dataset load_directory(const std::filesystem::path& root, const WarningSink& warn = {});

/// Appends the items of `more` to `into`.
void merge_datasets(Dataset& into, Dataset more);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// 80:10:10: val = test = floor(N / 10), train = the rest.
SplitSizes split_sizes(std::size_t n);

/// Seeded, unstratified random assignment of every item to train/val/test.
Dataset split_dataset(Dataset ds, std::uint64_t seed);

struct AugmentSpec {
  double rotation_max_deg = 20.0;
  double shear_max = 0.2;
  double width_shift_max_frac = 0.1;
  int copies = 3;
};

struct AffineParams {
  double rotation_deg = 0.0;
  double shear = 0.0;
  double width_shift_frac = 0.0;
};

/// Rotation about the image centre, horizontal shear and horizontal shift,
/// resampled bilinearly with zero fill outside the source.
Tensor affine_augment(const Tensor& image, const AffineParams& params);

AffineParams sample_affine(const AugmentSpec& spec, Rng& rng);

/// Adds spec.copies augmented copies of every train item (train x4 by
/// default). Val and test items are untouched.
Dataset augment_dataset(const Dataset& ds, const AugmentSpec& spec, Rng& rng);

/// Augments every item regardless of split, for splitting afterwards.
Dataset augment_all(const Dataset& ds, const AugmentSpec& spec, Rng& rng);

/// Scanpath-like stand-in data: TD images hold one concentrated fixation blob
/// near the centre; ASD images hold 4-7 dispersed blobs joined by trace lines.
struct SyntheticSpec {
  int per_class = 250;
  std::int64_t image_size = 48;
  double td_center_jitter = 4.0;
  double sigma_min = 2.0;
  double sigma_max = 4.0;
  int asd_blobs_min = 4;
  int asd_blobs_max = 7;
  double trace_intensity = 0.35;
  double noise_stddev = 0.02;
};

Dataset generate_synthetic(const SyntheticSpec& spec, Rng& rng);

/// Writes root/ASD/NNNN.ppm and root/TD/NNNN.ppm.
void export_dataset(const Dataset& ds, const std::filesystem::path& root);

struct ClassMeans {
  Tensor mean_asd;
  Tensor mean_td;
  double dispersion_asd = 0.0;
  double dispersion_td = 0.0;
  std::size_t count_asd = 0;
  std::size_t count_td = 0;
};

/// Pixel-wise class means and their intensity dispersion.
ClassMeans class_mean_images(const Dataset& ds);

/// Intensity-weighted mean squared distance (px^2) from the intensity
/// centroid, on the channel-averaged image. 0 for an all-zero image.
double intensity_dispersion(const Tensor& image);

/// Stacks the images at `indices` into (N, H, W, C) plus class indices.
Tensor stack_images(const Dataset& ds, const std::vector<std::size_t>& indices);
std::vector<int> labels_of(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace invnet
