#include "invnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "invnet/error.hpp"
#include "invnet/image_io.hpp"
#include "invnet/rng.hpp"

namespace invnet {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kSide = 48;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

void load_class(const fs::path& root, Label label, Dataset& ds, const WarningSink& warn) {
  const std::string name(kClassNames[static_cast<int>(label)]);
  const fs::path dir = root / name;
  if (!fs::is_directory(dir)) throw DataError("missing class directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = lower(entry.path().extension().string());
    if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t loaded = 0;
  for (const auto& f : files) {
    Tensor image;
    try {
      image = read_image(f);
    } catch (const FormatError& e) {
      if (warn) warn("skipping " + f.string() + ": " + e.what());
      continue;
    }
    Item item;
    item.image = resize_bilinear(image, kSide, kSide);
    item.label = label;
    item.source = f.string();
    ds.items.push_back(std::move(item));
    ++loaded;
  }
  if (loaded == 0) throw DataError("class " + name + " has no decodable images in " + dir.string());
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [&](const Item& i) { return i.split == split; }));
}

std::size_t Dataset::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [&](const Item& i) { return i.label == label; }));
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == split) out.push_back(i);
  return out;
}

Dataset load_directory(const fs::path& root, const WarningSink& warn) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  Dataset ds;
  load_class(root, Label::ASD, ds, warn);
  load_class(root, Label::TD, ds, warn);
  return ds;
}

void merge_datasets(Dataset& into, Dataset more) {
  into.items.insert(into.items.end(), std::make_move_iterator(more.items.begin()),
                    std::make_move_iterator(more.items.end()));
}

SplitSizes split_sizes(std::size_t n) {
  SplitSizes s;
  s.val = n / 10;
  s.test = n / 10;
  s.train = n - s.val - s.test;
  return s;
}

Dataset split_dataset(Dataset ds, std::uint64_t seed) {
  if (ds.size() < 10) throw DataError("need at least 10 items to split, got " + std::to_string(ds.size()));
  const SplitSizes sizes = split_sizes(ds.size());
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(seed).derive("split");
  shuffle(order, rng);
  for (std::size_t k = 0; k < order.size(); ++k) {
    Split s = Split::Train;
    if (k < sizes.val) {
      s = Split::Val;
    } else if (k < sizes.val + sizes.test) {
      s = Split::Test;
    }
    ds.items[order[k]].split = s;
  }
  return ds;
}

// ---------------------------------------------------------------- augmentation

Tensor affine_augment(const Tensor& image, const AffineParams& params) {
  if (image.rank() != 3) throw ShapeError("affine_augment expects (H, W, C), got " + shape_string(image.shape()));
  const auto h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const double cx = static_cast<double>(w - 1) / 2.0, cy = static_cast<double>(h - 1) / 2.0;
  const double theta = params.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double shift = params.width_shift_frac * static_cast<double>(w);

  // Forward map p' = R * S * (p - c) + c + t with S = [[1, shear], [0, 1]];
  // each output pixel samples the source at S^-1 R^-1 (p' - c - t) + c.
  Tensor out(image.shape());
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      const double dx = static_cast<double>(j) - cx - shift;
      const double dy = static_cast<double>(i) - cy;
      const double rx = cos_t * dx + sin_t * dy;
      const double ry = -sin_t * dx + cos_t * dy;
      const double sx = rx - params.shear * ry + cx;
      const double sy = ry + cy;
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const auto y0 = static_cast<std::int64_t>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      const double weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double v = 0.0;
        for (int q = 0; q < 4; ++q) {
          if (weights[q] == 0.0 || xs[q] < 0 || xs[q] >= w || ys[q] < 0 || ys[q] >= h) continue;
          v += weights[q] * image[static_cast<std::size_t>((ys[q] * w + xs[q]) * c + ch)];
        }
        out[static_cast<std::size_t>((i * w + j) * c + ch)] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

AffineParams sample_affine(const AugmentSpec& spec, Rng& rng) {
  AffineParams p;
  p.rotation_deg = rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg);
  p.shear = rng.uniform(-spec.shear_max, spec.shear_max);
  p.width_shift_frac = rng.uniform(-spec.width_shift_max_frac, spec.width_shift_max_frac);
  return p;
}

namespace {

Dataset augment_where(const Dataset& ds, const AugmentSpec& spec, Rng& rng, bool train_only) {
  if (spec.copies < 0) throw ArgumentError("augmentation copies must be >= 0");
  Dataset out = ds;
  for (const Item& item : ds.items) {
    if (item.provenance == Provenance::Augmented) continue;
    if (train_only && item.split != Split::Train) continue;
    for (int k = 0; k < spec.copies; ++k) {
      Item copy;
      copy.image = affine_augment(item.image, sample_affine(spec, rng));
      copy.label = item.label;
      copy.split = item.split;
      copy.provenance = Provenance::Augmented;
      copy.source = item.source + "#aug" + std::to_string(k + 1);
      out.items.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace

Dataset augment_dataset(const Dataset& ds, const AugmentSpec& spec, Rng& rng) {
  return augment_where(ds, spec, rng, true);
}

Dataset augment_all(const Dataset& ds, const AugmentSpec& spec, Rng& rng) {
  Dataset out = augment_where(ds, spec, rng, false);
  for (auto& item : out.items) item.split = Split::Unassigned;
  return out;
}

// ---------------------------------------------------------------- synthetic

namespace {

struct Blob {
  double x, y, sigma;
};

void add_blob(std::vector<double>& field, std::int64_t side, const Blob& b) {
  const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
  for (std::int64_t i = 0; i < side; ++i) {
    for (std::int64_t j = 0; j < side; ++j) {
      const double dx = static_cast<double>(j) - b.x, dy = static_cast<double>(i) - b.y;
      field[static_cast<std::size_t>(i * side + j)] += std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
}

void add_trace(std::vector<double>& field, std::int64_t side, const Blob& a, const Blob& b, double intensity) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  std::vector<bool> touched(field.size(), false);
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const auto x = static_cast<std::int64_t>(std::lround(a.x + t * (b.x - a.x)));
    const auto y = static_cast<std::int64_t>(std::lround(a.y + t * (b.y - a.y)));
    if (x < 0 || x >= side || y < 0 || y >= side) continue;
    const auto at = static_cast<std::size_t>(y * side + x);
    if (!touched[at]) {
      field[at] += intensity;
      touched[at] = true;
    }
  }
}

Tensor render(const std::vector<double>& field, std::int64_t side, double noise, Rng& rng) {
  // Fixed warm tint shared by both classes so colour carries no label signal.
  constexpr double kTint[3] = {1.0, 0.8, 0.55};
  Tensor img({side, side, 3});
  for (std::size_t p = 0; p < field.size(); ++p) {
    const double base = field[p] + noise * rng.normal();
    for (int c = 0; c < 3; ++c) img[p * 3 + static_cast<std::size_t>(c)] = std::clamp(base * kTint[c], 0.0, 1.0);
  }
  return img;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  if (spec.per_class < 1) throw ArgumentError("synthetic per-class count must be >= 1");
  const auto side = spec.image_size;
  const double centre = static_cast<double>(side - 1) / 2.0;
  const double margin = 4.0;
  Dataset ds;
  ds.items.reserve(static_cast<std::size_t>(spec.per_class) * 2);
  for (int k = 0; k < spec.per_class; ++k) {
    for (Label label : {Label::ASD, Label::TD}) {
      std::vector<double> field(static_cast<std::size_t>(side * side), 0.0);
      if (label == Label::TD) {
        const Blob b{centre + rng.uniform(-spec.td_center_jitter, spec.td_center_jitter),
                     centre + rng.uniform(-spec.td_center_jitter, spec.td_center_jitter),
                     rng.uniform(spec.sigma_min, spec.sigma_max)};
        add_blob(field, side, b);
      } else {
        const auto count = rng.between(spec.asd_blobs_min, spec.asd_blobs_max);
        std::vector<Blob> blobs;
        for (std::int64_t n = 0; n < count; ++n) {
          blobs.push_back({rng.uniform(margin, static_cast<double>(side - 1) - margin),
                           rng.uniform(margin, static_cast<double>(side - 1) - margin),
                           rng.uniform(spec.sigma_min, spec.sigma_max)});
        }
        for (const Blob& b : blobs) add_blob(field, side, b);
        for (std::size_t n = 1; n < blobs.size(); ++n) add_trace(field, side, blobs[n - 1], blobs[n], spec.trace_intensity);
      }
      Item item;
      item.image = render(field, side, spec.noise_stddev, rng);
      item.label = label;
      item.source = std::string("synthetic/") + std::string(kClassNames[static_cast<int>(label)]) + "/" + std::to_string(k);
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

void export_dataset(const Dataset& ds, const fs::path& root) {
  std::size_t counters[2] = {0, 0};
  for (auto name : kClassNames) fs::create_directories(root / std::string(name));
  for (const Item& item : ds.items) {
    const int cls = static_cast<int>(item.label);
    char file[32];
    std::snprintf(file, sizeof file, "%05zu.ppm", counters[cls]++);
    write_ppm(root / std::string(kClassNames[cls]) / file, item.image);
  }
}

// ---------------------------------------------------------------- mean images

double intensity_dispersion(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("intensity_dispersion expects (H, W, C)");
  const auto h = image.dim(0), w = image.dim(1), c = image.dim(2);
  double mass = 0.0, mx = 0.0, my = 0.0;
  std::vector<double> gray(static_cast<std::size_t>(h * w), 0.0);
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      double g = 0.0;
      for (std::int64_t ch = 0; ch < c; ++ch) g += image[static_cast<std::size_t>((i * w + j) * c + ch)];
      g /= static_cast<double>(c);
      gray[static_cast<std::size_t>(i * w + j)] = g;
      mass += g;
      mx += g * static_cast<double>(j);
      my += g * static_cast<double>(i);
    }
  }
  if (mass <= 0.0) return 0.0;
  mx /= mass;
  my /= mass;
  double second = 0.0;
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      const double dx = static_cast<double>(j) - mx, dy = static_cast<double>(i) - my;
      second += gray[static_cast<std::size_t>(i * w + j)] * (dx * dx + dy * dy);
    }
  }
  return second / mass;
}

ClassMeans class_mean_images(const Dataset& ds) {
  ClassMeans m;
  Tensor* sums[2] = {&m.mean_asd, &m.mean_td};
  std::size_t* counts[2] = {&m.count_asd, &m.count_td};
  for (const Item& item : ds.items) {
    const int cls = static_cast<int>(item.label);
    if (sums[cls]->empty()) *sums[cls] = Tensor(item.image.shape());
    if (sums[cls]->shape() != item.image.shape()) throw ShapeError("class images differ in shape");
    for (std::size_t i = 0; i < item.image.size(); ++i) (*sums[cls])[i] += item.image[i];
    ++*counts[cls];
  }
  for (int cls = 0; cls < 2; ++cls) {
    if (*counts[cls] == 0) throw DataError("class " + std::string(kClassNames[cls]) + " is empty");
    for (double& v : sums[cls]->data()) v /= static_cast<double>(*counts[cls]);
  }
  m.dispersion_asd = intensity_dispersion(m.mean_asd);
  m.dispersion_td = intensity_dispersion(m.mean_td);
  return m;
}

Tensor stack_images(const Dataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("cannot stack an empty selection");
  const Shape& one = ds.items.at(indices.front()).image.shape();
  Tensor batch({static_cast<std::int64_t>(indices.size()), one[0], one[1], one[2]});
  const std::size_t stride = ds.items[indices.front()].image.size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Tensor& img = ds.items.at(indices[k]).image;
    if (img.shape() != one) throw ShapeError("images in a batch differ in shape");
    std::copy(img.data().begin(), img.data().end(), batch.raw() + k * stride);
  }
  return batch;
}

std::vector<int> labels_of(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(static_cast<int>(ds.items.at(i).label));
  return out;
}

}  // namespace invnet
