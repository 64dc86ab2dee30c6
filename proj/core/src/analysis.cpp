#include "invnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include "json.hpp"

#include "invnet/error.hpp"
#include "invnet/image_io.hpp"
#include "invnet/model.hpp"
#include "invnet/rng.hpp"

namespace invnet {

KernelField involution_kernels_for(Model& model, const Tensor& image, std::size_t layer_index) {
  if (layer_index >= model.layer_count()) {
    throw ArgumentError("layer index " + std::to_string(layer_index) + " out of range (model has " +
                        std::to_string(model.layer_count()) + " layers)");
  }
  auto* inv = dynamic_cast<InvolutionLayer*>(&model.layer(layer_index));
  if (!inv) {
    throw ArgumentError("layer " + std::to_string(layer_index) + " (" + model.layer(layer_index).name() +
                        ") is not an involution layer");
  }
  if (image.rank() != 3) throw ShapeError("expected an (H, W, 3) image, got " + shape_string(image.shape()));
  model.predict(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}));
  return inv->last_kernels();
}

Tensor kernel_norm_map(const KernelField& kernels) {
  const Tensor& v = kernels.values;
  const auto h = v.dim(1), w = v.dim(2), depth = v.dim(3);
  Tensor out({h, w});
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      double sq = 0.0;
      for (std::int64_t d = 0; d < depth; ++d) sq += v.at(0, i, j, d) * v.at(0, i, j, d);
      out[static_cast<std::size_t>(i * w + j)] = std::sqrt(sq);
    }
  }
  return out;
}

Tensor minmax_to_bytes(const Tensor& values) {
  Tensor out(values.shape());
  const auto [lo, hi] = std::minmax_element(values.data().begin(), values.data().end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::round((values[i] - *lo) / span * 255.0);
  return out;
}

Tensor kernel_grid(const KernelField& kernels, int grid) {
  if (grid < 1) throw ArgumentError("grid size must be >= 1");
  const Tensor& v = kernels.values;
  const auto h = v.dim(1), w = v.dim(2);
  const auto k = static_cast<std::int64_t>(std::lround(std::sqrt(static_cast<double>(kernels.taps))));
  const std::int64_t side = grid * k + (grid - 1);
  Tensor out({side, side}, 255.0);
  auto position = [grid](int s, std::int64_t extent) {
    if (grid == 1) return (extent - 1) / 2;
    return static_cast<std::int64_t>(std::lround(static_cast<double>(s) * static_cast<double>(extent - 1) / (grid - 1)));
  };
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const auto pi = position(gy, h), pj = position(gx, w);
      Tensor tile({k, k});
      for (std::int64_t t = 0; t < k * k; ++t) tile[static_cast<std::size_t>(t)] = kernels.at(0, pi, pj, t, 0);
      const Tensor bytes = minmax_to_bytes(tile);
      for (std::int64_t u = 0; u < k; ++u) {
        for (std::int64_t q = 0; q < k; ++q) {
          const auto row = gy * (k + 1) + u, col = gx * (k + 1) + q;
          out[static_cast<std::size_t>(row * side + col)] = bytes[static_cast<std::size_t>(u * k + q)];
        }
      }
    }
  }
  return out;
}

void export_kernel_norm_map(Model& model, const Tensor& image, std::size_t layer_index,
                            const std::filesystem::path& out) {
  write_pgm(out, minmax_to_bytes(kernel_norm_map(involution_kernels_for(model, image, layer_index))));
}

void export_kernel_grid(Model& model, const Tensor& image, std::size_t layer_index, const std::filesystem::path& out,
                        int grid) {
  write_pgm(out, kernel_grid(involution_kernels_for(model, image, layer_index), grid));
}

// ---------------------------------------------------------------- report

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string report_json(const std::vector<ReportRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"dataset", r.dataset},
                   {"variant", r.variant},
                   {"accuracy", round2(r.metrics.accuracy)},
                   {"recall", round2(r.metrics.recall)},
                   {"f1", round2(r.metrics.f1)},
                   {"params", r.params},
                   {"size_mb", round2(r.size_mb)}});
  }
  return arr.dump(2) + "\n";
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "dataset,variant,accuracy,recall,f1,params,size_mb\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%s,%.2f,%.2f,%.2f,%lld,%.2f\n", r.dataset.c_str(), r.variant.c_str(),
                  r.metrics.accuracy, r.metrics.recall, r.metrics.f1, static_cast<long long>(r.params), r.size_mb);
    out += line;
  }
  return out;
}

void export_report(const std::vector<ReportRow>& rows, const std::filesystem::path& json_out,
                   const std::filesystem::path& csv_out) {
  if (rows.empty()) throw ArgumentError("report has no rows");
  for (const auto& [path, text] : {std::pair{json_out, report_json(rows)}, std::pair{csv_out, report_csv(rows)}}) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
  }
}

}  // namespace invnet
