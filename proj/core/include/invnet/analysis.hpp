#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "invnet/tensor.hpp"
#include "invnet/train.hpp"

namespace invnet {

class Model;

/// Runs `image` (H, W, 3) through the model in infer mode and returns the
/// kernel field generated by the involution layer at `layer_index`.
/// Throws ArgumentError if that layer is not an involution.
KernelField involution_kernels_for(Model& model, const Tensor& image, std::size_t layer_index);

/// Per-pixel L2 norm of the generated kernel over all taps and groups, (H, W).
Tensor kernel_norm_map(const KernelField& kernels);

/// Min-max maps values to [0, 255]. A constant map becomes all zeros.
Tensor minmax_to_bytes(const Tensor& values);

/// S x S evenly spaced kernels (group 0), each K x K tile min-max normalized
/// to [0, 255], separated by 1-px lines of 255. Side = S*K + (S-1).
Tensor kernel_grid(const KernelField& kernels, int grid = 6);

void export_kernel_norm_map(Model& model, const Tensor& image, std::size_t layer_index,
                            const std::filesystem::path& out);
void export_kernel_grid(Model& model, const Tensor& image, std::size_t layer_index, const std::filesystem::path& out,
                        int grid = 6);

struct ReportRow {
  std::string dataset;
  std::string variant;
  Metrics metrics;
  std::int64_t params = 0;
  double size_mb = 0.0;
};

/// JSON array of {dataset, variant, accuracy, recall, f1, params, size_mb};
/// percentages and size rounded to two decimals.
std::string report_json(const std::vector<ReportRow>& rows);
std::string report_csv(const std::vector<ReportRow>& rows);
void export_report(const std::vector<ReportRow>& rows, const std::filesystem::path& json_out,
                   const std::filesystem::path& csv_out);

double round2(double v);

}  // namespace invnet
