#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "invnet/layer.hpp"

namespace invnet {

enum class VariantKind : std::uint8_t { ConvOnly = 0, InvOnly = 1, Hybrid = 2 };

inline constexpr int kMaxInvolutionLayers = 6;
inline constexpr std::int64_t kImageSize = 48;
inline constexpr std::int64_t kImageChannels = 3;
inline constexpr std::int64_t kClassCount = 2;

/// conv-only | inv-only | hybrid(n). hybrid(0) is normalized to conv-only and
/// inv-only always has three involution layers.
class ModelVariant {
 public:
  static ModelVariant conv_only() { return {VariantKind::ConvOnly, 0}; }
  static ModelVariant inv_only() { return {VariantKind::InvOnly, 3}; }
  static ModelVariant hybrid(int inv_layers);
  /// Accepts "conv-only", "inv-only", "hybrid" (with `inv_layers`), or "hybrid(n)".
  static ModelVariant parse(const std::string& text, int inv_layers = 3);

  VariantKind kind() const noexcept { return kind_; }
  int inv_layers() const noexcept { return inv_layers_; }
  std::string label() const;

  friend bool operator==(const ModelVariant&, const ModelVariant&) = default;

 private:
  ModelVariant(VariantKind kind, int inv_layers) : kind_(kind), inv_layers_(inv_layers) {}

  VariantKind kind_;
  int inv_layers_;
};

/// Ordered layer stack taking (N, 48, 48, 3) images to (N, 2) logits.
class Model {
 public:
  Model(ModelVariant variant, Shape input_shape, std::vector<std::unique_ptr<Layer>> layers);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  ~Model() = default;

  const ModelVariant& variant() const noexcept { return variant_; }
  /// Per-sample input shape (H, W, C).
  const Shape& input_shape() const noexcept { return input_shape_; }

  std::size_t layer_count() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  Tensor forward(const Tensor& x, Mode mode, Rng& rng);
  /// Inference-mode forward; does not touch any random stream.
  Tensor predict(const Tensor& x);
  /// Back-propagates dlogits through every layer, refreshing all gradients.
  Tensor backward(const Tensor& dlogits);

  std::vector<ParamSlot> parameters();
  ParamCount param_count() const;

 private:
  ModelVariant variant_;
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Involution configuration used by every model variant: C=3, K=3, G=1, r=2.
InvolutionSpec default_involution_spec();

Model build_model(const ModelVariant& variant, Rng& rng);

struct SummaryRow {
  std::string layer_type;
  std::string name;
  Shape output_shape;               // per sample; printed with a leading None
  std::optional<Shape> aux_shape;  // involution kernel field
  std::int64_t params = 0;
};

struct ModelSummary {
  std::vector<SummaryRow> rows;
  ParamCount totals;

  /// Table with one row per layer and the three totals lines.
  std::string to_string() const;
};

ModelSummary summarize(const Model& model);

/// total params x 4 bytes / 1024^2.
double storage_size_mb(std::int64_t total_params);
double storage_size_mb(const Model& model);

/// Binary model file; see README for the layout.
void save_model(const Model& model, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const Model& model);
Model load_model(const std::filesystem::path& path);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

std::string format_shape_with_batch(const Shape& per_sample);

}  // namespace invnet
