#include "invnet/model.hpp"

#include <cstdio>
#include <iomanip>
#include <regex>
#include <sstream>

#include "invnet/error.hpp"
#include "invnet/rng.hpp"

namespace invnet {

ModelVariant ModelVariant::hybrid(int inv_layers) {
  if (inv_layers < 0 || inv_layers > kMaxInvolutionLayers) {
    throw ArgumentError("hybrid involution layers must be in 0.." + std::to_string(kMaxInvolutionLayers) +
                        ", got " + std::to_string(inv_layers));
  }
  if (inv_layers == 0) return conv_only();
  return {VariantKind::Hybrid, inv_layers};
}

ModelVariant ModelVariant::parse(const std::string& text, int inv_layers) {
  if (text == "conv-only" || text == "conv") return conv_only();
  if (text == "inv-only" || text == "inv" || text == "inn") return inv_only();
  if (text == "hybrid") return hybrid(inv_layers);
  static const std::regex with_count(R"(hybrid\((\d+)\))");
  std::smatch m;
  if (std::regex_match(text, m, with_count)) return hybrid(std::stoi(m[1].str()));
  throw ArgumentError("unknown model variant '" + text + "' (expected conv-only, inv-only or hybrid)");
}

std::string ModelVariant::label() const {
  switch (kind_) {
    case VariantKind::ConvOnly: return "conv-only";
    case VariantKind::InvOnly: return "inv-only";
    case VariantKind::Hybrid: return "hybrid(" + std::to_string(inv_layers_) + ")";
  }
  return "?";
}

// ---------------------------------------------------------------- Model

Model::Model(ModelVariant variant, Shape input_shape, std::vector<std::unique_ptr<Layer>> layers)
    : variant_(variant), input_shape_(std::move(input_shape)), layers_(std::move(layers)) {}

Model::Model(const Model& other) : variant_(other.variant_), input_shape_(other.input_shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

Tensor Model::forward(const Tensor& x, Mode mode, Rng& rng) {
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != input_shape_) {
    throw ShapeError("model expects (N, " + std::to_string(input_shape_[0]) + ", " +
                     std::to_string(input_shape_[1]) + ", " + std::to_string(input_shape_[2]) + ") input, got " +
                     shape_string(x.shape()));
  }
  Tensor h = layers_.front()->forward(x, mode, rng);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, mode, rng);
  h.require_finite("model output");
  return h;
}

Tensor Model::predict(const Tensor& x) {
  Rng unused(0);
  return forward(x, Mode::Infer, unused);
}

Tensor Model::backward(const Tensor& dlogits) {
  Tensor g = dlogits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<ParamSlot> Model::parameters() {
  std::vector<ParamSlot> all;
  for (auto& l : layers_) {
    for (auto& slot : l->parameters()) {
      slot.name = l->name() + "/" + slot.name;
      all.push_back(std::move(slot));
    }
  }
  return all;
}

ParamCount Model::param_count() const {
  ParamCount total;
  for (const auto& l : layers_) total += l->param_count();
  return total;
}

// ---------------------------------------------------------------- build

InvolutionSpec default_involution_spec() { return {.channels = 3, .kernel_size = 3, .groups = 1, .reduction_ratio = 2}; }

Model build_model(const ModelVariant& variant, Rng& rng) {
  std::vector<std::unique_ptr<Layer>> layers;
  const int inv = variant.inv_layers();
  for (int i = 1; i <= inv; ++i) {
    layers.push_back(std::make_unique<InvolutionLayer>("involution_" + std::to_string(i), default_involution_spec(), rng));
  }

  constexpr double kDropout = 0.1;
  if (variant.kind() == VariantKind::InvOnly) {
    layers.push_back(std::make_unique<FlattenLayer>("flatten"));
    layers.push_back(std::make_unique<DenseLayer>("dense_1", kImageSize * kImageSize * kImageChannels, 128, true, rng));
    layers.push_back(std::make_unique<DropoutLayer>("dropout", kDropout));
    layers.push_back(std::make_unique<DenseLayer>("dense_2", 128, kClassCount, false, rng));
  } else {
    const PoolSpec pool{2, 2};
    layers.push_back(std::make_unique<Conv2DLayer>("conv2d_1", 3, kImageChannels, 32, true, rng));
    layers.push_back(std::make_unique<MaxPool2DLayer>("max_pooling2d_1", pool));
    layers.push_back(std::make_unique<Conv2DLayer>("conv2d_2", 3, 32, 64, true, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("batch_normalization_1", 64));
    layers.push_back(std::make_unique<MaxPool2DLayer>("max_pooling2d_2", pool));
    layers.push_back(std::make_unique<Conv2DLayer>("conv2d_3", 3, 64, 128, true, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("batch_normalization_2", 128));
    layers.push_back(std::make_unique<MaxPool2DLayer>("max_pooling2d_3", pool));
    layers.push_back(std::make_unique<FlattenLayer>("flatten"));
    layers.push_back(std::make_unique<DenseLayer>("dense_1", 4 * 4 * 128, 128, true, rng));
    layers.push_back(std::make_unique<DropoutLayer>("dropout", kDropout));
    layers.push_back(std::make_unique<DenseLayer>("dense_2", 128, kClassCount, false, rng));
  }
  return Model(variant, {kImageSize, kImageSize, kImageChannels}, std::move(layers));
}

// ---------------------------------------------------------------- summary

std::string format_shape_with_batch(const Shape& per_sample) {
  std::string s = "(None";
  for (auto e : per_sample) s += ", " + std::to_string(e);
  return s + ")";
}

ModelSummary summarize(const Model& model) {
  ModelSummary s;
  Shape shape = model.input_shape();
  s.rows.push_back({"Input Layer", "input", shape, std::nullopt, 0});
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const Layer& l = model.layer(i);
    SummaryRow row;
    row.layer_type = std::string(layer_display_name(l.kind()));
    row.name = l.name();
    row.aux_shape = l.aux_shape(shape);
    shape = l.output_shape(shape);
    row.output_shape = shape;
    const ParamCount p = l.param_count();
    row.params = p.total;
    s.totals += p;
    s.rows.push_back(std::move(row));
  }
  return s;
}

namespace {

std::string with_commas(std::int64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  int n = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it, ++n) {
    if (n && n % 3 == 0) out.insert(out.begin(), ',');
    out.insert(out.begin(), *it);
  }
  return out;
}

std::string human_bytes(std::int64_t params) {
  const double bytes = static_cast<double>(params) * 4.0;
  char buf[32];
  if (bytes >= 1024.0 * 1024.0) {
    std::snprintf(buf, sizeof buf, "%.2f MB", bytes / (1024.0 * 1024.0));
  } else {
    std::snprintf(buf, sizeof buf, "%.2f KB", bytes / 1024.0);
  }
  return buf;
}

}  // namespace

std::string ModelSummary::to_string() const {
  std::ostringstream out;
  out << std::left << std::setw(22) << "Layer (type)" << std::setw(50) << "Output Shape" << "Param #\n";
  out << std::string(82, '=') << '\n';
  for (const auto& r : rows) {
    std::string shape = format_shape_with_batch(r.output_shape);
    if (r.aux_shape) shape += ", " + format_shape_with_batch(*r.aux_shape);
    out << std::left << std::setw(22) << r.layer_type << std::setw(50) << shape << r.params << '\n';
  }
  out << std::string(82, '=') << '\n';
  out << "Total parameters: " << with_commas(totals.total) << " (" << human_bytes(totals.total) << ")\n";
  out << "Trainable parameters: " << with_commas(totals.trainable) << " (" << human_bytes(totals.trainable) << ")\n";
  out << "Non-trainable parameters: " << with_commas(totals.non_trainable) << " ("
      << human_bytes(totals.non_trainable) << ")\n";
  return out.str();
}

double storage_size_mb(std::int64_t total_params) {
  return static_cast<double>(total_params) * 4.0 / (1024.0 * 1024.0);
}

double storage_size_mb(const Model& model) { return storage_size_mb(model.param_count().total); }

}  // namespace invnet
