#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "invnet/error.hpp"
#include "invnet/model.hpp"
#include "invnet/rng.hpp"

// Layout (all integers little-endian):
//   "IVCN" | u32 version=1 | u8 variant | u8 inv_layers | u16 layer count
//   per layer:  u16 name length | name bytes | u16 tensor count
//   per tensor: u8 rank | u32 dims[rank] | f32 payload

namespace invnet {

namespace {

constexpr char kMagic[4] = {'I', 'V', 'C', 'N'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8(const std::string& field) { return static_cast<std::uint8_t>(le(1, field)); }
  std::uint16_t u16(const std::string& field) { return static_cast<std::uint16_t>(le(2, field)); }
  std::uint32_t u32(const std::string& field) { return static_cast<std::uint32_t>(le(4, field)); }
  float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }
  std::string str(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const std::string& field) {
    if (bytes_.size() - pos_ < n) throw FormatError(field, "file truncated");
  }
  std::uint64_t le(int n, const std::string& field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  Model& m = const_cast<Model&>(model);  // parameters() hands out mutable slots; nothing is written
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(model.variant().kind()));
  w.u8(static_cast<std::uint8_t>(model.variant().inv_layers()));
  w.u16(static_cast<std::uint16_t>(model.layer_count()));
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    Layer& layer = m.layer(i);
    w.u16(static_cast<std::uint16_t>(layer.name().size()));
    w.raw(layer.name().data(), layer.name().size());
    const auto slots = layer.parameters();
    w.u16(static_cast<std::uint16_t>(slots.size()));
    for (const auto& slot : slots) {
      const Tensor& t = *slot.value;
      w.u8(static_cast<std::uint8_t>(t.rank()));
      for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
      for (double v : t.data()) w.f32(v);
    }
  }
  return w.take();
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw FormatError("magic", "not an IVCN model file");
  if (const auto version = r.u32("version"); version != kVersion) {
    throw FormatError("version", "unsupported version " + std::to_string(version));
  }
  const auto tag = r.u8("variant");
  const auto inv_layers = r.u8("inv_layers");
  ModelVariant variant = ModelVariant::conv_only();
  try {
    switch (tag) {
      case 0: variant = ModelVariant::conv_only(); break;
      case 1: variant = ModelVariant::inv_only(); break;
      case 2: variant = ModelVariant::hybrid(inv_layers); break;
      default: throw FormatError("variant", "unknown variant tag " + std::to_string(tag));
    }
  } catch (const ArgumentError& e) {
    throw FormatError("inv_layers", e.what());
  }
  if (variant.inv_layers() != inv_layers) throw FormatError("inv_layers", "does not match variant");

  Rng scratch(0);
  Model model = build_model(variant, scratch);
  const auto layer_count = r.u16("layer_count");
  if (layer_count != model.layer_count()) {
    throw FormatError("layer_count", "expected " + std::to_string(model.layer_count()) + ", got " +
                                         std::to_string(layer_count));
  }
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    Layer& layer = model.layer(i);
    const std::string prefix = "layer[" + std::to_string(i) + "]";
    const auto name_len = r.u16(prefix + ".name_length");
    const std::string name = r.str(name_len, prefix + ".name");
    if (name != layer.name()) throw FormatError(prefix + ".name", "expected '" + layer.name() + "', got '" + name + "'");
    auto slots = layer.parameters();
    const auto tensor_count = r.u16(prefix + ".tensor_count");
    if (tensor_count != slots.size()) {
      throw FormatError(prefix + ".tensor_count", "expected " + std::to_string(slots.size()));
    }
    for (std::size_t t = 0; t < slots.size(); ++t) {
      const std::string field = prefix + "." + slots[t].name;
      Tensor& target = *slots[t].value;
      const auto rank = r.u8(field + ".rank");
      if (rank != target.rank()) throw FormatError(field + ".rank", "expected " + std::to_string(target.rank()));
      for (std::size_t d = 0; d < rank; ++d) {
        const auto dim = r.u32(field + ".dims");
        if (dim != static_cast<std::uint32_t>(target.dim(d))) {
          throw FormatError(field + ".dims", "expected shape " + shape_string(target.shape()));
        }
      }
      for (double& v : target.data()) v = r.f32(field + ".payload");
      target.require_finite(field.c_str());
    }
  }
  if (!r.at_end()) throw FormatError("trailer", "unexpected bytes after last layer");
  return model;
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace invnet
