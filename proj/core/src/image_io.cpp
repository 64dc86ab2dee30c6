#include "invnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "invnet/error.hpp"

namespace invnet {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor decode_png(const std::vector<std::uint8_t>& bytes, const std::string& where) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(where, std::string("png: ") + image.message);
  }
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(where, "png: " + msg);
  }
  const auto h = static_cast<std::int64_t>(image.height), w = static_cast<std::int64_t>(image.width);
  Tensor out({h, w, 3});
  for (std::int64_t p = 0; p < h * w; ++p) {
    for (int c = 0; c < 3; ++c) {
      out[static_cast<std::size_t>(p * 3 + c)] = pixels[static_cast<std::size_t>(p * 4 + c)] / 255.0;
    }
  }
  return out;
}

// Netpbm header token, skipping whitespace and '#' comments.
bool next_token(const std::vector<std::uint8_t>& b, std::size_t& pos, std::string& token) {
  token.clear();
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') token.push_back(static_cast<char>(b[pos++]));
  return !token.empty();
}

Tensor decode_netpbm(const std::vector<std::uint8_t>& b, const std::string& where) {
  std::size_t pos = 0;
  std::string magic, ws, hs, ms;
  if (!next_token(b, pos, magic) || (magic != "P6" && magic != "P5")) {
    throw FormatError(where, "unsupported netpbm magic");
  }
  if (!next_token(b, pos, ws) || !next_token(b, pos, hs) || !next_token(b, pos, ms)) {
    throw FormatError(where, "truncated netpbm header");
  }
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(ws);
    h = std::stol(hs);
    maxval = std::stol(ms);
  } catch (const std::exception&) {
    throw FormatError(where, "malformed netpbm header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw FormatError(where, "invalid netpbm header values");
  ++pos;  // single whitespace byte before the raster
  const int channels = magic == "P6" ? 3 : 1;
  const int sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w * h * channels * sample_bytes);
  if (pos > b.size() || b.size() - pos < need) throw FormatError(where, "truncated netpbm raster");
  Tensor out({h, w, 3});
  for (long p = 0; p < w * h; ++p) {
    for (int c = 0; c < 3; ++c) {
      const std::size_t sample = static_cast<std::size_t>(p * channels + (channels == 3 ? c : 0));
      double v;
      if (sample_bytes == 1) {
        v = b[pos + sample];
      } else {
        v = (b[pos + 2 * sample] << 8) | b[pos + 2 * sample + 1];
      }
      out[static_cast<std::size_t>(p * 3 + c)] = v / static_cast<double>(maxval);
    }
  }
  return out;
}

std::uint8_t to_byte(double unit) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

void write_netpbm(const std::filesystem::path& path, const char* magic, std::int64_t w, std::int64_t h,
                  const std::vector<std::uint8_t>& raster) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << magic << '\n' << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  const std::string where = path.string();
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes, where);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5')) return decode_netpbm(bytes, where);
  throw FormatError(where, "unrecognized image format");
}

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ShapeError("write_ppm expects (H, W, 3), got " + shape_string(rgb.shape()));
  std::vector<std::uint8_t> raster(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) raster[i] = to_byte(rgb[i]);
  write_netpbm(path, "P6", rgb.dim(1), rgb.dim(0), raster);
}

void write_pgm(const std::filesystem::path& path, const Tensor& gray_bytes) {
  if (gray_bytes.rank() != 2) throw ShapeError("write_pgm expects (H, W), got " + shape_string(gray_bytes.shape()));
  std::vector<std::uint8_t> raster(gray_bytes.size());
  for (std::size_t i = 0; i < gray_bytes.size(); ++i) {
    raster[i] = static_cast<std::uint8_t>(std::lround(std::clamp(gray_bytes[i], 0.0, 255.0)));
  }
  write_netpbm(path, "P5", gray_bytes.dim(1), gray_bytes.dim(0), raster);
}

void write_pgm_unit(const std::filesystem::path& path, const Tensor& gray) {
  Tensor scaled = gray;
  for (double& v : scaled.data()) v = std::clamp(v, 0.0, 1.0) * 255.0;
  write_pgm(path, scaled);
}

Tensor resize_bilinear(const Tensor& image, std::int64_t out_height, std::int64_t out_width) {
  if (image.rank() != 3) throw ShapeError("resize_bilinear expects (H, W, C), got " + shape_string(image.shape()));
  if (out_height < 1 || out_width < 1) throw ShapeError("resize target must be positive");
  const auto h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h == out_height && w == out_width) return image;

  auto source_coord = [](std::int64_t i, std::int64_t in, std::int64_t out) {
    if (out == 1) return (in - 1) / 2.0;
    return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  Tensor out({out_height, out_width, c});
  for (std::int64_t i = 0; i < out_height; ++i) {
    const double sy = source_coord(i, h, out_height);
    const auto y0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(sy)), h - 1);
    const auto y1 = std::min<std::int64_t>(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::int64_t j = 0; j < out_width; ++j) {
      const double sx = source_coord(j, w, out_width);
      const auto x0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(sx)), w - 1);
      const auto x1 = std::min<std::int64_t>(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::int64_t ch = 0; ch < c; ++ch) {
        auto px = [&](std::int64_t y, std::int64_t x) { return image[static_cast<std::size_t>((y * w + x) * c + ch)]; };
        const double top = px(y0, x0) + fx * (px(y0, x1) - px(y0, x0));
        const double bottom = px(y1, x0) + fx * (px(y1, x1) - px(y1, x0));
        const double lo = std::min({px(y0, x0), px(y0, x1), px(y1, x0), px(y1, x1)});
        const double hi = std::max({px(y0, x0), px(y0, x1), px(y1, x0), px(y1, x1)});
        const double v = std::clamp(top + fy * (bottom - top), lo, hi);
        out[static_cast<std::size_t>((i * out_width + j) * c + ch)] = v;
      }
    }
  }
  return out;
}

}  // namespace invnet
