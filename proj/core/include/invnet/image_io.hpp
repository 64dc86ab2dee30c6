#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "invnet/tensor.hpp"

namespace invnet {

/// Decodes a PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or binary
/// PPM (P6) / PGM (P5) into an (H, W, 3) tensor with values in [0, 1].
/// Gray is replicated to three channels; alpha is dropped.
/// Throws FormatError when the file cannot be decoded.
Tensor read_image(const std::filesystem::path& path);

/// Writes an (H, W, 3) tensor as binary PPM (P6, maxval 255). Values are
/// clamped to [0, 1] and rounded.
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);

/// Writes an (H, W) tensor of bytes-in-doubles [0, 255] as binary PGM (P5).
void write_pgm(const std::filesystem::path& path, const Tensor& gray_bytes);

/// Writes an (H, W) tensor of values in [0, 1] as binary PGM (P5).
void write_pgm_unit(const std::filesystem::path& path, const Tensor& gray);

/// Corner-aligned bilinear resize of an (H, W, C) image.
Tensor resize_bilinear(const Tensor& image, std::int64_t out_height, std::int64_t out_width);

}  // namespace invnet
