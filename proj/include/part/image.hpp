#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "part/geometry.hpp"

namespace part {

/// H x W x C image, interleaved row-major (row, column, channel). A 1-D signal is an
/// image with height 1 and one channel per signal channel.
struct Image {
  ImageDims dims;
  std::vector<double> pixels;

  Image() = default;
  explicit Image(ImageDims d, double fill = 0.0) : dims(d), pixels(d.value_count(), fill) {}

  double& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  double at(int y, int x, int c) const { return pixels[index(y, x, c)]; }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * dims.width + x) * dims.channels + c;
  }
  bool operator==(const Image&) const = default;
};

/// Crops box from the image and resamples it to out_h x out_w with bilinear
/// interpolation (align-corners false: output pixel o samples source coordinate
/// start + (o + 0.5) * extent / out - 0.5, clamped to the box). Output layout is
/// (row, column, channel). A box already of size out_h x out_w is copied unchanged.
void resample_box(const Image& image, const PatchBox& box, int out_h, int out_w, std::span<double> out);

/// Writes an 8-bit binary PPM (3 channels) or PGM (1 channel); values clamped to [0, 1].
void write_pnm(const std::filesystem::path& path, const Image& image);
Image read_pnm(const std::filesystem::path& path);

}  // namespace part
