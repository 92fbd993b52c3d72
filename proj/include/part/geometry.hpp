#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "part/rng.hpp"

// Patch-box sampling and pairwise relative targets.
//
// Coordinates: x is the column index, y the row index, origin at the top-left pixel.
// A box covers columns [x_s, x_s + width) and rows [y_s, y_s + height); its center is
// (x_s + width / 2, y_s + height / 2).

namespace part {

struct ImageDims {
  int height = 0;
  int width = 0;
  int channels = 1;

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t value_count() const { return pixel_count() * static_cast<std::size_t>(channels); }
  void validate() const;
  bool operator==(const ImageDims&) const = default;
};

struct PatchBox {
  int x_s = 0;
  int y_s = 0;
  int width = 1;
  int height = 1;

  int x_e() const { return x_s + width; }
  int y_e() const { return y_s + height; }
  double center_x() const { return x_s + width / 2.0; }
  double center_y() const { return y_s + height / 2.0; }
  bool inside(const ImageDims& dims) const;
  bool operator==(const PatchBox&) const = default;
};

struct RelativeTarget {
  double dx = 0.0;
  double dy = 0.0;
};

struct ExtendedTarget {
  double dx = 0.0;
  double dy = 0.0;
  double dw = 1.0;
  double dh = 1.0;
};

/// Which components of the relative transform are regressed.
enum class TargetMode {
  base,      // (dx, dy)
  extended,  // (dx, dy, dw, dh)
  time,      // (dx) for 1-D windows
};

std::size_t arity(TargetMode mode);
std::string to_string(TargetMode mode);
TargetMode target_mode_from_string(const std::string& s);

enum class SamplingMode { offgrid, grid };
/// square: one side D per box. free: width and height drawn independently (corner-based).
enum class BoxAspect { square, free };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& s);
std::string to_string(BoxAspect aspect);
BoxAspect box_aspect_from_string(const std::string& s);

struct SamplerConfig {
  int patch_count = 64;
  int patch_size = 4;
  int size_min = 4;
  int size_max = 4;
  SamplingMode mode = SamplingMode::offgrid;
  BoxAspect aspect = BoxAspect::square;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the violated constraint.
  void validate(const ImageDims& dims) const;
};

/// N = H * W / P^2.
int default_patch_count(const ImageDims& dims, int patch_size);

struct PairSelection {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t count() const { return pairs.size(); }
};

inline constexpr std::size_t kDefaultPairCount = 2048;

std::vector<PatchBox> sample_offgrid(const ImageDims& dims, const SamplerConfig& config, Rng& rng);
std::vector<PatchBox> sample_grid(const ImageDims& dims, int patch_size);
/// Dispatches on config.mode.
std::vector<PatchBox> sample_boxes(const ImageDims& dims, const SamplerConfig& config, Rng& rng);

RelativeTarget relative_target(const PatchBox& ref, const PatchBox& tgt);
ExtendedTarget extended_target(const PatchBox& ref, const PatchBox& tgt);
/// Writes arity(mode) target components for (ref, tgt) into out.
void write_target(const PatchBox& ref, const PatchBox& tgt, TargetMode mode, std::span<double> out);

/// N x N x arity targets; entry (i, j) is the transform from box i (reference) to box j.
struct TargetMatrix {
  std::size_t n = 0;
  std::size_t arity = 2;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j, std::size_t k) const { return values[(i * n + j) * arity + k]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return values[(i * n + j) * arity + k]; }
};

TargetMatrix target_matrix(std::span<const PatchBox> boxes, TargetMode mode);
TargetMatrix target_matrix(std::span<const PatchBox> boxes, bool extended);

/// Ordered pairs drawn uniformly with replacement from {(i, j) : i != j}.
PairSelection select_pairs(std::size_t patch_count, std::size_t pair_count, Rng& rng);

/// N windows (height 1) with random starts over a sequence; widths uniform in
/// [size_min, size_max].
std::vector<PatchBox> sample_windows_1d(int sequence_length, const SamplerConfig& config, Rng& rng);
std::vector<PatchBox> sample_windows_1d(int sequence_length, const SamplerConfig& config);

// CSV: header "x_s,y_s,width,height", one row per box.
void write_boxes_csv(std::ostream& out, std::span<const PatchBox> boxes);
std::vector<PatchBox> read_boxes_csv(std::istream& in);
// CSV: header "ref,tgt,dx,dy[,dw,dh]".
void write_targets_csv(std::ostream& out, const TargetMatrix& m);

}  // namespace part
