#include "part/geometry.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "part/error.hpp"

namespace part {

void ImageDims::validate() const {
  if (height < 1 || width < 1 || channels < 1) {
    throw ConfigError("image dims must be positive, got " + std::to_string(height) + "x" + std::to_string(width) +
                      "x" + std::to_string(channels));
  }
}

bool PatchBox::inside(const ImageDims& dims) const {
  return x_s >= 0 && y_s >= 0 && width >= 1 && height >= 1 && x_e() <= dims.width && y_e() <= dims.height;
}

std::size_t arity(TargetMode mode) {
  switch (mode) {
    case TargetMode::base:
      return 2;
    case TargetMode::extended:
      return 4;
    case TargetMode::time:
      return 1;
  }
  return 2;
}

std::string to_string(TargetMode mode) {
  switch (mode) {
    case TargetMode::base:
      return "base";
    case TargetMode::extended:
      return "extended";
    case TargetMode::time:
      return "time";
  }
  return "base";
}

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "base") return TargetMode::base;
  if (s == "extended") return TargetMode::extended;
  if (s == "time") return TargetMode::time;
  throw ConfigError("target_mode must be one of base|extended|time, got '" + s + "'");
}

std::string to_string(SamplingMode mode) { return mode == SamplingMode::grid ? "grid" : "offgrid"; }

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "offgrid") return SamplingMode::offgrid;
  if (s == "grid") return SamplingMode::grid;
  throw ConfigError("sampler mode must be offgrid|grid, got '" + s + "'");
}

std::string to_string(BoxAspect aspect) { return aspect == BoxAspect::free ? "free" : "square"; }

BoxAspect box_aspect_from_string(const std::string& s) {
  if (s == "square") return BoxAspect::square;
  if (s == "free") return BoxAspect::free;
  throw ConfigError("sampler aspect must be square|free, got '" + s + "'");
}

int default_patch_count(const ImageDims& dims, int patch_size) {
  if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
  return static_cast<int>(dims.pixel_count() / (static_cast<std::size_t>(patch_size) * patch_size));
}

void SamplerConfig::validate(const ImageDims& dims) const {
  dims.validate();
  if (patch_count < 2) throw ConfigError("sampler.patch_count must be >= 2, got " + std::to_string(patch_count));
  if (patch_size < 1) throw ConfigError("sampler.patch_size must be >= 1");
  if (mode == SamplingMode::grid) {
    if (dims.height % patch_size != 0 || dims.width % patch_size != 0) {
      throw ConfigError("grid sampling needs image dims divisible by sampler.patch_size=" + std::to_string(patch_size));
    }
    if (patch_count != default_patch_count(dims, patch_size)) {
      throw ConfigError("grid sampling needs sampler.patch_count = H*W/P^2 = " +
                        std::to_string(default_patch_count(dims, patch_size)));
    }
    return;
  }
  if (size_min < 1 || size_min > size_max) {
    throw ConfigError("sampler.size_min must satisfy 1 <= size_min <= size_max");
  }
  if (size_max > std::min(dims.height, dims.width)) {
    throw ConfigError("sampler.size_max=" + std::to_string(size_max) + " exceeds min(H, W)=" +
                      std::to_string(std::min(dims.height, dims.width)));
  }
}

std::vector<PatchBox> sample_offgrid(const ImageDims& dims, const SamplerConfig& config, Rng& rng) {
  if (config.mode != SamplingMode::offgrid) throw ConfigError("sample_offgrid: sampler.mode is not offgrid");
  config.validate(dims);
  std::vector<PatchBox> boxes;
  boxes.reserve(static_cast<std::size_t>(config.patch_count));
  for (int i = 0; i < config.patch_count; ++i) {
    PatchBox b;
    b.width = static_cast<int>(rng.uniform_int(config.size_min, config.size_max));
    b.height = config.aspect == BoxAspect::square ? b.width
                                                  : static_cast<int>(rng.uniform_int(config.size_min, config.size_max));
    b.x_s = static_cast<int>(rng.uniform_int(0, dims.width - b.width));
    b.y_s = static_cast<int>(rng.uniform_int(0, dims.height - b.height));
    boxes.push_back(b);
  }
  return boxes;
}

std::vector<PatchBox> sample_grid(const ImageDims& dims, int patch_size) {
  dims.validate();
  if (patch_size < 1 || dims.height % patch_size != 0 || dims.width % patch_size != 0) {
    throw ConfigError("sample_grid: image " + std::to_string(dims.height) + "x" + std::to_string(dims.width) +
                      " is not divisible by patch_size " + std::to_string(patch_size));
  }
  std::vector<PatchBox> boxes;
  for (int y = 0; y < dims.height; y += patch_size) {
    for (int x = 0; x < dims.width; x += patch_size) boxes.push_back({x, y, patch_size, patch_size});
  }
  return boxes;
}

std::vector<PatchBox> sample_boxes(const ImageDims& dims, const SamplerConfig& config, Rng& rng) {
  if (config.mode == SamplingMode::grid) {
    config.validate(dims);
    return sample_grid(dims, config.patch_size);
  }
  return sample_offgrid(dims, config, rng);
}

namespace {

void require_nondegenerate(const PatchBox& ref) {
  if (ref.width <= 0 || ref.height <= 0) {
    throw GeometryError("degenerate reference box " + std::to_string(ref.width) + "x" + std::to_string(ref.height));
  }
}

}  // namespace

RelativeTarget relative_target(const PatchBox& ref, const PatchBox& tgt) {
  require_nondegenerate(ref);
  return {(tgt.center_x() - ref.center_x()) / ref.width, (tgt.center_y() - ref.center_y()) / ref.height};
}

ExtendedTarget extended_target(const PatchBox& ref, const PatchBox& tgt) {
  const RelativeTarget t = relative_target(ref, tgt);
  return {t.dx, t.dy, static_cast<double>(tgt.width) / ref.width, static_cast<double>(tgt.height) / ref.height};
}

void write_target(const PatchBox& ref, const PatchBox& tgt, TargetMode mode, std::span<double> out) {
  switch (mode) {
    case TargetMode::time:
      out[0] = relative_target(ref, tgt).dx;
      break;
    case TargetMode::base: {
      const RelativeTarget t = relative_target(ref, tgt);
      out[0] = t.dx;
      out[1] = t.dy;
      break;
    }
    case TargetMode::extended: {
      const ExtendedTarget t = extended_target(ref, tgt);
      out[0] = t.dx;
      out[1] = t.dy;
      out[2] = t.dw;
      out[3] = t.dh;
      break;
    }
  }
}

TargetMatrix target_matrix(std::span<const PatchBox> boxes, TargetMode mode) {
  if (boxes.size() < 2) throw ConfigError("target_matrix needs at least 2 boxes");
  TargetMatrix m;
  m.n = boxes.size();
  m.arity = arity(mode);
  m.values.assign(m.n * m.n * m.arity, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) {
      write_target(boxes[i], boxes[j], mode, std::span<double>(m.values).subspan((i * m.n + j) * m.arity, m.arity));
    }
  }
  return m;
}

TargetMatrix target_matrix(std::span<const PatchBox> boxes, bool extended) {
  return target_matrix(boxes, extended ? TargetMode::extended : TargetMode::base);
}

PairSelection select_pairs(std::size_t patch_count, std::size_t pair_count, Rng& rng) {
  if (patch_count < 2) throw ConfigError("select_pairs: patch_count must be >= 2");
  if (pair_count < 1) throw ConfigError("select_pairs: pair_count must be >= 1");
  PairSelection s;
  s.pairs.reserve(pair_count);
  for (std::size_t k = 0; k < pair_count; ++k) {
    const std::size_t i = rng.below(patch_count);
    std::size_t j = rng.below(patch_count - 1);
    if (j >= i) ++j;
    s.pairs.emplace_back(i, j);
  }
  return s;
}

std::vector<PatchBox> sample_windows_1d(int sequence_length, const SamplerConfig& config, Rng& rng) {
  if (config.patch_count < 2) throw ConfigError("sampler.patch_count must be >= 2");
  if (config.size_min < 1 || config.size_min > config.size_max) {
    throw ConfigError("sampler.size_min must satisfy 1 <= size_min <= size_max");
  }
  if (config.size_max > sequence_length) {
    throw ConfigError("window length " + std::to_string(config.size_max) + " exceeds sequence length " +
                      std::to_string(sequence_length));
  }
  std::vector<PatchBox> windows;
  windows.reserve(static_cast<std::size_t>(config.patch_count));
  for (int i = 0; i < config.patch_count; ++i) {
    PatchBox w;
    w.width = static_cast<int>(rng.uniform_int(config.size_min, config.size_max));
    w.height = 1;
    w.x_s = static_cast<int>(rng.uniform_int(0, sequence_length - w.width));
    w.y_s = 0;
    windows.push_back(w);
  }
  return windows;
}

std::vector<PatchBox> sample_windows_1d(int sequence_length, const SamplerConfig& config) {
  Rng rng(config.seed);
  return sample_windows_1d(sequence_length, config, rng);
}

void write_boxes_csv(std::ostream& out, std::span<const PatchBox> boxes) {
  out << "x_s,y_s,width,height\n";
  for (const PatchBox& b : boxes) out << b.x_s << ',' << b.y_s << ',' << b.width << ',' << b.height << '\n';
}

std::vector<PatchBox> read_boxes_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "x_s,y_s,width,height") throw FormatError("box CSV: missing header");
  std::vector<PatchBox> boxes;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    PatchBox b;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> b.x_s >> c1 >> b.y_s >> c2 >> b.width >> c3 >> b.height) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw FormatError("box CSV: malformed row '" + line + "'");
    }
    boxes.push_back(b);
  }
  return boxes;
}

void write_targets_csv(std::ostream& out, const TargetMatrix& m) {
  static const char* kNames[] = {"dx", "dy", "dw", "dh"};
  out << "ref,tgt";
  for (std::size_t k = 0; k < m.arity; ++k) out << ',' << kNames[k];
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) {
      out << i << ',' << j;
      for (std::size_t k = 0; k < m.arity; ++k) out << ',' << m.at(i, j, k);
      out << '\n';
    }
  }
}

}  // namespace part
