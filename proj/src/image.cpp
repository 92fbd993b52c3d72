#include "part/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "part/error.hpp"

namespace part {

namespace {

struct Tap {
  int lo;
  int hi;
  double w;  // weight of hi
};

// Source taps along one axis for output index o.
Tap axis_tap(int start, int extent, int out, int o) {
  if (extent == out) return {start + o, start + o, 0.0};
  double s = (o + 0.5) * static_cast<double>(extent) / out - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
  const int lo = static_cast<int>(std::floor(s));
  const int hi = std::min(lo + 1, extent - 1);
  return {start + lo, start + hi, s - lo};
}

}  // namespace

void resample_box(const Image& image, const PatchBox& box, int out_h, int out_w, std::span<double> out) {
  if (!box.inside(image.dims)) {
    throw GeometryError("box (" + std::to_string(box.x_s) + "," + std::to_string(box.y_s) + "," +
                        std::to_string(box.width) + "," + std::to_string(box.height) + ") outside image " +
                        std::to_string(image.dims.height) + "x" + std::to_string(image.dims.width));
  }
  const int channels = image.dims.channels;
  if (out.size() != static_cast<std::size_t>(out_h) * out_w * channels) {
    throw ShapeError("resample_box: output span has wrong length");
  }
  std::size_t k = 0;
  for (int oy = 0; oy < out_h; ++oy) {
    const Tap ty = axis_tap(box.y_s, box.height, out_h, oy);
    for (int ox = 0; ox < out_w; ++ox) {
      const Tap tx = axis_tap(box.x_s, box.width, out_w, ox);
      for (int c = 0; c < channels; ++c) {
        if (ty.w == 0.0 && tx.w == 0.0) {
          out[k++] = image.at(ty.lo, tx.lo, c);
          continue;
        }
        const double top = (1.0 - tx.w) * image.at(ty.lo, tx.lo, c) + tx.w * image.at(ty.lo, tx.hi, c);
        const double bottom = (1.0 - tx.w) * image.at(ty.hi, tx.lo, c) + tx.w * image.at(ty.hi, tx.hi, c);
        out[k++] = (1.0 - ty.w) * top + ty.w * bottom;
      }
    }
  }
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  const int c = image.dims.channels;
  if (c != 1 && c != 3) throw FormatError("write_pnm: only 1 or 3 channels supported, got " + std::to_string(c));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << (c == 3 ? "P6" : "P5") << '\n' << image.dims.width << ' ' << image.dims.height << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || w < 1 || h < 1 || maxval != 255) throw FormatError("unsupported PNM header");
  in.get();
  Image img(ImageDims{h, w, magic == "P6" ? 3 : 1});
  std::vector<unsigned char> bytes(img.pixels.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError("truncated PNM payload");
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace part
