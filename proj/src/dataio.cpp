#include "part/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "part/error.hpp"
#include "part/rng.hpp"

namespace part {

InMemoryDataset::InMemoryDataset(ImageDims dims, std::vector<Item> items, int num_classes)
    : dims_(dims), items_(std::move(items)), num_classes_(num_classes) {
  for (const Item& it : items_) {
    if (!(it.image.dims == dims_)) throw ShapeError("dataset item dims differ from dataset dims");
  }
}

std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::vertical_gradient:
      return "vertical_gradient";
    case SceneKind::two_shape:
      return "two_shape";
    case SceneKind::striped:
      return "striped";
  }
  return "two_shape";
}

SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "vertical_gradient") return SceneKind::vertical_gradient;
  if (s == "two_shape") return SceneKind::two_shape;
  if (s == "striped") return SceneKind::striped;
  throw ConfigError("data.scene.kind must be vertical_gradient|two_shape|striped, got '" + s + "'");
}

std::string to_string(LabelRule r) {
  switch (r) {
    case LabelRule::none:
      return "none";
    case LabelRule::arrangement:
      return "arrangement";
    case LabelRule::brightness:
      return "brightness";
  }
  return "none";
}

LabelRule label_rule_from_string(const std::string& s) {
  if (s == "none") return LabelRule::none;
  if (s == "arrangement") return LabelRule::arrangement;
  if (s == "brightness") return LabelRule::brightness;
  throw ConfigError("data.scene.label_rule must be none|arrangement|brightness, got '" + s + "'");
}

void SyntheticSceneSpec::validate() const {
  if (height < 2 || width < 2) throw ConfigError("data.scene canvas must be at least 2x2");
  if (channels != 1 && channels != 3) throw ConfigError("data.scene.channels must be 1 or 3");
  if (kind == SceneKind::two_shape) {
    if (shape_size < 2 || shape_size % 2 != 0) throw ConfigError("data.scene.shape_size must be even and >= 2");
    if (jitter < 0) throw ConfigError("data.scene.jitter must be >= 0");
    if (std::max(std::abs(offset_x), std::abs(offset_y)) - jitter < shape_size) {
      throw ConfigError("data.scene offset must exceed shape_size + jitter so the shapes never overlap");
    }
    if (std::abs(offset_x) + jitter + shape_size > width || std::abs(offset_y) + jitter + shape_size > height) {
      throw ConfigError("data.scene offset does not fit in the canvas");
    }
  }
  if (kind == SceneKind::striped && stripe_period < 2) throw ConfigError("data.scene.stripe_period must be >= 2");
}

namespace {

double channel_value(const Color& c, int channel, int channels) {
  return channels == 3 ? c[static_cast<std::size_t>(channel)] : (c[0] + c[1] + c[2]) / 3.0;
}

}  // namespace

Item render_scene(const SyntheticSceneSpec& spec, std::size_t index, std::array<double, 4>* centers) {
  Rng rng = Rng(spec.seed).split(index);
  Item item;
  item.image = Image(spec.dims());
  item.label = spec.label_rule == LabelRule::none ? -1 : static_cast<int>(index % 2);
  Image& img = item.image;
  const int H = spec.height, W = spec.width, C = spec.channels;

  switch (spec.kind) {
    case SceneKind::vertical_gradient: {
      const double shift = rng.uniform(-spec.color_jitter, spec.color_jitter);
      for (int y = 0; y < H; ++y) {
        const double v = 0.1 + 0.8 * y / (H - 1.0) + shift;
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < C; ++c) img.at(y, x, c) = v;
      }
      break;
    }
    case SceneKind::striped: {
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const bool vertical = spec.label_rule == LabelRule::arrangement && item.label == 1;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const double coord = vertical ? x : y;
          const double v = 0.5 + 0.4 * std::sin(2.0 * std::numbers::pi * coord / spec.stripe_period + phase);
          for (int c = 0; c < C; ++c) img.at(y, x, c) = v;
        }
      }
      break;
    }
    case SceneKind::two_shape: {
      std::array<Color, 4> corners{};
      for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t c = 0; c < 3; ++c) {
          corners[k][c] = spec.palette[k][c] + rng.uniform(-spec.color_jitter, spec.color_jitter);
        }
      }
      for (int y = 0; y < H; ++y) {
        const double fy = y / (H - 1.0);
        for (int x = 0; x < W; ++x) {
          const double fx = x / (W - 1.0);
          for (int c = 0; c < C; ++c) {
            const double top = (1 - fx) * channel_value(corners[0], c, C) + fx * channel_value(corners[1], c, C);
            const double bottom = (1 - fx) * channel_value(corners[2], c, C) + fx * channel_value(corners[3], c, C);
            img.at(y, x, c) = (1 - fy) * top + fy * bottom;
          }
        }
      }
      const int s = spec.shape_size;
      const int sign = spec.label_rule == LabelRule::arrangement && item.label == 1 ? -1 : 1;
      const int jx = static_cast<int>(rng.uniform_int(-spec.jitter, spec.jitter));
      const int jy = static_cast<int>(rng.uniform_int(-spec.jitter, spec.jitter));
      const int dx = sign * spec.offset_x + jx;
      const int dy = spec.offset_y + jy;
      // Shape A is an s x s square at (ax, ay); shape B a disc of diameter s centered at A's center + (dx, dy).
      const int ax = static_cast<int>(rng.uniform_int(std::max(0, -dx), std::min(W - s, W - s - dx)));
      const int ay = static_cast<int>(rng.uniform_int(std::max(0, -dy), std::min(H - s, H - s - dy)));
      for (int y = ay; y < ay + s; ++y)
        for (int x = ax; x < ax + s; ++x)
          for (int c = 0; c < C; ++c) img.at(y, x, c) = channel_value(spec.palette[4], c, C);
      const double bx = ax + s / 2.0 + dx;
      const double by = ay + s / 2.0 + dy;
      const double r2 = (s / 2.0) * (s / 2.0);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const double ex = x + 0.5 - bx, ey = y + 0.5 - by;
          if (ex * ex + ey * ey <= r2) {
            for (int c = 0; c < C; ++c) img.at(y, x, c) = channel_value(spec.palette[5], c, C);
          }
        }
      }
      if (centers != nullptr) *centers = {ax + s / 2.0, ay + s / 2.0, bx, by};
      break;
    }
  }

  if (spec.label_rule == LabelRule::brightness) {
    const double shift = item.label == 1 ? spec.brightness_shift : -spec.brightness_shift;
    for (auto& v : img.pixels) v += shift;
  }
  for (auto& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return item;
}

SceneDataset::SceneDataset(SyntheticSceneSpec spec, std::size_t count, std::size_t first_index)
    : spec_(std::move(spec)), count_(count), first_index_(first_index) {
  spec_.validate();
}

Item SceneDataset::item(std::size_t index) const {
  if (index >= count_) throw ShapeError("scene index out of range");
  return render_scene(spec_, first_index_ + index);
}

std::unique_ptr<Dataset> generate_scenes(const SyntheticSceneSpec& spec, std::size_t count, std::size_t first_index) {
  return std::make_unique<SceneDataset>(spec, count, first_index);
}

void SignalSpec::validate() const {
  if (length < 2) throw ConfigError("data.signal.length must be >= 2");
  if (sample_rate <= 0.0) throw ConfigError("data.signal.sample_rate must be > 0");
  if (channels < 1) throw ConfigError("data.signal.channels must be >= 1");
  if (components.empty()) throw ConfigError("data.signal.components must not be empty");
  if (num_classes < 0 || num_classes > static_cast<int>(components.size())) {
    throw ConfigError("data.signal.num_classes must be between 0 and the component count");
  }
  if (envelope < 0.0 || envelope >= 1.0) throw ConfigError("data.signal.envelope must lie in [0, 1)");
}

SignalDataset::SignalDataset(SignalSpec spec, std::size_t count, std::size_t first_index)
    : spec_(std::move(spec)), count_(count), first_index_(first_index) {
  spec_.validate();
}

Item SignalDataset::item(std::size_t index) const {
  if (index >= count_) throw ShapeError("signal index out of range");
  const std::size_t global = first_index_ + index;
  Rng rng = Rng(spec_.seed).split(global);
  Item item;
  item.label = spec_.num_classes > 0 ? static_cast<int>(global % static_cast<std::size_t>(spec_.num_classes)) : -1;
  item.image = Image(spec_.dims());
  const double T = spec_.length / spec_.sample_rate;
  for (int c = 0; c < spec_.channels; ++c) {
    std::vector<double> phases;
    for (std::size_t k = 0; k < spec_.components.size(); ++k) phases.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    for (int n = 0; n < spec_.length; ++n) {
      const double t = n / spec_.sample_rate;
      const double env = 1.0 + spec_.envelope * (2.0 * t / T - 1.0);
      double v = 0.0;
      for (std::size_t k = 0; k < spec_.components.size(); ++k) {
        const SinusoidComponent& comp = spec_.components[k];
        // Phase of the chirp f(t) = f (1 + drift (t/T - 1/2)).
        const double phase = 2.0 * std::numbers::pi * comp.frequency * (t + comp.drift * (t * t / (2.0 * T) - t / 2.0));
        const double gain = static_cast<int>(k) == item.label ? 3.0 : 1.0;
        v += gain * comp.amplitude * std::sin(phase + phases[k]);
      }
      item.image.at(0, n, c) = env * v + spec_.noise * rng.normal();
    }
  }
  if (spec_.normalize) item.image.pixels = instance_normalize(item.image.pixels, spec_.channels).values;
  return item;
}

std::unique_ptr<Dataset> generate_signals(const SignalSpec& spec, std::size_t count, std::size_t first_index) {
  return std::make_unique<SignalDataset>(spec, count, first_index);
}

NormalizedWindow instance_normalize(std::span<const double> window, int channels) {
  if (window.empty()) throw ShapeError("instance_normalize: empty window");
  if (channels < 1 || window.size() % static_cast<std::size_t>(channels) != 0) {
    throw ShapeError("instance_normalize: window length not divisible by channel count");
  }
  const auto C = static_cast<std::size_t>(channels);
  const std::size_t n = window.size() / C;
  NormalizedWindow out;
  out.values.assign(window.size(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += window[i * C + c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (window[i * C + c] - mean) * (window[i * C + c] - mean);
    var /= static_cast<double>(n);
    if (!(var > 0.0)) {
      out.degenerate = true;
      continue;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) out.values[i * C + c] = (window[i * C + c] - mean) * inv;
  }
  return out;
}

std::unique_ptr<Dataset> load_raw_images(const std::filesystem::path& path, const ImageDims& dims, int num_classes) {
  dims.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t record = 1 + dims.value_count();
  if (bytes.size() % record != 0) {
    throw FormatError("raw image file " + path.string() + " has " + std::to_string(bytes.size()) +
                      " bytes, not a multiple of the record size " + std::to_string(record));
  }
  std::vector<Item> items;
  const std::size_t plane = dims.pixel_count();
  for (std::size_t off = 0; off < bytes.size(); off += record) {
    Item it;
    it.label = bytes[off];
    it.image = Image(dims);
    for (int c = 0; c < dims.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        it.image.pixels[p * dims.channels + c] = bytes[off + 1 + c * plane + p] / 255.0;
      }
    }
    items.push_back(std::move(it));
  }
  return std::make_unique<InMemoryDataset>(dims, std::move(items), num_classes);
}

void write_raw_images(const std::filesystem::path& path, const Dataset& data) {
  const ImageDims dims = data.dims();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const std::size_t plane = dims.pixel_count();
  std::vector<unsigned char> record(1 + dims.value_count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Item it = data.item(i);
    record[0] = static_cast<unsigned char>(std::max(it.label, 0));
    for (int c = 0; c < dims.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = std::clamp(it.image.pixels[p * dims.channels + c], 0.0, 1.0);
        record[1 + c * plane + p] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(record.data()), static_cast<std::streamsize>(record.size()));
  }
}

void write_signals_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "item,label,channel,sample,value\n";
  const ImageDims dims = data.dims();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Item it = data.item(i);
    for (int c = 0; c < dims.channels; ++c) {
      for (int n = 0; n < dims.width; ++n) out << i << ',' << it.label << ',' << c << ',' << n << ',' << it.image.at(0, n, c) << '\n';
    }
  }
}

std::unique_ptr<Dataset> read_signals_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "item,label,channel,sample,value") throw FormatError("signal CSV: bad header");
  struct Raw {
    int label = -1;
    std::map<std::pair<int, int>, double> values;
  };
  std::map<std::size_t, Raw> raw;
  int channels = 0, length = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t item = 0;
    int label = 0, channel = 0, sample = 0;
    double value = 0.0;
    char c1, c2, c3, c4;
    if (!(row >> item >> c1 >> label >> c2 >> channel >> c3 >> sample >> c4 >> value)) {
      throw FormatError("signal CSV: malformed row '" + line + "'");
    }
    raw[item].label = label;
    raw[item].values[{sample, channel}] = value;
    channels = std::max(channels, channel + 1);
    length = std::max(length, sample + 1);
  }
  const ImageDims dims{1, std::max(length, 1), std::max(channels, 1)};
  std::vector<Item> items;
  for (auto& [idx, r] : raw) {
    if (r.values.size() != dims.value_count()) throw FormatError("signal CSV: item " + std::to_string(idx) + " incomplete");
    Item it;
    it.label = r.label;
    it.image = Image(dims);
    for (const auto& [key, v] : r.values) it.image.at(0, key.first, key.second) = v;
    items.push_back(std::move(it));
  }
  return std::make_unique<InMemoryDataset>(dims, std::move(items), num_classes);
}

}  // namespace part
