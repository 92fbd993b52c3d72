#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "part/image.hpp"

namespace part {

struct Item {
  Image image;
  int label = -1;
};

/// Read-only indexed collection of same-sized images (or 1-D signals, height 1).
/// Accessors are deterministic and safe to call concurrently.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual ImageDims dims() const = 0;
  virtual Item item(std::size_t index) const = 0;
  /// 0 when unlabeled.
  virtual int num_classes() const { return 0; }
};

class InMemoryDataset : public Dataset {
 public:
  InMemoryDataset(ImageDims dims, std::vector<Item> items, int num_classes = 0);
  std::size_t size() const override { return items_.size(); }
  ImageDims dims() const override { return dims_; }
  Item item(std::size_t index) const override { return items_.at(index); }
  int num_classes() const override { return num_classes_; }

 private:
  ImageDims dims_;
  std::vector<Item> items_;
  int num_classes_;
};

enum class SceneKind { vertical_gradient, two_shape, striped };
enum class LabelRule { none, arrangement, brightness };

std::string to_string(SceneKind k);
SceneKind scene_kind_from_string(const std::string& s);
std::string to_string(LabelRule r);
LabelRule label_rule_from_string(const std::string& s);

using Color = std::array<double, 3>;

struct SyntheticSceneSpec {
  int height = 32;
  int width = 32;
  int channels = 3;
  SceneKind kind = SceneKind::two_shape;
  /// arrangement: class 0 puts shape B at (+offset_x, offset_y) from shape A, class 1 at
  /// (-offset_x, offset_y); for stripes it selects the orientation. brightness: class 1
  /// is brighter by 2 * brightness_shift.
  LabelRule label_rule = LabelRule::none;
  /// Background corner colors (top-left, top-right, bottom-left, bottom-right), then
  /// shape A and shape B colors.
  std::array<Color, 6> palette{{{0.10, 0.15, 0.55},
                                {0.85, 0.20, 0.50},
                                {0.15, 0.80, 0.45},
                                {0.90, 0.85, 0.40},
                                {1.00, 1.00, 0.00},
                                {0.00, 0.00, 0.00}}};
  /// Per-image perturbation of the background colors.
  double color_jitter = 0.05;
  int shape_size = 8;
  int offset_x = 12;
  int offset_y = 4;
  /// Max absolute per-axis jitter (pixels) of shape B around its fixed offset.
  int jitter = 1;
  int stripe_period = 8;
  double brightness_shift = 0.15;
  std::uint64_t seed = 1;

  ImageDims dims() const { return {height, width, channels}; }
  int num_classes() const { return label_rule == LabelRule::none ? 0 : 2; }
  void validate() const;
};

/// Scenes are a pure function of (spec, first_index + i).
class SceneDataset : public Dataset {
 public:
  SceneDataset(SyntheticSceneSpec spec, std::size_t count, std::size_t first_index = 0);
  std::size_t size() const override { return count_; }
  ImageDims dims() const override { return spec_.dims(); }
  Item item(std::size_t index) const override;
  int num_classes() const override { return spec_.num_classes(); }
  const SyntheticSceneSpec& spec() const { return spec_; }

 private:
  SyntheticSceneSpec spec_;
  std::size_t count_;
  std::size_t first_index_;
};

std::unique_ptr<Dataset> generate_scenes(const SyntheticSceneSpec& spec, std::size_t count,
                                         std::size_t first_index = 0);
/// Renders one scene; also reports the placed shape centers (A then B) when requested.
Item render_scene(const SyntheticSceneSpec& spec, std::size_t index, std::array<double, 4>* centers = nullptr);

struct SinusoidComponent {
  double frequency = 1.0;  // Hz at the middle of the record
  double amplitude = 1.0;
  /// Relative frequency change across the record (chirp): f(t) = f * (1 + drift * (t/T - 1/2)).
  double drift = 0.0;
};

struct SignalSpec {
  int length = 3000;
  double sample_rate = 100.0;
  int channels = 1;
  std::vector<SinusoidComponent> components{{2.0, 1.0, 0.8}, {6.0, 0.7, -0.6}, {11.0, 0.5, 0.5}};
  /// Amplitude ramps linearly from (1 - envelope) to (1 + envelope) across the record.
  double envelope = 0.5;
  double noise = 0.1;
  /// Labels: class c triples the amplitude of component c. 0 disables labels.
  int num_classes = 0;
  bool normalize = true;
  std::uint64_t seed = 1;

  ImageDims dims() const { return {1, length, channels}; }
  void validate() const;
};

class SignalDataset : public Dataset {
 public:
  SignalDataset(SignalSpec spec, std::size_t count, std::size_t first_index = 0);
  std::size_t size() const override { return count_; }
  ImageDims dims() const override { return spec_.dims(); }
  Item item(std::size_t index) const override;
  int num_classes() const override { return spec_.num_classes; }

 private:
  SignalSpec spec_;
  std::size_t count_;
  std::size_t first_index_;
};

std::unique_ptr<Dataset> generate_signals(const SignalSpec& spec, std::size_t count, std::size_t first_index = 0);

struct NormalizedWindow {
  std::vector<double> values;
  /// Some channel had zero variance and was mapped to zeros.
  bool degenerate = false;
};

/// Per-channel zero mean / unit (population) variance over an interleaved
/// (sample, channel) window.
NormalizedWindow instance_normalize(std::span<const double> window, int channels);

/// CIFAR-style raw binary: per record one label byte then C planes of H*W bytes.
std::unique_ptr<Dataset> load_raw_images(const std::filesystem::path& path, const ImageDims& dims,
                                         int num_classes = 0);
void write_raw_images(const std::filesystem::path& path, const Dataset& data);

/// CSV with header "item,label,channel,sample,value", one row per channel-sample.
void write_signals_csv(const std::filesystem::path& path, const Dataset& data);
std::unique_ptr<Dataset> read_signals_csv(const std::filesystem::path& path, int num_classes = 0);

}  // namespace part
