#include "part/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

#include "part/error.hpp"

namespace part {

PredictionMatrix prediction_matrix(const PartModel& model, const Image& image, std::span<const PatchBox> boxes) {
  const std::size_t n = boxes.size();
  if (n < 2) throw ConfigError("prediction_matrix: need at least 2 boxes");
  if (model.head() == nullptr) throw ConfigError("prediction_matrix: model has no relative head");
  const TargetMode mode = model.head()->config().target;
  PredictionMatrix m;
  m.n = n;
  m.arity = arity(mode);
  m.truth = target_matrix(boxes, mode);
  m.predicted.assign(n * n * m.arity, 0.0);
  PairSelection pairs;
  pairs.pairs.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    write_target(boxes[i], boxes[i], mode, std::span<double>(m.predicted).subspan((i * n + i) * m.arity, m.arity));
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) pairs.pairs.emplace_back(i, j);
    }
  }
  ad::Tape tape;
  const Tensor pred = model.predict(tape, model.patches(image, boxes), pairs).value();
  for (std::size_t p = 0; p < pairs.count(); ++p) {
    const auto [i, j] = pairs.pairs[p];
    for (std::size_t k = 0; k < m.arity; ++k) m.at(i, j, k) = pred(p, k);
  }
  return m;
}

PredictionMatrix ground_truth_matrix(std::span<const PatchBox> boxes, TargetMode mode) {
  PredictionMatrix m;
  m.truth = target_matrix(boxes, mode);
  m.n = m.truth.n;
  m.arity = m.truth.arity;
  m.predicted = m.truth.values;
  return m;
}

Image Canvas::render() const {
  Image out(dims);
  const auto c = static_cast<std::size_t>(dims.channels);
  for (std::size_t p = 0; p < weight.size(); ++p) {
    const double w = std::max(weight[p], 1.0);
    for (std::size_t k = 0; k < c; ++k) out.pixels[p * c + k] = accum[p * c + k] / w;
  }
  return out;
}

Image Canvas::frame_view() const {
  const Image full = render();
  Image out(frame);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const int cy = y - origin_y;
      const int cx = x - origin_x;
      for (int k = 0; k < frame.channels; ++k) out.at(y, x, k) = full.at(cy, cx, k);
    }
  }
  return out;
}

Image Canvas::render_marked() const {
  const Image full = render();
  Image out(ImageDims{dims.height + 2, dims.width + 2, dims.channels});
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      for (int k = 0; k < dims.channels; ++k) out.at(y + 1, x + 1, k) = full.at(y, x, k);
    }
  }
  // Frame rectangle in marked coordinates, grown by one pixel.
  const int x0 = -origin_x, y0 = -origin_y;
  const int x1 = x0 + frame.width + 1, y1 = y0 + frame.height + 1;
  auto paint = [&](int y, int x) {
    for (int k = 0; k < dims.channels; ++k) out.at(y, x, k) = k == 0 ? 1.0 : 0.0;
  };
  for (int x = x0; x <= x1; ++x) {
    paint(y0, x);
    paint(y1, x);
  }
  for (int y = y0; y <= y1; ++y) {
    paint(y, x0);
    paint(y, x1);
  }
  return out;
}

Canvas reconstruct_from_reference(const PatchSequence& patches, const PredictionMatrix& matrix, std::size_t ref_index,
                                  const ImageDims& frame) {
  frame.validate();
  const std::size_t n = matrix.n;
  if (ref_index >= n) {
    throw ConfigError("reconstruct: reference index " + std::to_string(ref_index) + " out of range for " +
                      std::to_string(n) + " patches");
  }
  if (patches.source_boxes.size() != n || patches.values.rows() != n) {
    throw ShapeError("reconstruct: patch sequence has " + std::to_string(patches.values.rows()) +
                     " patches, matrix has " + std::to_string(n));
  }
  const int channels = frame.channels;
  const auto cols = static_cast<int>(patches.values.cols());
  int ph = 1, pw = cols / channels;
  if (frame.height > 1) {
    ph = pw = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cols / channels))));
  }
  if (ph * pw * channels != cols) throw ShapeError("reconstruct: patch rows do not match the frame channel count");

  const PatchBox& ref = patches.source_boxes[ref_index];
  std::vector<int> left(n), top(n);
  int min_x = 0, min_y = 0, max_x = frame.width, max_y = frame.height;
  for (std::size_t j = 0; j < n; ++j) {
    const PatchBox& b = patches.source_boxes[j];
    left[j] = static_cast<int>(std::lround(ref.center_x() + matrix.at(ref_index, j, 0) * ref.width - b.width / 2.0));
    top[j] = matrix.arity >= 2
                 ? static_cast<int>(std::lround(ref.center_y() + matrix.at(ref_index, j, 1) * ref.height -
                                                b.height / 2.0))
                 : b.y_s;
    min_x = std::min(min_x, left[j]);
    min_y = std::min(min_y, top[j]);
    max_x = std::max(max_x, left[j] + b.width);
    max_y = std::max(max_y, top[j] + b.height);
  }

  Canvas canvas;
  canvas.dims = ImageDims{max_y - min_y, max_x - min_x, channels};
  canvas.origin_x = min_x;
  canvas.origin_y = min_y;
  canvas.frame = frame;
  canvas.accum.assign(canvas.dims.value_count(), 0.0);
  canvas.weight.assign(canvas.dims.pixel_count(), 0.0);

  std::vector<double> pasted;
  for (std::size_t j = 0; j < n; ++j) {
    const PatchBox& b = patches.source_boxes[j];
    Image patch(ImageDims{ph, pw, channels});
    const auto row = patches.values.row(j);
    std::copy(row.begin(), row.end(), patch.pixels.begin());
    pasted.assign(static_cast<std::size_t>(b.width) * b.height * channels, 0.0);
    resample_box(patch, PatchBox{0, 0, pw, ph}, b.height, b.width, pasted);
    for (int y = 0; y < b.height; ++y) {
      for (int x = 0; x < b.width; ++x) {
        const auto p = static_cast<std::size_t>(top[j] - min_y + y) * canvas.dims.width + (left[j] - min_x + x);
        canvas.weight[p] += 1.0;
        for (int k = 0; k < channels; ++k) {
          canvas.accum[p * channels + k] += pasted[(static_cast<std::size_t>(y) * b.width + x) * channels + k];
        }
      }
    }
  }
  return canvas;
}

double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate) {
  if (a.size() != b.size()) throw ShapeError("pearson: sequences differ in length");
  if (degenerate != nullptr) *degenerate = false;
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) {
    if (degenerate != nullptr) *degenerate = true;
    return 0.0;
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0, qa = 0.0, qb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
    qa += a[i] * a[i];
    qb += b[i] * b[i];
  }
  // Variance at rounding level relative to the raw second moment counts as zero.
  constexpr double kRelative = 1e-24;
  if (saa <= kRelative * qa || sbb <= kRelative * qb) {
    if (degenerate != nullptr) *degenerate = true;
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

AntisymmetryReport antisymmetry_residual(const PredictionMatrix& m) {
  if (m.n < 2) throw ConfigError("antisymmetry_residual: need at least 2 patches");
  const std::size_t n = m.n;
  const std::size_t a = std::min<std::size_t>(m.arity, 2);
  AntisymmetryReport r;
  r.residual.assign(n * n * 2, 0.0);
  std::vector<std::vector<double>> forward(a), backward(a);
  double norm_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double sq = 0.0;
      for (std::size_t k = 0; k < a; ++k) {
        const double e = m.at(i, j, k) + m.at(j, i, k);
        r.residual[(i * n + j) * 2 + k] = e;
        sq += e * e;
      }
      if (i < j) {
        norm_sum += std::sqrt(sq);
        ++count;
        for (std::size_t k = 0; k < a; ++k) {
          forward[k].push_back(m.at(i, j, k));
          backward[k].push_back(-m.at(j, i, k));
        }
      }
    }
  }
  r.mean_residual = norm_sum / static_cast<double>(count);
  // Per coordinate, so per-axis offsets common to all pairs do not pose as correlation.
  double rho_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < a; ++k) {
    bool degenerate = false;
    const double rho = pearson(forward[k], backward[k], &degenerate);
    if (!degenerate) {
      rho_sum += rho;
      ++used;
    }
  }
  r.degenerate = used == 0;
  r.correlation = used == 0 ? 0.0 : rho_sum / static_cast<double>(used);
  return r;
}

namespace {

// Implied placements are kept on a 2^-24 pixel lattice: (d / w) * w does not always
// round-trip, and the lattice removes that rounding without touching real spread.
double snap(double v) {
  constexpr double kLattice = 16777216.0;
  return std::round(v * kLattice) / kLattice;
}

}  // namespace

UncertaintyReport placement_uncertainty(const PredictionMatrix& m, std::span<const PatchBox> boxes,
                                        std::size_t exclude_reference) {
  const std::size_t n = m.n;
  if (n < 3) throw ConfigError("placement_uncertainty: need at least 3 patches");
  if (boxes.size() != n) throw ShapeError("placement_uncertainty: box count does not match the matrix");
  UncertaintyReport r;
  r.std_x.assign(n, 0.0);
  r.std_y.assign(n, 0.0);
  r.std_x_px.assign(n, 0.0);
  r.std_y_px.assign(n, 0.0);
  r.mean_x.assign(n, 0.0);
  r.mean_y.assign(n, 0.0);
  std::vector<double> px, py;
  for (std::size_t j = 0; j < n; ++j) {
    px.clear();
    py.clear();
    double ref_w = 0.0, ref_h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j || i == exclude_reference) continue;
      const PatchBox& b = boxes[i];
      px.push_back(snap(b.center_x() + m.at(i, j, 0) * b.width));
      py.push_back(m.arity >= 2 ? snap(b.center_y() + m.at(i, j, 1) * b.height) : boxes[j].center_y());
      ref_w += b.width;
      ref_h += b.height;
    }
    const double c = static_cast<double>(px.size());
    const double mx = std::accumulate(px.begin(), px.end(), 0.0) / c;
    const double my = std::accumulate(py.begin(), py.end(), 0.0) / c;
    double vx = 0.0, vy = 0.0;
    for (std::size_t k = 0; k < px.size(); ++k) {
      vx += (px[k] - mx) * (px[k] - mx);
      vy += (py[k] - my) * (py[k] - my);
    }
    r.mean_x[j] = mx;
    r.mean_y[j] = my;
    r.std_x_px[j] = std::sqrt(vx / c);
    r.std_y_px[j] = std::sqrt(vy / c);
    r.std_x[j] = r.std_x_px[j] / (ref_w / c);
    r.std_y[j] = r.std_y_px[j] / (ref_h / c);
  }
  r.rank.resize(n);
  std::iota(r.rank.begin(), r.rank.end(), std::size_t{0});
  std::stable_sort(r.rank.begin(), r.rank.end(), [&](std::size_t a, std::size_t b) {
    return r.std_x[a] * r.std_x[a] + r.std_y[a] * r.std_y[a] < r.std_x[b] * r.std_x[b] + r.std_y[b] * r.std_y[b];
  });
  return r;
}

namespace {

// Solves the symmetric positive definite system a x = b in place (a is n x n, row-major).
void cholesky_solve(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw GeometryError("solve_global_positions: singular system");
    d = std::sqrt(d);
    a[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
}

// One axis: minimize sum_{i != j} ((p_j - p_i) / s_i - t_ij)^2 with p_pinned fixed.
std::vector<double> solve_axis(std::size_t n, std::size_t pinned, double pinned_value,
                               const std::vector<double>& scale, const std::function<double(std::size_t, std::size_t)>& t) {
  std::vector<double> lap(n * n, 0.0), rhs(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double c = 1.0 / (scale[i] * scale[i]);
      const double target = t(i, j) * scale[i];
      lap[i * n + i] += c;
      lap[j * n + j] += c;
      lap[i * n + j] -= c;
      lap[j * n + i] -= c;
      rhs[j] += c * target;
      rhs[i] -= c * target;
    }
  }
  const std::size_t f = n - 1;
  std::vector<double> a(f * f, 0.0), b(f, 0.0);
  auto free_index = [&](std::size_t k) { return k < pinned ? k : k - 1; };
  for (std::size_t r = 0; r < n; ++r) {
    if (r == pinned) continue;
    b[free_index(r)] = rhs[r] - lap[r * n + pinned] * pinned_value;
    for (std::size_t c = 0; c < n; ++c) {
      if (c != pinned) a[free_index(r) * f + free_index(c)] = lap[r * n + c];
    }
  }
  cholesky_solve(a, b, f);
  std::vector<double> p(n, pinned_value);
  for (std::size_t k = 0; k < n; ++k) {
    if (k != pinned) p[k] = b[free_index(k)];
  }
  return p;
}

}  // namespace

GlobalPositions solve_global_positions(const PredictionMatrix& m, std::span<const PatchBox> boxes,
                                       std::size_t pinned) {
  const std::size_t n = m.n;
  if (n < 2) throw GeometryError("solve_global_positions: singular system (one patch left after pinning)");
  if (boxes.size() != n) throw ShapeError("solve_global_positions: box count does not match the matrix");
  if (pinned >= n) throw ConfigError("solve_global_positions: pinned index out of range");
  std::vector<double> w(n), h(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = boxes[i].width;
    h[i] = boxes[i].height;
  }
  GlobalPositions g;
  g.x = solve_axis(n, pinned, boxes[pinned].center_x(), w, [&](std::size_t i, std::size_t j) { return m.at(i, j, 0); });
  if (m.arity >= 2) {
    g.y = solve_axis(n, pinned, boxes[pinned].center_y(), h,
                     [&](std::size_t i, std::size_t j) { return m.at(i, j, 1); });
  } else {
    g.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.y[i] = boxes[i].center_y();
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double rx = (g.x[j] - g.x[i]) / w[i] - m.at(i, j, 0);
      sq += rx * rx;
      if (m.arity >= 2) {
        const double ry = (g.y[j] - g.y[i]) / h[i] - m.at(i, j, 1);
        sq += ry * ry;
      }
    }
  }
  g.residual = std::sqrt(sq);
  return g;
}

void write_matrix_csv(std::ostream& out, const PredictionMatrix& m) {
  static const char* kNames[] = {"dx", "dy", "dw", "dh"};
  out << "ref,tgt";
  for (std::size_t k = 0; k < m.arity; ++k) out << ",pred_" << kNames[k];
  for (std::size_t k = 0; k < m.arity; ++k) out << ",true_" << kNames[k];
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) {
      out << i << ',' << j;
      for (std::size_t k = 0; k < m.arity; ++k) out << ',' << m.at(i, j, k);
      for (std::size_t k = 0; k < m.arity; ++k) out << ',' << m.truth.at(i, j, k);
      out << '\n';
    }
  }
}

void write_uncertainty_csv(std::ostream& out, const UncertaintyReport& r) {
  std::vector<std::size_t> position(r.rank.size());
  for (std::size_t k = 0; k < r.rank.size(); ++k) position[r.rank[k]] = k;
  out << "patch,std_x,std_y,std_x_px,std_y_px,mean_x,mean_y,rank\n";
  out.precision(17);
  for (std::size_t j = 0; j < r.std_x.size(); ++j) {
    out << j << ',' << r.std_x[j] << ',' << r.std_y[j] << ',' << r.std_x_px[j] << ',' << r.std_y_px[j] << ','
        << r.mean_x[j] << ',' << r.mean_y[j] << ',' << position[j] << '\n';
  }
}

}  // namespace part
