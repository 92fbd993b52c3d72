#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "part/backbone.hpp"
#include "part/geometry.hpp"
#include "part/image.hpp"
#include "part/model.hpp"

namespace part {

/// Predicted and ground-truth relative transforms for all ordered pairs of one
/// image's patches. The predicted diagonal holds the identity target.
struct PredictionMatrix {
  std::size_t n = 0;
  std::size_t arity = 2;
  std::vector<double> predicted;
  TargetMatrix truth;

  double at(std::size_t i, std::size_t j, std::size_t k) const { return predicted[(i * n + j) * arity + k]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return predicted[(i * n + j) * arity + k]; }
};

/// Runs the relative head on every off-diagonal pair of the boxes.
PredictionMatrix prediction_matrix(const PartModel& model, const Image& image, std::span<const PatchBox> boxes);
/// A matrix whose predictions are the ground truth itself.
PredictionMatrix ground_truth_matrix(std::span<const PatchBox> boxes, TargetMode mode);

/// Accumulation buffer for pasted patches. Canvas pixel (y, x) corresponds to image
/// pixel (y + origin_y, x + origin_x); the source frame covers image pixels
/// [0, frame.width) x [0, frame.height).
struct Canvas {
  ImageDims dims;
  int origin_x = 0;
  int origin_y = 0;
  ImageDims frame;
  std::vector<double> accum;
  std::vector<double> weight;

  /// accum / max(weight, 1).
  Image render() const;
  /// Rendered pixels over the original frame only.
  Image frame_view() const;
  /// Rendered canvas with a one-pixel red border around the original frame.
  Image render_marked() const;
};

/// Pastes every patch (resized back to its box size) with its top-left corner at
/// ref_center + (dx * w_ref, dy * h_ref) - (w_j / 2, h_j / 2), rounded to the nearest
/// pixel. The reference patch sits at its true location.
Canvas reconstruct_from_reference(const PatchSequence& patches, const PredictionMatrix& matrix, std::size_t ref_index,
                                  const ImageDims& frame);

struct AntisymmetryReport {
  /// N x N x 2 residual theta_ij + theta_ji.
  std::vector<double> residual;
  /// Mean Euclidean norm of the residual over i < j.
  double mean_residual = 0.0;
  /// Pearson correlation of theta_ij with -theta_ji over i < j, computed per
  /// coordinate (dx, dy) and averaged over the non-degenerate ones.
  double correlation = 0.0;
  /// Every coordinate had zero variance on one side: correlation is reported as 0.
  bool degenerate = false;
};
AntisymmetryReport antisymmetry_residual(const PredictionMatrix& matrix);

/// Pearson correlation; sets degenerate (and returns 0) when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate = nullptr);

struct UncertaintyReport {
  /// Standard deviation of implied placements, in units of the mean reference box size.
  std::vector<double> std_x;
  std::vector<double> std_y;
  /// The same in pixels.
  std::vector<double> std_x_px;
  std::vector<double> std_y_px;
  /// Mean implied center per patch (pixels).
  std::vector<double> mean_x;
  std::vector<double> mean_y;
  /// Patch indices ordered from most to least certain (by std_x^2 + std_y^2).
  std::vector<std::size_t> rank;
};

/// Implied placement of patch j from reference i: center_i + theta_ij * (w_i, h_i), in
/// pixels on a 2^-24 lattice.
/// exclude_reference (if < N) drops one reference from every target's statistics.
UncertaintyReport placement_uncertainty(const PredictionMatrix& matrix, std::span<const PatchBox> boxes,
                                        std::size_t exclude_reference = static_cast<std::size_t>(-1));

struct GlobalPositions {
  /// Recovered centers (pixels).
  std::vector<double> x;
  std::vector<double> y;
  /// sqrt of the summed squared normalized residuals over i != j.
  double residual = 0.0;
};

/// Least squares over sum_{i != j} ||(p_j - p_i) / (w_i, h_i) - theta_ij||^2 with patch
/// `pinned` fixed to its true center.
GlobalPositions solve_global_positions(const PredictionMatrix& matrix, std::span<const PatchBox> boxes,
                                       std::size_t pinned = 0);

// CSV: "ref,tgt,pred_dx,pred_dy[,pred_dw,pred_dh],true_dx,true_dy[,true_dw,true_dh]".
void write_matrix_csv(std::ostream& out, const PredictionMatrix& matrix);
// CSV: "patch,std_x,std_y,std_x_px,std_y_px,mean_x,mean_y,rank".
void write_uncertainty_csv(std::ostream& out, const UncertaintyReport& report);

}  // namespace part
