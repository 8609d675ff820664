#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loftr/attention.hpp"
#include "loftr/coarse_matching.hpp"
#include "loftr/geometry.hpp"
#include "loftr/tensor.hpp"

namespace loftr::LOFTR_PRECISION {

/// Projection of [native fine ‖ upsampled coarse] back to d_f, and the small
/// window stack.
struct FineParams {
  Tensor merge_weight;  // [d_f + d_c, d_f]
  Tensor merge_bias;  // [d_f]
  StackParams stack;
};

// Coordinate frames: image pixels have centers at integers; fine cell u covers
// image pixels 2u and 2u+1, so its center is at 2u + 0.5.

inline Point2 fine_to_image(Point2 p) { return {2 * p.x + 0.5, 2 * p.y + 0.5}; }
inline Point2 image_to_fine(Point2 p) { return {(p.x - 0.5) / 2, (p.y - 0.5) / 2}; }

/// (x, y) = (4·col + 1.5, 4·row + 1.5): the center of the cell's 8×8 block on
/// the fine grid. Throws IndexError outside the coarse grid.
Point2 locate_fine_center(std::size_t cell, std::size_t coarse_height, std::size_t coarse_width);

/// Integer center of a w×w window (row, col) on the fine grid.
struct WindowPlacement {
  std::ptrdiff_t row = 0;
  std::ptrdiff_t col = 0;
};

/// Rounds half up. Returns nullopt when the window would cross the border.
std::optional<WindowPlacement> place_window(Point2 center, std::size_t fine_height, std::size_t fine_width,
                                            std::size_t window);

/// Flat row indices of the window cells, row-major, shifted by `base`.
std::vector<std::ptrdiff_t> window_rows(WindowPlacement placement, std::size_t fine_width, std::size_t window,
                                        std::size_t base = 0);

/// [w·w, C] slice of a [H·W, C] grid.
Tensor crop_window(const Tensor& grid, std::size_t fine_width, WindowPlacement placement, std::size_t window);

struct WindowPair {
  Tensor window_a;
  Tensor window_b;
  WindowPlacement center_a;
  WindowPlacement center_b;
};

/// Crops both windows around the fine centers of a coarse match. Returns
/// nullopt and fills `reason` when either window crosses the border.
std::optional<WindowPair> crop_windows(const Tensor& grid_a, const Tensor& grid_b, std::size_t coarse_height,
                                       std::size_t coarse_width, const CoarseMatch& match, std::size_t window,
                                       std::string* reason = nullptr);

/// [w·w, 2] table of (dx, dy) = (col − r, row − r), r = (w−1)/2.
Tensor window_offsets(std::size_t window);

struct Refinement {
  Tensor heatmap;  // [M, w·w]
  Tensor expectation;  // [M, 2] (dx, dy) in fine cells
  Tensor variance;  // [M] total variance in fine cells²
};

/// First and second moments of heatmaps over the window offsets.
Refinement heatmap_moments(const Tensor& heatmap, std::size_t window);

/// Runs the window stack, correlates A's center token with every B token
/// (scaled by 1/√C) and takes moments of the softmax. Windows are [M, w·w, C].
Refinement refine(const Tensor& windows_a, const Tensor& windows_b, const StackParams& stack,
                  const AttentionOptions& options, std::size_t window);

/// Features of P image pairs at both levels; coarse maps are the transformed
/// ones.
struct FineInputs {
  Tensor fine_a;  // [P, H_f·W_f, d_f]
  Tensor fine_b;
  Tensor coarse_a;  // [P, H_c·W_c, d_c]
  Tensor coarse_b;
  std::size_t coarse_height = 0;
  std::size_t coarse_width = 0;
  std::size_t fine_height = 0;
  std::size_t fine_width = 0;
};

struct FineRequest {
  std::size_t pair = 0;
  CoarseMatch match;
};

struct DroppedMatch {
  std::size_t request = 0;
  std::string reason;
};

struct FineBatch {
  std::vector<std::size_t> kept;  // request index per refined row
  std::vector<WindowPlacement> centers_b;
  std::vector<Point2> points_a;  // image pixels, unrounded cell centers
  /// Unrounded minus rounded A window center (fine cells). The query token sits
  /// at the rounded center, so the same shift carries its match in B back to
  /// points_a.
  std::vector<Point2> residuals_a;
  std::vector<DroppedMatch> dropped;
  Refinement refinement;  // undefined tensors when nothing survived
};

/// Windows of [native fine ‖ bilinearly upsampled coarse] features at the
/// requested matches, projected to d_f and refined.
FineBatch refine_requests(const FineInputs& inputs, const std::vector<FineRequest>& requests,
                          const FineParams& params, const AttentionOptions& options, std::size_t window);

struct FineMatch {
  Point2 point_a;  // image pixels
  Point2 point_b;
  double confidence = 0;
  double variance = 0;  // fine cells²
  std::size_t cell_a = 0;
  std::size_t cell_b = 0;
};

struct FineMatchSet {
  std::vector<FineMatch> matches;
  std::vector<DroppedMatch> dropped;
};

/// Image-pixel position of B's refined point for a refined row of `batch`:
/// window center + expectation + A's rounding residual.
Point2 refined_point_b(const FineBatch& batch, std::size_t row);

/// One pair (P = 1): refines every coarse match that fits inside the maps.
FineMatchSet refine_all(const std::vector<CoarseMatch>& matches, const FineInputs& inputs, const FineParams& params,
                        const AttentionOptions& options, std::size_t window);

}  // namespace loftr::LOFTR_PRECISION
