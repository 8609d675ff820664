#include "loftr/fine_refinement.hpp"

#include <algorithm>
#include <cmath>

namespace loftr::LOFTR_PRECISION {

Point2 locate_fine_center(std::size_t cell, std::size_t coarse_height, std::size_t coarse_width) {
  if (coarse_width == 0 || cell >= coarse_height * coarse_width)
    throw IndexError("locate_fine_center: cell " + std::to_string(cell) + " outside a " + std::to_string(coarse_height) +
                     "x" + std::to_string(coarse_width) + " grid");
  const std::size_t row = cell / coarse_width, col = cell % coarse_width;
  return {4.0 * double(col) + 1.5, 4.0 * double(row) + 1.5};
}

std::optional<WindowPlacement> place_window(Point2 center, std::size_t fine_height, std::size_t fine_width,
                                            std::size_t window) {
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  const auto row = static_cast<std::ptrdiff_t>(std::floor(center.y + 0.5));
  const auto col = static_cast<std::ptrdiff_t>(std::floor(center.x + 0.5));
  if (row < r || col < r || row > std::ptrdiff_t(fine_height) - 1 - r || col > std::ptrdiff_t(fine_width) - 1 - r)
    return std::nullopt;
  return WindowPlacement{row, col};
}

std::vector<std::ptrdiff_t> window_rows(WindowPlacement placement, std::size_t fine_width, std::size_t window,
                                        std::size_t base) {
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<std::ptrdiff_t> rows;
  rows.reserve(window * window);
  for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
    for (std::ptrdiff_t dx = -r; dx <= r; ++dx)
      rows.push_back(std::ptrdiff_t(base) + (placement.row + dy) * std::ptrdiff_t(fine_width) + placement.col + dx);
  return rows;
}

Tensor crop_window(const Tensor& grid, std::size_t fine_width, WindowPlacement placement, std::size_t window) {
  return gather_rows(grid, window_rows(placement, fine_width, window));
}

std::optional<WindowPair> crop_windows(const Tensor& grid_a, const Tensor& grid_b, std::size_t coarse_height,
                                       std::size_t coarse_width, const CoarseMatch& match, std::size_t window,
                                       std::string* reason) {
  if (window % 2 == 0) throw ConfigError("crop_windows: window size must be odd");
  const std::size_t fh = coarse_height * 4, fw = coarse_width * 4;
  if (grid_a.ndim() != 2 || grid_a.dim(0) != fh * fw || grid_b.ndim() != 2 || grid_b.dim(0) != fh * fw)
    throw DimensionError("crop_windows: fine grids must be [" + std::to_string(fh * fw) + ", C]");
  const auto ca = place_window(locate_fine_center(match.a, coarse_height, coarse_width), fh, fw, window);
  const auto cb = place_window(locate_fine_center(match.b, coarse_height, coarse_width), fh, fw, window);
  if (!ca || !cb) {
    if (reason) *reason = !ca ? "window in A crosses the border" : "window in B crosses the border";
    return std::nullopt;
  }
  return WindowPair{crop_window(grid_a, fw, *ca, window), crop_window(grid_b, fw, *cb, window), *ca, *cb};
}

Tensor window_offsets(std::size_t window) {
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  std::vector<real> data;
  for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
      data.push_back(static_cast<real>(dx));
      data.push_back(static_cast<real>(dy));
    }
  return Tensor::from_data({window * window, 2}, std::move(data));
}

Refinement heatmap_moments(const Tensor& heatmap, std::size_t window) {
  if (heatmap.ndim() != 2 || heatmap.dim(1) != window * window)
    throw DimensionError("heatmap_moments: expected [M, " + std::to_string(window * window) + "], got " +
                         shape_to_string(heatmap.shape()));
  const Tensor offsets = window_offsets(window);
  std::vector<real> sq(window * window);
  for (std::size_t k = 0; k < sq.size(); ++k) {
    const real dx = offsets.values()[2 * k], dy = offsets.values()[2 * k + 1];
    sq[k] = dx * dx + dy * dy;
  }
  const Tensor squared = Tensor::from_data({window * window, 1}, std::move(sq));
  Refinement out;
  out.heatmap = heatmap;
  out.expectation = matmul(heatmap, offsets);
  const Tensor second = matmul(heatmap, squared);
  const Tensor mean_sq = sum(mul(out.expectation, out.expectation), 1);
  out.variance = reshape(sub(second, mean_sq), {heatmap.dim(0)});
  return out;
}

Refinement refine(const Tensor& windows_a, const Tensor& windows_b, const StackParams& stack,
                  const AttentionOptions& options, std::size_t window) {
  const std::size_t tokens = window * window;
  if (windows_a.ndim() != 3 || windows_a.dim(1) != tokens || windows_b.shape() != windows_a.shape())
    throw DimensionError("refine: windows must both be [M, " + std::to_string(tokens) + ", C]");
  AttentionOptions opts = options;
  opts.grid_height = opts.grid_width = window;
  opts.per_round_encoding = nullptr;
  const auto [a, b] = loftr_stack(windows_a, windows_b, stack, opts);
  const std::size_t m = a.dim(0), channels = a.dim(2);
  const Tensor center = slice(a, 1, tokens / 2, 1);
  const Tensor scores = scale(matmul_nt(center, b), static_cast<real>(1.0 / std::sqrt(double(channels))));
  const Tensor heatmap = reshape(softmax(scores, 2), {m, tokens});
  return heatmap_moments(heatmap, window);
}

namespace {

// Interpolation taps of the transformed coarse map at a fine cell.
struct Taps {
  std::size_t index[4];
  real weight[4];
};

Taps coarse_taps(std::ptrdiff_t row, std::ptrdiff_t col, std::size_t ch, std::size_t cw) {
  // Fine center 2u + 0.5 and coarse center 8c + 3.5 coincide at c = (2u − 3)/8.
  const double y = std::clamp((2.0 * double(row) - 3.0) / 8.0, 0.0, double(ch - 1));
  const double x = std::clamp((2.0 * double(col) - 3.0) / 8.0, 0.0, double(cw - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, ch - 1), x1 = std::min(x0 + 1, cw - 1);
  const double fy = y - double(y0), fx = x - double(x0);
  return {{y0 * cw + x0, y0 * cw + x1, y1 * cw + x0, y1 * cw + x1},
          {real((1 - fy) * (1 - fx)), real((1 - fy) * fx), real(fy * (1 - fx)), real(fy * fx)}};
}

Tensor window_features(const Tensor& fine, const Tensor& coarse, const FineInputs& in,
                       const std::vector<std::pair<std::size_t, WindowPlacement>>& windows, const FineParams& params,
                       std::size_t window) {
  const std::size_t pairs = fine.dim(0), lf = fine.dim(1), lc = coarse.dim(1);
  const Tensor fine_flat = reshape(fine, {pairs * lf, fine.dim(2)});
  const Tensor coarse_flat = reshape(coarse, {pairs * lc, coarse.dim(2)});
  const std::size_t rows = windows.size() * window * window;
  std::vector<std::ptrdiff_t> fine_rows;
  fine_rows.reserve(rows);
  std::vector<std::ptrdiff_t> tap_rows[4];
  std::vector<real> tap_weights[4];
  for (const auto& [pair, placement] : windows) {
    const std::vector<std::ptrdiff_t> cells = window_rows(placement, in.fine_width, window);
    for (std::ptrdiff_t cell : cells) {
      fine_rows.push_back(std::ptrdiff_t(pair * lf) + cell);
      const Taps taps = coarse_taps(cell / std::ptrdiff_t(in.fine_width), cell % std::ptrdiff_t(in.fine_width),
                                    in.coarse_height, in.coarse_width);
      for (int k = 0; k < 4; ++k) {
        tap_rows[k].push_back(std::ptrdiff_t(pair * lc + taps.index[k]));
        tap_weights[k].push_back(taps.weight[k]);
      }
    }
  }
  Tensor upsampled;
  for (int k = 0; k < 4; ++k) {
    const Tensor term =
        mul(gather_rows(coarse_flat, tap_rows[k]), Tensor::from_data({rows, 1}, std::move(tap_weights[k])));
    upsampled = upsampled.defined() ? add(upsampled, term) : term;
  }
  const Tensor joined = concat({gather_rows(fine_flat, fine_rows), upsampled}, 1);
  const Tensor projected = add(matmul(joined, params.merge_weight), params.merge_bias);
  return reshape(projected, {windows.size(), window * window, params.merge_weight.dim(1)});
}

}  // namespace

FineBatch refine_requests(const FineInputs& inputs, const std::vector<FineRequest>& requests,
                          const FineParams& params, const AttentionOptions& options, std::size_t window) {
  if (window % 2 == 0) throw ConfigError("refine: window size must be odd");
  FineBatch batch;
  std::vector<std::pair<std::size_t, WindowPlacement>> windows_a, windows_b;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const FineRequest& req = requests[i];
    const Point2 center_a = locate_fine_center(req.match.a, inputs.coarse_height, inputs.coarse_width);
    const Point2 center_b = locate_fine_center(req.match.b, inputs.coarse_height, inputs.coarse_width);
    const auto pa = place_window(center_a, inputs.fine_height, inputs.fine_width, window);
    const auto pb = place_window(center_b, inputs.fine_height, inputs.fine_width, window);
    if (!pa || !pb) {
      batch.dropped.push_back({i, !pa ? "window in A crosses the border" : "window in B crosses the border"});
      continue;
    }
    batch.kept.push_back(i);
    batch.centers_b.push_back(*pb);
    batch.points_a.push_back(fine_to_image(center_a));
    batch.residuals_a.push_back({center_a.x - double(pa->col), center_a.y - double(pa->row)});
    windows_a.emplace_back(req.pair, *pa);
    windows_b.emplace_back(req.pair, *pb);
  }
  if (batch.kept.empty()) return batch;
  const Tensor wa = window_features(inputs.fine_a, inputs.coarse_a, inputs, windows_a, params, window);
  const Tensor wb = window_features(inputs.fine_b, inputs.coarse_b, inputs, windows_b, params, window);
  batch.refinement = refine(wa, wb, params.stack, options, window);
  return batch;
}

Point2 refined_point_b(const FineBatch& batch, std::size_t row) {
  const auto e = batch.refinement.expectation.values();
  const WindowPlacement c = batch.centers_b[row];
  const Point2 r = batch.residuals_a[row];
  return fine_to_image(
      {double(c.col) + double(e[2 * row]) + r.x, double(c.row) + double(e[2 * row + 1]) + r.y});
}

FineMatchSet refine_all(const std::vector<CoarseMatch>& matches, const FineInputs& inputs, const FineParams& params,
                        const AttentionOptions& options, std::size_t window) {
  std::vector<FineRequest> requests;
  for (const CoarseMatch& m : matches) requests.push_back({0, m});
  const FineBatch batch = refine_requests(inputs, requests, params, options, window);
  FineMatchSet out;
  out.dropped = batch.dropped;
  for (std::size_t row = 0; row < batch.kept.size(); ++row) {
    const CoarseMatch& m = matches[batch.kept[row]];
    FineMatch f;
    f.point_a = batch.points_a[row];
    f.point_b = refined_point_b(batch, row);
    f.confidence = m.confidence;
    f.variance = std::max(0.0, double(batch.refinement.variance.values()[row]));
    f.cell_a = m.a;
    f.cell_b = m.b;
    out.matches.push_back(f);
  }
  return out;
}

}  // namespace loftr::LOFTR_PRECISION
