#pragma once

#include <cstdint>

#include "loftr/geometry.hpp"
#include "loftr/image.hpp"

namespace loftr {

enum class GeometryKind { Homography, PlanarScene };

/// Bounds of the random warps drawn for synthetic pairs.
struct GeometryRanges {
  GeometryKind kind = GeometryKind::Homography;
  double max_rotation_deg = 10;
  double max_scale_delta = 0.1;
  double max_translation = 10;  // pixels
  double max_corner_jitter = 3;  // pixels, homography kind only
  double min_overlap = 0.25;
  std::size_t max_retries = 100;
};

struct SyntheticPair {
  Image image_a;
  Image image_b;
  WarpModel geometry;  // maps pixels of A to pixels of B
  std::uint64_t seed = 0;
};

/// Deterministic, well-mixed seed for item `index` of stream `stream`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

/// Seeded texture: blurred noise at several scales plus random sinusoids,
/// clipped to [0,1].
Image random_pattern(std::uint64_t seed, std::size_t height, std::size_t width);

/// Fraction of B's pixels whose preimage lies inside A.
double overlap_fraction(const WarpModel& geometry, std::size_t height, std::size_t width);

/// Draws a warp within `ranges`; redraws (up to max_retries) while the overlap
/// is below ranges.min_overlap. Throws GeometryError when retries run out.
WarpModel random_geometry(std::uint64_t seed, std::size_t height, std::size_t width, const GeometryRanges& ranges);

/// Builds the pair for a fixed warp. B(p) samples the texture at warp⁻¹(p), so
/// B equals A warped by `geometry` wherever the preimage lies inside A.
SyntheticPair synth_pair_with(std::uint64_t seed, std::size_t height, std::size_t width, const WarpModel& geometry);

SyntheticPair synth_pair(std::uint64_t seed, std::size_t height, std::size_t width, const GeometryRanges& ranges);

}  // namespace loftr
