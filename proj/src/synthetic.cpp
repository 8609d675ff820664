#include "loftr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "loftr/errors.hpp"

namespace loftr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Separable Gaussian blur with edge clamping.
std::vector<double> blur(const std::vector<double>& src, std::size_t h, std::size_t w, double sigma) {
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& k : kernel) k /= total;
  std::vector<double> tmp(src.size()), out(src.size());
  const auto clampi = [](int v, std::size_t n) { return static_cast<std::size_t>(std::clamp(v, 0, int(n) - 1)); };
  // Taps at offsets -radius..radius applied along a line of `n` samples spaced by `stride`.
  const auto convolve = [&](const double* in, double* line_out, std::size_t n, std::size_t stride) {
    for (std::size_t p = 0; p < n; ++p) {
      double acc = 0;
      if (int(p) >= radius && int(p) + radius < int(n)) {
        const double* base = in + (p - std::size_t(radius)) * stride;
        for (int i = 0; i <= 2 * radius; ++i) acc += kernel[i] * base[std::size_t(i) * stride];
      } else {
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * in[clampi(int(p) + i, n) * stride];
      }
      line_out[p * stride] = acc;
    }
  };
  for (std::size_t y = 0; y < h; ++y) convolve(src.data() + y * w, tmp.data() + y * w, w, 1);
  for (std::size_t x = 0; x < w; ++x) convolve(tmp.data() + x, out.data() + x, h, w);
  return out;
}

void standardize(std::vector<double>& v) {
  double mean = 0, sq = 0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  for (double x : v) sq += (x - mean) * (x - mean);
  const double sd = std::sqrt(sq / double(v.size()));
  for (double& x : v) x = sd > 0 ? (x - mean) / sd : 0.0;
}

bool inside(Point2 p, std::size_t height, std::size_t width) {
  return p.x >= 0 && p.y >= 0 && p.x <= double(width) - 1 && p.y <= double(height) - 1;
}

Homography random_homography(std::mt19937_64& rng, std::size_t height, std::size_t width, const GeometryRanges& r) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double angle = unit(rng) * r.max_rotation_deg * std::numbers::pi / 180.0;
  const double s = 1.0 + unit(rng) * r.max_scale_delta;
  const double tx = unit(rng) * r.max_translation, ty = unit(rng) * r.max_translation;
  const double cx = (double(width) - 1) / 2, cy = (double(height) - 1) / 2;
  Eigen::Matrix3d sim;
  sim << s * std::cos(angle), -s * std::sin(angle), 0, s * std::sin(angle), s * std::cos(angle), 0, 0, 0, 1;
  const Homography similarity = Homography::translation(cx + tx, cy + ty).after(Homography(sim)).after(
      Homography::translation(-cx, -cy));
  const double w = double(width) - 1, h = double(height) - 1;
  std::vector<Correspondence> corners;
  for (Point2 c : {Point2{0, 0}, Point2{w, 0}, Point2{w, h}, Point2{0, h}}) {
    Point2 d = warp_point(similarity, c);
    d.x += unit(rng) * r.max_corner_jitter;
    d.y += unit(rng) * r.max_corner_jitter;
    corners.push_back({c, d, 1.0});
  }
  return dlt_homography(corners);
}

PlanarScene random_scene(std::mt19937_64& rng, std::size_t height, std::size_t width, const GeometryRanges& r) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double deg = std::numbers::pi / 180.0;
  const double f = double(width);
  PlanarScene scene;
  scene.intrinsics << f, 0, (double(width) - 1) / 2, 0, f, (double(height) - 1) / 2, 0, 0, 1;
  const Eigen::Matrix3d roll = Eigen::AngleAxisd(unit(rng) * r.max_rotation_deg * deg, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Matrix3d pitch = Eigen::AngleAxisd(unit(rng) * 2 * deg, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d yaw = Eigen::AngleAxisd(unit(rng) * 2 * deg, Eigen::Vector3d::UnitY()).toRotationMatrix();
  scene.rotation = roll * pitch * yaw;
  scene.translation = Eigen::Vector3d(unit(rng) * r.max_translation / f, unit(rng) * r.max_translation / f,
                                      unit(rng) * r.max_scale_delta);
  const Eigen::Matrix3d tilt = (Eigen::AngleAxisd(unit(rng) * 10 * deg, Eigen::Vector3d::UnitX()) *
                                Eigen::AngleAxisd(unit(rng) * 10 * deg, Eigen::Vector3d::UnitY()))
                                   .toRotationMatrix();
  scene.normal = tilt * Eigen::Vector3d(0, 0, -1);
  scene.distance = 1.0;
  scene.validate(height, width);
  return scene;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) + index);
}

Image random_pattern(std::uint64_t seed, std::size_t height, std::size_t width) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const std::size_t n = height * width;
  std::vector<double> value(n, 0.5);
  const std::pair<double, double> layers[] = {{2.0, 0.6}, {4.0, 0.8}, {8.0, 1.0}};
  for (const auto& [sigma, weight] : layers) {
    std::vector<double> noise(n);
    for (double& v : noise) v = gauss(rng);
    std::vector<double> smooth = blur(noise, height, width, sigma);
    standardize(smooth);
    for (std::size_t i = 0; i < n; ++i) value[i] += 0.12 * weight * smooth[i];
  }
  for (int k = 0; k < 3; ++k) {
    const double period = 8.0 + 40.0 * uni(rng);
    const double dir = 2 * std::numbers::pi * uni(rng);
    const double phase = 2 * std::numbers::pi * uni(rng);
    const double fx = std::cos(dir) * 2 * std::numbers::pi / period, fy = std::sin(dir) * 2 * std::numbers::pi / period;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) value[y * width + x] += 0.08 * std::sin(fx * double(x) + fy * double(y) + phase);
  }
  Image image = Image::filled(height, width, 0.0f);
  for (std::size_t i = 0; i < n; ++i) image.pixels[i] = static_cast<float>(std::clamp(value[i], 0.0, 1.0));
  return image;
}

double overlap_fraction(const WarpModel& geometry, std::size_t height, std::size_t width) {
  const WarpModel back = inverse(geometry);
  constexpr int kSamples = 16;
  int hits = 0;
  for (int i = 0; i < kSamples; ++i)
    for (int j = 0; j < kSamples; ++j) {
      const Point2 p{(j + 0.5) / kSamples * (double(width) - 1), (i + 0.5) / kSamples * (double(height) - 1)};
      try {
        if (inside(warp(back, p), height, width)) ++hits;
      } catch (const GeometryError&) {
      }
    }
  return double(hits) / (kSamples * kSamples);
}

WarpModel random_geometry(std::uint64_t seed, std::size_t height, std::size_t width, const GeometryRanges& ranges) {
  std::mt19937_64 rng(seed);
  for (std::size_t attempt = 0; attempt <= ranges.max_retries; ++attempt) {
    try {
      WarpModel model;
      if (ranges.kind == GeometryKind::Homography) model = random_homography(rng, height, width, ranges);
      else model = random_scene(rng, height, width, ranges);
      if (overlap_fraction(model, height, width) >= ranges.min_overlap) return model;
    } catch (const GeometryError&) {
    }
  }
  throw GeometryError("random_geometry: no warp with sufficient overlap after retries");
}

SyntheticPair synth_pair_with(std::uint64_t seed, std::size_t height, std::size_t width, const WarpModel& geometry) {
  if (height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0)
    throw DimensionError("synth_pair: extents must be positive multiples of 8");
  // The texture extends beyond A so that B has content where its preimage
  // leaves A's frame.
  const Image canvas = random_pattern(derive_seed(seed, 1, 0), 3 * height, 3 * width);
  const double ox = double(width), oy = double(height);
  SyntheticPair pair;
  pair.seed = seed;
  pair.geometry = geometry;
  pair.image_a = Image::filled(height, width, 0.0f);
  pair.image_b = Image::filled(height, width, 0.0f);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) pair.image_a.at(y, x) = canvas.at(y + height, x + width);
  const WarpModel back = inverse(geometry);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      float v = 0.0f;
      try {
        const Point2 p = warp(back, {double(x), double(y)});
        v = sample_bilinear(canvas, p.x + ox, p.y + oy);
      } catch (const GeometryError&) {
      }
      pair.image_b.at(y, x) = v;
    }
  return pair;
}

SyntheticPair synth_pair(std::uint64_t seed, std::size_t height, std::size_t width, const GeometryRanges& ranges) {
  const WarpModel geometry = random_geometry(derive_seed(seed, 2, 0), height, width, ranges);
  return synth_pair_with(seed, height, width, geometry);
}

}  // namespace loftr
