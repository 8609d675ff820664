#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace loftr {

struct Point2 {
  double x = 0;
  double y = 0;
};

/// Projective transform of the image plane, stored with h33 = 1.
class Homography {
 public:
  Homography();
  /// Normalizes to h33 = 1; throws GeometryError if that is impossible or the
  /// matrix is singular.
  explicit Homography(const Eigen::Matrix3d& matrix);

  static Homography translation(double tx, double ty);

  const Eigen::Matrix3d& matrix() const { return matrix_; }
  Homography inverse() const;
  /// this ∘ other (apply `other` first).
  Homography after(const Homography& other) const;

 private:
  Eigen::Matrix3d matrix_;
};

/// Projective warp with division by the third coordinate. Throws GeometryError
/// when the point maps to infinity.
Point2 warp_point(const Homography& h, Point2 p);

/// Two pinhole views of the plane {X : nᵀX + d = 0} expressed in camera A.
/// Camera B sees X_B = R·X_A + t.
struct PlanarScene {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);
  double distance = 1;

  /// K (R − t·nᵀ/d) K⁻¹
  Homography induced_homography() const;
  /// Depth along camera A's optical axis of the plane point seen at pixel p.
  double depth_at(Point2 p) const;
  /// Back-projects p with the plane depth, moves it to camera B and projects.
  Point2 reproject(Point2 p) const;
  /// The same scene seen from B toward A.
  PlanarScene inverse() const;
  /// Throws GeometryError if the plane is not in front of both cameras at the
  /// given image extent, or the induced homography is singular.
  void validate(std::size_t height, std::size_t width) const;
};

/// Ground-truth geometry of an image pair.
using WarpModel = std::variant<Homography, PlanarScene>;

Point2 warp(const WarpModel& model, Point2 p);
WarpModel inverse(const WarpModel& model);
Homography as_homography(const WarpModel& model);

// --- metrics -----------------------------------------------------------------

/// Mean over the four image corners of ‖H_est(c) − H_gt(c)‖.
double corner_error(const Homography& estimate, const Homography& truth, std::size_t height, std::size_t width);

/// (1/t)·∫₀ᵗ frac(err ≤ x) dx, integrated exactly. Throws UndefinedInputError on
/// an empty list.
double auc(std::span<const double> errors, double threshold);

struct Correspondence {
  Point2 a;
  Point2 b;
  double confidence = 1;
};

struct EndpointErrors {
  std::vector<double> per_match;
  double mean = 0;
};

/// ‖b − warp(a)‖ per correspondence, in image pixels.
EndpointErrors endpoint_error(std::span<const Correspondence> matches, const WarpModel& truth);

// --- estimation ----------------------------------------------------------------

/// Normalized DLT. Requires >= 4 correspondences in general position; throws
/// GeometryError on rank-deficient configurations.
Homography dlt_homography(std::span<const Correspondence> correspondences);

struct RansacOptions {
  double inlier_threshold = 3.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
};

struct RansacResult {
  bool success = false;
  Homography homography;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

/// RMS of the forward and backward transfer distances.
double symmetric_transfer_error(const Homography& h, const Correspondence& c);

/// Seeded minimal-sample RANSAC followed by a DLT refit on all inliers. An
/// estimation failure is reported through `success`, not thrown.
RansacResult ransac_homography(std::span<const Correspondence> correspondences, const RansacOptions& options);

// --- text formats ------------------------------------------------------------------

/// Nine whitespace-separated reals, row-major.
std::string format_homography(const Homography& h);
Homography parse_homography(const std::string& text);

/// Lines of x_A,y_A,x_B,y_B[,confidence]; a non-numeric first line is a header.
std::vector<Correspondence> read_correspondences_csv(std::istream& in);
void write_correspondences_csv(std::ostream& out, std::span<const Correspondence> matches);

}  // namespace loftr
