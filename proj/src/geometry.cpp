#include "loftr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "loftr/errors.hpp"

namespace loftr {

// --- Homography -------------------------------------------------------------------

Homography::Homography() : matrix_(Eigen::Matrix3d::Identity()) {}

Homography::Homography(const Eigen::Matrix3d& matrix) {
  if (!matrix.allFinite()) throw GeometryError("homography: non-finite entries");
  const double scale = matrix.cwiseAbs().maxCoeff();
  if (scale == 0 || std::abs(matrix(2, 2)) < 1e-12 * scale)
    throw GeometryError("homography: cannot normalize to h33 = 1");
  matrix_ = matrix / matrix(2, 2);
  if (std::abs(matrix_.determinant()) <= 1e-12) throw GeometryError("homography: singular matrix");
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(matrix_.inverse()); }

Homography Homography::after(const Homography& other) const { return Homography(matrix_ * other.matrix_); }

Point2 warp_point(const Homography& h, Point2 p) {
  const Eigen::Matrix3d& m = h.matrix();
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw GeometryError("warp_point: non-finite point");
  if (std::abs(w) <= 1e-12) throw GeometryError("warp_point: point maps to infinity");
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w, (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

// --- PlanarScene --------------------------------------------------------------------

Homography PlanarScene::induced_homography() const {
  const Eigen::Matrix3d h = intrinsics * (rotation - translation * normal.transpose() / distance) *
                            intrinsics.inverse();
  return Homography(h);
}

double PlanarScene::depth_at(Point2 p) const {
  const Eigen::Vector3d ray = intrinsics.inverse() * Eigen::Vector3d(p.x, p.y, 1.0);
  const double denom = normal.dot(ray);
  if (std::abs(denom) < 1e-15) throw GeometryError("planar scene: ray parallel to plane");
  return -distance / denom * ray.z();
}

Point2 PlanarScene::reproject(Point2 p) const {
  const Eigen::Vector3d ray = intrinsics.inverse() * Eigen::Vector3d(p.x, p.y, 1.0);
  const double denom = normal.dot(ray);
  if (std::abs(denom) < 1e-15) throw GeometryError("planar scene: ray parallel to plane");
  const Eigen::Vector3d x_a = (-distance / denom) * ray;
  const Eigen::Vector3d x_b = rotation * x_a + translation;
  const Eigen::Vector3d q = intrinsics * x_b;
  if (std::abs(q.z()) <= 1e-12) throw GeometryError("planar scene: point projects to infinity");
  return {q.x() / q.z(), q.y() / q.z()};
}

PlanarScene PlanarScene::inverse() const {
  PlanarScene s;
  s.intrinsics = intrinsics;
  s.rotation = rotation.transpose();
  s.translation = -rotation.transpose() * translation;
  s.normal = rotation * normal;
  s.distance = distance - s.normal.dot(translation);
  return s;
}

void PlanarScene::validate(std::size_t height, std::size_t width) const {
  if (!(distance > 0)) throw GeometryError("planar scene: plane distance must be positive");
  const PlanarScene back = inverse();
  if (!(back.distance > 0)) throw GeometryError("planar scene: plane behind camera B");
  const std::array<Point2, 4> corners{Point2{0, 0}, Point2{double(width - 1), 0},
                                      Point2{double(width - 1), double(height - 1)}, Point2{0, double(height - 1)}};
  for (const Point2& c : corners) {
    if (!(depth_at(c) > 0)) throw GeometryError("planar scene: plane behind camera A");
    const Eigen::Vector3d ray = intrinsics.inverse() * Eigen::Vector3d(c.x, c.y, 1.0);
    const Eigen::Vector3d x_b = rotation * ((-distance / normal.dot(ray)) * ray) + translation;
    if (!(x_b.z() > 0)) throw GeometryError("planar scene: plane behind camera B");
  }
  (void)induced_homography();
}

Point2 warp(const WarpModel& model, Point2 p) {
  return std::visit(
      [&](const auto& m) -> Point2 {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, Homography>) return warp_point(m, p);
        else return m.reproject(p);
      },
      model);
}

WarpModel inverse(const WarpModel& model) {
  return std::visit([](const auto& m) -> WarpModel { return m.inverse(); }, model);
}

Homography as_homography(const WarpModel& model) {
  return std::visit(
      [](const auto& m) -> Homography {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, Homography>) return m;
        else return m.induced_homography();
      },
      model);
}

// --- metrics ---------------------------------------------------------------------------

double corner_error(const Homography& estimate, const Homography& truth, std::size_t height, std::size_t width) {
  const double w = static_cast<double>(width) - 1, h = static_cast<double>(height) - 1;
  const std::array<Point2, 4> corners{Point2{0, 0}, Point2{w, 0}, Point2{w, h}, Point2{0, h}};
  double total = 0;
  for (const Point2& c : corners) {
    const Point2 a = warp_point(estimate, c);
    const Point2 b = warp_point(truth, c);
    total += std::hypot(a.x - b.x, a.y - b.y);
  }
  return total / 4.0;
}

double auc(std::span<const double> errors, double threshold) {
  if (errors.empty()) throw UndefinedInputError("auc: empty error list");
  if (!(threshold > 0)) throw ConfigError("auc: threshold must be positive");
  // ∫₀ᵗ 1[e ≤ x] dx = max(0, t − e) for each error, so the step-curve area is exact.
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  double area = 0;
  for (double e : sorted) {
    if (std::isnan(e)) throw UndefinedInputError("auc: NaN error");
    if (e < threshold) area += threshold - std::max(e, 0.0);
  }
  return area / (threshold * static_cast<double>(sorted.size()));
}

EndpointErrors endpoint_error(std::span<const Correspondence> matches, const WarpModel& truth) {
  EndpointErrors out;
  out.per_match.reserve(matches.size());
  double total = 0;
  for (const Correspondence& m : matches) {
    const Point2 expected = warp(truth, m.a);
    const double e = std::hypot(m.b.x - expected.x, m.b.y - expected.y);
    out.per_match.push_back(e);
    total += e;
  }
  out.mean = matches.empty() ? 0.0 : total / static_cast<double>(matches.size());
  return out;
}

// --- estimation ---------------------------------------------------------------------------

namespace {

// Hartley normalization: centroid to origin, mean distance √2.
Eigen::Matrix3d normalizing_transform(const std::vector<Point2>& pts) {
  double cx = 0, cy = 0;
  for (const Point2& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= double(pts.size());
  cy /= double(pts.size());
  double mean_dist = 0;
  double sxx = 0, sxy = 0, syy = 0;
  for (const Point2& p : pts) {
    const double dx = p.x - cx, dy = p.y - cy;
    mean_dist += std::hypot(dx, dy);
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  mean_dist /= double(pts.size());
  if (!(mean_dist > 1e-12)) throw GeometryError("dlt_homography: coincident points");
  // Smallest eigenvalue of the scatter matrix vanishes for collinear sets.
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
  const double lmin = tr / 2 - disc, lmax = tr / 2 + disc;
  if (lmin <= 1e-12 * lmax) throw GeometryError("dlt_homography: collinear points (rank deficient)");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

}  // namespace

Homography dlt_homography(std::span<const Correspondence> correspondences) {
  const std::size_t n = correspondences.size();
  if (n < 4) throw GeometryError("dlt_homography: needs at least 4 correspondences");
  std::vector<Point2> pa, pb;
  for (const Correspondence& c : correspondences) {
    pa.push_back(c.a);
    pb.push_back(c.b);
  }
  const Eigen::Matrix3d ta = normalizing_transform(pa);
  const Eigen::Matrix3d tb = normalizing_transform(pb);
  Eigen::MatrixXd design(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d a = ta * Eigen::Vector3d(pa[i].x, pa[i].y, 1);
    const Eigen::Vector3d b = tb * Eigen::Vector3d(pb[i].x, pb[i].y, 1);
    const double x = a.x() / a.z(), y = a.y() / a.z(), u = b.x() / b.z(), v = b.y() / b.z();
    design.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    design.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv(7) <= 1e-10 * sv(0)) throw GeometryError("dlt_homography: rank-deficient design matrix");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(tb.inverse() * hn * ta);
}

double symmetric_transfer_error(const Homography& h, const Correspondence& c) {
  try {
    const Point2 fwd = warp_point(h, c.a);
    const Point2 bwd = warp_point(h.inverse(), c.b);
    const double df2 = (fwd.x - c.b.x) * (fwd.x - c.b.x) + (fwd.y - c.b.y) * (fwd.y - c.b.y);
    const double db2 = (bwd.x - c.a.x) * (bwd.x - c.a.x) + (bwd.y - c.a.y) * (bwd.y - c.a.y);
    return std::sqrt((df2 + db2) / 2);
  } catch (const GeometryError&) {
    return std::numeric_limits<double>::infinity();
  }
}

namespace {

std::size_t count_inliers(const Homography& h, std::span<const Correspondence> cs, double threshold,
                          std::vector<bool>* mask) {
  const Homography inv = h.inverse();
  std::size_t count = 0;
  if (mask) mask->assign(cs.size(), false);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    double err;
    try {
      const Point2 fwd = warp_point(h, cs[i].a);
      const Point2 bwd = warp_point(inv, cs[i].b);
      const double df2 = (fwd.x - cs[i].b.x) * (fwd.x - cs[i].b.x) + (fwd.y - cs[i].b.y) * (fwd.y - cs[i].b.y);
      const double db2 = (bwd.x - cs[i].a.x) * (bwd.x - cs[i].a.x) + (bwd.y - cs[i].a.y) * (bwd.y - cs[i].a.y);
      err = std::sqrt((df2 + db2) / 2);
    } catch (const GeometryError&) {
      continue;
    }
    if (err < threshold) {
      ++count;
      if (mask) (*mask)[i] = true;
    }
  }
  return count;
}

}  // namespace

RansacResult ransac_homography(std::span<const Correspondence> correspondences, const RansacOptions& options) {
  RansacResult result;
  result.inliers.assign(correspondences.size(), false);
  const std::size_t n = correspondences.size();
  if (n < 4) return result;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t best_count = 0;
  Homography best;
  std::vector<Correspondence> sample(4);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = pick(rng);
        fresh = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx[k]) ==
                idx.begin() + static_cast<std::ptrdiff_t>(k);
      } while (!fresh);
      sample[k] = correspondences[idx[k]];
    }
    Homography model;
    try {
      model = dlt_homography(sample);
    } catch (const GeometryError&) {
      continue;
    }
    const std::size_t count = count_inliers(model, correspondences, options.inlier_threshold, nullptr);
    if (count > best_count) {
      best_count = count;
      best = model;
    }
  }
  if (best_count < 4) return result;
  std::vector<bool> mask;
  count_inliers(best, correspondences, options.inlier_threshold, &mask);
  std::vector<Correspondence> inlier_set;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) inlier_set.push_back(correspondences[i]);
  try {
    const Homography refit = dlt_homography(inlier_set);
    std::vector<bool> refit_mask;
    const std::size_t refit_count = count_inliers(refit, correspondences, options.inlier_threshold, &refit_mask);
    if (refit_count >= best_count) {
      best = refit;
      mask = std::move(refit_mask);
    }
  } catch (const GeometryError&) {
  }
  result.success = true;
  result.homography = best;
  result.inliers = mask;
  result.inlier_count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  return result;
}

// --- text formats -------------------------------------------------------------------------

std::string format_homography(const Homography& h) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << h.matrix()(r, c) << (r == 2 && c == 2 ? '\n' : ' ');
  return out.str();
}

Homography parse_homography(const std::string& text) {
  std::istringstream in(text);
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) {
    double v;
    if (!(in >> v)) throw InputError("parse_homography: expected 9 reals");
    m(i / 3, i % 3) = v;
  }
  std::string rest;
  if (in >> rest) throw InputError("parse_homography: trailing content");
  return Homography(m);
}

std::vector<Correspondence> read_correspondences_csv(std::istream& in) {
  std::vector<Correspondence> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw InputError("correspondence csv: malformed line '" + line + "'");
    }
    first = false;
    if (fields.size() != 4 && fields.size() < 5)
      throw InputError("correspondence csv: expected x_A,y_A,x_B,y_B[,confidence]");
    Correspondence c{{fields[0], fields[1]}, {fields[2], fields[3]}, fields.size() >= 5 ? fields[4] : 1.0};
    out.push_back(c);
  }
  return out;
}

void write_correspondences_csv(std::ostream& out, std::span<const Correspondence> matches) {
  out << "x_A,y_A,x_B,y_B,confidence\n";
  out << std::setprecision(9);
  for (const Correspondence& m : matches)
    out << m.a.x << ',' << m.a.y << ',' << m.b.x << ',' << m.b.y << ',' << m.confidence << '\n';
}

}  // namespace loftr
