#include "hbrep/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "hbrep/error.hpp"

namespace hbrep::geom {

std::array<double, 4> bernstein3(double t) {
  const double s = 1.0 - t;
  return {s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t};
}

std::array<double, 4> bernstein3_d1(double t) {
  const double s = 1.0 - t;
  return {-3.0 * s * s, 3.0 * s * s - 6.0 * t * s, 6.0 * t * s - 3.0 * t * t, 3.0 * t * t};
}

std::array<double, 4> bernstein3_d2(double t) {
  return {6.0 * (1.0 - t), -12.0 + 18.0 * t, 6.0 - 18.0 * t, 6.0 * t};
}

namespace {

void require_unit(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorCode::ParameterOutOfRange, std::string(what) + " = " + std::to_string(t));
  }
}

}  // namespace

Vec3 eval_curve(const EdgeCurve& c, double t) {
  require_unit(t, "t");
  // Endpoints are returned verbatim so interpolation is exact.
  if (t == 0.0) return c.control_points[0];
  if (t == 1.0) return c.control_points[3];
  const auto b = bernstein3(t);
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < 4; ++k) p += b[k] * c.control_points[k];
  return p;
}

Vec3 eval_curve_derivative(const EdgeCurve& c, double t) {
  require_unit(t, "t");
  const auto b = bernstein3_d1(t);
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < 4; ++k) p += b[k] * c.control_points[k];
  return p;
}

SurfaceDerivatives surface_derivatives(const FaceSurface& s, double u, double v) {
  require_unit(u, "u");
  require_unit(v, "v");
  const auto bu = bernstein3(u), du = bernstein3_d1(u), ddu = bernstein3_d2(u);
  const auto bv = bernstein3(v), dv = bernstein3_d1(v), ddv = bernstein3_d2(v);
  SurfaceDerivatives d{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(),
                       Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const Vec3& p = s.at(i, j);
      d.point += bu[i] * bv[j] * p;
      d.su += du[i] * bv[j] * p;
      d.sv += bu[i] * dv[j] * p;
      d.suu += ddu[i] * bv[j] * p;
      d.suv += du[i] * dv[j] * p;
      d.svv += bu[i] * ddv[j] * p;
    }
  }
  return d;
}

SurfaceSample eval_surface(const FaceSurface& s, double u, double v) {
  const SurfaceDerivatives d = surface_derivatives(s, u, v);
  const Vec3 cross = d.su.cross(d.sv);
  const double len = cross.norm();
  if (len < 1e-12) {
    throw Error(ErrorCode::DegenerateSurface,
                "S_u x S_v vanishes at (" + std::to_string(u) + ", " + std::to_string(v) + ")");
  }
  SurfaceSample out;
  out.point = d.point;
  out.normal = cross / len;
  const double E = d.su.dot(d.su), F = d.su.dot(d.sv), G = d.sv.dot(d.sv);
  const double e = d.suu.dot(out.normal), f = d.suv.dot(out.normal), g = d.svv.dot(out.normal);
  out.mean_curvature = (e * G - 2.0 * f * F + g * E) / (2.0 * (E * G - F * F));
  return out;
}

Aabb compute_bbox(std::span<const Vec3> points) {
  Aabb box;
  if (points.empty()) return box;
  box.min = box.max = points[0];
  for (const Vec3& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

Aabb compute_bbox(const FaceSurface& s) { return compute_bbox(std::span<const Vec3>(s.control_grid)); }

namespace {

double jacobian(const FaceSurface& s, double u, double v) {
  const SurfaceDerivatives d = surface_derivatives(s, u, v);
  return d.su.cross(d.sv).norm();
}

constexpr int kAreaGrid = 16;

}  // namespace

double face_area(const FaceSurface& s) {
  double area = 0.0;
  const double h = 1.0 / kAreaGrid;
  for (int i = 0; i < kAreaGrid; ++i) {
    for (int j = 0; j < kAreaGrid; ++j) {
      area += jacobian(s, (i + 0.5) * h, (j + 0.5) * h);
    }
  }
  return area * h * h;
}

std::vector<Vec3> sample_surface_points(std::span<const FaceSurface> faces, std::size_t n,
                                        std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample count must be >= 1");
  if (faces.empty()) throw Error(ErrorCode::DegenerateSurface, "model has no faces");

  const double h = 1.0 / kAreaGrid;
  std::vector<double> area(faces.size(), 0.0), envelope(faces.size(), 0.0);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int i = 0; i < kAreaGrid; ++i) {
      for (int j = 0; j < kAreaGrid; ++j) {
        const double jac = jacobian(faces[f], (i + 0.5) * h, (j + 0.5) * h);
        area[f] += jac * h * h;
        envelope[f] = std::max(envelope[f], jac);
      }
    }
    envelope[f] *= 1.05;
  }
  const double total = std::accumulate(area.begin(), area.end(), 0.0);
  if (!(total > 0.0)) throw Error(ErrorCode::DegenerateSurface, "model has zero surface area");

  // Largest-remainder allocation of the n samples across faces.
  std::vector<std::size_t> counts(faces.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const double exact = static_cast<double>(n) * area[f] / total;
    counts[f] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[f];
    remainders.emplace_back(exact - static_cast<double>(counts[f]), f);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k].second];

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    if (counts[f] > 0 && area[f] <= 0.0) {
      throw Error(ErrorCode::DegenerateSurface, "face " + std::to_string(f) + " has zero area");
    }
    std::size_t got = 0;
    std::size_t attempts = 0;
    while (got < counts[f]) {
      const double u = uni(rng), v = uni(rng), a = uni(rng);
      ++attempts;
      // The envelope guards the common case; after many rejections accept
      // anyway so a badly estimated envelope cannot stall sampling.
      if (a * envelope[f] <= jacobian(faces[f], u, v) || attempts > 64 * counts[f] + 64) {
        out.push_back(surface_derivatives(faces[f], u, v).point);
        ++got;
      }
    }
  }
  return out;
}

std::vector<Vec3> sample_surface_points(const BrepModel& m, std::size_t n, std::uint64_t seed) {
  return sample_surface_points(std::span<const FaceSurface>(m.faces), n, seed);
}

PointIndex::PointIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int PointIndex::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = (lo + hi) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void PointIndex::search(int node, const Vec3& q, double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  best = std::min(best, (p - q).squaredNorm());
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff < best) search(far, q, best);
}

double PointIndex::nearest_sq(const Vec3& q) const {
  double best = std::numeric_limits<double>::infinity();
  search(root_, q, best);
  return best;
}

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySet, "chamfer_distance needs two nonempty sets");
  const PointIndex ia(a), ib(b);
  double sa = 0.0, sb = 0.0;
  for (const Vec3& p : a) sa += ib.nearest_sq(p);
  for (const Vec3& p : b) sb += ia.nearest_sq(p);
  return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

namespace {
constexpr int kProjectGrid = 32;
}

SurfaceProjector::SurfaceProjector(const FaceSurface& s) : surface_(s), grid_(surface_grid(s, kProjectGrid)) {}

double SurfaceProjector::distance(const Vec3& p) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < static_cast<int>(grid_.size()); ++k) {
    const double d = (grid_[k] - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  double u = static_cast<double>(best / kProjectGrid) / (kProjectGrid - 1);
  double v = static_cast<double>(best % kProjectGrid) / (kProjectGrid - 1);
  for (int it = 0; it < 12; ++it) {
    const SurfaceDerivatives d = surface_derivatives(surface_, u, v);
    const Vec3 r = p - d.point;
    const double a = d.su.dot(d.su), b = d.su.dot(d.sv), c = d.sv.dot(d.sv);
    const double det = a * c - b * b;
    if (std::abs(det) < 1e-18) break;
    const double gu = d.su.dot(r), gv = d.sv.dot(r);
    const double du = (c * gu - b * gv) / det;
    const double dv = (a * gv - b * gu) / det;
    const double nu = std::clamp(u + du, 0.0, 1.0), nv = std::clamp(v + dv, 0.0, 1.0);
    const double cand = (surface_derivatives(surface_, nu, nv).point - p).squaredNorm();
    if (cand > best_d) break;
    best_d = cand;
    const double step = std::abs(nu - u) + std::abs(nv - v);
    u = nu;
    v = nv;
    if (step < 1e-12) break;
  }
  return std::sqrt(best_d);
}

PlaneFit fit_plane(std::span<const Vec3> points) {
  if (points.size() < 3) throw Error(ErrorCode::RankDeficient, "plane fit needs at least 3 points");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : points) {
    const Vec3 d = p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  const Vec3 evals = solver.eigenvalues();  // ascending
  if (evals[1] <= 1e-12 * std::max(1.0, evals[2])) {
    throw Error(ErrorCode::RankDeficient, "points are collinear");
  }
  PlaneFit fit;
  fit.origin = centroid;
  fit.normal = solver.eigenvectors().col(0).normalized();
  double ss = 0.0;
  for (const Vec3& p : points) {
    const double r = (p - centroid).dot(fit.normal);
    ss += r * r;
  }
  fit.rms_error = std::sqrt(ss / static_cast<double>(points.size()));
  return fit;
}

void plane_frame(const Vec3& normal, Vec3& u_axis, Vec3& v_axis) {
  const Vec3 n = normal.normalized();
  // Reference axis: the world axis least aligned with the normal (lowest index on ties).
  int ref = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(n[k]) < std::abs(n[ref]) - 1e-9) ref = k;
  }
  Vec3 a = Vec3::Zero();
  a[ref] = 1.0;
  u_axis = (a - a.dot(n) * n).normalized();
  v_axis = n.cross(u_axis).normalized();
  int dom = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(v_axis[k]) > std::abs(v_axis[dom]) + 1e-9) dom = k;
  }
  if (v_axis[dom] < 0) v_axis = -v_axis;
}

FaceSurface plane_patch(const PlaneFit& plane, std::span<const Vec3> points) {
  Vec3 ua, va;
  plane_frame(plane.normal, ua, va);
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double vmin = umin, vmax = -umin;
  for (const Vec3& p : points) {
    const Vec3 d = p - plane.origin;
    umin = std::min(umin, d.dot(ua));
    umax = std::max(umax, d.dot(ua));
    vmin = std::min(vmin, d.dot(va));
    vmax = std::max(vmax, d.dot(va));
  }
  if (points.empty()) umin = umax = vmin = vmax = 0.0;
  FaceSurface s;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double uu = umin + (umax - umin) * i / 3.0;
      const double vv = vmin + (vmax - vmin) * j / 3.0;
      s.at(i, j) = plane.origin + uu * ua + vv * va;
    }
  }
  return s;
}

FaceSurface bilinear_patch(const Vec3& p00, const Vec3& p10, const Vec3& p11, const Vec3& p01) {
  FaceSurface s;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double u = i / 3.0, v = j / 3.0;
      s.at(i, j) = (1 - u) * (1 - v) * p00 + u * (1 - v) * p10 + u * v * p11 + (1 - u) * v * p01;
    }
  }
  return s;
}

FaceFit postprocess_face(const FaceSurface& face, std::span<const Vec3> boundary_pts,
                         std::span<const Vec3> interior_pts, double threshold) {
  FaceFit out;
  out.surface = face;
  std::vector<Vec3> all(boundary_pts.begin(), boundary_pts.end());
  all.insert(all.end(), interior_pts.begin(), interior_pts.end());
  try {
    const PlaneFit fit = fit_plane(all);
    if (fit.rms_error < threshold) {
      out.kind = FaceKind::Plane;
      out.plane = fit;
      out.surface = plane_patch(fit, boundary_pts.empty() ? std::span<const Vec3>(all) : boundary_pts);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RankDeficient) throw;
  }
  return out;
}

std::vector<Vec3> surface_grid(const FaceSurface& s, int n) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double u = n == 1 ? 0.5 : static_cast<double>(i) / (n - 1);
      const double v = n == 1 ? 0.5 : static_cast<double>(j) / (n - 1);
      out.push_back(surface_derivatives(s, u, v).point);
    }
  }
  return out;
}

std::vector<Vec3> curve_points(const EdgeCurve& c, int n) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(eval_curve(c, n == 1 ? 0.5 : static_cast<double>(i) / (n - 1)));
  }
  return out;
}

}  // namespace hbrep::geom
