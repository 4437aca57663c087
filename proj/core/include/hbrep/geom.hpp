#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hbrep/brep.hpp"

namespace hbrep::geom {

/// Cubic Bernstein basis B_k^3(t), k = 0..3.
std::array<double, 4> bernstein3(double t);
/// First and second derivatives of the cubic Bernstein basis.
std::array<double, 4> bernstein3_d1(double t);
std::array<double, 4> bernstein3_d2(double t);

Vec3 eval_curve(const EdgeCurve& c, double t);
Vec3 eval_curve_derivative(const EdgeCurve& c, double t);

struct SurfaceDerivatives {
  Vec3 point, su, sv, suu, suv, svv;
};

SurfaceDerivatives surface_derivatives(const FaceSurface& s, double u, double v);

struct SurfaceSample {
  Vec3 point;
  Vec3 normal;
  double mean_curvature = 0.0;
};

/// Point, unit normal and mean curvature H = (eG - 2fF + gE) / (2(EG - F^2)).
/// Throws DegenerateSurface when |S_u x S_v| < 1e-12.
SurfaceSample eval_surface(const FaceSurface& s, double u, double v);

Aabb compute_bbox(const FaceSurface& s);
Aabb compute_bbox(std::span<const Vec3> points);

/// Surface area by 16x16 midpoint quadrature of |S_u x S_v|.
double face_area(const FaceSurface& s);

/// Area-weighted surface sampling. Counts per face are allocated in proportion
/// to estimated area (largest remainder); points inside a face are drawn by
/// rejection against the Jacobian envelope. Deterministic in `seed`.
std::vector<Vec3> sample_surface_points(const BrepModel& m, std::size_t n, std::uint64_t seed);
std::vector<Vec3> sample_surface_points(std::span<const FaceSurface> faces, std::size_t n,
                                        std::uint64_t seed);

/// Static 3-d tree over a point set, used for nearest-neighbour queries.
class PointIndex {
 public:
  explicit PointIndex(std::span<const Vec3> points);

  /// Squared distance to the closest indexed point.
  double nearest_sq(const Vec3& q) const;

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, double& best) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Symmetric squared Chamfer distance: mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2.
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);

/// Closest distance from p to the patch: nearest of a 32x32 sample grid,
/// refined with clamped Gauss-Newton steps in (u, v).
class SurfaceProjector {
 public:
  explicit SurfaceProjector(const FaceSurface& s);
  double distance(const Vec3& p) const;

 private:
  FaceSurface surface_;
  std::vector<Vec3> grid_;
};

struct PlaneFit {
  Vec3 origin = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double rms_error = 0.0;
};

/// Least-squares plane through the centroid; normal is the smallest-eigenvalue
/// eigenvector of the covariance. Throws RankDeficient for collinear input.
PlaneFit fit_plane(std::span<const Vec3> points);

/// Deterministic in-plane frame (u, v) for a plane normal.
void plane_frame(const Vec3& normal, Vec3& u_axis, Vec3& v_axis);

/// Planar bicubic patch spanning the in-plane bounding rectangle of `points`
/// projected onto `plane`.
FaceSurface plane_patch(const PlaneFit& plane, std::span<const Vec3> points);

/// Bilinear patch through four corners, (0,0) (1,0) (1,1) (0,1) in (u, v).
FaceSurface bilinear_patch(const Vec3& p00, const Vec3& p10, const Vec3& p11, const Vec3& p01);

enum class FaceKind { Plane, Spline };

struct FaceFit {
  FaceKind kind = FaceKind::Spline;
  PlaneFit plane;
  FaceSurface surface;
};

inline constexpr double kDefaultPlaneFitThreshold = 1e-3;

/// Fits a plane jointly to boundary and interior samples. Returns a Plane
/// (with a covering planar patch) when rms < threshold, otherwise the
/// original spline. Never throws.
FaceFit postprocess_face(const FaceSurface& face, std::span<const Vec3> boundary_pts,
                         std::span<const Vec3> interior_pts,
                         double threshold = kDefaultPlaneFitThreshold);

/// Points on an n x n parametric grid of the patch (u, v in [0, 1]).
std::vector<Vec3> surface_grid(const FaceSurface& s, int n);
/// n points at t = i / (n - 1).
std::vector<Vec3> curve_points(const EdgeCurve& c, int n);

}  // namespace hbrep::geom
