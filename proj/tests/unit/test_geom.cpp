#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hbrep/builders.hpp"
#include "hbrep/error.hpp"
#include "hbrep/geom.hpp"
#include "test_support.hpp"

using namespace hbrep;
using namespace hbrep::geom;

namespace {

FaceSurface unit_grid() {
  FaceSurface s;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) s.at(i, j) = Vec3(i / 3.0, j / 3.0, 0.0);
  return s;
}

// Bicubic patch reproducing z = x^2 over x, y in [0, 1]: the control
// heights of t^2 in the cubic Bernstein basis are 0, 0, 1/3, 1.
FaceSurface parabolic_grid() {
  const double z[4] = {0.0, 0.0, 1.0 / 3.0, 1.0};
  FaceSurface s;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) s.at(i, j) = Vec3(i / 3.0, j / 3.0, z[i]);
  return s;
}

FaceSurface random_patch(std::mt19937_64& rng) {
  FaceSurface s;
  for (auto& p : s.control_grid) p = support::random_mat(3, 1, rng);
  return s;
}

EdgeCurve random_curve(std::mt19937_64& rng) {
  EdgeCurve c;
  for (auto& p : c.control_points) p = support::random_mat(3, 1, rng);
  return c;
}

}  // namespace

TEST(EvalCurve, AffinePrecision) {
  EdgeCurve c{{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)}};
  EXPECT_TRUE(eval_curve(c, 0.5).isApprox(Vec3(1.5, 0, 0)));
  EdgeCurve k{{Vec3(2, -1, 3), Vec3(2, -1, 3), Vec3(2, -1, 3), Vec3(2, -1, 3)}};
  for (double t : {0.0, 0.3, 1.0}) EXPECT_LT((eval_curve(k, t) - Vec3(2, -1, 3)).norm(), 1e-15);
}

TEST(EvalCurve, BernsteinSumOracle) {
  EdgeCurve c{{Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(1, 0, 0)}};
  EXPECT_LT((eval_curve(c, 0.5) - Vec3(0.5, 0.75, 0)).norm(), 1e-15);
}

TEST(EvalCurve, EndpointsAndHull) {
  std::mt19937_64 rng(1);
  for (int it = 0; it < 1000; ++it) {
    const EdgeCurve c = random_curve(rng);
    EXPECT_EQ(eval_curve(c, 0.0), c.control_points[0]);
    EXPECT_EQ(eval_curve(c, 1.0), c.control_points[3]);
    const Aabb box = compute_bbox(std::span<const Vec3>(c.control_points));
    for (int i = 0; i <= 16; ++i) EXPECT_TRUE(box.contains(eval_curve(c, i / 16.0), 1e-12));
  }
}

TEST(EvalCurve, DerivativeMatchesFiniteDifference) {
  std::mt19937_64 rng(2);
  for (int it = 0; it < 50; ++it) {
    const EdgeCurve c = random_curve(rng);
    const double t = 0.1 + 0.8 * it / 50.0, h = 1e-5;
    const Vec3 fd = (eval_curve(c, t + h) - eval_curve(c, t - h)) / (2 * h);
    EXPECT_LT((eval_curve_derivative(c, t) - fd).norm() / fd.norm(), 1e-4);
  }
}

TEST(EvalSurface, PlanarGrid) {
  const FaceSurface s = unit_grid();
  for (double u : {0.0, 0.25, 0.7, 1.0}) {
    for (double v : {0.0, 0.5, 1.0}) {
      const auto r = eval_surface(s, u, v);
      EXPECT_LT((r.point - Vec3(u, v, 0)).norm(), 1e-14);
      EXPECT_NEAR(r.mean_curvature, 0.0, 1e-9);
    }
  }
  EXPECT_NEAR(std::abs(eval_surface(s, 0, 0).normal.z()), 1.0, 1e-14);
}

TEST(EvalSurface, ParabolicCylinderMeanCurvature) {
  const FaceSurface s = parabolic_grid();
  const auto r = eval_surface(s, 0.5, 0.5);
  EXPECT_LT((r.point - Vec3(0.5, 0.5, 0.25)).norm(), 1e-14);
  // z = x^2: H = z'' / (2 (1 + z'^2)^{3/2}) with z' = 1, z'' = 2.
  EXPECT_NEAR(std::abs(r.mean_curvature), 1.0 / std::pow(2.0, 1.5), 1e-12);
}

TEST(EvalSurface, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 50; ++it) {
    const FaceSurface s = random_patch(rng);
    const double u = 0.2 + 0.6 * it / 50.0, v = 0.7 - 0.4 * it / 50.0, h = 1e-5;
    const auto d = surface_derivatives(s, u, v);
    const Vec3 fu = (eval_surface(s, u + h, v).point - eval_surface(s, u - h, v).point) / (2 * h);
    const Vec3 fv = (eval_surface(s, u, v + h).point - eval_surface(s, u, v - h).point) / (2 * h);
    EXPECT_LT((d.su - fu).norm() / fu.norm(), 1e-4);
    EXPECT_LT((d.sv - fv).norm() / fv.norm(), 1e-4);
  }
}

TEST(EvalSurface, DegenerateThrows) {
  FaceSurface s;
  for (auto& p : s.control_grid) p = Vec3(1, 2, 3);
  try {
    eval_surface(s, 0.5, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateSurface);
  }
}

TEST(ComputeBbox, Examples) {
  const Aabb b = compute_bbox(unit_grid());
  EXPECT_EQ(b.min, Vec3(0, 0, 0));
  EXPECT_EQ(b.max, Vec3(1, 1, 0));
  FaceSurface p;
  for (auto& q : p.control_grid) q = Vec3(0.5, 0.5, 0.5);
  const Aabb z = compute_bbox(p);
  EXPECT_EQ(z.min, z.max);
}

TEST(ComputeBbox, ContainsDenseSamples) {
  std::mt19937_64 rng(4);
  for (int it = 0; it < 20; ++it) {
    const FaceSurface s = random_patch(rng);
    const Aabb b = compute_bbox(s);
    for (const Vec3& p : surface_grid(s, 64)) EXPECT_TRUE(b.contains(p, 1e-12));
  }
}

TEST(SampleSurfacePoints, CubeFacesEvenlyCovered) {
  const BrepModel m = make_unit_cube();
  const auto pts = sample_surface_points(m, 6000, 7);
  ASSERT_EQ(pts.size(), 6000u);
  int counts[6] = {0, 0, 0, 0, 0, 0};
  for (const Vec3& p : pts) {
    for (int k = 0; k < 3; ++k) {
      if (std::abs(p[k]) < 1e-9) ++counts[2 * k];
      else if (std::abs(p[k] - 1) < 1e-9) ++counts[2 * k + 1];
    }
  }
  for (int c : counts) EXPECT_NEAR(c, 1000, 50);
}

TEST(SampleSurfacePoints, DeterministicAndOnSingleFace) {
  const BrepModel m = make_unit_cube();
  EXPECT_EQ(sample_surface_points(m, 500, 3), sample_surface_points(m, 500, 3));
  const std::vector<FaceSurface> one{unit_grid()};
  for (const Vec3& p : sample_surface_points(one, 200, 1)) EXPECT_NEAR(p.z(), 0.0, 1e-15);
}

TEST(ChamferDistance, Examples) {
  const std::vector<Vec3> a{Vec3(0, 0, 0)}, b{Vec3(1, 0, 0)};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 2.0);
  EXPECT_DOUBLE_EQ(chamfer_distance(a, a), 0.0);
}

TEST(ChamferDistance, MatchesBruteForceAndIsSymmetric) {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 20; ++it) {
    const auto a = support::random_cloud(50, rng), b = support::random_cloud(37, rng);
    EXPECT_NEAR(chamfer_distance(a, b), support::brute_chamfer(a, b), 1e-12);
    EXPECT_NEAR(chamfer_distance(a, b), chamfer_distance(b, a), 1e-12);
    EXPECT_GT(chamfer_distance(a, b), 0.0);
  }
}

TEST(FitPlane, Examples) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> flat, noisy, tilted;
  const double delta = 1e-3;
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng), y = u(rng);
    flat.emplace_back(x, y, 0);
    noisy.emplace_back(x, y, i % 2 ? delta : -delta);
    tilted.emplace_back(x, y, 1 - x - y);
  }
  const PlaneFit f = fit_plane(flat);
  EXPECT_NEAR(std::abs(f.normal.z()), 1.0, 1e-12);
  EXPECT_NEAR(f.rms_error, 0.0, 1e-12);
  EXPECT_LE(fit_plane(noisy).rms_error, delta + 1e-12);
  const PlaneFit t = fit_plane(tilted);
  EXPECT_NEAR(std::abs(t.normal.dot(Vec3(1, 1, 1).normalized())), 1.0, 1e-12);
}

TEST(FitPlane, CollinearIsRankDeficient) {
  std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2)};
  try {
    fit_plane(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
  }
}

TEST(PostprocessFace, PlaneSplineAndFallback) {
  const FaceSurface plane = unit_grid();
  const auto boundary = surface_grid(plane, 4);
  const auto interior = surface_grid(plane, 8);
  EXPECT_EQ(postprocess_face(plane, boundary, interior, 1e-3).kind, FaceKind::Plane);

  const FaceSurface bowl = parabolic_grid();
  EXPECT_EQ(postprocess_face(bowl, surface_grid(bowl, 4), surface_grid(bowl, 8), 1e-3).kind, FaceKind::Spline);

  std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2)};
  EXPECT_EQ(postprocess_face(bowl, line, line, 1e-3).kind, FaceKind::Spline);
}

TEST(PlanarPatches, ZeroCurvatureEverywhere) {
  std::mt19937_64 rng(8);
  for (int it = 0; it < 20; ++it) {
    for (const BrepModel& m : {random_cuboid(rng), random_prism(rng, 3 + it % 6), random_l_bracket(rng)}) {
      for (const auto& f : m.faces) {
        for (int i = 0; i < 16; ++i) {
          const double u = (i + 0.5) / 16, v = 1 - u * 0.9;
          EXPECT_NEAR(eval_surface(f, u, v).mean_curvature, 0.0, 1e-9);
        }
      }
    }
  }
}

TEST(PointIndex, NearestMatchesBruteForce) {
  std::mt19937_64 rng(9);
  const auto pts = support::random_cloud(300, rng);
  const PointIndex idx(pts);
  for (const Vec3& q : support::random_cloud(100, rng)) {
    double best = 1e9;
    for (const Vec3& p : pts) best = std::min(best, (p - q).squaredNorm());
    EXPECT_DOUBLE_EQ(idx.nearest_sq(q), best);
  }
}
