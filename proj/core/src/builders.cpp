#include "hbrep/builders.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hbrep/error.hpp"
#include "hbrep/geom.hpp"

namespace hbrep {

namespace {

void add_edge(BrepModel& m, int v0, int v1, int f0, int f1) {
  const IndexPair vs = sorted_pair(v0, v1);
  m.ev.rows.push_back(vs);
  m.ef.rows.push_back(sorted_pair(f0, f1));
  m.edges.push_back(EdgeCurve::line(m.vertices[vs[0]], m.vertices[vs[1]]));
}

void recompute_boxes(BrepModel& m) {
  m.boxes.clear();
  for (const FaceSurface& s : m.faces) m.boxes.push_back(geom::compute_bbox(s));
}

}  // namespace

BrepModel extrude_polygon(const Polygon2& outer, double z0, double z1, std::span<const Polygon2> holes) {
  if (outer.size() < 3) throw Error(ErrorCode::InvalidArgument, "polygon needs at least 3 points");
  if (!(z1 > z0)) throw Error(ErrorCode::InvalidArgument, "extrusion height must be positive");
  std::vector<const Polygon2*> rings{&outer};
  for (const Polygon2& h : holes) {
    if (h.size() < 3) throw Error(ErrorCode::InvalidArgument, "hole needs at least 3 points");
    rings.push_back(&h);
  }

  BrepModel m;
  std::vector<int> bottom_start, top_start;
  for (const Polygon2* ring : rings) {
    bottom_start.push_back(m.num_vertices());
    for (const auto& p : *ring) m.vertices.emplace_back(p.x(), p.y(), z0);
    top_start.push_back(m.num_vertices());
    for (const auto& p : *ring) m.vertices.emplace_back(p.x(), p.y(), z1);
  }

  std::vector<Vec3> cap_pts;
  for (const auto& p : outer) cap_pts.emplace_back(p.x(), p.y(), 0.0);
  geom::PlaneFit bottom_plane{Vec3(0, 0, z0), Vec3(0, 0, -1), 0.0};
  geom::PlaneFit top_plane{Vec3(0, 0, z1), Vec3(0, 0, 1), 0.0};
  m.faces.push_back(geom::plane_patch(bottom_plane, cap_pts));
  m.faces.push_back(geom::plane_patch(top_plane, cap_pts));

  for (std::size_t r = 0; r < rings.size(); ++r) {
    const int k = static_cast<int>(rings[r]->size());
    const int side0 = m.num_faces();
    for (int i = 0; i < k; ++i) {
      const int j = (i + 1) % k;
      const Vec3& b0 = m.vertices[bottom_start[r] + i];
      const Vec3& b1 = m.vertices[bottom_start[r] + j];
      const Vec3& t1 = m.vertices[top_start[r] + j];
      const Vec3& t0 = m.vertices[top_start[r] + i];
      m.faces.push_back(geom::bilinear_patch(b0, b1, t1, t0));
    }
    for (int i = 0; i < k; ++i) {
      const int j = (i + 1) % k;
      const int prev = (i + k - 1) % k;
      add_edge(m, bottom_start[r] + i, bottom_start[r] + j, 0, side0 + i);
      add_edge(m, top_start[r] + i, top_start[r] + j, 1, side0 + i);
      add_edge(m, bottom_start[r] + i, top_start[r] + i, side0 + prev, side0 + i);
    }
  }
  recompute_boxes(m);
  return m;
}

BrepModel make_box(const Vec3& lo, const Vec3& hi) {
  const Polygon2 rect{{lo.x(), lo.y()}, {hi.x(), lo.y()}, {hi.x(), hi.y()}, {lo.x(), hi.y()}};
  return extrude_polygon(rect, lo.z(), hi.z());
}

BrepModel make_unit_cube() { return make_box(Vec3::Zero(), Vec3::Ones()); }

BrepModel make_triangular_prism() {
  const Polygon2 tri{{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  return extrude_polygon(tri, 0.0, 1.0);
}

BrepModel make_regular_prism(int k, double radius, double height) {
  if (k < 3) throw Error(ErrorCode::InvalidArgument, "prism base needs at least 3 sides");
  Polygon2 poly;
  for (int i = 0; i < k; ++i) {
    const double a = 2.0 * std::numbers::pi * i / k;
    poly.emplace_back(radius * std::cos(a), radius * std::sin(a));
  }
  return extrude_polygon(poly, 0.0, height);
}

BrepModel make_l_bracket(double width, double height, double thickness_x, double thickness_y, double depth) {
  if (!(thickness_x < width && thickness_y < height)) {
    throw Error(ErrorCode::InvalidArgument, "bracket thickness must be smaller than its extent");
  }
  const Polygon2 poly{{0.0, 0.0},          {width, 0.0},      {width, thickness_y},
                      {thickness_x, thickness_y}, {thickness_x, height}, {0.0, height}};
  return extrude_polygon(poly, 0.0, depth);
}

BrepModel make_square_frame(double outer, double inner, double height) {
  if (!(inner < outer)) throw Error(ErrorCode::InvalidArgument, "hole must be smaller than the plate");
  const double a = outer / 2, b = inner / 2;
  const Polygon2 ring{{-a, -a}, {a, -a}, {a, a}, {-a, a}};
  const std::vector<Polygon2> hole{{{-b, -b}, {-b, b}, {b, b}, {b, -b}}};
  return extrude_polygon(ring, 0.0, height, hole);
}

BrepModel make_quad_torus(int m, int n, double major, double minor) {
  if (m < 3 || n < 3) throw Error(ErrorCode::InvalidArgument, "torus grid needs at least 3x3 cells");
  BrepModel t;
  auto vid = [&](int i, int j) { return ((i + m) % m) * n + (j + n) % n; };
  auto fid = [&](int i, int j) { return ((i + m) % m) * n + (j + n) % n; };
  for (int i = 0; i < m; ++i) {
    const double th = 2.0 * std::numbers::pi * i / m;
    for (int j = 0; j < n; ++j) {
      const double ph = 2.0 * std::numbers::pi * j / n;
      const double rr = major + minor * std::cos(ph);
      t.vertices.emplace_back(rr * std::cos(th), rr * std::sin(th), minor * std::sin(ph));
    }
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      t.faces.push_back(geom::bilinear_patch(t.vertices[vid(i, j)], t.vertices[vid(i + 1, j)],
                                             t.vertices[vid(i + 1, j + 1)], t.vertices[vid(i, j + 1)]));
    }
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      add_edge(t, vid(i, j), vid(i + 1, j), fid(i, j), fid(i, j - 1));
      add_edge(t, vid(i, j), vid(i, j + 1), fid(i, j), fid(i - 1, j));
    }
  }
  recompute_boxes(t);
  return t;
}

void normalize_to_unit_cube(BrepModel& m) {
  if (m.vertices.empty()) return;
  const Aabb box = geom::compute_bbox(m.vertices);
  const Vec3 centre = 0.5 * (box.min + box.max);
  const double half = 0.5 * (box.max - box.min).maxCoeff();
  if (!(half > 0.0)) throw Error(ErrorCode::InvalidArgument, "model has zero extent");
  auto map = [&](Vec3& p) { p = (p - centre) / half; };
  for (Vec3& p : m.vertices) map(p);
  for (EdgeCurve& c : m.edges)
    for (Vec3& p : c.control_points) map(p);
  for (FaceSurface& s : m.faces)
    for (Vec3& p : s.control_grid) map(p);
  recompute_boxes(m);
}

namespace {

std::vector<int> inverse(std::span<const int> perm, int n, const char* what) {
  if (static_cast<int>(perm.size()) != n) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " permutation has the wrong length");
  }
  std::vector<int> inv(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const int old = perm[i];
    if (old < 0 || old >= n || inv[old] != -1) {
      throw Error(ErrorCode::InvalidArgument, std::string(what) + " permutation is not a bijection");
    }
    inv[old] = i;
  }
  return inv;
}

std::vector<int> random_perm(int n, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

BrepModel permute_model(const BrepModel& m, std::span<const int> face_perm, std::span<const int> edge_perm,
                        std::span<const int> vertex_perm) {
  const auto finv = inverse(face_perm, m.num_faces(), "face");
  inverse(edge_perm, m.num_edges(), "edge");
  const auto vinv = inverse(vertex_perm, m.num_vertices(), "vertex");
  BrepModel out;
  for (int i = 0; i < m.num_vertices(); ++i) out.vertices.push_back(m.vertices[vertex_perm[i]]);
  for (int i = 0; i < m.num_faces(); ++i) {
    out.faces.push_back(m.faces[face_perm[i]]);
    out.boxes.push_back(m.boxes[face_perm[i]]);
  }
  for (int i = 0; i < m.num_edges(); ++i) {
    const int old = edge_perm[i];
    out.edges.push_back(m.edges[old]);
    out.ef.rows.push_back(sorted_pair(finv[m.ef.rows[old][0]], finv[m.ef.rows[old][1]]));
    out.ev.rows.push_back(sorted_pair(vinv[m.ev.rows[old][0]], vinv[m.ev.rows[old][1]]));
  }
  return out;
}

BrepModel shuffle_model(const BrepModel& m, std::mt19937_64& rng) {
  const auto fp = random_perm(m.num_faces(), rng);
  const auto ep = random_perm(m.num_edges(), rng);
  const auto vp = random_perm(m.num_vertices(), rng);
  return permute_model(m, fp, ep, vp);
}

BrepModel random_cuboid(std::mt19937_64& rng) {
  const Vec3 ext(uniform(rng, 0.25, 1.0), uniform(rng, 0.25, 1.0), uniform(rng, 0.25, 1.0));
  return make_box(-ext, ext);
}

BrepModel random_prism(std::mt19937_64& rng, int k) {
  if (k < 3) throw Error(ErrorCode::InvalidArgument, "prism base needs at least 3 sides");
  const double offset = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double step = 2.0 * std::numbers::pi / k;
  Polygon2 poly;
  for (int i = 0; i < k; ++i) {
    const double a = offset + step * (i + uniform(rng, -0.2, 0.2));
    const double r = uniform(rng, 0.7, 1.0);
    poly.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  const double h = uniform(rng, 0.4, 1.6);
  return extrude_polygon(poly, -h / 2, h / 2);
}

BrepModel random_l_bracket(std::mt19937_64& rng) {
  const double w = uniform(rng, 0.6, 1.5);
  const double h = uniform(rng, 0.6, 1.5);
  const double tx = w * uniform(rng, 0.2, 0.6);
  const double ty = h * uniform(rng, 0.2, 0.6);
  const double d = uniform(rng, 0.3, 1.5);
  return make_l_bracket(w, h, tx, ty, d);
}

}  // namespace hbrep
