#include "hbrep/brep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hbrep/error.hpp"
#include "hbrep/geom.hpp"
#include "hbrep/union_find.hpp"

namespace hbrep {

std::array<double, 12> EdgeCurve::flat() const {
  std::array<double, 12> out{};
  for (int k = 0; k < 4; ++k)
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(k * 3 + c)] = control_points[k][c];
  return out;
}

EdgeCurve EdgeCurve::from_flat(std::span<const double> v) {
  if (v.size() != 12) throw Error(ErrorCode::ShapeMismatch, "edge curve needs 12 values");
  EdgeCurve c;
  for (int k = 0; k < 4; ++k) c.control_points[k] = Vec3(v[k * 3], v[k * 3 + 1], v[k * 3 + 2]);
  return c;
}

EdgeCurve EdgeCurve::line(const Vec3& a, const Vec3& b) {
  EdgeCurve c;
  for (int k = 0; k < 4; ++k) c.control_points[k] = a + (b - a) * (k / 3.0);
  c.control_points[0] = a;
  c.control_points[3] = b;
  return c;
}

EdgeCurve EdgeCurve::reversed() const {
  EdgeCurve c;
  for (int k = 0; k < 4; ++k) c.control_points[k] = control_points[3 - k];
  return c;
}

std::array<double, 48> FaceSurface::flat() const {
  std::array<double, 48> out{};
  for (int k = 0; k < 16; ++k)
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(k * 3 + c)] = control_grid[k][c];
  return out;
}

FaceSurface FaceSurface::from_flat(std::span<const double> v) {
  if (v.size() != 48) throw Error(ErrorCode::ShapeMismatch, "face surface needs 48 values");
  FaceSurface s;
  for (int k = 0; k < 16; ++k) s.control_grid[k] = Vec3(v[k * 3], v[k * 3 + 1], v[k * 3 + 2]);
  return s;
}

std::array<double, 6> Aabb::flat() const {
  return {min.x(), min.y(), min.z(), max.x(), max.y(), max.z()};
}

Aabb Aabb::from_flat(std::span<const double> v) {
  if (v.size() != 6) throw Error(ErrorCode::ShapeMismatch, "box needs 6 values");
  Aabb b;
  for (int c = 0; c < 3; ++c) {
    b.min[c] = std::min(v[c], v[c + 3]);
    b.max[c] = std::max(v[c], v[c + 3]);
  }
  return b;
}

bool Aabb::contains(const Vec3& p, double slack) const {
  for (int c = 0; c < 3; ++c) {
    if (p[c] < min[c] - slack || p[c] > max[c] + slack) return false;
  }
  return true;
}

IndexPair sorted_pair(int a, int b) { return a <= b ? IndexPair{a, b} : IndexPair{b, a}; }

namespace {

bool finite(const Vec3& p) { return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z()); }

}  // namespace

void BrepModel::check_structure() const {
  const int nv = num_vertices(), ne = num_edges(), nf = num_faces();
  if (static_cast<int>(ef.rows.size()) != ne || static_cast<int>(ev.rows.size()) != ne) {
    throw Error(ErrorCode::ShapeMismatch, "ef/ev row counts must equal the edge count");
  }
  if (static_cast<int>(boxes.size()) != nf) {
    throw Error(ErrorCode::ShapeMismatch, "one box per face is required");
  }
  for (int e = 0; e < ne; ++e) {
    for (int k = 0; k < 2; ++k) {
      if (ef.rows[e][k] < 0 || ef.rows[e][k] >= nf) {
        throw Error(ErrorCode::IndexOutOfRange, "ef row " + std::to_string(e) + " face index out of range");
      }
      if (ev.rows[e][k] < 0 || ev.rows[e][k] >= nv) {
        throw Error(ErrorCode::IndexOutOfRange, "ev row " + std::to_string(e) + " vertex index out of range");
      }
    }
  }
  for (const Vec3& p : vertices)
    if (!finite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite vertex coordinate");
  for (const EdgeCurve& c : edges)
    for (const Vec3& p : c.control_points)
      if (!finite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite edge control point");
  for (const FaceSurface& s : faces)
    for (const Vec3& p : s.control_grid)
      if (!finite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite face control point");
}

bool BrepModel::operator==(const BrepModel& o) const {
  auto same_pts = [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return false;
    return true;
  };
  if (!same_pts(vertices, o.vertices)) return false;
  if (edges.size() != o.edges.size() || faces.size() != o.faces.size() || boxes.size() != o.boxes.size())
    return false;
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (!same_pts(edges[i].control_points, o.edges[i].control_points)) return false;
  for (std::size_t i = 0; i < faces.size(); ++i)
    if (!same_pts(faces[i].control_grid, o.faces[i].control_grid)) return false;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    if (boxes[i].min != o.boxes[i].min || boxes[i].max != o.boxes[i].max) return false;
  return ef.rows == o.ef.rows && ev.rows == o.ev.rows;
}

void quantize_to_float(BrepModel& m) {
  auto q = [](Vec3& p) {
    for (int c = 0; c < 3; ++c) p[c] = static_cast<double>(static_cast<float>(p[c]));
  };
  for (Vec3& p : m.vertices) q(p);
  for (EdgeCurve& c : m.edges)
    for (Vec3& p : c.control_points) q(p);
  for (FaceSurface& s : m.faces)
    for (Vec3& p : s.control_grid) q(p);
  for (Aabb& b : m.boxes) {
    q(b.min);
    q(b.max);
  }
}

namespace {

void sort_unique(std::vector<int>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::vector<std::vector<int>> face_edges(const EdgeFaceTable& ef, int n_f) {
  std::vector<std::vector<int>> fe(static_cast<std::size_t>(n_f));
  for (int e = 0; e < static_cast<int>(ef.rows.size()); ++e) {
    for (int k = 0; k < 2; ++k) {
      const int f = ef.rows[e][k];
      if (f < 0 || f >= n_f) {
        throw Error(ErrorCode::IndexOutOfRange, "edge " + std::to_string(e) + " references face " + std::to_string(f));
      }
      fe[static_cast<std::size_t>(f)].push_back(e);
    }
  }
  for (auto& row : fe) sort_unique(row);
  return fe;
}

DerivedIncidence derive_incidence(const EdgeFaceTable& ef, const EdgeVertexTable& ev, int n_f, int n_v) {
  if (ef.rows.size() != ev.rows.size()) {
    throw Error(ErrorCode::ShapeMismatch, "ef and ev must have one row per edge");
  }
  DerivedIncidence d;
  d.fe = face_edges(ef, n_f);
  d.fv.assign(static_cast<std::size_t>(n_f), {});
  d.vf.assign(static_cast<std::size_t>(n_v), {});
  d.ve.assign(static_cast<std::size_t>(n_v), {});
  for (int e = 0; e < static_cast<int>(ev.rows.size()); ++e) {
    for (int k = 0; k < 2; ++k) {
      const int v = ev.rows[e][k];
      if (v < 0 || v >= n_v) {
        throw Error(ErrorCode::IndexOutOfRange, "edge " + std::to_string(e) + " references vertex " + std::to_string(v));
      }
      d.ve[static_cast<std::size_t>(v)].push_back(e);
      for (int j = 0; j < 2; ++j) {
        const int f = ef.rows[e][j];
        d.fv[static_cast<std::size_t>(f)].push_back(v);
        d.vf[static_cast<std::size_t>(v)].push_back(f);
      }
    }
  }
  for (auto& row : d.fv) sort_unique(row);
  for (auto& row : d.vf) sort_unique(row);
  for (auto& row : d.ve) sort_unique(row);
  return d;
}

const char* to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::NonManifoldEdge: return "NonManifoldEdge";
    case ViolationCode::DegenerateEdgeEndpoints: return "DegenerateEdgeEndpoints";
    case ViolationCode::OpenLoop: return "OpenLoop";
    case ViolationCode::DisconnectedWireframe: return "DisconnectedWireframe";
    case ViolationCode::GeometricGapEdgeVertex: return "GeometricGapEdgeVertex";
    case ViolationCode::GeometricGapEdgeFace: return "GeometricGapEdgeFace";
    case ViolationCode::EulerMismatch: return "EulerMismatch";
  }
  return "Unknown";
}

bool ValidityReport::has(ViolationCode code) const { return count(code) > 0; }

int ValidityReport::count(ViolationCode code) const {
  return static_cast<int>(std::count_if(violations.begin(), violations.end(),
                                        [&](const Violation& v) { return v.code == code; }));
}

namespace {

constexpr int kGapCurveSamples = 16;

}  // namespace

ValidityReport check_validity(const BrepModel& m, double tol) {
  ValidityReport report;
  auto add = [&](ViolationCode code, int entity, std::string msg) {
    report.violations.push_back(Violation{code, entity, std::move(msg)});
  };

  const int nv = m.num_vertices(), ne = m.num_edges(), nf = m.num_faces();
  bool indices_ok = static_cast<int>(m.ef.rows.size()) == ne && static_cast<int>(m.ev.rows.size()) == ne;
  for (int e = 0; indices_ok && e < ne; ++e) {
    for (int k = 0; k < 2; ++k) {
      if (m.ef.rows[e][k] < 0 || m.ef.rows[e][k] >= nf || m.ev.rows[e][k] < 0 || m.ev.rows[e][k] >= nv) {
        indices_ok = false;
      }
    }
  }
  if (!indices_ok || nv == 0 || ne == 0 || nf == 0) {
    add(ViolationCode::NonManifoldEdge, -1, "incidence tables are malformed or empty");
    report.is_valid = false;
    return report;
  }

  // Per-edge row invariants.
  std::vector<bool> degenerate(static_cast<std::size_t>(ne), false);
  for (int e = 0; e < ne; ++e) {
    const auto [fa, fb] = m.ef.rows[e];
    if (fa == fb) add(ViolationCode::NonManifoldEdge, e, "edge bounds the same face on both sides");
    const auto [va, vb] = m.ev.rows[e];
    if (va == vb || (m.vertices[va] - m.vertices[vb]).norm() <= tol) {
      degenerate[e] = true;
      add(ViolationCode::DegenerateEdgeEndpoints, e, "edge endpoints coincide");
    }
  }

  // Face boundaries must decompose into cycles: every vertex touched by a
  // face's edges has degree exactly 2 within that face.
  const auto fe = face_edges(m.ef, nf);
  bool loops_ok = true;
  int total_loops = 0;
  for (int f = 0; f < nf; ++f) {
    if (fe[f].empty()) {
      add(ViolationCode::OpenLoop, f, "face has no boundary edges");
      loops_ok = false;
      continue;
    }
    std::vector<int> degree(static_cast<std::size_t>(nv), 0);
    for (int e : fe[f]) {
      ++degree[m.ev.rows[e][0]];
      ++degree[m.ev.rows[e][1]];
    }
    bool odd = false, branching = false;
    for (int v = 0; v < nv; ++v) {
      if (degree[v] % 2 == 1) odd = true;
      else if (degree[v] > 2) branching = true;
    }
    if (odd) {
      // A dangling chain cannot be ordered into cycles and does not chain
      // into closed loops, so it counts under both codes.
      add(ViolationCode::OpenLoop, f, "face boundary has a dangling chain");
      add(ViolationCode::NonManifoldEdge, f, "face boundary edges do not close");
      loops_ok = false;
    }
    if (branching) {
      add(ViolationCode::NonManifoldEdge, f, "face boundary branches at a vertex");
      loops_ok = false;
    }
    if (!odd && !branching) {
      UnionFind ds(nv);
      std::vector<bool> used(static_cast<std::size_t>(nv), false);
      for (int e : fe[f]) {
        ds.unite(m.ev.rows[e][0], m.ev.rows[e][1]);
        used[m.ev.rows[e][0]] = used[m.ev.rows[e][1]] = true;
      }
      for (int v = 0; v < nv; ++v)
        if (used[v] && ds.find(v) == v) ++total_loops;
    }
  }

  // Vertex links: faces around a vertex must form one fan.
  if (loops_ok) {
    const DerivedIncidence inc = derive_incidence(m.ef, m.ev, nf, nv);
    for (int v = 0; v < nv; ++v) {
      const auto& faces = inc.vf[v];
      if (faces.empty()) continue;
      UnionFind ds(nf);
      for (int e : inc.ve[v]) ds.unite(m.ef.rows[e][0], m.ef.rows[e][1]);
      const int root = ds.find(faces.front());
      for (int f : faces) {
        if (ds.find(f) != root) {
          add(ViolationCode::NonManifoldEdge, v, "faces around vertex do not form a single fan");
          break;
        }
      }
    }
  }

  // Wireframe connectivity.
  UnionFind wire(nv);
  std::vector<bool> referenced(static_cast<std::size_t>(nv), false);
  for (int e = 0; e < ne; ++e) {
    wire.unite(m.ev.rows[e][0], m.ev.rows[e][1]);
    referenced[m.ev.rows[e][0]] = referenced[m.ev.rows[e][1]] = true;
  }
  int components = 0;
  for (int v = 0; v < nv; ++v) {
    if (!referenced[v]) {
      report.warnings.push_back("vertex " + std::to_string(v) + " is not referenced by any edge");
    } else if (wire.find(v) == v) {
      ++components;
    }
  }
  bool connected = components == 1;
  if (!connected) {
    bool straddles = false;
    for (int f = 0; f < nf && !straddles; ++f) {
      if (fe[f].empty()) continue;
      const int root = wire.find(m.ev.rows[fe[f].front()][0]);
      for (int e : fe[f]) {
        if (wire.find(m.ev.rows[e][0]) != root) {
          straddles = true;
          add(ViolationCode::DisconnectedWireframe, f, "face references two wireframe components");
          break;
        }
      }
    }
    if (!straddles) report.warnings.push_back("multiple shells: Euler check skipped");
  }

  // Euler-Poincare for a single shell: V - E + F - (L - F) = 2 - 2G.
  if (connected && loops_ok) {
    const int chi = nv - ne + nf - (total_loops - nf);
    if (chi != 2) {
      if (chi < 2 && chi % 2 == 0) {
        report.warnings.push_back("genus " + std::to_string((2 - chi) / 2) + " shell: Euler check skipped");
      } else {
        add(ViolationCode::EulerMismatch, -1, "Euler-Poincare characteristic is " + std::to_string(chi));
      }
    }
  }

  // Geometric agreement between curves, vertices and surfaces.
  for (int e = 0; e < ne; ++e) {
    if (degenerate[e]) continue;
    const auto& cp = m.edges[e].control_points;
    const Vec3& a = m.vertices[m.ev.rows[e][0]];
    const Vec3& b = m.vertices[m.ev.rows[e][1]];
    const double forward = std::max((cp[0] - a).norm(), (cp[3] - b).norm());
    const double backward = std::max((cp[0] - b).norm(), (cp[3] - a).norm());
    if (std::min(forward, backward) > tol) {
      add(ViolationCode::GeometricGapEdgeVertex, e, "curve endpoint is " + std::to_string(std::min(forward, backward)) + " from its vertex");
    }
  }
  std::vector<geom::SurfaceProjector> projectors;
  projectors.reserve(static_cast<std::size_t>(nf));
  for (const FaceSurface& s : m.faces) projectors.emplace_back(s);
  for (int e = 0; e < ne; ++e) {
    const auto pts = geom::curve_points(m.edges[e], kGapCurveSamples);
    for (int k = 0; k < 2; ++k) {
      const int f = m.ef.rows[e][k];
      double worst = 0.0;
      for (const Vec3& p : pts) worst = std::max(worst, projectors[f].distance(p));
      if (worst > tol) {
        add(ViolationCode::GeometricGapEdgeFace, e,
            "curve is " + std::to_string(worst) + " from face " + std::to_string(f));
        break;
      }
    }
  }

  report.is_valid = report.violations.empty();
  return report;
}

int euler_characteristic(const BrepModel& m) { return m.num_vertices() - m.num_edges() + m.num_faces(); }

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
  void i64(std::int64_t v) { bytes(&v, sizeof v); }
};

}  // namespace

Digest hash_brep(const BrepModel& m, int precision) {
  const double scale = std::pow(10.0, precision);
  Fnv1a h;
  auto coord = [&](double x) { h.i64(std::llround(x * scale)); };
  auto point = [&](const Vec3& p) {
    coord(p.x());
    coord(p.y());
    coord(p.z());
  };
  h.i64(m.num_vertices());
  h.i64(m.num_edges());
  h.i64(m.num_faces());
  for (const auto& r : m.ef.rows) {
    const IndexPair s = sorted_pair(r[0], r[1]);
    h.i64(s[0]);
    h.i64(s[1]);
  }
  for (const auto& r : m.ev.rows) {
    const IndexPair s = sorted_pair(r[0], r[1]);
    h.i64(s[0]);
    h.i64(s[1]);
  }
  for (const Vec3& p : m.vertices) point(p);
  for (const EdgeCurve& c : m.edges)
    for (const Vec3& p : c.control_points) point(p);
  for (const FaceSurface& s : m.faces)
    for (const Vec3& p : s.control_grid) point(p);
  for (const Aabb& b : m.boxes) {
    point(b.min);
    point(b.max);
  }
  return h.h;
}

std::string digest_hex(Digest d) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
  return buf;
}

}  // namespace hbrep
