#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hbrep {

using Vec3 = Eigen::Vector3d;

/// Cubic curve with four control points. Flattened layout is P0.xyz P1.xyz P2.xyz P3.xyz.
struct EdgeCurve {
  std::array<Vec3, 4> control_points;

  std::array<double, 12> flat() const;
  static EdgeCurve from_flat(std::span<const double> v);
  static EdgeCurve line(const Vec3& a, const Vec3& b);
  EdgeCurve reversed() const;
};

/// Bicubic patch over a 4x4 control grid. control_grid[i * 4 + j] is the
/// point at u-index i, v-index j; the flattened layout follows the same order.
struct FaceSurface {
  std::array<Vec3, 16> control_grid;

  const Vec3& at(int i, int j) const { return control_grid[static_cast<std::size_t>(i * 4 + j)]; }
  Vec3& at(int i, int j) { return control_grid[static_cast<std::size_t>(i * 4 + j)]; }

  std::array<double, 48> flat() const;
  static FaceSurface from_flat(std::span<const double> v);
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  std::array<double, 6> flat() const;
  /// Builds a box from two corners, ordering each axis so that min <= max.
  static Aabb from_flat(std::span<const double> v);
  bool contains(const Vec3& p, double slack = 0.0) const;
};

using IndexPair = std::array<int, 2>;

/// Per edge, the two incident faces stored as (f_a, f_b) with f_a < f_b.
struct EdgeFaceTable {
  std::vector<IndexPair> rows;
};

/// Per edge, the two endpoint vertices stored as (v_a, v_b) with v_a < v_b.
struct EdgeVertexTable {
  std::vector<IndexPair> rows;
};

struct BrepModel {
  std::vector<Vec3> vertices;
  std::vector<EdgeCurve> edges;
  std::vector<FaceSurface> faces;
  std::vector<Aabb> boxes;
  EdgeFaceTable ef;
  EdgeVertexTable ev;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  int num_faces() const { return static_cast<int>(faces.size()); }

  /// Throws IndexOutOfRange / ShapeMismatch when field invariants are broken
  /// (table lengths, index bounds, one box per face, finite coordinates).
  void check_structure() const;

  bool operator==(const BrepModel& other) const;
};

/// Rounds every coordinate to the nearest single-precision value so that the
/// text interchange format round-trips exactly.
void quantize_to_float(BrepModel& m);

/// Stores each row of a pair table with the smaller index first.
IndexPair sorted_pair(int a, int b);

struct DerivedIncidence {
  std::vector<std::vector<int>> fe;  // face -> incident edges
  std::vector<std::vector<int>> fv;  // face -> incident vertices
  std::vector<std::vector<int>> vf;  // vertex -> incident faces
  std::vector<std::vector<int>> ve;  // vertex -> incident edges
};

DerivedIncidence derive_incidence(const EdgeFaceTable& ef, const EdgeVertexTable& ev, int n_f,
                                  int n_v);

/// Face -> incident edges only (no vertex information needed).
std::vector<std::vector<int>> face_edges(const EdgeFaceTable& ef, int n_f);

enum class ViolationCode {
  NonManifoldEdge,
  DegenerateEdgeEndpoints,
  OpenLoop,
  DisconnectedWireframe,
  GeometricGapEdgeVertex,
  GeometricGapEdgeFace,
  EulerMismatch,
};

const char* to_string(ViolationCode code);

struct Violation {
  ViolationCode code;
  int entity = -1;
  std::string message;
};

struct ValidityReport {
  bool is_valid = true;
  std::vector<Violation> violations;
  std::vector<std::string> warnings;

  bool has(ViolationCode code) const;
  int count(ViolationCode code) const;
};

inline constexpr double kDefaultValidityTol = 1e-3;

ValidityReport check_validity(const BrepModel& m, double tol = kDefaultValidityTol);

int euler_characteristic(const BrepModel& m);

using Digest = std::uint64_t;

inline constexpr int kDefaultHashPrecision = 4;

Digest hash_brep(const BrepModel& m, int precision = kDefaultHashPrecision);
std::string digest_hex(Digest d);

}  // namespace hbrep
