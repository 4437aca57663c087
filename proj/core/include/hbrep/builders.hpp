#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hbrep/brep.hpp"

namespace hbrep {

/// Closed polygon in the xy-plane, counter-clockwise, no repeated points.
using Polygon2 = std::vector<Eigen::Vector2d>;

/// Right prism over `outer` between z0 and z1, with optional polygonal holes
/// (clockwise) that become through-holes. Faces are bottom, top, then the
/// side walls of the outer ring and of each hole in order. Curves are
/// straight lines oriented from the lower to the higher vertex index.
BrepModel extrude_polygon(const Polygon2& outer, double z0, double z1,
                          std::span<const Polygon2> holes = {});

/// Axis-aligned box spanning [lo, hi].
BrepModel make_box(const Vec3& lo, const Vec3& hi);
/// The [0,1]^3 cube: 8 vertices, 12 edges, 6 faces.
BrepModel make_unit_cube();
/// Right prism over the unit right triangle, height 1: 6 vertices, 9 edges, 5 faces.
BrepModel make_triangular_prism();
/// Right prism over a regular k-gon of circumradius r.
BrepModel make_regular_prism(int k, double radius, double height);
/// L-shaped extrusion: 12 vertices, 18 edges, 8 faces.
BrepModel make_l_bracket(double width, double height, double thickness_x, double thickness_y,
                         double depth);
/// Square plate with a square through-hole (genus one); top and bottom faces
/// carry two boundary loops each.
BrepModel make_square_frame(double outer, double inner, double height);
/// Quad-faced torus on an m x n grid (m, n >= 3): mn vertices, 2mn edges, mn faces.
BrepModel make_quad_torus(int m = 4, int n = 4, double major = 1.0, double minor = 0.4);

/// Translates and uniformly scales the model so its vertex bounding box is
/// centred at the origin with largest half-extent 1. Boxes are recomputed.
void normalize_to_unit_cube(BrepModel& m);

/// Relabels faces, edges and vertices by the given permutations
/// (new index i takes old index perm[i]); rows are re-sorted.
BrepModel permute_model(const BrepModel& m, std::span<const int> face_perm,
                        std::span<const int> edge_perm, std::span<const int> vertex_perm);

/// Uniformly random relabeling of all three entity kinds.
BrepModel shuffle_model(const BrepModel& m, std::mt19937_64& rng);

/// Random members of the synthetic families, before normalization.
BrepModel random_cuboid(std::mt19937_64& rng);
BrepModel random_prism(std::mt19937_64& rng, int k);
BrepModel random_l_bracket(std::mt19937_64& rng);

}  // namespace hbrep
