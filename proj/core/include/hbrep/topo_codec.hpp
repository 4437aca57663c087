#pragma once

#include <utility>
#include <vector>

#include "hbrep/brep.hpp"

namespace hbrep {

/// Largest number of edges two faces may share.
inline constexpr int kMaxSharedEdges = 8;
/// End-of-sequence token of the face-adjacency sequence.
inline constexpr int kEfEos = kMaxSharedEdges + 1;

/// Largest edge count addressable by half-edge tokens.
inline constexpr int kMaxEdgeTokens = 750;
inline constexpr int kTokenLoop = 2 * kMaxEdgeTokens;
inline constexpr int kTokenFace = 2 * kMaxEdgeTokens + 1;
inline constexpr int kTokenEnd = 2 * kMaxEdgeTokens + 2;

/// Symmetric face x face matrix of shared-edge counts with zero diagonal.
struct FefMatrix {
  int n = 0;
  std::vector<int> counts;  // row-major n x n

  FefMatrix() = default;
  explicit FefMatrix(int size) : n(size), counts(static_cast<std::size_t>(size * size), 0) {}

  int at(int i, int j) const { return counts[static_cast<std::size_t>(i * n + j)]; }
  int& at(int i, int j) { return counts[static_cast<std::size_t>(i * n + j)]; }
  int row_sum(int i) const;
  int upper_sum() const;
  bool operator==(const FefMatrix&) const = default;
};

/// Upper-triangular entries in row-major order followed by kEfEos.
struct EfSequence {
  std::vector<int> tokens;
  bool operator==(const EfSequence&) const = default;
};

/// Half-edge tokens (2 * edge + direction) delimited by kTokenLoop / kTokenFace,
/// terminated by kTokenEnd. Direction 0 runs from v_a to v_b of the edge row.
struct EvSequence {
  std::vector<int> tokens;
  bool operator==(const EvSequence&) const = default;
};

inline constexpr int half_edge_token(int edge, int dir) { return 2 * edge + dir; }
inline constexpr bool is_half_edge_token(int t) { return t >= 0 && t < kTokenLoop; }
/// Endpoint slots of a half-edge token: slot 2e is the v_a end of edge e,
/// slot 2e + 1 the v_b end.
inline constexpr int ev_tail_slot(int token) { return (token / 2) * 2 + (token % 2); }
inline constexpr int ev_head_slot(int token) { return (token / 2) * 2 + 1 - (token % 2); }

FefMatrix build_fef(const EdgeFaceTable& ef, int n_f);

/// Stable sort of faces by boundary-edge count. perm[new] = old.
std::pair<FefMatrix, std::vector<int>> canonicalize_faces(const FefMatrix& fef);

/// Relabels a matrix: out(i, j) = fef(perm[i], perm[j]).
FefMatrix permute_fef(const FefMatrix& fef, const std::vector<int>& perm);

EfSequence flatten_fef(const FefMatrix& fef);
FefMatrix unflatten_fef(const EfSequence& seq);

/// Materializes one edge per unit of shared count, in (f_a, f_b, occurrence) order.
EdgeFaceTable fef_to_edges(const FefMatrix& fef);

/// Edge order by lexicographic (f_a, f_b), stable on ties. Returns perm[new] = old.
std::vector<int> assign_global_edge_ids(const EdgeFaceTable& ef);

/// Relabels faces by boundary-edge count, edges by global id and vertices by
/// first appearance in the edge table; curves are oriented from v_a to v_b.
/// The encoder assumes a model in this form.
BrepModel canonicalize_model(const BrepModel& m);

/// Boundary loops of one face as ordered cycles of (edge, direction).
std::vector<std::vector<std::pair<int, int>>> face_loops(const BrepModel& m, int face);

EvSequence encode_ev_sequence(const BrepModel& m);
EdgeVertexTable decode_ev_sequence(const EvSequence& seq, const EdgeFaceTable& ef);

/// Number of vertices referenced by an edge-vertex table (max index + 1).
int vertex_count(const EdgeVertexTable& ev);

/// Count of kTokenLoop tokens.
int count_loops(const EvSequence& seq);

}  // namespace hbrep
