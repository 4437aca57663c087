#pragma once

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hbrep/brep.hpp"
#include "hbrep/nn.hpp"

namespace hbrep {

enum class EntityKind { Face, Edge, Vertex };

/// Variants of the edge-vertex conditioning: full, boxes removed, edge curves removed.
enum class Ablation { None, MaskBoxes, MaskEdges };

std::string_view to_string(Ablation a);
/// Accepts "none", "mask_B", "mask_E".
Ablation parse_ablation(std::string_view s);

struct ConditioningEmbedding {
  nn::Tensor rows;  // n_entities x d_cond
  EntityKind kind = EntityKind::Face;
  std::vector<std::string> provenance;  // input fields that were fused
};

/// Rows looked up through an incidence table, padded to k slots per entity.
struct Gathered {
  nn::Tensor values;  // (n_rows * k) x d, row r * k + j holds slot j of entity r
  nn::BoolMat mask;   // n_rows x k, true for real slots
  int k = 0;
};

/// out[r][j] = source[table[r][j]]; rows shorter than k are zero-padded with
/// the mask bit off. k < 0 uses the longest row. Throws IndexOutOfRange.
Gathered gather(const std::vector<std::vector<int>>& table, const nn::Tensor& source, int k = -1);

/// Width of an incidence-count encoding: one scaled scalar plus a 32-bin one-hot.
inline constexpr int kCountBins = 32;
inline constexpr int kCountWidth = 1 + kCountBins;
/// (count / 8, one-hot of min(count, 31)).
nn::Mat count_encoding(std::span<const int> counts);

nn::Mat boxes_matrix(std::span<const Aabb> boxes);
nn::Mat edges_matrix(std::span<const EdgeCurve> edges);
nn::Mat faces_matrix(std::span<const FaceSurface> faces);
nn::Mat vertices_matrix(std::span<const Vec3> vertices);

/// Everything a fusion encoder may read. Unused fields may stay empty.
struct ConditionInput {
  EdgeFaceTable ef;
  int n_f = 0;
  DerivedIncidence inc;  // fe, fv, vf, ve
  nn::Mat boxes;         // n_f x 6
  nn::Mat edges;         // n_e x 12
  nn::Mat faces;         // n_f x 48
};

/// Builds the incidence part of a ConditionInput.
ConditionInput make_condition_input(const EdgeFaceTable& ef, int n_f, const EdgeVertexTable* ev = nullptr,
                                    int n_v = 0);

/// Face rows for the box denoiser: boundary-edge count encoding, the face's
/// adjacency-count row padded to max_faces, and a face-index encoding.
class BoxConditioner : public nn::Module {
 public:
  BoxConditioner() = default;
  BoxConditioner(int d, int max_faces, std::mt19937_64& rng);
  ConditioningEmbedding embed(const EdgeFaceTable& ef, int n_f) const;
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  int d = 0, max_faces = 0;
  nn::Mlp phi;
};

/// Edge rows: summed box projections of the two incident faces plus an
/// encoding of the incidence row (face edge counts, pair multiplicity).
class EdgeConditioner : public nn::Module {
 public:
  EdgeConditioner() = default;
  EdgeConditioner(int d, std::mt19937_64& rng);
  ConditioningEmbedding embed(const EdgeFaceTable& ef, int n_f, const nn::Mat& boxes) const;
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  int d = 0;
  nn::Mlp box_proj, phi;
};

/// Edge rows for the edge-vertex decoder: edge conditioning plus the edge's
/// own curve. MaskBoxes zeroes the box term, MaskEdges the curve term.
class EvConditioner : public nn::Module {
 public:
  EvConditioner() = default;
  EvConditioner(int d, std::mt19937_64& rng);
  ConditioningEmbedding embed(const EdgeFaceTable& ef, int n_f, const nn::Mat& boxes, const nn::Mat& edges,
                              Ablation ablation) const;
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  int d = 0;
  nn::Mlp box_proj, edge_proj, phi;
};

/// Face rows: summed orientation-free projections of incident edge curves,
/// the face box, and vertex/edge count encodings.
class FaceConditioner : public nn::Module {
 public:
  FaceConditioner() = default;
  FaceConditioner(int d, std::mt19937_64& rng);
  ConditioningEmbedding embed(const DerivedIncidence& inc, const nn::Mat& edges, const nn::Mat& boxes) const;
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  int d = 0;
  nn::Mlp edge_proj, box_proj, phi;
};

/// Vertex rows: summed projections of incident face boxes and incident
/// surfaces plus face/edge count encodings. Edge curves are never read.
class VertexConditioner : public nn::Module {
 public:
  VertexConditioner() = default;
  VertexConditioner(int d, std::mt19937_64& rng);
  ConditioningEmbedding embed(const DerivedIncidence& inc, const nn::Mat& boxes, const nn::Mat& faces) const;
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  int d = 0;
  nn::Mlp box_proj, face_proj, phi;
};

}  // namespace hbrep
