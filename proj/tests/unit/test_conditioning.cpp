#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "gradient_suite.hpp"
#include "hbrep/builders.hpp"
#include "hbrep/conditioning.hpp"
#include "hbrep/error.hpp"
#include "hbrep/topo_codec.hpp"

using namespace hbrep;
using nn::Mat;
using nn::Tensor;

namespace {

BrepModel canonical_cube() {
  BrepModel m = make_unit_cube();
  normalize_to_unit_cube(m);
  return canonicalize_model(m);
}

}  // namespace

TEST(Gather, LooksUpRows) {
  const Tensor src(Mat{{1, 1}, {2, 2}, {3, 3}});
  const auto g = gather({{0, 1}, {1, 2}}, src);
  EXPECT_EQ(g.k, 2);
  EXPECT_EQ(g.values.value(), (Mat{{1, 1}, {2, 2}, {2, 2}, {3, 3}}));
  EXPECT_TRUE(g.mask.all());
}

TEST(Gather, EmptyRowIsZeroPaddedAndMasked) {
  const Tensor src(Mat{{1, 2}, {3, 4}});
  const auto g = gather({{1}, {}}, src, 2);
  EXPECT_EQ(g.values.value(), (Mat{{3, 4}, {0, 0}, {0, 0}, {0, 0}}));
  EXPECT_TRUE(g.mask(0, 0));
  EXPECT_FALSE(g.mask(0, 1));
  EXPECT_FALSE(g.mask.row(1).any());
}

TEST(Gather, OutOfRangeThrows) {
  try {
    gather({{3}}, Tensor(Mat::Zero(2, 2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(Gather, CubeFaceEdgesCarryTheirFeatures) {
  const BrepModel m = canonical_cube();
  const auto fe = face_edges(m.ef, 6);
  const Tensor edges(edges_matrix(m.edges));
  const auto g = gather(fe, edges);
  ASSERT_EQ(g.k, 4);
  for (int f = 0; f < 6; ++f)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(g.values.value().row(f * 4 + j), edges.value().row(fe[f][j]));
}

TEST(CountEncoding, Layout) {
  const int c[] = {4, 40};
  const Mat e = count_encoding(c);
  ASSERT_EQ(e.cols(), kCountWidth);
  EXPECT_DOUBLE_EQ(e(0, 0), 0.5);
  EXPECT_EQ(e(0, 1 + 4), 1.0);
  EXPECT_DOUBLE_EQ(e.row(0).sum(), 1.5);
  EXPECT_EQ(e(1, 1 + 31), 1.0);
}

TEST(BoxConditioner, RowsDependOnEdgeCountsNotLabels) {
  std::mt19937_64 rng(1);
  BoxConditioner c(16, 50, rng);
  const BrepModel p = canonicalize_model(make_regular_prism(3, 1, 1));
  const auto e = c.embed(p.ef, 5);
  EXPECT_EQ(e.rows.rows(), 5);
  EXPECT_EQ(e.provenance, (std::vector<std::string>{"ef"}));
  EXPECT_EQ(e.kind, EntityKind::Face);
  // Triangles sort first; their edge-count encoding differs from the rectangles'.
  const auto fe = face_edges(p.ef, 5);
  EXPECT_EQ(fe[0].size(), 3u);
  EXPECT_EQ(fe[4].size(), 4u);
}

TEST(EdgeConditioner, DeterministicOnCube) {
  std::mt19937_64 a(2), b(2);
  EdgeConditioner ca(16, a), cb(16, b);
  const BrepModel m = canonical_cube();
  const Mat boxes = boxes_matrix(m.boxes);
  const auto ea = ca.embed(m.ef, 6, boxes), eb = cb.embed(m.ef, 6, boxes);
  EXPECT_EQ(ea.rows.rows(), 12);
  EXPECT_EQ(ea.rows.value(), eb.rows.value());
  EXPECT_EQ(ea.kind, EntityKind::Edge);
}

TEST(EdgeConditioner, InvariantToFaceOrderWithinRow) {
  // Swapping which incident face comes first cannot change the fused row.
  std::mt19937_64 rng(3);
  EdgeConditioner c(8, rng);
  const EdgeFaceTable ef{{{0, 1}}};
  Mat boxes = support::random_mat(2, 6, rng);
  const Mat a = c.embed(ef, 2, boxes).rows.value();
  Mat swapped(2, 6);
  swapped.row(0) = boxes.row(1);
  swapped.row(1) = boxes.row(0);
  const Mat b = c.embed(ef, 2, swapped).rows.value();
  EXPECT_LT((a - b).norm(), 1e-12);
}

TEST(EvConditioner, AblationsAreInputIndependent) {
  std::mt19937_64 rng(4);
  EvConditioner c(16, rng);
  const BrepModel m = canonical_cube();
  const Mat boxes = boxes_matrix(m.boxes), edges = edges_matrix(m.edges);
  const Mat other_boxes = support::random_mat(6, 6, rng), other_edges = support::random_mat(12, 12, rng);

  const Mat none = c.embed(m.ef, 6, boxes, edges, Ablation::None).rows.value();
  const Mat mb = c.embed(m.ef, 6, boxes, edges, Ablation::MaskBoxes).rows.value();
  const Mat me = c.embed(m.ef, 6, boxes, edges, Ablation::MaskEdges).rows.value();
  EXPECT_GT((none - mb).norm(), 1e-6);
  EXPECT_GT((none - me).norm(), 1e-6);
  EXPECT_EQ(c.embed(m.ef, 6, other_boxes, edges, Ablation::MaskBoxes).rows.value(), mb);
  EXPECT_EQ(c.embed(m.ef, 6, boxes, other_edges, Ablation::MaskEdges).rows.value(), me);

  const auto prov = c.embed(m.ef, 6, boxes, edges, Ablation::MaskBoxes).provenance;
  EXPECT_EQ(std::count(prov.begin(), prov.end(), "boxes"), 0);
  const auto prov_e = c.embed(m.ef, 6, boxes, edges, Ablation::MaskEdges).provenance;
  EXPECT_EQ(std::count(prov_e.begin(), prov_e.end(), "edges"), 0);
}

TEST(FaceConditioner, InvariantToIncidentEdgeOrderAndCurveDirection) {
  std::mt19937_64 rng(5);
  FaceConditioner c(16, rng);
  const BrepModel m = canonical_cube();
  auto inc = derive_incidence(m.ef, m.ev, 6, 8);
  const Mat boxes = boxes_matrix(m.boxes);
  std::vector<EdgeCurve> curves = m.edges;
  const Mat a = c.embed(inc, edges_matrix(curves), boxes).rows.value();
  for (auto& row : inc.fe) std::reverse(row.begin(), row.end());
  for (auto& e : curves) e = e.reversed();
  const Mat b = c.embed(inc, edges_matrix(curves), boxes).rows.value();
  EXPECT_LT((a - b).norm(), 1e-12);
  EXPECT_EQ(a.rows(), 6);
}

TEST(FaceConditioner, RowDependsOnlyOnOwnEdgesAndBox) {
  std::mt19937_64 rng(6);
  FaceConditioner c(8, rng);
  const BrepModel m = canonical_cube();
  const auto inc = derive_incidence(m.ef, m.ev, 6, 8);
  Mat boxes = boxes_matrix(m.boxes);
  Mat edges = edges_matrix(m.edges);
  const Mat a = c.embed(inc, edges, boxes).rows.value();
  // Perturb the box of face 5 and an edge not on face 0.
  boxes.row(5).array() += 0.3;
  int foreign = -1;
  for (int e = 0; e < 12 && foreign < 0; ++e)
    if (std::find(inc.fe[0].begin(), inc.fe[0].end(), e) == inc.fe[0].end()) foreign = e;
  edges.row(foreign).array() += 0.3;
  const Mat b = c.embed(inc, edges, boxes).rows.value();
  EXPECT_LT((a.row(0) - b.row(0)).norm(), 1e-12);
}

TEST(VertexConditioner, NeverReadsEdgeCurvesAndRowsPerVertex) {
  std::mt19937_64 rng(7);
  VertexConditioner c(16, rng);
  const BrepModel m = canonical_cube();
  const auto inc = derive_incidence(m.ef, m.ev, 6, 8);
  const auto e = c.embed(inc, boxes_matrix(m.boxes), faces_matrix(m.faces));
  EXPECT_EQ(e.rows.rows(), 8);
  EXPECT_EQ(e.kind, EntityKind::Vertex);
  EXPECT_EQ(std::count(e.provenance.begin(), e.provenance.end(), "edges"), 0);
}

TEST(VertexConditioner, InvariantToIncidentFaceOrder) {
  std::mt19937_64 rng(8);
  VertexConditioner c(16, rng);
  const BrepModel m = canonical_cube();
  auto inc = derive_incidence(m.ef, m.ev, 6, 8);
  const Mat boxes = boxes_matrix(m.boxes), faces = faces_matrix(m.faces);
  const Mat a = c.embed(inc, boxes, faces).rows.value();
  for (auto& row : inc.vf) std::rotate(row.begin(), row.begin() + 1, row.end());
  for (auto& row : inc.ve) std::reverse(row.begin(), row.end());
  EXPECT_LT((a - c.embed(inc, boxes, faces).rows.value()).norm(), 1e-12);
}

TEST(Gradients, FusionEncoders) {
  for (const auto& c : support::fusion_gradient_cases()) {
    const auto r = support::run_grad_case(c);
    EXPECT_LT(r.rel_error, support::kGradTolerance) << c.name << " worst tensor " << r.worst;
  }
}

TEST(MakeConditionInput, FillsIncidence) {
  const BrepModel m = canonical_cube();
  const ConditionInput in = make_condition_input(m.ef, 6, &m.ev, 8);
  EXPECT_EQ(in.n_f, 6);
  EXPECT_EQ(in.inc.fe.size(), 6u);
  EXPECT_EQ(in.inc.vf.size(), 8u);
}
