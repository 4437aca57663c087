#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "hbrep/builders.hpp"
#include "hbrep/error.hpp"
#include "hbrep/topo_codec.hpp"
#include "test_support.hpp"

using namespace hbrep;

namespace {

FefMatrix random_fef(int n, std::mt19937_64& rng) {
  FefMatrix f(n);
  std::uniform_int_distribution<int> c(0, kMaxSharedEdges);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) f.at(i, j) = f.at(j, i) = c(rng);
  return f;
}

}  // namespace

TEST(BuildFef, CubeAdjacency) {
  const BrepModel m = make_unit_cube();
  const FefMatrix f = build_fef(m.ef, 6);
  int ones = 0, zero_pairs = 0;
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(f.at(i, i), 0);
    for (int j = 0; j < 6; ++j) {
      EXPECT_EQ(f.at(i, j), f.at(j, i));
      if (i != j && f.at(i, j) == 1) ++ones;
      if (i < j && f.at(i, j) == 0) ++zero_pairs;
    }
  }
  EXPECT_EQ(ones, 24);  // twelve adjacent pairs, both triangles
  EXPECT_EQ(zero_pairs, 3);
}

TEST(BuildFef, MultipleSharedEdges) {
  EdgeFaceTable ef{{{0, 1}, {0, 1}}};
  EXPECT_EQ(build_fef(ef, 2).at(0, 1), 2);
}

TEST(BuildFef, PrismPairs) {
  const BrepModel p = make_triangular_prism();
  const FefMatrix f = build_fef(p.ef, 5);
  EXPECT_EQ(f.at(0, 1), 0);  // triangle caps
  for (int s = 2; s < 5; ++s) {
    EXPECT_EQ(f.at(0, s), 1);
    EXPECT_EQ(f.at(1, s), 1);
    for (int t = s + 1; t < 5; ++t) EXPECT_EQ(f.at(s, t), 1);
  }
  EXPECT_EQ(f.upper_sum(), 9);
}

TEST(BuildFef, UpperSumEqualsEdgeCount) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const BrepModel m = support::random_fixture(rng);
    EXPECT_EQ(build_fef(m.ef, m.num_faces()).upper_sum(), m.num_edges());
  }
}

TEST(CanonicalizeFaces, CubeIsIdentity) {
  const auto [f, perm] = canonicalize_faces(build_fef(make_unit_cube().ef, 6));
  EXPECT_EQ(perm, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(CanonicalizeFaces, PrismTrianglesFirst) {
  const BrepModel p = make_regular_prism(3, 1, 1);
  const auto [f, perm] = canonicalize_faces(build_fef(p.ef, 5));
  EXPECT_EQ(f.row_sum(0), 3);
  EXPECT_EQ(f.row_sum(1), 3);
}

TEST(CanonicalizeFaces, SortedStableAndReversible) {
  std::mt19937_64 rng(4);
  for (int it = 0; it < 200; ++it) {
    const FefMatrix in = random_fef(8, rng);
    const auto [out, perm] = canonicalize_faces(in);
    std::vector<int> oracle(8);
    std::iota(oracle.begin(), oracle.end(), 0);
    std::stable_sort(oracle.begin(), oracle.end(), [&](int a, int b) { return in.row_sum(a) < in.row_sum(b); });
    EXPECT_EQ(perm, oracle);
    for (int i = 0; i + 1 < 8; ++i) EXPECT_LE(out.row_sum(i), out.row_sum(i + 1));
    std::vector<int> inverse(8);
    for (int i = 0; i < 8; ++i) inverse[perm[i]] = i;
    EXPECT_EQ(permute_fef(out, inverse), in);
  }
}

TEST(FlattenFef, CubeTokens) {
  const EfSequence s = flatten_fef(build_fef(make_unit_cube().ef, 6));
  ASSERT_EQ(s.tokens.size(), 16u);
  EXPECT_EQ(s.tokens.back(), kEfEos);
  EXPECT_EQ(std::count(s.tokens.begin(), s.tokens.end() - 1, 1), 12);
  EXPECT_EQ(std::count(s.tokens.begin(), s.tokens.end() - 1, 0), 3);
}

TEST(FlattenFef, TwoFaces) {
  FefMatrix f(2);
  f.at(0, 1) = f.at(1, 0) = 1;
  EXPECT_EQ(flatten_fef(f).tokens, (std::vector<int>{1, kEfEos}));
}

TEST(FlattenFef, RoundTripRandomMatrices) {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 1000; ++it) {
    const FefMatrix f = random_fef(std::uniform_int_distribution<int>(2, 20)(rng), rng);
    EXPECT_EQ(unflatten_fef(flatten_fef(f)), f);
  }
}

TEST(UnflattenFef, RejectsNonTriangularLength) {
  EfSequence s{{1, 1, kEfEos}};
  try {
    unflatten_fef(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotTriangularLength);
  }
}

TEST(AssignGlobalEdgeIds, Examples) {
  EXPECT_EQ(assign_global_edge_ids(EdgeFaceTable{{{1, 2}, {0, 1}, {0, 2}}}), (std::vector<int>{1, 2, 0}));
  EXPECT_EQ(assign_global_edge_ids(EdgeFaceTable{{{0, 1}, {0, 2}, {1, 2}}}), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(assign_global_edge_ids(EdgeFaceTable{{{1, 2}, {0, 1}, {0, 1}}}), (std::vector<int>{1, 2, 0}));
}

TEST(FefToEdges, ExpandsCountsInOrder) {
  FefMatrix f(3);
  f.at(0, 2) = f.at(2, 0) = 2;
  f.at(1, 2) = f.at(2, 1) = 1;
  const EdgeFaceTable ef = fef_to_edges(f);
  EXPECT_EQ(ef.rows, (std::vector<IndexPair>{{0, 2}, {0, 2}, {1, 2}}));
}

TEST(EncodeEv, CubeLength) {
  const EvSequence s = encode_ev_sequence(canonicalize_model(make_unit_cube()));
  ASSERT_EQ(s.tokens.size(), 37u);
  EXPECT_EQ(s.tokens.back(), kTokenEnd);
  EXPECT_EQ(count_loops(s), 6);
  EXPECT_EQ(std::count(s.tokens.begin(), s.tokens.end(), kTokenFace), 6);
}

TEST(EncodeEv, FaceWithHoleHasTwoLoops) {
  const BrepModel m = canonicalize_model(make_square_frame(2, 1, 0.5));
  const EvSequence s = encode_ev_sequence(m);
  int max_loops = 0, loops = 0;
  for (int t : s.tokens) {
    if (t == kTokenLoop) ++loops;
    if (t == kTokenFace) {
      max_loops = std::max(max_loops, loops);
      loops = 0;
    }
  }
  EXPECT_EQ(max_loops, 2);
  EXPECT_EQ(count_loops(s), 12);
}

TEST(DecodeEv, CubeRecoversTable) {
  const BrepModel m = canonicalize_model(make_unit_cube());
  const EdgeVertexTable ev = decode_ev_sequence(encode_ev_sequence(m), m.ef);
  EXPECT_EQ(vertex_count(ev), 8);
  EXPECT_EQ(ev.rows, m.ev.rows);
}

TEST(DecodeEv, TriangleFaceHasThreeVertices) {
  // Two triangles glued along all three edges (a degenerate pillow).
  EdgeFaceTable ef{{{0, 1}, {0, 1}, {0, 1}}};
  EvSequence s{{0, 2, 4, kTokenLoop, kTokenFace, 1, 5, 3, kTokenLoop, kTokenFace, kTokenEnd}};
  EXPECT_EQ(vertex_count(decode_ev_sequence(s, ef)), 3);
}

TEST(DecodeEv, MissingHalfEdgeIsMalformed) {
  const BrepModel m = canonicalize_model(make_unit_cube());
  EvSequence s = encode_ev_sequence(m);
  s.tokens.erase(s.tokens.begin());
  try {
    decode_ev_sequence(s, m.ef);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedSequence);
  }
}

TEST(EvCodec, RoundTripRandomFixturesWithHandshake) {
  std::mt19937_64 rng(21);
  for (int it = 0; it < 500; ++it) {
    const BrepModel m = canonicalize_model(support::random_fixture(rng));
    const EdgeVertexTable ev = decode_ev_sequence(encode_ev_sequence(m), m.ef);
    ASSERT_EQ(ev.rows, m.ev.rows);
    std::map<int, int> degree;
    for (const auto& r : ev.rows) {
      ++degree[r[0]];
      ++degree[r[1]];
    }
    int total = 0;
    for (const auto& [v, d] : degree) total += d;
    EXPECT_EQ(total, 2 * m.num_edges());
  }
}

TEST(CanonicalizeModel, EdgeCountProfileIndependentOfInputLabels) {
  // Faces with equal edge counts keep their input order, so only the
  // per-face degree profile and the sequence lengths are label-free.
  std::mt19937_64 rng(8);
  const BrepModel base = make_l_bracket(2, 2, 0.5, 0.5, 1);
  auto profile = [](const BrepModel& c) {
    std::vector<int> deg;
    for (const auto& row : face_edges(c.ef, c.num_faces())) deg.push_back(static_cast<int>(row.size()));
    return deg;
  };
  const BrepModel ref = canonicalize_model(base);
  const auto ref_profile = profile(ref);
  EXPECT_TRUE(std::is_sorted(ref_profile.begin(), ref_profile.end()));
  const std::size_t ref_len = encode_ev_sequence(ref).tokens.size();
  for (int i = 0; i < 20; ++i) {
    const BrepModel c = canonicalize_model(shuffle_model(base, rng));
    EXPECT_EQ(profile(c), ref_profile);
    EXPECT_EQ(encode_ev_sequence(c).tokens.size(), ref_len);
    EXPECT_TRUE(canonicalize_model(c) == c);
  }
}
