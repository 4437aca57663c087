#include "hbrep/conditioning.hpp"

#include <algorithm>
#include <map>

#include "hbrep/error.hpp"
#include "hbrep/topo_codec.hpp"

namespace hbrep {

using nn::Mat;
using nn::Tensor;

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::MaskBoxes: return "mask_B";
    case Ablation::MaskEdges: return "mask_E";
  }
  return "none";
}

Ablation parse_ablation(std::string_view s) {
  if (s == "none") return Ablation::None;
  if (s == "mask_B") return Ablation::MaskBoxes;
  if (s == "mask_E") return Ablation::MaskEdges;
  throw Error(ErrorCode::InvalidArgument, "unknown ablation '" + std::string(s) + "'");
}

Gathered gather(const std::vector<std::vector<int>>& table, const Tensor& source, int k) {
  if (k < 0) {
    k = 0;
    for (const auto& row : table) k = std::max(k, static_cast<int>(row.size()));
  }
  const int n_src = source.rows();
  Gathered g;
  g.k = k;
  g.mask = nn::BoolMat::Constant(static_cast<Eigen::Index>(table.size()), k, false);
  std::vector<int> idx;
  idx.reserve(table.size() * static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (static_cast<int>(table[r].size()) > k) {
      throw Error(ErrorCode::IndexOutOfRange, "incidence row " + std::to_string(r) + " exceeds " + std::to_string(k) + " slots");
    }
    for (int j = 0; j < k; ++j) {
      if (j < static_cast<int>(table[r].size())) {
        const int s = table[r][j];
        if (s < 0 || s >= n_src) {
          throw Error(ErrorCode::IndexOutOfRange, "incidence entry " + std::to_string(s) + " outside " +
                                                      std::to_string(n_src) + " source rows");
        }
        idx.push_back(s);
        g.mask(static_cast<Eigen::Index>(r), j) = true;
      } else {
        idx.push_back(n_src);  // the appended zero row
      }
    }
  }
  const Tensor padded[] = {source, Tensor::zeros(1, source.cols())};
  g.values = nn::gather_rows(nn::concat_rows(padded), idx);
  return g;
}

Mat count_encoding(std::span<const int> counts) {
  Mat m = Mat::Zero(static_cast<Eigen::Index>(counts.size()), kCountWidth);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = counts[i] / 8.0;
    m(r, 1 + std::clamp(counts[i], 0, kCountBins - 1)) = 1.0;
  }
  return m;
}

Mat boxes_matrix(std::span<const Aabb> boxes) {
  Mat m(static_cast<Eigen::Index>(boxes.size()), 6);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto f = boxes[i].flat();
    for (int c = 0; c < 6; ++c) m(static_cast<Eigen::Index>(i), c) = f[c];
  }
  return m;
}

Mat edges_matrix(std::span<const EdgeCurve> edges) {
  Mat m(static_cast<Eigen::Index>(edges.size()), 12);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto f = edges[i].flat();
    for (int c = 0; c < 12; ++c) m(static_cast<Eigen::Index>(i), c) = f[c];
  }
  return m;
}

Mat faces_matrix(std::span<const FaceSurface> faces) {
  Mat m(static_cast<Eigen::Index>(faces.size()), 48);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto f = faces[i].flat();
    for (int c = 0; c < 48; ++c) m(static_cast<Eigen::Index>(i), c) = f[c];
  }
  return m;
}

Mat vertices_matrix(std::span<const Vec3> vertices) {
  Mat m(static_cast<Eigen::Index>(vertices.size()), 3);
  for (std::size_t i = 0; i < vertices.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = vertices[i].transpose();
  return m;
}

ConditionInput make_condition_input(const EdgeFaceTable& ef, int n_f, const EdgeVertexTable* ev, int n_v) {
  ConditionInput in;
  in.ef = ef;
  in.n_f = n_f;
  if (ev) {
    in.inc = derive_incidence(ef, *ev, n_f, n_v);
  } else {
    in.inc.fe = face_edges(ef, n_f);
  }
  return in;
}

namespace {

void check_rows(const Mat& m, int rows, int cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorCode::IndexOutOfRange, std::string(what) + " matrix is " + std::to_string(m.rows()) + "x" +
                                                std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                                std::to_string(cols));
  }
}

void check_faces(const EdgeFaceTable& ef, int n_f) {
  for (std::size_t e = 0; e < ef.rows.size(); ++e) {
    for (int f : ef.rows[e]) {
      if (f < 0 || f >= n_f) {
        throw Error(ErrorCode::IndexOutOfRange, "edge " + std::to_string(e) + " references face " + std::to_string(f));
      }
    }
  }
}

/// Sum over each entity's incidence list of rows of `proj`.
Tensor incident_sum(const std::vector<std::vector<int>>& table, const Tensor& proj) {
  std::vector<int> idx, seg;
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (int s : table[r]) {
      if (s < 0 || s >= proj.rows()) {
        throw Error(ErrorCode::IndexOutOfRange, "incidence entry " + std::to_string(s) + " outside " +
                                                    std::to_string(proj.rows()) + " rows");
      }
      idx.push_back(s);
      seg.push_back(static_cast<int>(r));
    }
  }
  const int n = static_cast<int>(table.size());
  if (idx.empty()) return Tensor::zeros(n, proj.cols());
  return nn::segment_sum(nn::gather_rows(proj, idx), seg, n);
}

std::vector<std::vector<int>> ef_as_table(const EdgeFaceTable& ef) {
  std::vector<std::vector<int>> t;
  t.reserve(ef.rows.size());
  for (const auto& r : ef.rows) t.push_back({r[0], r[1]});
  return t;
}

/// Per edge: summed count encodings of both faces, pair multiplicity and the
/// edge's occurrence index among edges joining the same pair.
Mat edge_incidence_encoding(const EdgeFaceTable& ef, int n_f) {
  const auto fe = face_edges(ef, n_f);
  std::map<IndexPair, int> multiplicity;
  for (const auto& r : ef.rows) ++multiplicity[sorted_pair(r[0], r[1])];
  std::map<IndexPair, int> seen;
  const int n_e = static_cast<int>(ef.rows.size());
  Mat m = Mat::Zero(n_e, kCountWidth + 1 + kMaxSharedEdges);
  for (int e = 0; e < n_e; ++e) {
    const IndexPair p = sorted_pair(ef.rows[e][0], ef.rows[e][1]);
    const int counts[] = {static_cast<int>(fe[p[0]].size()), static_cast<int>(fe[p[1]].size())};
    m.row(e).head(kCountWidth) = count_encoding(counts).colwise().sum();
    m(e, kCountWidth) = multiplicity[p] / 8.0;
    const int occ = seen[p]++;
    m(e, kCountWidth + 1 + std::min(occ, kMaxSharedEdges - 1)) = 1.0;
  }
  return m;
}

constexpr int kEdgeIncidenceWidth = kCountWidth + 1 + kMaxSharedEdges;
constexpr int kFaceIndexWidth = 16;

std::vector<int> sizes(const std::vector<std::vector<int>>& t) {
  std::vector<int> s;
  s.reserve(t.size());
  for (const auto& r : t) s.push_back(static_cast<int>(r.size()));
  return s;
}

}  // namespace

BoxConditioner::BoxConditioner(int d_, int max_faces_, std::mt19937_64& rng)
    : d(d_), max_faces(max_faces_), phi(kCountWidth + max_faces_ + kFaceIndexWidth, d_, d_, rng) {}

ConditioningEmbedding BoxConditioner::embed(const EdgeFaceTable& ef, int n_f) const {
  check_faces(ef, n_f);
  if (n_f > max_faces) {
    throw Error(ErrorCode::InvalidArgument, std::to_string(n_f) + " faces exceed the conditioner's limit " +
                                                std::to_string(max_faces));
  }
  const FefMatrix fef = build_fef(ef, n_f);
  const auto fe = face_edges(ef, n_f);
  std::vector<double> pos(static_cast<std::size_t>(n_f));
  for (int f = 0; f < n_f; ++f) pos[f] = f;
  Mat in = Mat::Zero(n_f, kCountWidth + max_faces + kFaceIndexWidth);
  in.leftCols(kCountWidth) = count_encoding(sizes(fe));
  for (int f = 0; f < n_f; ++f)
    for (int g = 0; g < n_f; ++g) in(f, kCountWidth + g) = fef.at(f, g);
  in.rightCols(kFaceIndexWidth) = nn::sinusoidal_encoding(pos, kFaceIndexWidth);
  return {phi.forward(Tensor(std::move(in))), EntityKind::Face, {"ef"}};
}

void BoxConditioner::collect(const std::string& prefix, nn::ParamList& out) const { phi.collect(prefix + "phi.", out); }

EdgeConditioner::EdgeConditioner(int d_, std::mt19937_64& rng)
    : d(d_), box_proj(6, d_, d_, rng), phi(d_ + kEdgeIncidenceWidth, d_, d_, rng) {}

ConditioningEmbedding EdgeConditioner::embed(const EdgeFaceTable& ef, int n_f, const Mat& boxes) const {
  check_faces(ef, n_f);
  check_rows(boxes, n_f, 6, "box");
  const Tensor proj = box_proj.forward(Tensor(boxes));
  const Tensor summed = incident_sum(ef_as_table(ef), proj);
  const Tensor parts[] = {summed, Tensor(edge_incidence_encoding(ef, n_f))};
  return {phi.forward(nn::concat_cols(parts)), EntityKind::Edge, {"ef", "boxes"}};
}

void EdgeConditioner::collect(const std::string& prefix, nn::ParamList& out) const {
  box_proj.collect(prefix + "box_proj.", out);
  phi.collect(prefix + "phi.", out);
}

EvConditioner::EvConditioner(int d_, std::mt19937_64& rng)
    : d(d_), box_proj(6, d_, d_, rng), edge_proj(12, d_, d_, rng), phi(2 * d_ + kEdgeIncidenceWidth, d_, d_, rng) {}

ConditioningEmbedding EvConditioner::embed(const EdgeFaceTable& ef, int n_f, const Mat& boxes, const Mat& edges,
                                           Ablation ablation) const {
  check_faces(ef, n_f);
  const int n_e = static_cast<int>(ef.rows.size());
  ConditioningEmbedding out;
  out.kind = EntityKind::Edge;
  out.provenance.push_back("ef");
  Tensor box_term = Tensor::zeros(n_e, d);
  if (ablation != Ablation::MaskBoxes) {
    check_rows(boxes, n_f, 6, "box");
    box_term = incident_sum(ef_as_table(ef), box_proj.forward(Tensor(boxes)));
    out.provenance.push_back("boxes");
  }
  Tensor edge_term = Tensor::zeros(n_e, d);
  if (ablation != Ablation::MaskEdges) {
    check_rows(edges, n_e, 12, "edge");
    edge_term = edge_proj.forward(Tensor(edges));
    out.provenance.push_back("edges");
  }
  const Tensor parts[] = {box_term, Tensor(edge_incidence_encoding(ef, n_f)), edge_term};
  out.rows = phi.forward(nn::concat_cols(parts));
  return out;
}

void EvConditioner::collect(const std::string& prefix, nn::ParamList& out) const {
  box_proj.collect(prefix + "box_proj.", out);
  edge_proj.collect(prefix + "edge_proj.", out);
  phi.collect(prefix + "phi.", out);
}

FaceConditioner::FaceConditioner(int d_, std::mt19937_64& rng)
    : d(d_), edge_proj(12, d_, d_, rng), box_proj(6, d_, d_, rng), phi(2 * d_ + 2 * kCountWidth, d_, d_, rng) {}

ConditioningEmbedding FaceConditioner::embed(const DerivedIncidence& inc, const Mat& edges, const Mat& boxes) const {
  const int n_f = static_cast<int>(inc.fe.size());
  check_rows(boxes, n_f, 6, "box");
  if (edges.cols() != 12) check_rows(edges, static_cast<int>(edges.rows()), 12, "edge");
  if (inc.fv.size() != inc.fe.size()) throw Error(ErrorCode::IndexOutOfRange, "fv and fe describe different face counts");
  Mat reversed(edges.rows(), 12);
  for (int k = 0; k < 4; ++k) reversed.middleCols(3 * k, 3) = edges.middleCols(3 * (3 - k), 3);
  const Tensor sym = nn::add(edge_proj.forward(Tensor(edges)), edge_proj.forward(Tensor(reversed)));
  const Tensor edge_sum = incident_sum(inc.fe, sym);
  const Tensor parts[] = {edge_sum, box_proj.forward(Tensor(boxes)), Tensor(count_encoding(sizes(inc.fv))),
                          Tensor(count_encoding(sizes(inc.fe)))};
  return {phi.forward(nn::concat_cols(parts)), EntityKind::Face, {"fe", "fv", "edges", "boxes"}};
}

void FaceConditioner::collect(const std::string& prefix, nn::ParamList& out) const {
  edge_proj.collect(prefix + "edge_proj.", out);
  box_proj.collect(prefix + "box_proj.", out);
  phi.collect(prefix + "phi.", out);
}

VertexConditioner::VertexConditioner(int d_, std::mt19937_64& rng)
    : d(d_), box_proj(6, d_, d_, rng), face_proj(48, d_, d_, rng), phi(2 * d_ + 2 * kCountWidth, d_, d_, rng) {}

ConditioningEmbedding VertexConditioner::embed(const DerivedIncidence& inc, const Mat& boxes, const Mat& faces) const {
  const int n_f = static_cast<int>(boxes.rows());
  check_rows(boxes, n_f, 6, "box");
  check_rows(faces, n_f, 48, "face");
  if (inc.ve.size() != inc.vf.size()) throw Error(ErrorCode::IndexOutOfRange, "vf and ve describe different vertex counts");
  const Tensor box_sum = incident_sum(inc.vf, box_proj.forward(Tensor(boxes)));
  const Tensor face_sum = incident_sum(inc.vf, face_proj.forward(Tensor(faces)));
  const Tensor parts[] = {box_sum, face_sum, Tensor(count_encoding(sizes(inc.vf))),
                          Tensor(count_encoding(sizes(inc.ve)))};
  return {phi.forward(nn::concat_cols(parts)), EntityKind::Vertex, {"vf", "ve", "boxes", "faces"}};
}

void VertexConditioner::collect(const std::string& prefix, nn::ParamList& out) const {
  box_proj.collect(prefix + "box_proj.", out);
  face_proj.collect(prefix + "face_proj.", out);
  phi.collect(prefix + "phi.", out);
}

}  // namespace hbrep
