#include "hbrep/topo_codec.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "hbrep/builders.hpp"
#include "hbrep/error.hpp"
#include "hbrep/union_find.hpp"

namespace hbrep {

int FefMatrix::row_sum(int i) const {
  int s = 0;
  for (int j = 0; j < n; ++j) s += at(i, j);
  return s;
}

int FefMatrix::upper_sum() const {
  int s = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s += at(i, j);
  return s;
}

FefMatrix build_fef(const EdgeFaceTable& ef, int n_f) {
  FefMatrix fef(n_f);
  for (std::size_t e = 0; e < ef.rows.size(); ++e) {
    const auto [a, b] = ef.rows[e];
    if (a < 0 || b < 0 || a >= n_f || b >= n_f) {
      throw Error(ErrorCode::IndexOutOfRange, "edge " + std::to_string(e) + " references a face outside [0, " +
                                                  std::to_string(n_f) + ")");
    }
    if (a == b) throw Error(ErrorCode::InvalidArgument, "seam edge " + std::to_string(e) + " bounds one face twice");
    ++fef.at(a, b);
    ++fef.at(b, a);
  }
  return fef;
}

FefMatrix permute_fef(const FefMatrix& fef, const std::vector<int>& perm) {
  FefMatrix out(fef.n);
  for (int i = 0; i < fef.n; ++i)
    for (int j = 0; j < fef.n; ++j) out.at(i, j) = fef.at(perm[i], perm[j]);
  return out;
}

std::pair<FefMatrix, std::vector<int>> canonicalize_faces(const FefMatrix& fef) {
  std::vector<int> perm(static_cast<std::size_t>(fef.n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> sums(static_cast<std::size_t>(fef.n));
  for (int i = 0; i < fef.n; ++i) sums[i] = fef.row_sum(i);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return sums[a] < sums[b]; });
  return {permute_fef(fef, perm), perm};
}

EfSequence flatten_fef(const FefMatrix& fef) {
  EfSequence seq;
  for (int i = 0; i < fef.n; ++i) {
    for (int j = i + 1; j < fef.n; ++j) {
      const int c = fef.at(i, j);
      if (c < 0 || c > kMaxSharedEdges) {
        throw Error(ErrorCode::InvalidArgument, "shared-edge count " + std::to_string(c) + " outside [0, " +
                                                    std::to_string(kMaxSharedEdges) + "]");
      }
      seq.tokens.push_back(c);
    }
  }
  seq.tokens.push_back(kEfEos);
  return seq;
}

FefMatrix unflatten_fef(const EfSequence& seq) {
  const auto eos = std::find(seq.tokens.begin(), seq.tokens.end(), kEfEos);
  if (eos == seq.tokens.end() || eos + 1 != seq.tokens.end()) {
    throw Error(ErrorCode::MalformedSequence, "sequence must end with a single end token");
  }
  const auto len = static_cast<long>(eos - seq.tokens.begin());
  const long n = std::lround((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(len))) / 2.0);
  if (len < 1 || n * (n - 1) / 2 != len) {
    throw Error(ErrorCode::NotTriangularLength, std::to_string(len) + " entries is not n(n-1)/2 for n >= 2");
  }
  FefMatrix fef(static_cast<int>(n));
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const int c = seq.tokens[k++];
      if (c < 0 || c > kMaxSharedEdges) {
        throw Error(ErrorCode::MalformedSequence, "token " + std::to_string(c) + " is not a shared-edge count");
      }
      fef.at(i, j) = fef.at(j, i) = c;
    }
  }
  return fef;
}

EdgeFaceTable fef_to_edges(const FefMatrix& fef) {
  EdgeFaceTable ef;
  for (int i = 0; i < fef.n; ++i)
    for (int j = i + 1; j < fef.n; ++j)
      for (int c = 0; c < fef.at(i, j); ++c) ef.rows.push_back({i, j});
  return ef;
}

std::vector<int> assign_global_edge_ids(const EdgeFaceTable& ef) {
  std::vector<int> perm(ef.rows.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return ef.rows[a] < ef.rows[b]; });
  return perm;
}

BrepModel canonicalize_model(const BrepModel& m) {
  m.check_structure();
  auto identity = [](int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    return p;
  };
  const auto [fef, face_perm] = canonicalize_faces(build_fef(m.ef, m.num_faces()));
  BrepModel out = permute_model(m, face_perm, identity(m.num_edges()), identity(m.num_vertices()));
  const auto edge_perm = assign_global_edge_ids(out.ef);
  out = permute_model(out, identity(out.num_faces()), edge_perm, identity(out.num_vertices()));

  std::vector<int> vertex_perm;
  std::vector<bool> placed(static_cast<std::size_t>(out.num_vertices()), false);
  for (const auto& row : out.ev.rows) {
    for (int v : row) {
      if (!placed[v]) {
        placed[v] = true;
        vertex_perm.push_back(v);
      }
    }
  }
  for (int v = 0; v < out.num_vertices(); ++v)
    if (!placed[v]) vertex_perm.push_back(v);
  out = permute_model(out, identity(out.num_faces()), identity(out.num_edges()), vertex_perm);

  for (int e = 0; e < out.num_edges(); ++e) {
    const Vec3& a = out.vertices[out.ev.rows[e][0]];
    const Vec3& b = out.vertices[out.ev.rows[e][1]];
    const auto& cp = out.edges[e].control_points;
    if ((cp[0] - b).norm() + (cp[3] - a).norm() < (cp[0] - a).norm() + (cp[3] - b).norm()) {
      out.edges[e] = out.edges[e].reversed();
    }
  }
  return out;
}

std::vector<std::vector<std::pair<int, int>>> face_loops(const BrepModel& m, int face) {
  std::vector<int> edges;
  for (int e = 0; e < m.num_edges(); ++e) {
    if (m.ef.rows[e][0] == face || m.ef.rows[e][1] == face) edges.push_back(e);
  }
  if (edges.empty()) throw Error(ErrorCode::OpenLoop, "face " + std::to_string(face) + " has no boundary");
  std::vector<std::vector<int>> at_vertex(static_cast<std::size_t>(m.num_vertices()));
  for (int e : edges) {
    at_vertex[m.ev.rows[e][0]].push_back(e);
    at_vertex[m.ev.rows[e][1]].push_back(e);
  }
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (!at_vertex[v].empty() && at_vertex[v].size() != 2) {
      throw Error(ErrorCode::OpenLoop, "face " + std::to_string(face) + " boundary does not chain at vertex " +
                                           std::to_string(v));
    }
  }
  std::vector<bool> used(static_cast<std::size_t>(m.num_edges()), false);
  std::vector<std::vector<std::pair<int, int>>> loops;
  for (int start : edges) {
    if (used[start]) continue;
    std::vector<std::pair<int, int>> loop;
    int e = start, dir = 0;
    while (true) {
      used[e] = true;
      loop.emplace_back(e, dir);
      const int head = m.ev.rows[e][dir == 0 ? 1 : 0];
      const auto& inc = at_vertex[head];
      int next = inc[0] == e ? inc[1] : inc[0];
      if (inc[0] == inc[1]) next = e;  // digon closing onto itself
      if (used[next]) {
        if (next != start) throw Error(ErrorCode::OpenLoop, "face " + std::to_string(face) + " boundary is not a cycle");
        break;
      }
      dir = m.ev.rows[next][0] == head ? 0 : 1;
      e = next;
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

EvSequence encode_ev_sequence(const BrepModel& m) {
  m.check_structure();
  if (m.num_edges() > kMaxEdgeTokens) {
    throw Error(ErrorCode::InvalidArgument, "model has more edges than the token alphabet addresses");
  }
  struct Loop {
    int face;
    std::vector<std::pair<int, int>> half_edges;
  };
  std::vector<Loop> loops;
  std::vector<std::vector<int>> face_loop_ids(static_cast<std::size_t>(m.num_faces()));
  for (int f = 0; f < m.num_faces(); ++f) {
    for (auto& l : face_loops(m, f)) {
      face_loop_ids[f].push_back(static_cast<int>(loops.size()));
      loops.push_back(Loop{f, std::move(l)});
    }
  }

  // Occurrences of every edge: (loop, direction as walked).
  std::vector<std::vector<std::pair<int, int>>> occ(static_cast<std::size_t>(m.num_edges()));
  for (int l = 0; l < static_cast<int>(loops.size()); ++l)
    for (const auto& [e, d] : loops[l].half_edges) occ[e].emplace_back(l, d);
  for (int e = 0; e < m.num_edges(); ++e) {
    if (occ[e].size() != 2) {
      throw Error(ErrorCode::InvalidArgument, "edge " + std::to_string(e) + " is not shared by exactly two loops");
    }
  }

  // Orient loops so that each edge is traversed once in each direction.
  std::vector<int> flip(loops.size(), -1);
  for (int root = 0; root < static_cast<int>(loops.size()); ++root) {
    if (flip[root] != -1) continue;
    flip[root] = 0;
    std::deque<int> queue{root};
    while (!queue.empty()) {
      const int l = queue.front();
      queue.pop_front();
      for (const auto& [e, d] : loops[l].half_edges) {
        for (const auto& [other, od] : occ[e]) {
          if (other == l && od == d) continue;
          const int want = (d ^ flip[l] ^ 1) ^ od;
          if (flip[other] == -1) {
            flip[other] = want;
            queue.push_back(other);
          } else if (flip[other] != want) {
            throw Error(ErrorCode::InvalidArgument, "face loops cannot be oriented consistently");
          }
        }
      }
    }
  }

  EvSequence seq;
  for (int f = 0; f < m.num_faces(); ++f) {
    std::vector<std::vector<int>> tokens;
    for (int l : face_loop_ids[f]) {
      std::vector<int> t;
      const auto& hes = loops[l].half_edges;
      if (flip[l]) {
        for (auto it = hes.rbegin(); it != hes.rend(); ++it) t.push_back(half_edge_token(it->first, it->second ^ 1));
      } else {
        for (const auto& [e, d] : hes) t.push_back(half_edge_token(e, d));
      }
      std::rotate(t.begin(), std::min_element(t.begin(), t.end()), t.end());
      tokens.push_back(std::move(t));
    }
    std::sort(tokens.begin(), tokens.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    for (const auto& t : tokens) {
      seq.tokens.insert(seq.tokens.end(), t.begin(), t.end());
      seq.tokens.push_back(kTokenLoop);
    }
    seq.tokens.push_back(kTokenFace);
  }
  seq.tokens.push_back(kTokenEnd);
  return seq;
}

namespace {

[[noreturn]] void malformed(const std::string& why, std::size_t pos) {
  throw Error(ErrorCode::MalformedSequence, why + " at token " + std::to_string(pos));
}

}  // namespace

EdgeVertexTable decode_ev_sequence(const EvSequence& seq, const EdgeFaceTable& ef) {
  const int n_e = static_cast<int>(ef.rows.size());
  int n_f = 0;
  for (const auto& r : ef.rows) n_f = std::max({n_f, r[0] + 1, r[1] + 1});
  std::vector<int> face_degree(static_cast<std::size_t>(n_f), 0);
  for (const auto& r : ef.rows) {
    ++face_degree[r[0]];
    if (r[1] != r[0]) ++face_degree[r[1]];
  }

  UnionFind uf(2 * n_e);
  std::vector<bool> seen(static_cast<std::size_t>(2 * n_e), false);
  std::vector<int> used_in_face(static_cast<std::size_t>(n_e), -1);
  std::vector<int> chain;
  int face = 0, loops_in_face = 0, edges_in_face = 0;
  bool ended = false;

  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const int t = seq.tokens[i];
    if (ended) malformed("token after end", i);
    if (is_half_edge_token(t)) {
      const int e = t / 2;
      if (e >= n_e) malformed("half-edge of unknown edge " + std::to_string(e), i);
      if (face >= n_f) malformed("half-edge after the last face", i);
      if (seen[t]) malformed("half-edge " + std::to_string(t) + " repeated", i);
      if (ef.rows[e][0] != face && ef.rows[e][1] != face) {
        malformed("edge " + std::to_string(e) + " does not bound face " + std::to_string(face), i);
      }
      if (used_in_face[e] == face) malformed("edge " + std::to_string(e) + " used twice in one face", i);
      seen[t] = true;
      used_in_face[e] = face;
      ++edges_in_face;
      chain.push_back(t);
    } else if (t == kTokenLoop) {
      if (chain.empty()) malformed("empty loop", i);
      for (std::size_t k = 0; k < chain.size(); ++k) {
        uf.unite(ev_head_slot(chain[k]), ev_tail_slot(chain[(k + 1) % chain.size()]));
      }
      chain.clear();
      ++loops_in_face;
    } else if (t == kTokenFace) {
      if (!chain.empty()) malformed("face closed inside an open loop", i);
      if (face >= n_f) malformed("more faces than the face table", i);
      if (loops_in_face == 0) malformed("face without loops", i);
      if (edges_in_face != face_degree[face]) malformed("face " + std::to_string(face) + " is missing edges", i);
      ++face;
      loops_in_face = edges_in_face = 0;
    } else if (t == kTokenEnd) {
      if (!chain.empty() || loops_in_face != 0) malformed("end inside an open face", i);
      if (face != n_f) malformed("end before all faces", i);
      ended = true;
    } else {
      malformed("unknown token " + std::to_string(t), i);
    }
  }
  if (!ended) malformed("missing end token", seq.tokens.size());
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    malformed("not every half-edge appears", seq.tokens.size());
  }

  std::vector<int> class_of(static_cast<std::size_t>(2 * n_e), -1);
  int next = 0;
  EdgeVertexTable ev;
  for (int e = 0; e < n_e; ++e) {
    int ids[2];
    for (int s = 0; s < 2; ++s) {
      const int root = uf.find(2 * e + s);
      if (class_of[root] < 0) class_of[root] = next++;
      ids[s] = class_of[root];
    }
    if (ids[0] == ids[1]) throw Error(ErrorCode::SelfLoopVertex, "edge " + std::to_string(e) + " closes on itself");
    ev.rows.push_back(sorted_pair(ids[0], ids[1]));
  }
  return ev;
}

int vertex_count(const EdgeVertexTable& ev) {
  int n = 0;
  for (const auto& r : ev.rows) n = std::max({n, r[0] + 1, r[1] + 1});
  return n;
}

int count_loops(const EvSequence& seq) {
  return static_cast<int>(std::count(seq.tokens.begin(), seq.tokens.end(), kTokenLoop));
}

}  // namespace hbrep
