#include "hbrep/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <deque>
#include <thread>

#include <Eigen/Dense>

#include "hbrep/conditioning.hpp"
#include "hbrep/geom.hpp"

namespace hbrep {

using nn::Mat;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::FaceTopology: return "face_topology";
    case Stage::EdgeGeometry: return "edge_geometry";
    case Stage::VertexTopology: return "vertex_topology";
    case Stage::SurfaceGeometry: return "surface_geometry";
    case Stage::Assembly: return "assembly";
  }
  return "unknown";
}

StageFailed::StageFailed(Stage stage, const Error& cause, GenerationTrace trace)
    : Error(ErrorCode::StageFailed, std::string(to_string(stage)) + ": " + cause.what()),
      stage_(stage),
      cause_(cause.code()),
      trace_(std::move(trace)) {}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed ^ splitmix64(stream)); }

std::string join_tokens(const std::vector<int>& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(t[i]);
  }
  return s;
}

/// Empty when the matrix can seed the later stages.
std::string fef_problem(const FefMatrix& f, int max_faces) {
  if (f.n < 2) return "fewer than two faces";
  if (f.n > max_faces) return "more faces than the model limit";
  if (f.upper_sum() > kMaxEdgeTokens) return "more edges than the token alphabet";
  for (int i = 0; i < f.n; ++i)
    if (f.row_sum(i) < 2) return "face " + std::to_string(i) + " has fewer than two edges";
  std::vector<bool> seen(static_cast<std::size_t>(f.n), false);
  std::deque<int> queue{0};
  seen[0] = true;
  int reached = 1;
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    for (int j = 0; j < f.n; ++j) {
      if (!seen[j] && f.at(i, j) > 0) {
        seen[j] = true;
        ++reached;
        queue.push_back(j);
      }
    }
  }
  if (reached != f.n) return "face adjacency graph is disconnected";
  return {};
}

}  // namespace

std::string GenerationTrace::to_text(bool timings) const {
  std::string out = "sample seed=" + std::to_string(seed) + "\n";
  char buf[64];
  for (const auto& s : stages) {
    out += "stage " + std::string(to_string(s.stage)) + " retries=" + std::to_string(s.retries);
    if (timings) {
      std::snprintf(buf, sizeof buf, " seconds=%.4f", s.seconds);
      out += buf;
    }
    out += " inputs=";
    for (std::size_t i = 0; i < s.inputs.size(); ++i) out += (i ? "," : "") + s.inputs[i];
    out += "\n";
  }
  if (ef_seq) out += "ef_seq " + join_tokens(ef_seq->tokens) + "\n";
  if (fef) out += "faces " + std::to_string(fef->n) + " edges " + std::to_string(fef->upper_sum()) + "\n";
  if (ev_seq) out += "ev_seq " + join_tokens(ev_seq->tokens) + "\n";
  if (ev) out += "vertices " + std::to_string(vertex_count(*ev)) + "\n";
  if (validity) {
    out += std::string("validity ") + (validity->is_valid ? "valid" : "invalid");
    for (const auto& v : validity->violations) out += std::string(" ") + hbrep::to_string(v.code) + "@" + std::to_string(v.entity);
    out += "\n";
    for (const auto& w : validity->warnings) out += "warning " + w + "\n";
  }
  return out;
}

BrepModel assemble(const EdgeFaceTable& ef, const EdgeVertexTable& ev, const Mat& boxes, const Mat& edges,
                   const Mat& faces, const Mat& vertices) {
  BrepModel m;
  m.ef = ef;
  m.ev = ev;
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) m.vertices.push_back(vertices.row(i).transpose());
  for (Eigen::Index i = 0; i < edges.rows(); ++i) {
    m.edges.push_back(EdgeCurve::from_flat(std::span<const double>(edges.row(i).data(), 12)));
  }
  for (Eigen::Index i = 0; i < faces.rows(); ++i) {
    m.faces.push_back(FaceSurface::from_flat(std::span<const double>(faces.row(i).data(), 48)));
  }
  for (Eigen::Index i = 0; i < boxes.rows(); ++i) {
    m.boxes.push_back(Aabb::from_flat(std::span<const double>(boxes.row(i).data(), 6)));
  }
  return m;
}

BrepModel snap_endpoints(const BrepModel& m) {
  BrepModel out = m;
  for (std::size_t e = 0; e < out.edges.size(); ++e) {
    auto& cp = out.edges[e].control_points;
    const Vec3& a = out.vertices[static_cast<std::size_t>(out.ev.rows[e][0])];
    const Vec3& b = out.vertices[static_cast<std::size_t>(out.ev.rows[e][1])];
    const bool forward = (cp[0] - a).norm() + (cp[3] - b).norm() <= (cp[0] - b).norm() + (cp[3] - a).norm();
    cp[0] = forward ? a : b;
    cp[3] = forward ? b : a;
  }
  return out;
}

BrepModel postprocess_model(const BrepModel& m, const PipelineConfig& cfg) {
  BrepModel out = m;
  const int n_f = m.num_faces();
  const auto inc = derive_incidence(m.ef, m.ev, n_f, m.num_vertices());
  std::vector<geom::FaceFit> fits(static_cast<std::size_t>(n_f));
  for (int f = 0; f < n_f; ++f) {
    std::vector<Vec3> boundary;
    for (int e : inc.fe[f]) {
      const auto pts = geom::curve_points(m.edges[e], 8);
      boundary.insert(boundary.end(), pts.begin(), pts.end());
    }
    fits[f] = geom::postprocess_face(m.faces[f], boundary, geom::surface_grid(m.faces[f], 6), cfg.plane_threshold);
    out.faces[f] = fits[f].surface;
  }
  const auto is_plane = [&](int f) { return fits[f].kind == geom::FaceKind::Plane; };

  if (cfg.snap) {
    // Move each vertex onto the common point of its incident planes.
    for (int v = 0; v < out.num_vertices(); ++v) {
      std::vector<int> planes;
      for (int f : inc.vf[v])
        if (is_plane(f)) planes.push_back(f);
      if (planes.empty()) continue;
      Eigen::MatrixXd n(static_cast<Eigen::Index>(planes.size()), 3);
      Eigen::VectorXd r(static_cast<Eigen::Index>(planes.size()));
      for (std::size_t i = 0; i < planes.size(); ++i) {
        const auto& p = fits[planes[i]].plane;
        n.row(static_cast<Eigen::Index>(i)) = p.normal.transpose();
        r(static_cast<Eigen::Index>(i)) = p.normal.dot(p.origin - out.vertices[v]);
      }
      const Vec3 shift = n.completeOrthogonalDecomposition().solve(r);
      if (shift.allFinite() && shift.norm() <= cfg.sew_max_shift) out.vertices[v] += shift;
    }
    // Edges between two planes become straight lines.
    for (int e = 0; e < out.num_edges(); ++e) {
      if (is_plane(m.ef.rows[e][0]) && is_plane(m.ef.rows[e][1])) {
        out.edges[e] = EdgeCurve::line(out.vertices[m.ev.rows[e][0]], out.vertices[m.ev.rows[e][1]]);
      }
    }
    out = snap_endpoints(out);
    // Refit each plane to its final boundary.
    for (int f = 0; f < n_f; ++f) {
      if (!is_plane(f)) continue;
      std::vector<Vec3> boundary;
      for (int e : inc.fe[f]) {
        const auto pts = geom::curve_points(out.edges[e], 8);
        boundary.insert(boundary.end(), pts.begin(), pts.end());
      }
      try {
        out.faces[f] = geom::plane_patch(geom::fit_plane(boundary), boundary);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::RankDeficient) throw;
      }
    }
  }
  for (int f = 0; f < n_f; ++f) out.boxes[f] = geom::compute_bbox(out.faces[f]);
  return out;
}

GenerationResult generate(const ModelSet& models, const PipelineConfig& cfg, std::uint64_t seed) {
  GenerationTrace tr;
  tr.seed = seed;
  using Clock = std::chrono::steady_clock;

  auto run = [&](Stage stage, std::vector<std::string> inputs, auto&& body) {
    StageRecord rec{stage, 0.0, 0, std::move(inputs)};
    const auto start = Clock::now();
    auto finish = [&] {
      rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
      tr.stages.push_back(rec);
    };
    try {
      body(rec);
    } catch (const Error& e) {
      finish();
      throw StageFailed(stage, e, tr);
    } catch (const std::exception& e) {
      finish();
      throw StageFailed(stage, Error(ErrorCode::InvalidArgument, e.what()), tr);
    }
    finish();
  };

  ConditionInput cond;
  run(Stage::FaceTopology, {"ef_vae"}, [&](StageRecord& rec) {
    std::string problem = "no sample";
    for (int attempt = 0; attempt <= cfg.max_restarts; ++attempt) {
      const auto s = vae_sample(models.ef_vae, stage_seed(seed, 1000 + attempt),
                                VaeSampleOptions{cfg.vae_temperature, cfg.max_restarts});
      rec.retries += s.retries + (attempt > 0 ? 1 : 0);
      const auto [fef, perm] = canonicalize_faces(unflatten_fef(s.seq));
      problem = fef_problem(fef, models.ef_vae.cfg.max_faces);
      if (problem.empty()) {
        tr.ef_seq = flatten_fef(fef);
        tr.fef = fef;
        tr.ef = fef_to_edges(fef);
        return;
      }
    }
    throw Error(ErrorCode::SamplingExhausted, "no usable face adjacency: " + problem);
  });

  run(Stage::EdgeGeometry, {"ef"}, [&](StageRecord&) {
    cond = make_condition_input(*tr.ef, tr.fef->n);
    tr.boxes = diffusion_sample(models.p_box, models.p_box.condition(cond).rows, models.schedule, stage_seed(seed, 2));
    cond.boxes = *tr.boxes;
    tr.edges = diffusion_sample(models.p_edge, models.p_edge.condition(cond).rows, models.schedule, stage_seed(seed, 3));
    cond.edges = *tr.edges;
  });

  run(Stage::VertexTopology, {"ef", "boxes", "edges"}, [&](StageRecord& rec) {
    const EvInput in{*tr.ef, tr.fef->n, *tr.boxes, *tr.edges};
    for (int attempt = 0;; ++attempt) {
      const auto s = ev_sample(models.ev_decoder, in, stage_seed(seed, 4000 + attempt),
                               EvSampleOptions{cfg.ev_temperature, cfg.max_restarts});
      rec.retries += s.restarts;
      try {
        tr.ev = decode_ev_sequence(s.seq, *tr.ef);
        tr.ev_seq = s.seq;
        return;
      } catch (const Error&) {
        if (attempt >= cfg.max_restarts) throw;
        ++rec.retries;
      }
    }
  });

  run(Stage::SurfaceGeometry, {"ef", "ev", "boxes", "edges"}, [&](StageRecord&) {
    const int n_v = vertex_count(*tr.ev);
    cond = make_condition_input(*tr.ef, tr.fef->n, &*tr.ev, n_v);
    cond.boxes = *tr.boxes;
    cond.edges = *tr.edges;
    tr.faces = diffusion_sample(models.p_face, models.p_face.condition(cond).rows, models.schedule, stage_seed(seed, 5));
    cond.faces = *tr.faces;
    tr.vertices =
        diffusion_sample(models.p_vertex, models.p_vertex.condition(cond).rows, models.schedule, stage_seed(seed, 6));
  });

  GenerationResult result;
  run(Stage::Assembly, {"ef", "ev", "boxes", "edges", "faces", "vertices"}, [&](StageRecord&) {
    BrepModel m = assemble(*tr.ef, *tr.ev, *tr.boxes, *tr.edges, *tr.faces, *tr.vertices);
    m = postprocess_model(m, cfg);
    quantize_to_float(m);
    m.check_structure();
    tr.validity = check_validity(m, cfg.validity_tol);
    result.model = std::move(m);
  });
  result.trace = std::move(tr);
  return result;
}

std::uint64_t item_seed(std::uint64_t batch_seed, int index) {
  return splitmix64(batch_seed + 0x632BE59BD9B4E019ull * static_cast<std::uint64_t>(index + 1));
}

std::vector<GenerationResult> generate_batch(const ModelSet& models, const PipelineConfig& cfg, int n,
                                             std::uint64_t seed, int workers) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be at least 1");
  std::vector<GenerationResult> results(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      const std::uint64_t s = item_seed(seed, i);
      try {
        results[i] = generate(models, cfg, s);
      } catch (const StageFailed& e) {
        results[i].trace = e.trace();
        results[i].failed_stage = e.stage();
        results[i].error = e.what();
      }
    }
  };
  const int threads = std::clamp(workers, 1, n);
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return results;
}

}  // namespace hbrep
