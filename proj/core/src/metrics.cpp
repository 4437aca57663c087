#include "hbrep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include <json.hpp>

#include "hbrep/error.hpp"
#include "hbrep/geom.hpp"
#include "hbrep/topo_codec.hpp"
#include "hbrep/union_find.hpp"

namespace hbrep {

namespace {

void require_nonempty(const std::vector<PointCloud>& s, const char* what) {
  if (s.empty()) throw Error(ErrorCode::EmptySet, std::string(what) + " set is empty");
  for (const auto& c : s)
    if (c.empty()) throw Error(ErrorCode::EmptySet, std::string(what) + " set holds an empty cloud");
}

double mean_nearest(const PointCloud& from, const geom::PointIndex& to) {
  double s = 0.0;
  for (const Vec3& p : from) s += to.nearest_sq(p);
  return s / static_cast<double>(from.size());
}

}  // namespace

Eigen::MatrixXd chamfer_matrix(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b) {
  std::vector<geom::PointIndex> ia, ib;
  ia.reserve(a.size());
  ib.reserve(b.size());
  for (const auto& c : a) ia.emplace_back(c);
  for (const auto& c : b) ib.emplace_back(c);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = mean_nearest(a[i], ib[j]) + mean_nearest(b[j], ia[i]);
  return out;
}

double mmd_cd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref) {
  require_nonempty(gen, "generated");
  require_nonempty(ref, "reference");
  const Eigen::MatrixXd d = chamfer_matrix(gen, ref);
  return d.colwise().minCoeff().mean();
}

double cov_cd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref) {
  require_nonempty(gen, "generated");
  require_nonempty(ref, "reference");
  const Eigen::MatrixXd d = chamfer_matrix(gen, ref);
  std::vector<bool> covered(ref.size(), false);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index best = 0;
    d.row(i).minCoeff(&best);
    covered[static_cast<std::size_t>(best)] = true;
  }
  return static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(ref.size());
}

double jsd_grid(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int grid_n) {
  require_nonempty(gen, "generated");
  require_nonempty(ref, "reference");
  if (grid_n < 1) throw Error(ErrorCode::InvalidArgument, "grid resolution must be positive");
  auto histogram = [&](const std::vector<PointCloud>& set) {
    std::map<long, double> h;
    double total = 0.0;
    for (const auto& cloud : set) {
      for (const Vec3& p : cloud) {
        long key = 0;
        for (int k = 0; k < 3; ++k) {
          const int cell = std::clamp(static_cast<int>(std::floor((p[k] + 1.0) * 0.5 * grid_n)), 0, grid_n - 1);
          key = key * grid_n + cell;
        }
        h[key] += 1.0;
        total += 1.0;
      }
    }
    for (auto& [k, v] : h) v /= total;
    return h;
  };
  const auto p = histogram(gen), q = histogram(ref);
  std::map<long, std::pair<double, double>> joint;
  for (const auto& [k, v] : p) joint[k].first = v;
  for (const auto& [k, v] : q) joint[k].second = v;
  double js = 0.0;
  for (const auto& [k, pq] : joint) {
    const double m = 0.5 * (pq.first + pq.second);
    if (pq.first > 0.0) js += 0.5 * pq.first * std::log(pq.first / m);
    if (pq.second > 0.0) js += 0.5 * pq.second * std::log(pq.second / m);
  }
  return std::clamp(js, 0.0, std::numbers::ln2);
}

int cyclomatic_complexity(const BrepModel& m) {
  const int n_v = m.num_vertices();
  UnionFind uf(n_v);
  int components = n_v;
  for (const auto& r : m.ev.rows)
    if (uf.unite(r[0], r[1])) --components;
  return static_cast<int>(m.ev.rows.size()) - n_v + components;
}

double mean_curvature_metric(const BrepModel& m, int samples_per_face, bool* all_degenerate) {
  double total = 0.0;
  long count = 0;
  const int n = std::max(1, samples_per_face);
  for (const auto& f : m.faces) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double u = (i + 0.5) / n, v = (j + 0.5) / n;
        try {
          const double h = geom::eval_surface(f, u, v).mean_curvature;
          if (!std::isfinite(h)) continue;
          total += std::abs(h);
          ++count;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateSurface) throw;
        }
      }
    }
  }
  if (all_degenerate) *all_degenerate = count == 0;
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::optional<int> boundary_loops_metric(const BrepModel& m) {
  int loops = 0;
  try {
    for (int f = 0; f < m.num_faces(); ++f) loops += static_cast<int>(face_loops(m, f).size());
  } catch (const Error&) {
    return std::nullopt;
  }
  return loops;
}

CadFractions valid_unique_novel(const std::vector<BrepModel>& gen, const std::set<Digest>& train_digests, double tol,
                                int precision) {
  CadFractions out;
  if (gen.empty()) return out;
  std::map<Digest, int> counts;
  std::vector<Digest> digests;
  int valid = 0;
  for (const auto& m : gen) {
    digests.push_back(hash_brep(m, precision));
    ++counts[digests.back()];
    if (check_validity(m, tol).is_valid) ++valid;
  }
  int unique = 0, novel = 0;
  for (Digest d : digests) {
    if (counts[d] == 1) ++unique;
    if (!train_digests.contains(d)) ++novel;
  }
  const double n = static_cast<double>(gen.size());
  return {valid / n, unique / n, novel / n};
}

std::string MetricReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "mmd_cd: %.6g\ncov_cd: %.6g\njsd: %.6g\nvalid: %.6g\nunique: %.6g\nnovel: %.6g\ncc: %.6g\nmc: %.6g\n"
                "loops: %.6g\nn_gen: %d\nn_ref: %d\n",
                mmd_cd, cov_cd, jsd, valid, unique, novel, cc, mc, loops, n_gen, n_ref);
  return buf;
}

std::string MetricReport::to_json() const {
  const nlohmann::ordered_json j = {{"mmd_cd", mmd_cd}, {"cov_cd", cov_cd}, {"jsd", jsd},     {"valid", valid},
                                    {"unique", unique}, {"novel", novel},   {"cc", cc},       {"mc", mc},
                                    {"loops", loops},   {"n_gen", n_gen},   {"n_ref", n_ref}};
  return j.dump(2) + "\n";
}

MetricReport evaluate(const std::vector<BrepModel>& gen, const std::vector<BrepModel>& ref,
                      const std::set<Digest>& train_digests, const MetricOptions& opt, int attempted) {
  MetricReport r;
  r.n_gen = attempted < 0 ? static_cast<int>(gen.size()) : attempted;
  r.n_ref = static_cast<int>(ref.size());
  if (gen.empty()) return r;

  const auto fr = valid_unique_novel(gen, train_digests, opt.tol);
  const double produced = static_cast<double>(gen.size());
  r.valid = r.n_gen > 0 ? fr.valid * produced / r.n_gen : 0.0;
  r.unique = fr.unique;
  r.novel = fr.novel;

  double cc = 0.0, mc = 0.0, loops = 0.0;
  int with_loops = 0;
  for (const auto& m : gen) {
    cc += cyclomatic_complexity(m);
    mc += mean_curvature_metric(m, opt.curvature_samples);
    if (const auto l = boundary_loops_metric(m)) {
      loops += *l;
      ++with_loops;
    }
  }
  r.cc = cc / produced;
  r.mc = mc / produced;
  r.loops = with_loops > 0 ? loops / with_loops : 0.0;

  if (!ref.empty()) {
    std::vector<PointCloud> g, q;
    for (std::size_t i = 0; i < gen.size(); ++i) {
      g.push_back(geom::sample_surface_points(gen[i], static_cast<std::size_t>(opt.points), opt.seed + i));
    }
    for (std::size_t i = 0; i < ref.size(); ++i) {
      q.push_back(geom::sample_surface_points(ref[i], static_cast<std::size_t>(opt.points), opt.seed + 1000003 + i));
    }
    const Eigen::MatrixXd d = chamfer_matrix(g, q);
    r.mmd_cd = d.colwise().minCoeff().mean();
    std::vector<bool> covered(q.size(), false);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      Eigen::Index best = 0;
      d.row(i).minCoeff(&best);
      covered[static_cast<std::size_t>(best)] = true;
    }
    r.cov_cd = static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(q.size());
    r.jsd = jsd_grid(g, q, opt.grid);
  }
  return r;
}

}  // namespace hbrep
