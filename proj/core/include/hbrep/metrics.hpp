#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hbrep/brep.hpp"

namespace hbrep {

using PointCloud = std::vector<Vec3>;

/// Symmetric squared Chamfer distances, out(i, j) = CD(a[i], b[j]).
Eigen::MatrixXd chamfer_matrix(const std::vector<PointCloud>& a, const std::vector<PointCloud>& b);

/// Mean over ref of the smallest CD to any generated cloud. Throws EmptySet.
double mmd_cd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref);
/// Fraction of ref clouds that are the nearest reference of at least one
/// generated cloud (ties go to the lower index). Throws EmptySet.
double cov_cd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref);

inline constexpr int kDefaultJsdGrid = 28;

/// Jensen-Shannon divergence (nats) between the grid_n^3 occupancy
/// histograms of all points of each set over [-1, 1]^3; outside points go to
/// boundary cells. Throws EmptySet.
double jsd_grid(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int grid_n = kDefaultJsdGrid);

/// Cycle rank E - V + C of the vertex-edge multigraph.
int cyclomatic_complexity(const BrepModel& m);

/// Mean |H| over an n x n parametric grid of every face; degenerate samples
/// are skipped. Sets *all_degenerate and returns 0 when nothing was usable.
double mean_curvature_metric(const BrepModel& m, int samples_per_face = 8, bool* all_degenerate = nullptr);

/// Boundary loops summed over faces; nullopt when a face boundary does not close.
std::optional<int> boundary_loops_metric(const BrepModel& m);

struct CadFractions {
  double valid = 0.0;
  double unique = 0.0;
  double novel = 0.0;
};

/// valid: share passing check_validity; unique: share whose digest occurs
/// once in gen; novel: share whose digest is not a training digest.
CadFractions valid_unique_novel(const std::vector<BrepModel>& gen, const std::set<Digest>& train_digests,
                                double tol = kDefaultValidityTol, int precision = kDefaultHashPrecision);

struct MetricReport {
  double mmd_cd = 0.0;
  double cov_cd = 0.0;
  double jsd = 0.0;
  double valid = 0.0;
  double unique = 0.0;
  double novel = 0.0;
  double cc = 0.0;
  double mc = 0.0;
  double loops = 0.0;
  int n_gen = 0;
  int n_ref = 0;

  /// One "key: value" line per field.
  std::string to_text() const;
  std::string to_json() const;
};

struct MetricOptions {
  int points = 2000;
  int grid = kDefaultJsdGrid;
  int curvature_samples = 8;
  double tol = kDefaultValidityTol;
  std::uint64_t seed = 0;
};

/// Full report. `attempted` counts generation attempts including failures
/// (they count as invalid); it defaults to gen.size().
MetricReport evaluate(const std::vector<BrepModel>& gen, const std::vector<BrepModel>& ref,
                      const std::set<Digest>& train_digests, const MetricOptions& opt = {}, int attempted = -1);

}  // namespace hbrep
