#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "hbrep/brep.hpp"
#include "hbrep/builders.hpp"
#include "hbrep/tensor.hpp"

namespace hbrep::support {

/// Result of comparing tape gradients with central finite differences.
struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  int checked = 0;
  std::string worst;  // name of the tensor with the largest error
};

struct GradInput {
  std::string name;
  nn::Tensor tensor;
};

inline constexpr double kZeroGradient = 1e-7;

/// Checks d loss / d inputs for a scalar loss built by `f`. At most
/// `max_entries` randomly chosen entries per tensor are perturbed.
inline GradCheck check_gradients(const std::function<nn::Tensor()>& f, const std::vector<GradInput>& inputs,
                                 std::uint64_t seed = 1, int max_entries = 24, double h = 1e-5) {
  for (const auto& in : inputs) in.tensor.node()->grad.resize(0, 0);
  {
    nn::Tape tape;
    nn::TapeScope scope(tape);
    tape.backward(f());
  }
  std::mt19937_64 rng(seed);
  GradCheck out;
  double worst_err = -1.0;
  for (const auto& in : inputs) {
    nn::Tensor t = in.tensor;
    const nn::Mat analytic = t.grad();
    const long n = t.numel();
    std::vector<long> idx(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    if (static_cast<long>(idx.size()) > max_entries) idx.resize(static_cast<std::size_t>(max_entries));
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (long i : idx) {
      double& x = t.mutable_value().data()[i];
      const double x0 = x;
      x = x0 + h;
      const double fp = f().item();
      x = x0 - h;
      const double fm = f().item();
      x = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.data()[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++out.checked;
    }
    // Gradients that vanish by symmetry (a key bias under softmax) are
    // compared in absolute terms; finite differences only see roundoff there.
    const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
    const double err = scale < kZeroGradient ? std::sqrt(diff2) : std::sqrt(diff2) / scale;
    if (err > worst_err) {
      worst_err = err;
      out.worst = in.name;
    }
    out.rel_error = std::max(out.rel_error, err);
  }
  return out;
}

inline nn::Mat random_mat(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  nn::Mat m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

inline nn::Tensor random_leaf(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  return nn::Tensor(random_mat(rows, cols, rng, scale), true);
}

/// sum(out * weights) with fixed random weights, so every output entry matters.
inline nn::Tensor weighted_sum(const nn::Tensor& out, const nn::Mat& weights) {
  return nn::sum(nn::mul(out, nn::Tensor(weights)));
}

/// O(n m) squared Chamfer distance: mean over a of min over b plus the reverse.
inline double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double s = 0.0;
    for (const Vec3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to) best = std::min(best, (p - q).squaredNorm());
      s += best;
    }
    return s / static_cast<double>(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

inline std::vector<Vec3> random_cloud(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.emplace_back(u(rng), u(rng), u(rng));
  return out;
}

/// Valid, or flagged only because a face joins two wireframe components
/// (solids with through-holes such as the square frame).
inline bool valid_up_to_wireframe(const ValidityReport& r) {
  return std::all_of(r.violations.begin(), r.violations.end(),
                     [](const Violation& v) { return v.code == ViolationCode::DisconnectedWireframe; });
}

/// Random solids from every fixture family, normalized. All are valid except
/// that frames carry DisconnectedWireframe.
inline BrepModel random_fixture(std::mt19937_64& rng) {
  BrepModel m;
  switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
    case 0: m = random_cuboid(rng); break;
    case 1: m = random_prism(rng, std::uniform_int_distribution<int>(3, 8)(rng)); break;
    case 2: m = random_l_bracket(rng); break;
    case 3: m = make_square_frame(2.0, std::uniform_real_distribution<double>(0.4, 1.4)(rng), 0.5); break;
    default: m = make_quad_torus(std::uniform_int_distribution<int>(3, 6)(rng), std::uniform_int_distribution<int>(3, 6)(rng)); break;
  }
  normalize_to_unit_cube(m);
  return shuffle_model(m, rng);
}

}  // namespace hbrep::support
