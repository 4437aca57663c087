#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>
#include <vector>

#include "hbrep/conditioning.hpp"
#include "hbrep/nn.hpp"

namespace hbrep {

/// Linear-beta DDPM tables; index t = 1..T maps to entry t - 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
  double alpha_bar(int t) const { return alpha_bars[static_cast<std::size_t>(t - 1)]; }
  /// Posterior variance (1 - abar_{t-1}) / (1 - abar_t) * beta_t, zero at t = 1.
  double posterior_variance(int t) const;
};

inline constexpr int kDefaultTimesteps = 500;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.02;
inline constexpr double kSampleClamp = 1.2;

/// Throws InvalidRange unless 0 < beta_min < beta_max < 1 and T >= 1.
/// T = 1 uses beta_min alone.
NoiseSchedule make_schedule(int T = kDefaultTimesteps, double beta_min = kDefaultBetaMin,
                            double beta_max = kDefaultBetaMax);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
nn::Mat q_sample(const nn::Mat& x0, const nn::Mat& eps, int t, const NoiseSchedule& s);

enum class GeometryKind { Box, Edge, Face, Vertex };

std::string_view to_string(GeometryKind k);
int target_width(GeometryKind k);

struct DiffusionConfig {
  GeometryKind kind = GeometryKind::Box;
  nn::TransformerConfig net;
  int max_faces = 50;
};

/// Noise predictor over per-entity tokens: projected noisy value plus the
/// entity's conditioning row plus a timestep embedding, through a
/// non-causal transformer. Owns the conditioner of its entity kind.
class DiffusionModel : public nn::Module {
 public:
  DiffusionModel() = default;
  DiffusionModel(const DiffusionConfig& cfg, std::mt19937_64& rng);

  /// Conditioning rows for this model's entity kind.
  ConditioningEmbedding condition(const ConditionInput& in) const;
  nn::Tensor denoise(const nn::Tensor& x_t, const nn::Tensor& cond, int t, const nn::Context& ctx) const;
  int width() const { return target_width(cfg.kind); }
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  DiffusionConfig cfg;
  BoxConditioner box_cond;
  EdgeConditioner edge_cond;
  FaceConditioner face_cond;
  VertexConditioner vertex_cond;
  nn::Linear in_proj, out_proj;
  nn::Mlp time_mlp;
  nn::Transformer net;
};

/// eps prediction for a noisy batch at timestep t.
using Denoiser = std::function<nn::Tensor(const nn::Tensor& x_t, int t)>;

/// One draw of t ~ U{1..T} and eps ~ N(0, I); mean over valid rows of the
/// squared error summed across columns. All-invalid gives exactly 0.
/// Throws ShapeMismatch.
nn::Tensor diffusion_loss(const Denoiser& f, const nn::Mat& x0, const std::vector<bool>& valid,
                          const NoiseSchedule& s, std::mt19937_64& rng);
nn::Tensor diffusion_loss(const DiffusionModel& model, const nn::Mat& x0, const nn::Tensor& cond,
                          const std::vector<bool>& valid, const NoiseSchedule& s, const nn::Context& ctx,
                          std::mt19937_64& rng);

/// Ancestral sampling from x_T ~ N(0, I). Each step forms the posterior mean
/// from the predicted x0 (clamped to +-kSampleClamp) and adds posterior
/// noise; the result is clamped to +-kSampleClamp.
nn::Mat diffusion_sample(const Denoiser& f, int n, int width, const NoiseSchedule& s, std::uint64_t seed);
nn::Mat diffusion_sample(const DiffusionModel& model, const nn::Tensor& cond, const NoiseSchedule& s,
                         std::uint64_t seed);

}  // namespace hbrep
