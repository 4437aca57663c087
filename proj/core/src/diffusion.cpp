#include "hbrep/diffusion.hpp"

#include <cmath>

#include "hbrep/error.hpp"

namespace hbrep {

using nn::Mat;
using nn::Tensor;

double NoiseSchedule::posterior_variance(int t) const {
  if (t <= 1) return 0.0;
  return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
}

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw Error(ErrorCode::InvalidRange, "schedule needs at least one step");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0)) {
    throw Error(ErrorCode::InvalidRange, "betas must satisfy 0 < beta_min < beta_max < 1");
  }
  NoiseSchedule s;
  s.T = T;
  double abar = 1.0;
  for (int i = 0; i < T; ++i) {
    const double b = T == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / (T - 1);
    abar *= 1.0 - b;
    s.betas.push_back(b);
    s.alpha_bars.push_back(abar);
  }
  return s;
}

Mat q_sample(const Mat& x0, const Mat& eps, int t, const NoiseSchedule& s) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw Error(ErrorCode::ShapeMismatch, "x0 and eps differ in shape");
  if (t < 1 || t > s.T) throw Error(ErrorCode::InvalidRange, "timestep outside 1..T");
  const double ab = s.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

std::string_view to_string(GeometryKind k) {
  switch (k) {
    case GeometryKind::Box: return "box";
    case GeometryKind::Edge: return "edge";
    case GeometryKind::Face: return "face";
    case GeometryKind::Vertex: return "vertex";
  }
  return "box";
}

int target_width(GeometryKind k) {
  switch (k) {
    case GeometryKind::Box: return 6;
    case GeometryKind::Edge: return 12;
    case GeometryKind::Face: return 48;
    case GeometryKind::Vertex: return 3;
  }
  return 0;
}

DiffusionModel::DiffusionModel(const DiffusionConfig& c, std::mt19937_64& rng) : cfg(c) {
  cfg.net.causal = false;
  const int d = cfg.net.d_model;
  switch (cfg.kind) {
    case GeometryKind::Box: box_cond = BoxConditioner(d, cfg.max_faces, rng); break;
    case GeometryKind::Edge: edge_cond = EdgeConditioner(d, rng); break;
    case GeometryKind::Face: face_cond = FaceConditioner(d, rng); break;
    case GeometryKind::Vertex: vertex_cond = VertexConditioner(d, rng); break;
  }
  in_proj = nn::Linear(width(), d, rng);
  time_mlp = nn::Mlp(d, d, d, rng);
  net = nn::Transformer(cfg.net, false, rng);
  out_proj = nn::Linear(d, width(), rng, true, true);
}

ConditioningEmbedding DiffusionModel::condition(const ConditionInput& in) const {
  switch (cfg.kind) {
    case GeometryKind::Box: return box_cond.embed(in.ef, in.n_f);
    case GeometryKind::Edge: return edge_cond.embed(in.ef, in.n_f, in.boxes);
    case GeometryKind::Face: return face_cond.embed(in.inc, in.edges, in.boxes);
    case GeometryKind::Vertex: return vertex_cond.embed(in.inc, in.boxes, in.faces);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown geometry kind");
}

Tensor DiffusionModel::denoise(const Tensor& x_t, const Tensor& cond, int t, const nn::Context& ctx) const {
  if (x_t.cols() != width() || cond.rows() != x_t.rows() || cond.cols() != cfg.net.d_model) {
    throw Error(ErrorCode::ShapeMismatch, "denoiser input is " + std::to_string(x_t.rows()) + "x" +
                                              std::to_string(x_t.cols()) + " with " + std::to_string(cond.rows()) +
                                              " conditioning rows");
  }
  const double pos[] = {static_cast<double>(t)};
  const Tensor temb = time_mlp.forward(Tensor(nn::sinusoidal_encoding(pos, cfg.net.d_model)));
  const Tensor h = nn::add(nn::add(in_proj.forward(x_t), cond), temb);
  return out_proj.forward(net.forward(ctx.drop(h), nullptr, ctx));
}

void DiffusionModel::collect(const std::string& prefix, nn::ParamList& out) const {
  switch (cfg.kind) {
    case GeometryKind::Box: box_cond.collect(prefix + "cond.", out); break;
    case GeometryKind::Edge: edge_cond.collect(prefix + "cond.", out); break;
    case GeometryKind::Face: face_cond.collect(prefix + "cond.", out); break;
    case GeometryKind::Vertex: vertex_cond.collect(prefix + "cond.", out); break;
  }
  in_proj.collect(prefix + "in_proj.", out);
  time_mlp.collect(prefix + "time_mlp.", out);
  net.collect(prefix + "net.", out);
  out_proj.collect(prefix + "out_proj.", out);
}

Tensor diffusion_loss(const Denoiser& f, const Mat& x0, const std::vector<bool>& valid, const NoiseSchedule& s,
                      std::mt19937_64& rng) {
  if (static_cast<Eigen::Index>(valid.size()) != x0.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "one validity flag per row required");
  }
  const int t = std::uniform_int_distribution<int>(1, s.T)(rng);
  std::normal_distribution<double> normal;
  Mat eps(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
  const Tensor pred = f(Tensor(q_sample(x0, eps, t, s)), t);
  if (pred.rows() != x0.rows() || pred.cols() != x0.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "denoiser output does not match the target shape");
  }
  int n_valid = 0;
  for (bool v : valid) n_valid += v ? 1 : 0;
  Mat weights(x0.rows(), 1);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) weights(i, 0) = valid[i] && n_valid > 0 ? 1.0 / n_valid : 0.0;
  const Tensor per_row = nn::sum_cols(nn::square(nn::sub(pred, Tensor(eps))));
  return nn::sum(nn::mul(per_row, Tensor(weights)));
}

Tensor diffusion_loss(const DiffusionModel& model, const Mat& x0, const Tensor& cond, const std::vector<bool>& valid,
                      const NoiseSchedule& s, const nn::Context& ctx, std::mt19937_64& rng) {
  if (x0.cols() != model.width()) throw Error(ErrorCode::ShapeMismatch, "target width does not match the model");
  return diffusion_loss([&](const Tensor& x, int t) { return model.denoise(x, cond, t, ctx); }, x0, valid, s, rng);
}

Mat diffusion_sample(const Denoiser& f, int n, int width, const NoiseSchedule& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Mat x(n, width);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  for (int t = s.T; t >= 1; --t) {
    const Mat eps = f(Tensor(x), t).value();
    const double ab = s.alpha_bar(t);
    const Mat x0 = ((x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab)).cwiseMax(-kSampleClamp).cwiseMin(kSampleClamp);
    if (t == 1) {
      x = x0;
      break;
    }
    const double ab_prev = s.alpha_bar(t - 1);
    const double b = s.beta(t);
    const double c0 = std::sqrt(ab_prev) * b / (1.0 - ab);
    const double ct = std::sqrt(1.0 - b) * (1.0 - ab_prev) / (1.0 - ab);
    const double sigma = std::sqrt(s.posterior_variance(t));
    Mat noise(n, width);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
    x = c0 * x0 + ct * x + sigma * noise;
  }
  return x.cwiseMax(-kSampleClamp).cwiseMin(kSampleClamp);
}

Mat diffusion_sample(const DiffusionModel& model, const Tensor& cond, const NoiseSchedule& s, std::uint64_t seed) {
  const nn::Context ctx;
  return diffusion_sample([&](const Tensor& x, int t) { return model.denoise(x, cond, t, ctx); }, cond.rows(),
                          model.width(), s, seed);
}

}  // namespace hbrep
