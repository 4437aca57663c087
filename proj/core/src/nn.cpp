#include "hbrep/nn.hpp"

#include <cmath>

#include "hbrep/error.hpp"

namespace hbrep::nn {

ParamList Module::parameters(const std::string& prefix) const {
  ParamList out;
  collect(prefix, out);
  return out;
}

Mat trunc_normal(int rows, int cols, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double z = n(rng);
    while (std::abs(z) > 2.0) z = n(rng);
    m.data()[i] = z * std;
  }
  return m;
}

Tensor make_param(Mat init) { return Tensor(std::move(init), true); }

Tensor Context::drop(const Tensor& x) const {
  if (!training || dropout <= 0.0 || rng == nullptr) return x;
  return nn::dropout(x, this->dropout, *rng);
}

Linear::Linear(int in_, int out_, std::mt19937_64& rng, bool use_bias, bool zero_init) : in(in_), out(out_) {
  weight = make_param(zero_init ? Mat(Mat::Zero(in, out)) : trunc_normal(in, out, kInitStd, rng));
  if (use_bias) bias = make_param(Mat::Zero(1, out));
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out_list) const {
  out_list.push_back({prefix + "weight", weight});
  if (bias.defined()) out_list.push_back({prefix + "bias", bias});
}

LayerNorm::LayerNorm(int d) : gamma(make_param(Mat::Ones(1, d))), beta(make_param(Mat::Zero(1, d))) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma, beta, 1e-5); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + "gamma", gamma});
  out.push_back({prefix + "beta", beta});
}

Mlp::Mlp(int in, int hidden, int out, std::mt19937_64& rng) : l1(in, hidden, rng), l2(hidden, out, rng) {}

Tensor Mlp::forward(const Tensor& x) const { return l2.forward(gelu(l1.forward(x))); }

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  l1.collect(prefix + "l1.", out);
  l2.collect(prefix + "l2.", out);
}

BoolMat causal_mask(int n) {
  BoolMat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = j <= i;
  return m;
}

MultiHeadAttention::MultiHeadAttention(int d, int heads, std::mt19937_64& rng)
    : d_model(d), n_heads(heads), wq(d, d, rng), wk(d, d, rng), wv(d, d, rng), wo(d, d, rng) {
  if (heads <= 0 || d % heads != 0) {
    throw Error(ErrorCode::InvalidArgument, "d_model must be divisible by the head count");
  }
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& kv, const BoolMat* allowed,
                                   std::vector<Mat>* weights) const {
  if (q.cols() != d_model || kv.cols() != d_model) {
    throw Error(ErrorCode::ShapeMismatch, "attention inputs must have d_model columns");
  }
  if (allowed && (allowed->rows() != q.rows() || allowed->cols() != kv.rows())) {
    throw Error(ErrorCode::ShapeMismatch, "attention mask must be Lq x Lk");
  }
  const Tensor qp = wq.forward(q), kp = wk.forward(kv), vp = wv.forward(kv);
  const int dh = d_model / n_heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const Tensor qh = slice_cols(qp, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(kp, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(vp, h * dh, (h + 1) * dh);
    const Tensor w = softmax_rows(scale(matmul_nt(qh, kh), inv), allowed);
    if (weights) weights->push_back(w.value());
    heads.push_back(matmul(w, vh));
  }
  return wo.forward(n_heads == 1 ? heads[0] : concat_cols(heads));
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  wq.collect(prefix + "wq.", out);
  wk.collect(prefix + "wk.", out);
  wv.collect(prefix + "wv.", out);
  wo.collect(prefix + "wo.", out);
}

TransformerBlock::TransformerBlock(int d, int heads, bool cross, std::mt19937_64& rng)
    : has_cross(cross), ln1(d), ln2(d), ln3(d), self_attn(d, heads, rng), ff1(d, 4 * d, rng), ff2(4 * d, d, rng) {
  if (cross) cross_attn = MultiHeadAttention(d, heads, rng);
}

Tensor TransformerBlock::forward(const Tensor& x, const BoolMat* self_allowed, const Tensor* memory,
                                 const BoolMat* memory_allowed, const Context& ctx) const {
  const Tensor h1 = ln1.forward(x);
  Tensor y = add(x, ctx.drop(self_attn.forward(h1, h1, self_allowed)));
  if (has_cross && memory) {
    y = add(y, ctx.drop(cross_attn.forward(ln2.forward(y), *memory, memory_allowed)));
  }
  return add(y, ctx.drop(ff2.forward(gelu(ff1.forward(ln3.forward(y))))));
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) const {
  ln1.collect(prefix + "ln1.", out);
  self_attn.collect(prefix + "self.", out);
  if (has_cross) {
    ln2.collect(prefix + "ln2.", out);
    cross_attn.collect(prefix + "cross.", out);
  }
  ln3.collect(prefix + "ln3.", out);
  ff1.collect(prefix + "ff1.", out);
  ff2.collect(prefix + "ff2.", out);
}

Transformer::Transformer(const TransformerConfig& c, bool cross, std::mt19937_64& rng) : cfg(c), final_ln(c.d_model) {
  for (int i = 0; i < c.n_layers; ++i) blocks.emplace_back(c.d_model, c.n_heads, cross, rng);
}

Tensor Transformer::forward(const Tensor& x, const Tensor* memory, const Context& ctx) const {
  BoolMat mask;
  if (cfg.causal) mask = causal_mask(x.rows());
  Tensor h = x;
  for (const auto& b : blocks) h = b.forward(h, cfg.causal ? &mask : nullptr, memory, nullptr, ctx);
  return final_ln.forward(h);
}

void Transformer::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + "block" + std::to_string(i) + ".", out);
  final_ln.collect(prefix + "final_ln.", out);
}

Mat normalized_adjacency(int n, std::span<const std::array<int, 2>> edges) {
  Mat a = Mat::Identity(n, n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n) throw Error(ErrorCode::ShapeMismatch, "graph edge outside the node set");
    if (i == j) continue;
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  Eigen::VectorXd d = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * a * d.asDiagonal();
}

GcnLayer::GcnLayer(int in, int out, std::mt19937_64& rng) : w(in, out, rng, false) {}

Tensor GcnLayer::forward(const Tensor& x, const Mat& a_hat) const {
  if (a_hat.rows() != x.rows() || a_hat.cols() != x.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "adjacency must be n x n for n node rows");
  }
  return gelu(matmul(Tensor(a_hat), w.forward(x)));
}

Tensor GcnLayer::forward(const Tensor& x, std::span<const std::array<int, 2>> edges) const {
  return forward(x, normalized_adjacency(x.rows(), edges));
}

void GcnLayer::collect(const std::string& prefix, ParamList& out) const { w.collect(prefix + "w.", out); }

PointerHead::PointerHead(int d, std::mt19937_64& rng) : wq(d, d, rng, false), wk(d, d, rng, false) {}

Tensor PointerHead::logits(const Tensor& states, const Tensor& candidates) const {
  if (candidates.rows() == 0) throw Error(ErrorCode::EmptyCandidates, "pointer over an empty candidate set");
  const double inv = 1.0 / std::sqrt(static_cast<double>(wq.out));
  return scale(matmul_nt(wq.forward(states), wk.forward(candidates)), inv);
}

Tensor PointerHead::scores(const Tensor& state, const Tensor& candidates) const {
  if (candidates.rows() == 0) throw Error(ErrorCode::EmptyCandidates, "pointer over an empty candidate set");
  if (state.rows() != 1) throw Error(ErrorCode::ShapeMismatch, "pointer scores take a single state row");
  return softmax_rows(logits(state, candidates));
}

void PointerHead::collect(const std::string& prefix, ParamList& out) const {
  wq.collect(prefix + "wq.", out);
  wk.collect(prefix + "wk.", out);
}

Mat sinusoidal_encoding(std::span<const double> positions, int d) {
  Mat m(static_cast<Eigen::Index>(positions.size()), d);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    for (int i = 0; i < d; ++i) {
      const int k = i / 2;
      const double freq = std::pow(10000.0, -2.0 * k / d);
      const double a = positions[r] * freq;
      m(static_cast<Eigen::Index>(r), i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return m;
}

void adamw_step(std::span<Tensor> params, std::span<const Mat> grads, AdamState& state, const OptimizerConfig& cfg) {
  if (params.size() != grads.size()) throw Error(ErrorCode::ShapeMismatch, "one gradient per parameter required");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.push_back(Mat::Zero(p.rows(), p.cols()));
      state.v.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state size differs");
  ++state.step;
  const double b1 = cfg.betas[0], b2 = cfg.betas[1];
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& p = params[i].mutable_value();
    const Mat& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].rows() != p.rows() ||
        state.m[i].cols() != p.cols()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter, gradient and state shapes must agree");
    }
    p *= 1.0 - cfg.learning_rate * cfg.weight_decay;
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= cfg.learning_rate * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + cfg.epsilon);
  }
}

AdamW::AdamW(std::vector<Tensor> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double AdamW::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params_)
    if (p.node()->grad.size() != 0) sq += p.node()->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Tensor& p : params_)
      if (p.node()->grad.size() != 0) p.node()->grad *= s;
  }
  return norm;
}

void AdamW::step() {
  std::vector<Mat> grads;
  grads.reserve(params_.size());
  for (const Tensor& p : params_) grads.push_back(p.grad());
  adamw_step(params_, grads, state_, cfg_);
}

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace hbrep::nn
