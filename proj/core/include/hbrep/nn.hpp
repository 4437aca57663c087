#pragma once

#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hbrep/tensor.hpp"

namespace hbrep::nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

class Module {
 public:
  virtual ~Module() = default;
  virtual void collect(const std::string& prefix, ParamList& out) const = 0;
  ParamList parameters(const std::string& prefix = "") const;
};

/// Normal(0, std) truncated to two standard deviations.
Mat trunc_normal(int rows, int cols, double std, std::mt19937_64& rng);
Tensor make_param(Mat init);

inline constexpr double kInitStd = 0.02;

/// Per-call forward settings. Models hold no mutable state, so one model can
/// serve several threads as long as each passes its own context.
struct Context {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  Tensor drop(const Tensor& x) const;
};

class Linear : public Module {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng, bool bias = true, bool zero_init = false);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  int in = 0, out = 0;
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out, undefined when disabled
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int d);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  Tensor gamma, beta;
};

/// Two-layer perceptron with GELU: out = W2 gelu(W1 x + b1) + b2.
class Mlp : public Module {
 public:
  Mlp() = default;
  Mlp(int in, int hidden, int out, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  Linear l1, l2;
};

struct TransformerConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  bool causal = false;
  double dropout = 0.1;
};

/// Lower-triangular "may attend" mask.
BoolMat causal_mask(int n);

class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(int d_model, int n_heads, std::mt19937_64& rng);
  /// Scaled dot-product attention per head. `allowed` is Lq x Lk; false
  /// entries get zero weight. Per-head weights are appended to `weights` when given.
  Tensor forward(const Tensor& q, const Tensor& kv, const BoolMat* allowed,
                 std::vector<Mat>* weights = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  int d_model = 0, n_heads = 1;
  Linear wq, wk, wv, wo;
};

/// Pre-norm block: self-attention, optional cross-attention, feed-forward.
class TransformerBlock : public Module {
 public:
  TransformerBlock() = default;
  TransformerBlock(int d_model, int n_heads, bool cross, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, const BoolMat* self_allowed, const Tensor* memory,
                 const BoolMat* memory_allowed, const Context& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  bool has_cross = false;
  LayerNorm ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  Linear ff1, ff2;
};

class Transformer : public Module {
 public:
  Transformer() = default;
  Transformer(const TransformerConfig& cfg, bool cross, std::mt19937_64& rng);
  /// Causal masking follows cfg.causal; `memory` feeds cross-attention when present.
  Tensor forward(const Tensor& x, const Tensor* memory, const Context& ctx) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  TransformerConfig cfg;
  std::vector<TransformerBlock> blocks;
  LayerNorm final_ln;
};

/// D^{-1/2} (A + I) D^{-1/2} for an undirected graph given as index pairs.
Mat normalized_adjacency(int n, std::span<const std::array<int, 2>> edges);

class GcnLayer : public Module {
 public:
  GcnLayer() = default;
  GcnLayer(int in, int out, std::mt19937_64& rng);
  /// gelu(Ahat X W)
  Tensor forward(const Tensor& x, const Mat& a_hat) const;
  Tensor forward(const Tensor& x, std::span<const std::array<int, 2>> edges) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  Linear w;
};

/// Dot-product scores between a projected decoder state and projected candidates.
class PointerHead : public Module {
 public:
  PointerHead() = default;
  PointerHead(int d_model, std::mt19937_64& rng);
  /// states: T x d, candidates: m x d -> T x m logits.
  Tensor logits(const Tensor& states, const Tensor& candidates) const;
  /// Probability vector (1 x m) for a single state. Throws EmptyCandidates.
  Tensor scores(const Tensor& state, const Tensor& candidates) const;
  void collect(const std::string& prefix, ParamList& out) const override;

  Linear wq, wk;
};

/// Sinusoidal encoding rows: sin(p / 10000^(2i/d)), cos(...) interleaved.
Mat sinusoidal_encoding(std::span<const double> positions, int d);

struct OptimizerConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-6;
  std::array<double, 2> betas{0.9, 0.999};
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Mat> m, v;
  long step = 0;
};

/// Decoupled weight decay followed by a bias-corrected Adam update.
void adamw_step(std::span<Tensor> params, std::span<const Mat> grads, AdamState& state,
                const OptimizerConfig& cfg);

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, OptimizerConfig cfg);
  void zero_grad();
  /// Rescales gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  void step();
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig cfg_;
  AdamState state_;
};

std::vector<Tensor> tensors_of(const ParamList& params);

}  // namespace hbrep::nn
