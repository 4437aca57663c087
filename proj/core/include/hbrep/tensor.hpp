#pragma once

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hbrep::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

struct Node {
  Mat value;
  Mat grad;  // empty until a gradient flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const Tape* tape = nullptr;
  long index = -1;

  void accumulate(const Mat& g);
};

/// Dense 2-d array (rows x cols, row-major). Scalars are 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Mat value, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(int rows, int cols);
  static Tensor scalar(double v);
  static Tensor row(std::span<const double> values);

  bool defined() const { return static_cast<bool>(node_); }
  int rows() const { return static_cast<int>(node_->value.rows()); }
  int cols() const { return static_cast<int>(node_->value.cols()); }
  std::vector<int> shape() const { return {rows(), cols()}; }
  long numel() const { return static_cast<long>(node_->value.size()); }
  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  /// Gradient; zeros of the value's shape when nothing has flowed in.
  Mat grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable operations. Operations are recorded only
/// while a tape is active on the calling thread (see TapeScope); without one
/// they compute values and drop the graph.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Reverse-mode sweep from a scalar loss recorded on this tape. Gradients
  /// accumulate into every reachable leaf with requires_grad.
  /// Throws NotScalar or DetachedGraph.
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  friend Tensor record(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backward);
  std::vector<std::shared_ptr<Node>> nodes_;
};

/// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Creates an op result; records it on the active tape when any parent needs gradients.
Tensor record(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backward);

// Primitive operations. Binary elementwise ops accept an identical shape or a
// 1 x cols row that is broadcast over rows.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
/// Row-wise softmax. Entries where `allowed` is false get exactly zero weight;
/// fully masked rows are all zero.
Tensor softmax_rows(const Tensor& a, const BoolMat* allowed = nullptr);
/// Row-wise log-softmax; masked entries are -inf and receive no gradient.
Tensor log_softmax_rows(const Tensor& a, const BoolMat* allowed = nullptr);
/// Per-row normalization to zero mean and unit variance, then gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-8);
/// out[i] = x[idx[i]]
Tensor gather_rows(const Tensor& x, std::span<const int> idx);
/// out[seg[i]] += x[i], out has n_out rows.
Tensor segment_sum(const Tensor& x, std::span<const int> seg, int n_out);
Tensor slice_cols(const Tensor& x, int begin, int end);
Tensor slice_rows(const Tensor& x, int begin, int end);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// 1 x cols mean over rows.
Tensor mean_rows(const Tensor& x);
/// rows x 1 sum over columns.
Tensor sum_cols(const Tensor& x);
/// rows x 1 with out[i] = x[i, idx[i]].
Tensor pick(const Tensor& x, std::span<const int> idx);
/// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace hbrep::nn
