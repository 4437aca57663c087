#include "hbrep/tensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "hbrep/error.hpp"

namespace hbrep::nn {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const Tensor& t) { return "[" + std::to_string(t.rows()) + "," + std::to_string(t.cols()) + "]"; }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

// True when b is a 1 x cols row broadcast over the rows of a.
bool check_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error(op, a, b);
  if (a.rows() == b.rows()) return false;
  if (b.rows() == 1) return true;
  shape_error(op, a, b);
}

Mat reduce_like(const Mat& g, bool broadcast) {
  if (!broadcast) return g;
  return g.colwise().sum();
}

}  // namespace

void Node::accumulate(const Mat& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor::Tensor(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(int rows, int cols) { return Tensor(Mat::Zero(rows, cols)); }

Tensor Tensor::scalar(double v) { return Tensor(Mat::Constant(1, 1, v)); }

Tensor Tensor::row(std::span<const double> values) {
  Mat m(1, static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = values[i];
  return Tensor(std::move(m));
}

Mat Tensor::grad() const {
  if (node_->grad.size() == 0) return Mat::Zero(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on a tensor of shape " + shape_str(*this));
  return node_->value(0, 0);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward needs a scalar loss");
  }
  Node& root = *loss.node();
  if (!root.requires_grad || root.tape != this || root.index < 0) {
    throw Error(ErrorCode::DetachedGraph, "loss was not recorded on this tape");
  }
  root.grad = Mat::Ones(1, 1);
  for (long i = root.index; i >= 0; --i) {
    Node& n = *nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(n);
  }
  for (auto& n : nodes_) n->grad.resize(0, 0);
}

void Tape::clear() { nodes_.clear(); }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tensor record(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  Tape* tape = g_active_tape;
  bool needs = false;
  if (tape) {
    for (const Tensor& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
    node->tape = tape;
    node->index = static_cast<long>(tape->nodes_.size());
    tape->nodes_.push_back(node);
  }
  return Tensor(std::move(node));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  return record(a.value() * b.value(), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  return record(a.value() * b.value().transpose(), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value);
    if (pb.requires_grad) pb.accumulate(n.grad.transpose() * pa.value);
  });
}

Tensor transpose(const Tensor& a) {
  return record(a.value().transpose(), {a}, [](Node& n) { n.parents[0]->accumulate(n.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool bc = check_binary("add", a, b);
  Mat v = bc ? Mat(a.value().rowwise() + b.value().row(0)) : Mat(a.value() + b.value());
  return record(std::move(v), {a, b}, [bc](Node& n) {
    n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(reduce_like(n.grad, bc));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const bool bc = check_binary("sub", a, b);
  Mat v = bc ? Mat(a.value().rowwise() - b.value().row(0)) : Mat(a.value() - b.value());
  return record(std::move(v), {a, b}, [bc](Node& n) {
    n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-reduce_like(n.grad, bc));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const bool bc = check_binary("mul", a, b);
  Mat v;
  if (bc) {
    v = a.value().array().rowwise() * b.value().row(0).array();
  } else {
    v = a.value().cwiseProduct(b.value());
  }
  return record(std::move(v), {a, b}, [bc](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) {
      if (bc) {
        pa.accumulate(Mat(n.grad.array().rowwise() * pb.value.row(0).array()));
      } else {
        pa.accumulate(n.grad.cwiseProduct(pb.value));
      }
    }
    if (pb.requires_grad) pb.accumulate(reduce_like(n.grad.cwiseProduct(pa.value), bc));
  });
}

Tensor scale(const Tensor& a, double s) {
  return record(a.value() * s, {a}, [s](Node& n) { n.parents[0]->accumulate(n.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return record(a.value().array() + s, {a}, [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Tensor gelu(const Tensor& a) {
  const Mat& x = a.value();
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  return record(std::move(y), {a}, [](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat d(x.rows(), x.cols());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      d.data()[i] = n.grad.data()[i] * (cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v));
    }
    n.parents[0]->accumulate(d);
  });
}

Tensor tanh(const Tensor& a) {
  Mat y = a.value().array().tanh();
  return record(y, {a}, [](Node& n) {
    n.parents[0]->accumulate(Mat(n.grad.array() * (1.0 - n.value.array().square())));
  });
}

Tensor exp(const Tensor& a) {
  Mat y = a.value().array().exp();
  return record(y, {a}, [](Node& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(n.value)); });
}

Tensor square(const Tensor& a) {
  return record(a.value().array().square(), {a}, [](Node& n) {
    n.parents[0]->accumulate(Mat(2.0 * n.grad.array() * n.parents[0]->value.array()));
  });
}

namespace {

void check_mask(const char* op, const Tensor& a, const BoolMat* allowed) {
  if (allowed && (allowed->rows() != a.rows() || allowed->cols() != a.cols())) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": mask shape differs from input " + shape_str(a));
  }
}

Mat masked_softmax(const Mat& x, const BoolMat* allowed) {
  Mat y = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (!allowed || (*allowed)(r, c)) mx = std::max(mx, x(r, c));
    if (!std::isfinite(mx)) continue;
    double s = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!allowed || (*allowed)(r, c)) {
        y(r, c) = std::exp(x(r, c) - mx);
        s += y(r, c);
      }
    }
    y.row(r) /= s;
  }
  return y;
}

}  // namespace

Tensor softmax_rows(const Tensor& a, const BoolMat* allowed) {
  check_mask("softmax_rows", a, allowed);
  return record(masked_softmax(a.value(), allowed), {a}, [](Node& n) {
    const Mat& y = n.value;
    Mat gy = n.grad.cwiseProduct(y);
    Eigen::VectorXd s = gy.rowwise().sum();
    Mat d = gy - (y.array().colwise() * s.array()).matrix();
    n.parents[0]->accumulate(d);
  });
}

Tensor log_softmax_rows(const Tensor& a, const BoolMat* allowed) {
  check_mask("log_softmax_rows", a, allowed);
  Mat p = masked_softmax(a.value(), allowed);
  Mat y(a.rows(), a.cols());
  const double ninf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    double mx = ninf;
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      if (!allowed || (*allowed)(r, c)) mx = std::max(mx, a.value()(r, c));
    double s = 0.0;
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      if (!allowed || (*allowed)(r, c)) s += std::exp(a.value()(r, c) - mx);
    const double lse = mx + std::log(s);
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      y(r, c) = (!allowed || (*allowed)(r, c)) ? a.value()(r, c) - lse : ninf;
  }
  return record(std::move(y), {a}, [p = std::move(p)](Node& n) {
    Mat g = n.grad;
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (!std::isfinite(n.value.data()[i])) g.data()[i] = 0.0;
    Eigen::VectorXd s = g.rowwise().sum();
    Mat d = g - (p.array().colwise() * s.array()).matrix();
    n.parents[0]->accumulate(d);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || beta.rows() != 1 || gamma.cols() != x.cols() || beta.cols() != x.cols()) {
    shape_error("layer_norm", x, gamma);
  }
  const Eigen::Index r = x.rows(), d = x.cols();
  Mat xhat(r, d);
  Eigen::VectorXd inv(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double mu = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mu).square().mean();
    inv(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv(i);
  }
  Mat y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return record(std::move(y), {x, gamma, beta}, [xhat = std::move(xhat), inv = std::move(inv)](Node& n) {
    Node& px = *n.parents[0];
    Node& pg = *n.parents[1];
    Node& pb = *n.parents[2];
    if (pg.requires_grad) pg.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
    if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
    if (px.requires_grad) {
      const Eigen::Index d = xhat.cols();
      Mat dxhat = n.grad.array().rowwise() * pg.value.row(0).array();
      Mat dx(xhat.rows(), d);
      for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
        const double s1 = dxhat.row(i).sum();
        const double s2 = dxhat.row(i).dot(xhat.row(i));
        dx.row(i) = (inv(i) / static_cast<double>(d)) *
                    (static_cast<double>(d) * dxhat.row(i).array() - s1 - xhat.row(i).array() * s2);
      }
      px.accumulate(dx);
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> idx) {
  Mat y(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows()) {
      throw Error(ErrorCode::IndexOutOfRange, "gather_rows index " + std::to_string(idx[i]) + " outside " +
                                                  std::to_string(x.rows()) + " rows");
    }
    y.row(static_cast<Eigen::Index>(i)) = x.value().row(idx[i]);
  }
  std::vector<int> ids(idx.begin(), idx.end());
  return record(std::move(y), {x}, [ids = std::move(ids)](Node& n) {
    Node& p = *n.parents[0];
    Mat g = Mat::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    p.accumulate(g);
  });
}

Tensor segment_sum(const Tensor& x, std::span<const int> seg, int n_out) {
  if (static_cast<int>(seg.size()) != x.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "segment_sum needs one segment id per row");
  }
  Mat y = Mat::Zero(n_out, x.cols());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg[i] < 0 || seg[i] >= n_out) {
      throw Error(ErrorCode::IndexOutOfRange, "segment id " + std::to_string(seg[i]) + " outside " +
                                                  std::to_string(n_out) + " segments");
    }
    y.row(seg[i]) += x.value().row(static_cast<Eigen::Index>(i));
  }
  std::vector<int> ids(seg.begin(), seg.end());
  return record(std::move(y), {x}, [ids = std::move(ids)](Node& n) {
    Mat g(static_cast<Eigen::Index>(ids.size()), n.grad.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = n.grad.row(ids[i]);
    n.parents[0]->accumulate(g);
  });
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  if (begin < 0 || end > x.cols() || begin > end) throw Error(ErrorCode::ShapeMismatch, "slice_cols out of range");
  return record(x.value().middleCols(begin, end - begin), {x}, [begin](Node& n) {
    Node& p = *n.parents[0];
    Mat g = Mat::Zero(p.value.rows(), p.value.cols());
    g.middleCols(begin, n.grad.cols()) = n.grad;
    p.accumulate(g);
  });
}

Tensor slice_rows(const Tensor& x, int begin, int end) {
  if (begin < 0 || end > x.rows() || begin > end) throw Error(ErrorCode::ShapeMismatch, "slice_rows out of range");
  return record(x.value().middleRows(begin, end - begin), {x}, [begin](Node& n) {
    Node& p = *n.parents[0];
    Mat g = Mat::Zero(p.value.rows(), p.value.cols());
    g.middleRows(begin, n.grad.rows()) = n.grad;
    p.accumulate(g);
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_cols of nothing");
  int cols = 0;
  for (const Tensor& t : parts) {
    if (t.rows() != parts[0].rows()) shape_error("concat_cols", parts[0], t);
    cols += t.cols();
  }
  Mat y(parts[0].rows(), cols);
  std::vector<int> offsets;
  int c = 0;
  for (const Tensor& t : parts) {
    offsets.push_back(c);
    y.middleCols(c, t.cols()) = t.value();
    c += t.cols();
  }
  return record(std::move(y), std::vector<Tensor>(parts.begin(), parts.end()), [offsets](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node& p = *n.parents[k];
      if (p.requires_grad) p.accumulate(n.grad.middleCols(offsets[k], p.value.cols()));
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_rows of nothing");
  int rows = 0;
  for (const Tensor& t : parts) {
    if (t.cols() != parts[0].cols()) shape_error("concat_rows", parts[0], t);
    rows += t.rows();
  }
  Mat y(rows, parts[0].cols());
  std::vector<int> offsets;
  int r = 0;
  for (const Tensor& t : parts) {
    offsets.push_back(r);
    y.middleRows(r, t.rows()) = t.value();
    r += t.rows();
  }
  return record(std::move(y), std::vector<Tensor>(parts.begin(), parts.end()), [offsets](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node& p = *n.parents[k];
      if (p.requires_grad) p.accumulate(n.grad.middleRows(offsets[k], p.value.rows()));
    }
  });
}

Tensor sum(const Tensor& x) {
  return record(Mat::Constant(1, 1, x.value().sum()), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    p.accumulate(Mat::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0)));
  });
}

Tensor mean(const Tensor& x) {
  const double k = static_cast<double>(x.numel());
  return record(Mat::Constant(1, 1, x.value().sum() / k), {x}, [k](Node& n) {
    Node& p = *n.parents[0];
    p.accumulate(Mat::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0) / k));
  });
}

Tensor mean_rows(const Tensor& x) {
  const double k = static_cast<double>(x.rows());
  return record(x.value().colwise().mean(), {x}, [k](Node& n) {
    Node& p = *n.parents[0];
    p.accumulate(Mat(n.grad.replicate(p.value.rows(), 1) / k));
  });
}

Tensor sum_cols(const Tensor& x) {
  return record(x.value().rowwise().sum(), {x}, [](Node& n) {
    Node& p = *n.parents[0];
    p.accumulate(Mat(n.grad.replicate(1, p.value.cols())));
  });
}

Tensor pick(const Tensor& x, std::span<const int> idx) {
  if (static_cast<int>(idx.size()) != x.rows()) throw Error(ErrorCode::ShapeMismatch, "pick needs one index per row");
  Mat y(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.cols()) throw Error(ErrorCode::IndexOutOfRange, "pick index out of range");
    y(i, 0) = x.value()(i, idx[i]);
  }
  std::vector<int> ids(idx.begin(), idx.end());
  return record(std::move(y), {x}, [ids = std::move(ids)](Node& n) {
    Node& p = *n.parents[0];
    Mat g = Mat::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) g(static_cast<Eigen::Index>(i), ids[i]) = n.grad(static_cast<Eigen::Index>(i), 0);
    p.accumulate(g);
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw Error(ErrorCode::InvalidArgument, "dropout probability must be below 1");
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Mat y = x.value().cwiseProduct(mask);
  return record(std::move(y), {x}, [mask = std::move(mask)](Node& n) {
    n.parents[0]->accumulate(n.grad.cwiseProduct(mask));
  });
}

}  // namespace hbrep::nn
