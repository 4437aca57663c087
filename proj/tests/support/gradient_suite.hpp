#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hbrep/builders.hpp"
#include "hbrep/conditioning.hpp"
#include "hbrep/nn.hpp"
#include "hbrep/topo_codec.hpp"
#include "test_support.hpp"

namespace hbrep::support {

/// One gradient check family; `run` builds a fresh random instance per seed.
struct GradCase {
  std::string name;
  std::function<GradCheck(std::uint64_t seed)> run;
};

inline constexpr int kGradInstances = 20;
inline constexpr double kGradTolerance = 1e-4;

namespace detail {

inline std::vector<GradInput> params_of(const nn::Module& m) {
  std::vector<GradInput> out;
  for (auto& p : m.parameters()) out.push_back({p.name, p.tensor});
  return out;
}

/// Checks a unary or binary primitive on random leaves.
inline GradCase op_case(std::string name, int n_inputs, std::function<nn::Tensor(const std::vector<nn::Tensor>&)> op,
                        int rows = 4, int cols = 5) {
  return {name, [=](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            std::vector<nn::Tensor> xs;
            std::vector<GradInput> inputs;
            for (int i = 0; i < n_inputs; ++i) {
              xs.push_back(random_leaf(rows, cols, rng));
              inputs.push_back({"x" + std::to_string(i), xs.back()});
            }
            const nn::Tensor probe = op(xs);
            const nn::Mat w = random_mat(probe.rows(), probe.cols(), rng);
            return check_gradients([&] { return weighted_sum(op(xs), w); }, inputs, seed);
          }};
}

/// A canonical small solid for conditioning checks.
inline BrepModel conditioning_fixture(std::mt19937_64& rng) {
  BrepModel m;
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0: m = random_cuboid(rng); break;
    case 1: m = random_prism(rng, std::uniform_int_distribution<int>(3, 5)(rng)); break;
    default: m = random_l_bracket(rng); break;
  }
  normalize_to_unit_cube(m);
  return canonicalize_model(m);
}

inline GradCase embedding_case(std::string name,
                               std::function<std::pair<std::shared_ptr<nn::Module>, std::function<nn::Tensor()>>(
                                   const BrepModel&, std::mt19937_64&)>
                                   make) {
  return {name, [=](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            const BrepModel m = conditioning_fixture(rng);
            auto [module, forward] = make(m, rng);
            const nn::Tensor probe = forward();
            const nn::Mat w = random_mat(probe.rows(), probe.cols(), rng);
            return check_gradients([&] { return weighted_sum(forward(), w); }, params_of(*module), seed);
          }};
}

}  // namespace detail

/// Every primitive operation of the tape.
inline std::vector<GradCase> primitive_gradient_cases() {
  using detail::op_case;
  using T = std::vector<nn::Tensor>;
  std::vector<GradCase> c;
  c.push_back(op_case("matmul", 2, [](const T& x) { return nn::matmul(x[0], nn::transpose(x[1])); }));
  c.push_back(op_case("matmul_nt", 2, [](const T& x) { return nn::matmul_nt(x[0], x[1]); }));
  c.push_back(op_case("add_broadcast", 2, [](const T& x) { return nn::add(x[0], nn::slice_rows(x[1], 0, 1)); }));
  c.push_back(op_case("sub", 2, [](const T& x) { return nn::sub(x[0], x[1]); }));
  c.push_back(op_case("mul_broadcast", 2, [](const T& x) { return nn::mul(x[0], nn::slice_rows(x[1], 2, 3)); }));
  c.push_back(op_case("scale_add_scalar", 1, [](const T& x) { return nn::add_scalar(nn::scale(x[0], -1.7), 0.3); }));
  c.push_back(op_case("gelu", 1, [](const T& x) { return nn::gelu(x[0]); }));
  c.push_back(op_case("tanh", 1, [](const T& x) { return nn::tanh(x[0]); }));
  c.push_back(op_case("exp", 1, [](const T& x) { return nn::exp(nn::scale(x[0], 0.5)); }));
  c.push_back(op_case("square", 1, [](const T& x) { return nn::square(x[0]); }));
  c.push_back(op_case("softmax_rows_masked", 1, [](const T& x) {
    nn::BoolMat allowed = nn::BoolMat::Constant(x[0].rows(), x[0].cols(), true);
    allowed(0, 1) = allowed(2, 4) = allowed(3, 0) = false;
    return nn::softmax_rows(x[0], &allowed);
  }));
  c.push_back(op_case("log_softmax_rows_masked", 1, [](const T& x) {
    nn::BoolMat allowed = nn::BoolMat::Constant(x[0].rows(), x[0].cols(), true);
    allowed(1, 2) = allowed(3, 3) = false;
    const nn::Tensor ls = nn::log_softmax_rows(x[0], &allowed);
    const int idx[] = {0, 1, 4, 2};
    return nn::pick(ls, idx);
  }));
  c.push_back(op_case("layer_norm", 3, [](const T& x) {
    return nn::layer_norm(x[0], nn::slice_rows(x[1], 0, 1), nn::slice_rows(x[2], 0, 1));
  }));
  c.push_back(op_case("gather_rows", 1, [](const T& x) {
    const int idx[] = {3, 0, 0, 2, 1, 3};
    return nn::gather_rows(x[0], idx);
  }));
  c.push_back(op_case("segment_sum", 1, [](const T& x) {
    const int seg[] = {1, 0, 1, 2};
    return nn::segment_sum(x[0], seg, 3);
  }));
  c.push_back(op_case("slice_concat", 2, [](const T& x) {
    const nn::Tensor cols[] = {nn::slice_cols(x[0], 1, 4), x[1]};
    const nn::Tensor rows[] = {nn::slice_rows(x[1], 1, 3), nn::slice_rows(x[0], 0, 2)};
    const nn::Tensor a = nn::concat_cols(cols);
    const nn::Tensor b = nn::concat_rows(rows);
    return nn::matmul(nn::transpose(a), b);
  }));
  c.push_back(op_case("reductions", 1, [](const T& x) {
    const nn::Tensor parts[] = {nn::transpose(nn::sum_cols(x[0])), nn::mean_rows(nn::square(x[0])), nn::sum(x[0]),
                                nn::mean(nn::tanh(x[0]))};
    return nn::scale(nn::concat_cols(parts), 2.0);
  }));
  return c;
}

/// Every layer type of the network library.
inline std::vector<GradCase> layer_gradient_cases() {
  std::vector<GradCase> c;
  auto layer = [](std::string name, auto make_and_run) {
    return GradCase{name, [=](std::uint64_t seed) { return make_and_run(seed); }};
  };
  c.push_back(layer("Linear", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::Linear l(5, 3, rng);
    const nn::Tensor x = random_leaf(4, 5, rng);
    const nn::Mat w = random_mat(4, 3, rng);
    auto in = detail::params_of(l);
    in.push_back({"x", x});
    return check_gradients([&] { return weighted_sum(l.forward(x), w); }, in, seed);
  }));
  c.push_back(layer("LayerNorm", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::LayerNorm l(6);
    l.gamma.mutable_value() = random_mat(1, 6, rng);
    l.beta.mutable_value() = random_mat(1, 6, rng);
    const nn::Tensor x = random_leaf(3, 6, rng);
    const nn::Mat w = random_mat(3, 6, rng);
    auto in = detail::params_of(l);
    in.push_back({"x", x});
    return check_gradients([&] { return weighted_sum(l.forward(x), w); }, in, seed);
  }));
  c.push_back(layer("Mlp", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::Mlp l(4, 7, 3, rng);
    for (auto& p : l.parameters()) p.tensor.mutable_value() = random_mat(p.tensor.rows(), p.tensor.cols(), rng, 0.5);
    const nn::Tensor x = random_leaf(5, 4, rng);
    const nn::Mat w = random_mat(5, 3, rng);
    auto in = detail::params_of(l);
    in.push_back({"x", x});
    return check_gradients([&] { return weighted_sum(l.forward(x), w); }, in, seed);
  }));
  c.push_back(layer("MultiHeadAttention", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::MultiHeadAttention l(8, 2, rng);
    for (auto& p : l.parameters()) p.tensor.mutable_value() = random_mat(p.tensor.rows(), p.tensor.cols(), rng, 0.3);
    const nn::Tensor q = random_leaf(4, 8, rng), kv = random_leaf(5, 8, rng);
    nn::BoolMat allowed = nn::BoolMat::Constant(4, 5, true);
    allowed(0, 4) = allowed(1, 0) = allowed(3, 2) = false;
    const nn::Mat w = random_mat(4, 8, rng);
    auto in = detail::params_of(l);
    in.push_back({"q", q});
    in.push_back({"kv", kv});
    return check_gradients([&] { return weighted_sum(l.forward(q, kv, &allowed), w); }, in, seed);
  }));
  c.push_back(layer("TransformerBlock", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::TransformerBlock l(8, 2, true, rng);
    for (auto& p : l.parameters()) p.tensor.mutable_value() += random_mat(p.tensor.rows(), p.tensor.cols(), rng, 0.2);
    const nn::Tensor x = random_leaf(4, 8, rng), mem = random_leaf(3, 8, rng);
    const nn::BoolMat causal = nn::causal_mask(4);
    const nn::Mat w = random_mat(4, 8, rng);
    auto in = detail::params_of(l);
    in.push_back({"x", x});
    in.push_back({"memory", mem});
    nn::Context ctx;
    return check_gradients([&] { return weighted_sum(l.forward(x, &causal, &mem, nullptr, ctx), w); }, in, seed);
  }));
  c.push_back(layer("Transformer", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::TransformerConfig cfg{2, 8, 2, true, 0.0};
    nn::Transformer l(cfg, false, rng);
    for (auto& p : l.parameters()) p.tensor.mutable_value() += random_mat(p.tensor.rows(), p.tensor.cols(), rng, 0.2);
    const nn::Tensor x = random_leaf(5, 8, rng);
    const nn::Mat w = random_mat(5, 8, rng);
    auto in = detail::params_of(l);
    in.push_back({"x", x});
    nn::Context ctx;
    return check_gradients([&] { return weighted_sum(l.forward(x, nullptr, ctx), w); }, in, seed);
  }));
  c.push_back(layer("GcnLayer", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::GcnLayer l(4, 6, rng);
    l.w.weight.mutable_value() = random_mat(4, 6, rng, 0.5);
    const std::vector<std::array<int, 2>> edges{{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 4}};
    const nn::Tensor x = random_leaf(5, 4, rng);
    const nn::Mat w = random_mat(5, 6, rng);
    auto in = detail::params_of(l);
    in.push_back({"x", x});
    return check_gradients([&] { return weighted_sum(l.forward(x, edges), w); }, in, seed);
  }));
  c.push_back(layer("PointerHead", [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::PointerHead l(6, rng);
    for (auto& p : l.parameters()) p.tensor.mutable_value() = random_mat(p.tensor.rows(), p.tensor.cols(), rng, 0.4);
    const nn::Tensor s = random_leaf(3, 6, rng), cands = random_leaf(7, 6, rng);
    auto in = detail::params_of(l);
    in.push_back({"states", s});
    in.push_back({"candidates", cands});
    const int target[] = {2, 6, 0};
    return check_gradients([&] { return nn::sum(nn::pick(nn::log_softmax_rows(l.logits(s, cands)), target)); }, in,
                           seed);
  }));
  return c;
}

/// Every fusion encoder of the conditioning module.
inline std::vector<GradCase> fusion_gradient_cases() {
  using detail::embedding_case;
  using Made = std::pair<std::shared_ptr<nn::Module>, std::function<nn::Tensor()>>;
  constexpr int d = 8;
  std::vector<GradCase> c;
  auto perturb = [](nn::Module& m, std::mt19937_64& rng) {
    for (auto& p : m.parameters()) p.tensor.mutable_value() = random_mat(p.tensor.rows(), p.tensor.cols(), rng, 0.3);
  };
  c.push_back(embedding_case("BoxConditioner", [=](const BrepModel& m, std::mt19937_64& rng) {
    auto mod = std::make_shared<BoxConditioner>(d, 12, rng);
    perturb(*mod, rng);
    return Made{mod, [mod, m] { return mod->embed(m.ef, m.num_faces()).rows; }};
  }));
  c.push_back(embedding_case("EdgeConditioner", [=](const BrepModel& m, std::mt19937_64& rng) {
    auto mod = std::make_shared<EdgeConditioner>(d, rng);
    perturb(*mod, rng);
    const nn::Mat boxes = boxes_matrix(m.boxes);
    return Made{mod, [mod, m, boxes] { return mod->embed(m.ef, m.num_faces(), boxes).rows; }};
  }));
  for (Ablation a : {Ablation::None, Ablation::MaskBoxes, Ablation::MaskEdges}) {
    c.push_back(embedding_case("EvConditioner_" + std::string(to_string(a)), [=](const BrepModel& m,
                                                                                 std::mt19937_64& rng) {
      auto mod = std::make_shared<EvConditioner>(d, rng);
      perturb(*mod, rng);
      const nn::Mat boxes = boxes_matrix(m.boxes), edges = edges_matrix(m.edges);
      return Made{mod, [mod, m, boxes, edges, a] { return mod->embed(m.ef, m.num_faces(), boxes, edges, a).rows; }};
    }));
  }
  c.push_back(embedding_case("FaceConditioner", [=](const BrepModel& m, std::mt19937_64& rng) {
    auto mod = std::make_shared<FaceConditioner>(d, rng);
    perturb(*mod, rng);
    const auto inc = derive_incidence(m.ef, m.ev, m.num_faces(), m.num_vertices());
    const nn::Mat boxes = boxes_matrix(m.boxes), edges = edges_matrix(m.edges);
    return Made{mod, [mod, inc, boxes, edges] { return mod->embed(inc, edges, boxes).rows; }};
  }));
  c.push_back(embedding_case("VertexConditioner", [=](const BrepModel& m, std::mt19937_64& rng) {
    auto mod = std::make_shared<VertexConditioner>(d, rng);
    perturb(*mod, rng);
    const auto inc = derive_incidence(m.ef, m.ev, m.num_faces(), m.num_vertices());
    const nn::Mat boxes = boxes_matrix(m.boxes), faces = faces_matrix(m.faces);
    return Made{mod, [mod, inc, boxes, faces] { return mod->embed(inc, boxes, faces).rows; }};
  }));
  return c;
}

/// Worst relative error of a case over kGradInstances seeds.
inline GradCheck run_grad_case(const GradCase& c, int instances = kGradInstances) {
  GradCheck worst;
  for (int i = 0; i < instances; ++i) {
    const GradCheck r = c.run(1000 + static_cast<std::uint64_t>(i));
    worst.checked += r.checked;
    if (r.rel_error >= worst.rel_error) {
      worst.rel_error = r.rel_error;
      worst.worst = r.worst;
    }
  }
  return worst;
}

}  // namespace hbrep::support
