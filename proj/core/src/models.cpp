#include "hbrep/models.hpp"

#include <algorithm>
#include <cmath>

#include "hbrep/error.hpp"

namespace hbrep {

using nn::Mat;
using nn::Tensor;

Tensor gaussian_kl(const Tensor& mu, const Tensor& logvar) {
  const Tensor inner = nn::sub(nn::sub(logvar, nn::square(mu)), nn::exp(logvar));
  return nn::scale(nn::add_scalar(nn::sum(inner), static_cast<double>(mu.numel())), -0.5);
}

double gaussian_kl(double mu, double sigma) {
  const double var = sigma * sigma;
  return -0.5 * (1.0 + std::log(var) - mu * mu - var);
}

namespace {

std::vector<double> iota_positions(int n) {
  std::vector<double> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[i] = i;
  return p;
}

Tensor positions(int n, int d) { return Tensor(nn::sinusoidal_encoding(iota_positions(n), d)); }

/// Draws an index from softmax(logits / temperature) restricted to `allowed`.
int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& logits, const std::vector<int>& allowed,
                 double temperature, std::mt19937_64& rng) {
  double hi = -INFINITY;
  for (int a : allowed) hi = std::max(hi, logits(a));
  std::vector<double> w;
  w.reserve(allowed.size());
  double total = 0.0;
  for (int a : allowed) {
    w.push_back(std::exp((logits(a) - hi) / std::max(temperature, 1e-6)));
    total += w.back();
  }
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    u -= w[i];
    if (u < 0.0) return allowed[i];
  }
  return allowed.back();
}

nn::TransformerConfig with_causal(nn::TransformerConfig c, bool causal) {
  c.causal = causal;
  return c;
}

bool triangular_length(int len) {
  for (int n = 2; n * (n - 1) / 2 <= len; ++n)
    if (n * (n - 1) / 2 == len) return true;
  return false;
}

}  // namespace

EfVae::EfVae(const EfVaeConfig& c, std::mt19937_64& rng)
    : cfg(c),
      token_embedding(nn::make_param(nn::trunc_normal(kEfVocab, c.net.d_model, nn::kInitStd, rng))),
      encoder(with_causal(c.net, false), false, rng),
      decoder(with_causal(c.net, true), false, rng),
      mu_head(c.net.d_model, c.d_z, rng),
      logvar_head(c.net.d_model, c.d_z, rng, true, true),
      z_proj(c.d_z, c.net.d_model, rng),
      out_head(c.net.d_model, kEfOutputs, rng) {}

EfVae::Posterior EfVae::encode(const EfSequence& seq, const nn::Context& ctx) const {
  const Tensor x = nn::add(nn::gather_rows(token_embedding, seq.tokens),
                           positions(static_cast<int>(seq.tokens.size()), cfg.net.d_model));
  const Tensor pooled = nn::mean_rows(encoder.forward(ctx.drop(x), nullptr, ctx));
  return {mu_head.forward(pooled), logvar_head.forward(pooled)};
}

Tensor EfVae::decode_logits(const std::vector<int>& inputs, const Tensor& z, const nn::Context& ctx) const {
  Tensor x = nn::add(nn::gather_rows(token_embedding, inputs),
                     positions(static_cast<int>(inputs.size()), cfg.net.d_model));
  x = nn::add(x, z_proj.forward(z));
  return out_head.forward(decoder.forward(ctx.drop(x), nullptr, ctx));
}

void EfVae::collect(const std::string& prefix, nn::ParamList& out) const {
  out.push_back({prefix + "token_embedding", token_embedding});
  encoder.collect(prefix + "encoder.", out);
  decoder.collect(prefix + "decoder.", out);
  mu_head.collect(prefix + "mu_head.", out);
  logvar_head.collect(prefix + "logvar_head.", out);
  z_proj.collect(prefix + "z_proj.", out);
  out_head.collect(prefix + "out_head.", out);
}

VaeLoss vae_loss(const EfVae& model, const EfSequence& seq, const nn::Context& ctx, std::mt19937_64& rng) {
  const auto& t = seq.tokens;
  if (t.empty() || t.back() != kEfEos) throw Error(ErrorCode::MalformedSequence, "sequence must end with the end token");
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if (t[i] < 0 || t[i] > kMaxSharedEdges) {
      throw Error(ErrorCode::MalformedSequence, "token " + std::to_string(t[i]) + " at " + std::to_string(i) +
                                                    " is not an adjacency count");
    }
  }
  if (!triangular_length(static_cast<int>(t.size()) - 1)) {
    throw Error(ErrorCode::MalformedSequence, "sequence length is not n(n-1)/2 for n >= 2");
  }
  if (static_cast<int>(t.size()) - 1 > model.max_length()) {
    throw Error(ErrorCode::MalformedSequence, "sequence longer than the model's face limit allows");
  }
  const auto post = model.encode(seq, ctx);
  Mat eps(1, model.cfg.d_z);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(0, i) = normal(rng);
  const Tensor z = nn::add(post.mu, nn::mul(nn::exp(nn::scale(post.logvar, 0.5)), Tensor(eps)));

  std::vector<int> inputs{kEfBos};
  inputs.insert(inputs.end(), t.begin(), t.end() - 1);
  const Tensor logp = nn::log_softmax_rows(model.decode_logits(inputs, z, ctx));
  const Tensor recon = nn::scale(nn::sum(nn::pick(logp, t)), -1.0);
  const Tensor kl = gaussian_kl(post.mu, post.logvar);
  return {nn::add(recon, kl), recon.item(), kl.item()};
}

VaeSample vae_sample(const EfVae& model, std::uint64_t seed, const VaeSampleOptions& opt) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const nn::Context ctx;
  std::vector<int> all(kEfOutputs);
  for (int i = 0; i < kEfOutputs; ++i) all[i] = i;
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    Mat zv(1, model.cfg.d_z);
    for (Eigen::Index i = 0; i < zv.size(); ++i) zv(0, i) = normal(rng);
    const Tensor z(zv);
    std::vector<int> inputs{kEfBos};
    bool closed = false;
    while (static_cast<int>(inputs.size()) <= model.max_length() + 1) {
      const Tensor logits = model.decode_logits(inputs, z, ctx);
      const int tok = sample_index(logits.value().row(logits.rows() - 1), all, opt.temperature, rng);
      if (tok == kEfEos) {
        closed = true;
        break;
      }
      inputs.push_back(tok);
    }
    const int len = static_cast<int>(inputs.size()) - 1;
    if (closed && triangular_length(len)) {
      VaeSample out;
      out.seq.tokens.assign(inputs.begin() + 1, inputs.end());
      out.seq.tokens.push_back(kEfEos);
      out.retries = attempt;
      return out;
    }
  }
  throw Error(ErrorCode::SamplingExhausted,
              "no triangular-length sequence after " + std::to_string(opt.max_retries) + " retries");
}

int ev_candidate_index(int token, int n_e) {
  if (is_half_edge_token(token)) return token;
  if (token == kTokenLoop) return 2 * n_e;
  if (token == kTokenFace) return 2 * n_e + 1;
  if (token == kTokenEnd) return 2 * n_e + 2;
  throw Error(ErrorCode::MalformedSequence, "unknown token " + std::to_string(token));
}

int ev_candidate_token(int index, int n_e) {
  if (index < 0 || index > 2 * n_e + 2) throw Error(ErrorCode::IndexOutOfRange, "candidate index out of range");
  if (index < 2 * n_e) return index;
  return kTokenLoop + (index - 2 * n_e);
}

EvGrammar::EvGrammar(const EdgeFaceTable& ef, int n_f)
    : n_e_(static_cast<int>(ef.rows.size())),
      n_f_(n_f),
      fe_(face_edges(ef, n_f)),
      parent_(static_cast<std::size_t>(2 * n_e_)),
      used_(static_cast<std::size_t>(2 * n_e_), false),
      used_in_face_(static_cast<std::size_t>(n_e_), -1) {
  if (n_e_ > kMaxEdgeTokens) throw Error(ErrorCode::InvalidArgument, "more edges than the token alphabet addresses");
  for (int i = 0; i < 2 * n_e_; ++i) parent_[i] = i;
}

int EvGrammar::find(int x) const {
  while (parent_[x] != x) x = parent_[x];
  return x;
}

bool EvGrammar::joins_edge_ends(int slot_a, int slot_b) const {
  const int ra = find(slot_a), rb = find(slot_b);
  if (ra == rb) return false;
  for (int e = 0; e < n_e_; ++e) {
    const int r0 = find(2 * e), r1 = find(2 * e + 1);
    if ((r0 == ra && r1 == rb) || (r0 == rb && r1 == ra)) return true;
  }
  return false;
}

std::vector<int> EvGrammar::allowed() const {
  std::vector<int> out;
  if (ended_) return out;
  if (face_ >= n_f_) {
    out.push_back(kTokenEnd);
    return out;
  }
  for (int e : fe_[face_]) {
    if (used_in_face_[e] == face_) continue;
    for (int dir = 0; dir < 2; ++dir) {
      const int t = half_edge_token(e, dir);
      if (used_[t]) continue;
      if (chain_.empty() || !joins_edge_ends(ev_head_slot(chain_.back()), ev_tail_slot(t))) out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  if (!chain_.empty() && !joins_edge_ends(ev_head_slot(chain_.back()), ev_tail_slot(chain_.front()))) {
    out.push_back(kTokenLoop);
  }
  if (chain_.empty() && loops_in_face_ > 0 && edges_in_face_ == static_cast<int>(fe_[face_].size())) {
    out.push_back(kTokenFace);
  }
  return out;
}

bool EvGrammar::is_allowed(int token) const {
  const auto a = allowed();
  return std::find(a.begin(), a.end(), token) != a.end();
}

void EvGrammar::push(int token) {
  if (!is_allowed(token)) {
    throw Error(ErrorCode::MalformedSequence,
                "token " + std::to_string(token) + " not allowed in face " + std::to_string(face_));
  }
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  };
  if (is_half_edge_token(token)) {
    if (!chain_.empty()) unite(ev_head_slot(chain_.back()), ev_tail_slot(token));
    chain_.push_back(token);
    used_[token] = true;
    used_in_face_[token / 2] = face_;
    ++edges_in_face_;
  } else if (token == kTokenLoop) {
    unite(ev_head_slot(chain_.back()), ev_tail_slot(chain_.front()));
    chain_.clear();
    ++loops_in_face_;
  } else if (token == kTokenFace) {
    ++face_;
    loops_in_face_ = edges_in_face_ = 0;
  } else {
    ended_ = true;
  }
}

EvDecoder::EvDecoder(const EvDecoderConfig& c, std::mt19937_64& rng)
    : cfg(c),
      conditioner(c.net.d_model, rng),
      gcn1(c.net.d_model, c.net.d_model, rng),
      gcn2(c.net.d_model, c.net.d_model, rng),
      endpoint_proj(6, c.net.d_model, rng),
      direction_embedding(nn::make_param(nn::trunc_normal(2, c.net.d_model, nn::kInitStd, rng))),
      special_embedding(nn::make_param(nn::trunc_normal(3, c.net.d_model, nn::kInitStd, rng))),
      bos(nn::make_param(nn::trunc_normal(1, c.net.d_model, nn::kInitStd, rng))),
      encoder(with_causal(c.net, false), false, rng),
      decoder(with_causal(c.net, true), true, rng),
      pointer(c.net.d_model, rng) {}

Tensor EvDecoder::encode(const EvInput& in, const nn::Context& ctx) const {
  const int n_e = static_cast<int>(in.ef.rows.size());
  if (n_e == 0) throw Error(ErrorCode::EmptyCandidates, "no edges to decode");
  const Tensor h = conditioner.embed(in.ef, in.n_f, in.boxes, in.edges, cfg.ablation).rows;

  std::vector<std::array<int, 2>> adjacency;
  for (const auto& edges : face_edges(in.ef, in.n_f))
    for (std::size_t i = 0; i < edges.size(); ++i)
      for (std::size_t j = i + 1; j < edges.size(); ++j) adjacency.push_back({edges[i], edges[j]});
  const Mat a_hat = nn::normalized_adjacency(n_e, adjacency);
  const Tensor context = nn::add(h, gcn2.forward(gcn1.forward(h, a_hat), a_hat));

  std::vector<int> edge_of(static_cast<std::size_t>(2 * n_e)), dir_of(static_cast<std::size_t>(2 * n_e));
  Mat endpoints = Mat::Zero(2 * n_e, 6);
  const bool use_curves = cfg.ablation != Ablation::MaskEdges;
  for (int e = 0; e < n_e; ++e) {
    for (int dir = 0; dir < 2; ++dir) {
      const int t = half_edge_token(e, dir);
      edge_of[t] = e;
      dir_of[t] = dir;
      if (use_curves) {
        const auto first = in.edges.row(e).segment(0, 3), last = in.edges.row(e).segment(9, 3);
        endpoints.row(t).segment(0, 3) = dir == 0 ? first : last;
        endpoints.row(t).segment(3, 3) = dir == 0 ? last : first;
      }
    }
  }
  const Tensor half = nn::add(nn::add(nn::gather_rows(context, edge_of), nn::gather_rows(direction_embedding, dir_of)),
                              endpoint_proj.forward(Tensor(endpoints)));
  const Tensor parts[] = {half, special_embedding};
  return encoder.forward(ctx.drop(nn::concat_rows(parts)), nullptr, ctx);
}

Tensor EvDecoder::decode_states(const Tensor& memory, int n_e, const std::vector<int>& prefix,
                                const nn::Context& ctx) const {
  const int d = cfg.net.d_model;
  std::vector<int> idx;
  idx.reserve(prefix.size());
  std::vector<double> face_pos{0.0};
  int face = 0;
  for (int t : prefix) {
    idx.push_back(ev_candidate_index(t, n_e));
    if (t == kTokenFace) ++face;
    face_pos.push_back(face);
  }
  Tensor x = bos;
  if (!idx.empty()) {
    const Tensor parts[] = {bos, nn::gather_rows(memory, idx)};
    x = nn::concat_rows(parts);
  }
  const int len = static_cast<int>(face_pos.size());
  x = nn::add(nn::add(x, positions(len, d)), Tensor(nn::sinusoidal_encoding(face_pos, d)));
  return decoder.forward(ctx.drop(x), &memory, ctx);
}

void EvDecoder::collect(const std::string& prefix, nn::ParamList& out) const {
  conditioner.collect(prefix + "conditioner.", out);
  gcn1.collect(prefix + "gcn1.", out);
  gcn2.collect(prefix + "gcn2.", out);
  endpoint_proj.collect(prefix + "endpoint_proj.", out);
  out.push_back({prefix + "direction_embedding", direction_embedding});
  out.push_back({prefix + "special_embedding", special_embedding});
  out.push_back({prefix + "bos", bos});
  encoder.collect(prefix + "encoder.", out);
  decoder.collect(prefix + "decoder.", out);
  pointer.collect(prefix + "pointer.", out);
}

Tensor ev_loss(const EvDecoder& model, const EvInput& in, const EvSequence& seq, const nn::Context& ctx) {
  const auto& t = seq.tokens;
  if (t.empty()) throw Error(ErrorCode::MalformedSequence, "empty sequence");
  const int n_e = static_cast<int>(in.ef.rows.size());
  const int m = 2 * n_e + 3;
  EvGrammar grammar(in.ef, in.n_f);
  nn::BoolMat allowed = nn::BoolMat::Constant(static_cast<Eigen::Index>(t.size()), m, false);
  std::vector<int> targets;
  targets.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (int a : grammar.allowed()) allowed(static_cast<Eigen::Index>(i), ev_candidate_index(a, n_e)) = true;
    grammar.push(t[i]);
    targets.push_back(ev_candidate_index(t[i], n_e));
  }
  if (!grammar.finished()) throw Error(ErrorCode::MalformedSequence, "sequence ends before the end token");

  const Tensor memory = model.encode(in, ctx);
  const std::vector<int> prefix(t.begin(), t.end() - 1);
  const Tensor logits = model.pointer.logits(model.decode_states(memory, n_e, prefix, ctx), memory);
  const Tensor logp = nn::log_softmax_rows(logits, &allowed);
  return nn::scale(nn::mean(nn::pick(logp, targets)), -1.0);
}

EvSample ev_sample(const EvDecoder& model, const EvInput& in, std::uint64_t seed, const EvSampleOptions& opt) {
  std::mt19937_64 rng(seed);
  const nn::Context ctx;
  const int n_e = static_cast<int>(in.ef.rows.size());
  const Tensor memory = model.encode(in, ctx);
  for (int attempt = 0; attempt <= opt.max_restarts; ++attempt) {
    EvGrammar grammar(in.ef, in.n_f);
    std::vector<int> prefix;
    bool dead_end = false;
    while (!grammar.finished()) {
      const auto allowed = grammar.allowed();
      if (allowed.empty()) {
        dead_end = true;
        break;
      }
      int token = allowed.front();
      if (allowed.size() > 1) {
        const Tensor states = model.decode_states(memory, n_e, prefix, ctx);
        const Tensor logits = model.pointer.logits(nn::slice_rows(states, states.rows() - 1, states.rows()), memory);
        std::vector<int> idx;
        idx.reserve(allowed.size());
        for (int a : allowed) idx.push_back(ev_candidate_index(a, n_e));
        token = ev_candidate_token(sample_index(logits.value().row(0), idx, opt.temperature, rng), n_e);
      }
      grammar.push(token);
      prefix.push_back(token);
    }
    if (!dead_end) return {EvSequence{prefix}, attempt};
  }
  throw Error(ErrorCode::SamplingExhausted,
              "edge-vertex decoding dead-ended after " + std::to_string(opt.max_restarts) + " restarts");
}

}  // namespace hbrep
