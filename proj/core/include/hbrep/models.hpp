#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hbrep/conditioning.hpp"
#include "hbrep/nn.hpp"
#include "hbrep/topo_codec.hpp"

namespace hbrep {

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over all entries:
/// -1/2 sum(1 + logvar - mu^2 - exp(logvar)).
nn::Tensor gaussian_kl(const nn::Tensor& mu, const nn::Tensor& logvar);
double gaussian_kl(double mu, double sigma);

// Face-adjacency vocabulary: counts 0..kMaxSharedEdges, kEfEos, then two
// input-only tokens.
inline constexpr int kEfBos = kEfEos + 1;
inline constexpr int kEfPad = kEfEos + 2;
inline constexpr int kEfVocab = kEfEos + 3;
/// Predicted classes: the counts and kEfEos.
inline constexpr int kEfOutputs = kEfEos + 1;

struct EfVaeConfig {
  nn::TransformerConfig net;
  int d_z = 64;
  int max_faces = 50;
};

/// Sequence VAE over flattened face-adjacency sequences.
class EfVae : public nn::Module {
 public:
  EfVae() = default;
  EfVae(const EfVaeConfig& cfg, std::mt19937_64& rng);

  struct Posterior {
    nn::Tensor mu, logvar;  // 1 x d_z each
  };
  Posterior encode(const EfSequence& seq, const nn::Context& ctx) const;
  /// Next-token logits (len x kEfOutputs) for decoder inputs starting with kEfBos.
  nn::Tensor decode_logits(const std::vector<int>& inputs, const nn::Tensor& z, const nn::Context& ctx) const;
  /// Longest sequence the model will emit, excluding kEfEos.
  int max_length() const { return cfg.max_faces * (cfg.max_faces - 1) / 2; }
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  EfVaeConfig cfg;
  nn::Tensor token_embedding;  // kEfVocab x d
  nn::Transformer encoder, decoder;
  nn::Linear mu_head, logvar_head, z_proj, out_head;
};

struct VaeLoss {
  nn::Tensor loss;  // recon + kl
  double recon = 0.0;
  double kl = 0.0;
};

/// Teacher-forced cross-entropy summed over positions plus the closed-form KL.
/// Throws MalformedSequence for an ill-formed sequence.
VaeLoss vae_loss(const EfVae& model, const EfSequence& seq, const nn::Context& ctx, std::mt19937_64& rng);

struct VaeSampleOptions {
  double temperature = 1.0;
  int max_retries = 16;
};

struct VaeSample {
  EfSequence seq;
  int retries = 0;
};

/// z from the prior, then autoregressive decoding. Rejects lengths that are
/// not n(n-1)/2 for n >= 2. Throws SamplingExhausted.
VaeSample vae_sample(const EfVae& model, std::uint64_t seed, const VaeSampleOptions& opt = {});

/// Candidate slots of the pointer: half-edge tokens first, then <L>, <F>, <E>.
int ev_candidate_index(int token, int n_e);
int ev_candidate_token(int index, int n_e);

/// Incremental edge-vertex sequence grammar. A half-edge is allowed when it
/// is unused, its edge bounds the current face and has not been used in it,
/// and joining it to the open chain merges no edge's two endpoints. <L>
/// closes a non-empty chain under the same endpoint rule; <F> needs a closed
/// loop and every edge of the face used; <E> follows the last face.
class EvGrammar {
 public:
  EvGrammar(const EdgeFaceTable& ef, int n_f);

  /// Allowed tokens at the current position, ascending.
  std::vector<int> allowed() const;
  bool is_allowed(int token) const;
  /// Throws MalformedSequence when the token is not allowed.
  void push(int token);
  bool finished() const { return ended_; }
  int face() const { return face_; }

 private:
  bool joins_edge_ends(int slot_a, int slot_b) const;

  int n_e_ = 0, n_f_ = 0;
  std::vector<std::vector<int>> fe_;
  std::vector<int> parent_;  // union-find over endpoint slots, copied cheaply
  std::vector<bool> used_;
  std::vector<int> used_in_face_;
  std::vector<int> chain_;
  int face_ = 0, loops_in_face_ = 0, edges_in_face_ = 0;
  bool ended_ = false;

  int find(int x) const;
};

/// Inputs of the edge-vertex decoder: level-one topology and geometry.
struct EvInput {
  EdgeFaceTable ef;
  int n_f = 0;
  nn::Mat boxes;  // n_f x 6
  nn::Mat edges;  // n_e x 12
};

struct EvDecoderConfig {
  nn::TransformerConfig net;
  Ablation ablation = Ablation::None;
};

/// Autoregressive pointer decoder over directed half-edges.
class EvDecoder : public nn::Module {
 public:
  EvDecoder() = default;
  EvDecoder(const EvDecoderConfig& cfg, std::mt19937_64& rng);

  /// Encoded candidates: 2 n_e half-edge rows followed by <L>, <F>, <E>.
  nn::Tensor encode(const EvInput& in, const nn::Context& ctx) const;
  /// Decoder states for BOS followed by `prefix` (len(prefix) + 1 rows).
  nn::Tensor decode_states(const nn::Tensor& memory, int n_e, const std::vector<int>& prefix,
                           const nn::Context& ctx) const;
  void collect(const std::string& prefix, nn::ParamList& out) const override;

  EvDecoderConfig cfg;
  EvConditioner conditioner;
  nn::GcnLayer gcn1, gcn2;
  nn::Linear endpoint_proj;
  nn::Tensor direction_embedding;  // 2 x d
  nn::Tensor special_embedding;    // 3 x d
  nn::Tensor bos;                  // 1 x d
  nn::Transformer encoder, decoder;
  nn::PointerHead pointer;
};

/// Teacher-forced NLL over grammar-allowed candidates, averaged over all
/// predicted positions (specials included). Throws MalformedSequence.
nn::Tensor ev_loss(const EvDecoder& model, const EvInput& in, const EvSequence& seq, const nn::Context& ctx);

struct EvSampleOptions {
  double temperature = 1.0;
  int max_restarts = 16;
};

struct EvSample {
  EvSequence seq;
  int restarts = 0;
};

/// Grammar-constrained sampling; throws SamplingExhausted after the restarts.
EvSample ev_sample(const EvDecoder& model, const EvInput& in, std::uint64_t seed, const EvSampleOptions& opt = {});

}  // namespace hbrep
