#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hbrep/brep.hpp"
#include "hbrep/conditioning.hpp"
#include "hbrep/diffusion.hpp"
#include "hbrep/models.hpp"
#include "hbrep/nn.hpp"

namespace hbrep {

/// Architecture and optimizer settings shared by all six models.
struct Preset {
  std::string name;
  nn::TransformerConfig topology;   // ef_vae, ev_decoder
  nn::TransformerConfig diffusion;  // p_box, p_edge, p_face, p_vertex
  int d_z = 64;
  int max_faces = 50;
  nn::OptimizerConfig optimizer;
  int batch = 8;  // examples accumulated per optimizer step
  double clip_norm = 1.0;
};

/// 2 layers, width 64, 4 heads everywhere.
Preset desk_preset();
/// Topology 4/128/4, diffusion 8/512/8.
Preset paper_preset();
/// "desk" or "paper"; throws InvalidArgument.
Preset preset_by_name(std::string_view name);

enum class ModelKind { EfVae, EvDecoder, Box, Edge, Face, Vertex };

/// CLI names: ef_vae, ev, box, edge, face, vertex.
ModelKind parse_model_kind(std::string_view s);
/// Checkpoint stem: ef_vae, ev_decoder, p_box, p_edge, p_face, p_vertex.
std::string checkpoint_stem(ModelKind k);
/// Path of a checkpoint inside a directory; the edge-vertex decoder carries
/// an ablation suffix (ev_decoder_mask_B) when not Ablation::None.
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, ModelKind k, Ablation a = Ablation::None);

/// Everything the six losses read from one canonicalized solid.
struct TrainingExample {
  BrepModel model;  // canonical form
  EfSequence ef_seq;
  EvSequence ev_seq;
  ConditionInput cond;  // incidences plus boxes, edges, faces
  EvInput ev_in;
  nn::Mat vertices;
};

/// Canonicalizes and serializes one solid. Throws InvalidArgument for
/// unrepresentable input (seam edges, inconsistent loops).
TrainingExample make_example(const BrepModel& m);

struct TrainOptions {
  int steps = 1000;
  std::uint64_t seed = 0;
  Preset preset;
  /// Called after every optimizer step with the mean loss of its batch.
  std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
  std::vector<double> losses;  // one per optimizer step
  double seconds = 0.0;
};

TrainResult train_ef_vae(EfVae& model, const std::vector<TrainingExample>& data, const TrainOptions& opt);
TrainResult train_ev_decoder(EvDecoder& model, const std::vector<TrainingExample>& data, const TrainOptions& opt);
TrainResult train_diffusion(DiffusionModel& model, const NoiseSchedule& schedule,
                            const std::vector<TrainingExample>& data, const TrainOptions& opt);

/// Regression target of a geometry model for one example.
nn::Mat diffusion_target(GeometryKind kind, const TrainingExample& ex);

EfVae make_ef_vae(const Preset& p, std::uint64_t seed);
EvDecoder make_ev_decoder(const Preset& p, Ablation a, std::uint64_t seed);
DiffusionModel make_diffusion(const Preset& p, GeometryKind kind, std::uint64_t seed);

/// Checkpoints store the architecture as config records so loading needs no preset.
void save_ef_vae(const std::filesystem::path& path, const EfVae& m);
void save_ev_decoder(const std::filesystem::path& path, const EvDecoder& m);
void save_diffusion(const std::filesystem::path& path, const DiffusionModel& m, const NoiseSchedule& s);
EfVae load_ef_vae(const std::filesystem::path& path);
EvDecoder load_ev_decoder(const std::filesystem::path& path);
DiffusionModel load_diffusion(const std::filesystem::path& path, NoiseSchedule* schedule = nullptr);

/// The six trained models of one generation pipeline.
struct ModelSet {
  EfVae ef_vae;
  EvDecoder ev_decoder;
  DiffusionModel p_box, p_edge, p_face, p_vertex;
  NoiseSchedule schedule;
};

/// Loads all six checkpoints from a directory; `ablation` selects the
/// edge-vertex decoder variant. Throws IoError / ParseError.
ModelSet load_model_set(const std::filesystem::path& dir, Ablation ablation = Ablation::None);

}  // namespace hbrep
