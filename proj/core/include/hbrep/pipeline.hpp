#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hbrep/brep.hpp"
#include "hbrep/error.hpp"
#include "hbrep/topo_codec.hpp"
#include "hbrep/training.hpp"

namespace hbrep {

struct PipelineConfig {
  double vae_temperature = 1.0;
  double ev_temperature = 1.0;
  /// Restarts per autoregressive stage.
  int max_restarts = 16;
  /// Planar sewing and endpoint snapping; off measures raw geometric gaps.
  bool snap = true;
  /// Faces whose joint boundary/interior plane fit has rms below this become planes.
  double plane_threshold = 0.05;
  /// Largest vertex move accepted when sewing a vertex onto its incident planes.
  double sew_max_shift = 0.25;
  double validity_tol = kDefaultValidityTol;
};

/// The four generation stages in dependency order, then assembly.
enum class Stage { FaceTopology, EdgeGeometry, VertexTopology, SurfaceGeometry, Assembly };

std::string_view to_string(Stage s);

struct StageRecord {
  Stage stage = Stage::FaceTopology;
  double seconds = 0.0;
  int retries = 0;
  /// Trace fields this stage read.
  std::vector<std::string> inputs;
};

/// Stage outputs in dependency order; later fields stay empty when an
/// earlier stage failed.
struct GenerationTrace {
  std::uint64_t seed = 0;
  std::optional<EfSequence> ef_seq;
  std::optional<FefMatrix> fef;
  std::optional<EdgeFaceTable> ef;
  std::optional<nn::Mat> boxes, edges;
  std::optional<EvSequence> ev_seq;
  std::optional<EdgeVertexTable> ev;
  std::optional<nn::Mat> faces, vertices;
  std::vector<StageRecord> stages;
  std::optional<ValidityReport> validity;

  /// One structured text record. Wall times are omitted when `timings` is false.
  std::string to_text(bool timings = true) const;
};

/// Stage failure carrying the trace up to the failing stage.
class StageFailed : public Error {
 public:
  StageFailed(Stage stage, const Error& cause, GenerationTrace trace);
  Stage stage() const { return stage_; }
  ErrorCode cause() const { return cause_; }
  const GenerationTrace& trace() const { return trace_; }

 private:
  Stage stage_;
  ErrorCode cause_;
  GenerationTrace trace_;
};

struct GenerationResult {
  std::optional<BrepModel> model;
  GenerationTrace trace;
  /// Set when a stage failed.
  std::optional<Stage> failed_stage;
  std::string error;

  bool ok() const { return model.has_value(); }
  bool valid() const { return ok() && trace.validity && trace.validity->is_valid; }
};

/// Runs all four stages, assembles, post-processes and validates.
/// Throws StageFailed; the returned model always passes check_structure.
GenerationResult generate(const ModelSet& models, const PipelineConfig& cfg, std::uint64_t seed);

/// Seed of item i of a batch.
std::uint64_t item_seed(std::uint64_t batch_seed, int index);

/// n independent generations on `workers` threads; stage failures are
/// captured per item. Results do not depend on the worker count.
/// Throws InvalidArgument for n < 1.
std::vector<GenerationResult> generate_batch(const ModelSet& models, const PipelineConfig& cfg, int n,
                                             std::uint64_t seed, int workers = 1);

/// Builds a model from stage outputs; boxes are ordered per axis.
BrepModel assemble(const EdgeFaceTable& ef, const EdgeVertexTable& ev, const nn::Mat& boxes, const nn::Mat& edges,
                   const nn::Mat& faces, const nn::Mat& vertices);

/// Replaces each curve's end control points by its two vertices, choosing
/// the orientation closer to the current curve. Idempotent.
BrepModel snap_endpoints(const BrepModel& m);

/// Plane fitting per face, then (when cfg.snap) planar sewing and endpoint
/// snapping; boxes are recomputed from the final patches.
BrepModel postprocess_model(const BrepModel& m, const PipelineConfig& cfg);

}  // namespace hbrep
