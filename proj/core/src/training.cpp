#include "hbrep/training.hpp"

#include <chrono>
#include <cmath>

#include "hbrep/checkpoint.hpp"
#include "hbrep/error.hpp"
#include "hbrep/topo_codec.hpp"

namespace hbrep {

using nn::Mat;
using nn::Tensor;

Preset desk_preset() {
  Preset p;
  p.name = "desk";
  p.topology = nn::TransformerConfig{2, 64, 4, false, 0.0};
  p.diffusion = nn::TransformerConfig{2, 64, 4, false, 0.0};
  return p;
}

Preset paper_preset() {
  Preset p;
  p.name = "paper";
  p.topology = nn::TransformerConfig{4, 128, 4, false, 0.1};
  p.diffusion = nn::TransformerConfig{8, 512, 8, false, 0.1};
  return p;
}

Preset preset_by_name(std::string_view name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw Error(ErrorCode::InvalidArgument, "unknown preset '" + std::string(name) + "'");
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "ef_vae") return ModelKind::EfVae;
  if (s == "ev") return ModelKind::EvDecoder;
  if (s == "box") return ModelKind::Box;
  if (s == "edge") return ModelKind::Edge;
  if (s == "face") return ModelKind::Face;
  if (s == "vertex") return ModelKind::Vertex;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(s) + "'");
}

std::string checkpoint_stem(ModelKind k) {
  switch (k) {
    case ModelKind::EfVae: return "ef_vae";
    case ModelKind::EvDecoder: return "ev_decoder";
    case ModelKind::Box: return "p_box";
    case ModelKind::Edge: return "p_edge";
    case ModelKind::Face: return "p_face";
    case ModelKind::Vertex: return "p_vertex";
  }
  return "";
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, ModelKind k, Ablation a) {
  std::string stem = checkpoint_stem(k);
  if (k == ModelKind::EvDecoder && a != Ablation::None) stem += "_" + std::string(to_string(a));
  return dir / (stem + ".ckpt");
}

TrainingExample make_example(const BrepModel& m) {
  TrainingExample ex;
  ex.model = canonicalize_model(m);
  const BrepModel& c = ex.model;
  ex.ef_seq = flatten_fef(build_fef(c.ef, c.num_faces()));
  ex.ev_seq = encode_ev_sequence(c);
  ex.cond = make_condition_input(c.ef, c.num_faces(), &c.ev, c.num_vertices());
  ex.cond.boxes = boxes_matrix(c.boxes);
  ex.cond.edges = edges_matrix(c.edges);
  ex.cond.faces = faces_matrix(c.faces);
  ex.ev_in = EvInput{c.ef, c.num_faces(), ex.cond.boxes, ex.cond.edges};
  ex.vertices = vertices_matrix(c.vertices);
  return ex;
}

namespace {

using LossFn = std::function<Tensor(const TrainingExample&, const nn::Context&, std::mt19937_64&)>;

TrainResult run_training(const nn::ParamList& params, const std::vector<TrainingExample>& data,
                         const TrainOptions& opt, double dropout, const LossFn& loss_of) {
  if (data.empty()) throw Error(ErrorCode::EmptySet, "no training examples");
  if (opt.steps < 0) throw Error(ErrorCode::InvalidArgument, "negative step count");
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  nn::AdamW optimizer(nn::tensors_of(params), opt.preset.optimizer);
  const nn::Context ctx{true, dropout, &rng};
  const int batch = std::max(1, opt.preset.batch);
  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(opt.steps));
  for (int step = 0; step < opt.steps; ++step) {
    optimizer.zero_grad();
    double total = 0.0;
    for (int b = 0; b < batch; ++b) {
      const TrainingExample& ex = data[pick(rng)];
      nn::Tape tape;
      nn::TapeScope scope(tape);
      const Tensor loss = loss_of(ex, ctx, rng);
      total += loss.item();
      tape.backward(nn::scale(loss, 1.0 / batch));
    }
    optimizer.clip_grad_norm(opt.preset.clip_norm);
    optimizer.step();
    result.losses.push_back(total / batch);
    if (opt.on_step) opt.on_step(step, result.losses.back());
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace

TrainResult train_ef_vae(EfVae& model, const std::vector<TrainingExample>& data, const TrainOptions& opt) {
  return run_training(model.parameters(), data, opt, model.cfg.net.dropout,
                      [&](const TrainingExample& ex, const nn::Context& ctx, std::mt19937_64& rng) {
                        return vae_loss(model, ex.ef_seq, ctx, rng).loss;
                      });
}

TrainResult train_ev_decoder(EvDecoder& model, const std::vector<TrainingExample>& data, const TrainOptions& opt) {
  return run_training(model.parameters(), data, opt, model.cfg.net.dropout,
                      [&](const TrainingExample& ex, const nn::Context& ctx, std::mt19937_64&) {
                        return ev_loss(model, ex.ev_in, ex.ev_seq, ctx);
                      });
}

Mat diffusion_target(GeometryKind kind, const TrainingExample& ex) {
  switch (kind) {
    case GeometryKind::Box: return ex.cond.boxes;
    case GeometryKind::Edge: return ex.cond.edges;
    case GeometryKind::Face: return ex.cond.faces;
    case GeometryKind::Vertex: return ex.vertices;
  }
  return {};
}

TrainResult train_diffusion(DiffusionModel& model, const NoiseSchedule& schedule,
                            const std::vector<TrainingExample>& data, const TrainOptions& opt) {
  return run_training(model.parameters(), data, opt, model.cfg.net.dropout,
                      [&](const TrainingExample& ex, const nn::Context& ctx, std::mt19937_64& rng) {
                        const Mat x0 = diffusion_target(model.cfg.kind, ex);
                        const Tensor cond = model.condition(ex.cond).rows;
                        const std::vector<bool> valid(static_cast<std::size_t>(x0.rows()), true);
                        return diffusion_loss(model, x0, cond, valid, schedule, ctx, rng);
                      });
}

EfVae make_ef_vae(const Preset& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return EfVae(EfVaeConfig{p.topology, p.d_z, p.max_faces}, rng);
}

EvDecoder make_ev_decoder(const Preset& p, Ablation a, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return EvDecoder(EvDecoderConfig{p.topology, a}, rng);
}

DiffusionModel make_diffusion(const Preset& p, GeometryKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return DiffusionModel(DiffusionConfig{kind, p.diffusion, p.max_faces}, rng);
}

namespace {

void put_net(nn::ConfigValues& c, const nn::TransformerConfig& net) {
  c["n_layers"] = net.n_layers;
  c["d_model"] = net.d_model;
  c["n_heads"] = net.n_heads;
  c["dropout"] = net.dropout;
}

double need(const nn::ConfigValues& c, const std::string& key, const std::filesystem::path& path) {
  const auto it = c.find(key);
  if (it == c.end()) throw Error(ErrorCode::ParseError, path.string() + ": missing config record " + key);
  return it->second;
}

nn::TransformerConfig get_net(const nn::ConfigValues& c, const std::filesystem::path& path) {
  nn::TransformerConfig net;
  net.n_layers = static_cast<int>(need(c, "n_layers", path));
  net.d_model = static_cast<int>(need(c, "d_model", path));
  net.n_heads = static_cast<int>(need(c, "n_heads", path));
  net.dropout = need(c, "dropout", path);
  return net;
}

void expect_kind(const nn::ConfigValues& c, ModelKind k, const std::filesystem::path& path) {
  if (static_cast<int>(need(c, "model_kind", path)) != static_cast<int>(k)) {
    throw Error(ErrorCode::ParseError, path.string() + ": checkpoint holds a different model kind than " +
                                           checkpoint_stem(k));
  }
}

ModelKind model_kind_of(GeometryKind g) {
  switch (g) {
    case GeometryKind::Box: return ModelKind::Box;
    case GeometryKind::Edge: return ModelKind::Edge;
    case GeometryKind::Face: return ModelKind::Face;
    case GeometryKind::Vertex: return ModelKind::Vertex;
  }
  return ModelKind::Box;
}

}  // namespace

void save_ef_vae(const std::filesystem::path& path, const EfVae& m) {
  nn::ConfigValues c;
  c["model_kind"] = static_cast<int>(ModelKind::EfVae);
  put_net(c, m.cfg.net);
  c["d_z"] = m.cfg.d_z;
  c["max_faces"] = m.cfg.max_faces;
  nn::save_module(path, m.parameters(), c);
}

void save_ev_decoder(const std::filesystem::path& path, const EvDecoder& m) {
  nn::ConfigValues c;
  c["model_kind"] = static_cast<int>(ModelKind::EvDecoder);
  put_net(c, m.cfg.net);
  c["ablation"] = static_cast<int>(m.cfg.ablation);
  nn::save_module(path, m.parameters(), c);
}

void save_diffusion(const std::filesystem::path& path, const DiffusionModel& m, const NoiseSchedule& s) {
  nn::ConfigValues c;
  c["model_kind"] = static_cast<int>(model_kind_of(m.cfg.kind));
  put_net(c, m.cfg.net);
  c["max_faces"] = m.cfg.max_faces;
  c["timesteps"] = s.T;
  c["beta_min"] = s.betas.front();
  c["beta_max"] = s.betas.back();
  nn::save_module(path, m.parameters(), c);
}

EfVae load_ef_vae(const std::filesystem::path& path) {
  const auto c = nn::read_module_config(path);
  expect_kind(c, ModelKind::EfVae, path);
  std::mt19937_64 rng(0);
  EfVae m(EfVaeConfig{get_net(c, path), static_cast<int>(need(c, "d_z", path)),
                      static_cast<int>(need(c, "max_faces", path))},
          rng);
  nn::load_module(path, m.parameters());
  return m;
}

EvDecoder load_ev_decoder(const std::filesystem::path& path) {
  const auto c = nn::read_module_config(path);
  expect_kind(c, ModelKind::EvDecoder, path);
  std::mt19937_64 rng(0);
  EvDecoder m(EvDecoderConfig{get_net(c, path), static_cast<Ablation>(static_cast<int>(need(c, "ablation", path)))},
              rng);
  nn::load_module(path, m.parameters());
  return m;
}

DiffusionModel load_diffusion(const std::filesystem::path& path, NoiseSchedule* schedule) {
  const auto c = nn::read_module_config(path);
  const int k = static_cast<int>(need(c, "model_kind", path));
  if (k < static_cast<int>(ModelKind::Box) || k > static_cast<int>(ModelKind::Vertex)) {
    throw Error(ErrorCode::ParseError, path.string() + ": not a geometry diffusion checkpoint");
  }
  const auto kind = static_cast<GeometryKind>(k - static_cast<int>(ModelKind::Box));
  std::mt19937_64 rng(0);
  DiffusionModel m(DiffusionConfig{kind, get_net(c, path), static_cast<int>(need(c, "max_faces", path))}, rng);
  nn::load_module(path, m.parameters());
  if (schedule) {
    // The config records are stored as f32; rebuild from the canonical defaults when they match.
    const int T = static_cast<int>(need(c, "timesteps", path));
    double lo = need(c, "beta_min", path), hi = need(c, "beta_max", path);
    if (std::abs(lo - kDefaultBetaMin) < 1e-9) lo = kDefaultBetaMin;
    if (std::abs(hi - kDefaultBetaMax) < 1e-9) hi = kDefaultBetaMax;
    *schedule = make_schedule(T, lo, hi);
  }
  return m;
}

ModelSet load_model_set(const std::filesystem::path& dir, Ablation ablation) {
  ModelSet s;
  s.ef_vae = load_ef_vae(checkpoint_path(dir, ModelKind::EfVae));
  s.ev_decoder = load_ev_decoder(checkpoint_path(dir, ModelKind::EvDecoder, ablation));
  s.p_box = load_diffusion(checkpoint_path(dir, ModelKind::Box), &s.schedule);
  s.p_edge = load_diffusion(checkpoint_path(dir, ModelKind::Edge));
  s.p_face = load_diffusion(checkpoint_path(dir, ModelKind::Face));
  s.p_vertex = load_diffusion(checkpoint_path(dir, ModelKind::Vertex));
  return s;
}

}  // namespace hbrep
