#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "hbrep/builders.hpp"
#include "hbrep/error.hpp"
#include "hbrep/training.hpp"

using namespace hbrep;

namespace {

Preset tiny_preset() {
  Preset p = desk_preset();
  p.topology = {1, 16, 2, true, 0.0};
  p.diffusion = {1, 16, 2, false, 0.0};
  p.d_z = 8;
  p.max_faces = 12;
  p.batch = 2;
  p.optimizer.learning_rate = 3e-3;
  return p;
}

std::vector<TrainingExample> cube_and_prism() {
  BrepModel cube = make_unit_cube();
  normalize_to_unit_cube(cube);
  BrepModel prism = make_regular_prism(3, 1.0, 1.0);
  normalize_to_unit_cube(prism);
  return {make_example(cube), make_example(prism)};
}

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t n) {
  return std::accumulate(v.begin() + static_cast<long>(begin), v.begin() + static_cast<long>(begin + n), 0.0) /
         static_cast<double>(n);
}

void expect_decreasing(const TrainResult& r, const char* what) {
  ASSERT_GE(r.losses.size(), 40u) << what;
  const double head = window_mean(r.losses, 0, 20);
  const double tail = window_mean(r.losses, r.losses.size() - 20, 20);
  EXPECT_LT(tail, head) << what << " head " << head << " tail " << tail;
}

void expect_same_parameters(const nn::Module& a, const nn::Module& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].tensor.value(), pb[i].tensor.value()) << pa[i].name;
  }
}

void expect_close_parameters(const nn::Module& a, const nn::Module& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto& va = pa[i].tensor.value();
    EXPECT_LE((va - pb[i].tensor.value()).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + va.cwiseAbs().maxCoeff())) << pa[i].name;
  }
}

TrainOptions options(int steps, std::uint64_t seed = 1) {
  TrainOptions o;
  o.steps = steps;
  o.seed = seed;
  o.preset = tiny_preset();
  return o;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("hbrep_training_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Presets, ByName) {
  EXPECT_EQ(preset_by_name("desk").topology.d_model, 64);
  EXPECT_EQ(preset_by_name("paper").diffusion.d_model, 512);
  EXPECT_EQ(preset_by_name("paper").topology.n_layers, 4);
  try {
    preset_by_name("huge");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Checkpoints, PathsCarryAblationSuffix) {
  EXPECT_EQ(checkpoint_path("d", ModelKind::EfVae).filename(), "ef_vae.ckpt");
  EXPECT_EQ(checkpoint_path("d", ModelKind::EvDecoder, Ablation::MaskBoxes).filename(), "ev_decoder_mask_B.ckpt");
  EXPECT_EQ(checkpoint_path("d", ModelKind::Vertex).filename(), "p_vertex.ckpt");
  EXPECT_EQ(parse_model_kind("ev"), ModelKind::EvDecoder);
}

TEST(MakeExample, CubeFields) {
  const auto ex = cube_and_prism()[0];
  EXPECT_EQ(ex.ef_seq.tokens.size(), 16u);  // 15 pairs plus the end token
  EXPECT_EQ(ex.cond.n_f, 6);
  EXPECT_EQ(ex.vertices.rows(), 8);
  EXPECT_EQ(diffusion_target(GeometryKind::Edge, ex).rows(), 12);
  EXPECT_EQ(diffusion_target(GeometryKind::Face, ex).cols(), 48);
}

TEST(Overfit, EfVaeLearnsCubeAdjacency) {
  const auto data = std::vector<TrainingExample>{cube_and_prism()[0]};
  EfVae vae = make_ef_vae(tiny_preset(), 3);
  const auto r = train_ef_vae(vae, data, options(250));
  expect_decreasing(r, "ef_vae");
  VaeSampleOptions so;
  so.temperature = 0.1;
  const auto s = vae_sample(vae, 5, so);
  EXPECT_EQ(s.seq.tokens, data[0].ef_seq.tokens);
}

TEST(Overfit, EvDecoderRecoversCubeVertices) {
  const auto data = std::vector<TrainingExample>{cube_and_prism()[0]};
  EvDecoder ev = make_ev_decoder(tiny_preset(), Ablation::None, 3);
  const auto r = train_ev_decoder(ev, data, options(150));
  expect_decreasing(r, "ev_decoder");
  EvSampleOptions so;
  so.temperature = 0.1;
  const auto s = ev_sample(ev, data[0].ev_in, 5, so);
  const auto table = decode_ev_sequence(s.seq, data[0].model.ef);
  int n_v = 0;
  for (const auto& r : table.rows) n_v = std::max({n_v, r[0] + 1, r[1] + 1});
  EXPECT_EQ(n_v, 8);
}

TEST(Overfit, DiffusionLossesDecrease) {
  const auto data = cube_and_prism();
  const auto schedule = make_schedule();
  for (GeometryKind k : {GeometryKind::Box, GeometryKind::Edge, GeometryKind::Face, GeometryKind::Vertex}) {
    DiffusionModel m = make_diffusion(tiny_preset(), k, 4);
    expect_decreasing(train_diffusion(m, schedule, data, options(200)), std::string(to_string(k)).c_str());
  }
}

TEST(Training, DeterministicPerSeed) {
  const auto data = cube_and_prism();
  const auto schedule = make_schedule();
  DiffusionModel a = make_diffusion(tiny_preset(), GeometryKind::Box, 4);
  DiffusionModel b = make_diffusion(tiny_preset(), GeometryKind::Box, 4);
  EXPECT_EQ(train_diffusion(a, schedule, data, options(10, 9)).losses,
            train_diffusion(b, schedule, data, options(10, 9)).losses);
}

TEST(Training, EmptyDataRejected) {
  EfVae vae = make_ef_vae(tiny_preset(), 1);
  try {
    train_ef_vae(vae, {}, options(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySet);
  }
}

// Checkpoints store float32, so the first save rounds parameters; after that
// save and load must be exact.
template <class M, class Save, class Load>
std::pair<M, M> reload_twice(const M& m, const std::filesystem::path& path, Save save, Load load) {
  save(path, m);
  M once = load(path);
  expect_close_parameters(m, once);
  save(path, once);
  M twice = load(path);
  expect_same_parameters(once, twice);
  return {std::move(once), std::move(twice)};
}

TEST(Checkpoints, RoundTripPreservesOutputs) {
  const auto dir = temp_dir("roundtrip");
  const auto data = cube_and_prism();
  const Preset p = tiny_preset();

  const auto [vae1, vae2] = reload_twice(make_ef_vae(p, 11), dir / "vae.ckpt",
                                         [](const auto& f, const EfVae& m) { save_ef_vae(f, m); }, load_ef_vae);
  EXPECT_EQ(vae_sample(vae1, 3).seq.tokens, vae_sample(vae2, 3).seq.tokens);

  const auto [ev1, ev2] = reload_twice(make_ev_decoder(p, Ablation::MaskEdges, 12), dir / "ev.ckpt",
                                       [](const auto& f, const EvDecoder& m) { save_ev_decoder(f, m); },
                                       load_ev_decoder);
  EXPECT_EQ(ev2.cfg.ablation, Ablation::MaskEdges);
  EXPECT_EQ(ev_sample(ev1, data[0].ev_in, 4).seq.tokens, ev_sample(ev2, data[0].ev_in, 4).seq.tokens);

  const auto schedule = make_schedule(50, 1e-3, 0.05);
  NoiseSchedule loaded;
  const auto [d1, d2] = reload_twice(
      make_diffusion(p, GeometryKind::Vertex, 13), dir / "d.ckpt",
      [&](const auto& f, const DiffusionModel& m) { save_diffusion(f, m, schedule); },
      [&](const auto& f) { return load_diffusion(f, &loaded); });
  EXPECT_EQ(d2.cfg.kind, GeometryKind::Vertex);
  EXPECT_EQ(loaded.T, 50);
  const nn::Tensor cond = d1.condition(data[0].cond).rows;
  EXPECT_EQ(diffusion_sample(d1, cond, loaded, 2), diffusion_sample(d2, cond, loaded, 2));
}

TEST(Checkpoints, MissingAndCorruptFilesThrow) {
  const auto dir = temp_dir("corrupt");
  try {
    load_ef_vae(dir / "absent.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
  {
    std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  }
  try {
    load_diffusion(dir / "bad.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
}
