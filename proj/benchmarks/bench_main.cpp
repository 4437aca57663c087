#include <benchmark/benchmark.h>

#include <random>

#include "hbrep/builders.hpp"
#include "hbrep/error.hpp"
#include "hbrep/geom.hpp"
#include "hbrep/metrics.hpp"
#include "hbrep/topo_codec.hpp"
#include "hbrep/training.hpp"

using namespace hbrep;

namespace {

TrainingExample l_bracket_example() {
  BrepModel m = make_l_bracket(1.0, 0.8, 0.3, 0.2, 0.5);
  normalize_to_unit_cube(m);
  return make_example(m);
}

void BM_CheckValidity(benchmark::State& state) {
  const BrepModel m = make_l_bracket(1.0, 0.8, 0.3, 0.2, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(check_validity(m));
}
BENCHMARK(BM_CheckValidity);

void BM_EfCodecRoundTrip(benchmark::State& state) {
  const BrepModel m = make_regular_prism(static_cast<int>(state.range(0)), 1.0, 1.0);
  for (auto _ : state) {
    const auto [fef, perm] = canonicalize_faces(build_fef(m.ef, m.num_faces()));
    benchmark::DoNotOptimize(unflatten_fef(flatten_fef(fef)));
  }
}
BENCHMARK(BM_EfCodecRoundTrip)->Arg(6)->Arg(30);

void BM_EvCodecRoundTrip(benchmark::State& state) {
  const BrepModel m = canonicalize_model(make_regular_prism(static_cast<int>(state.range(0)), 1.0, 1.0));
  for (auto _ : state) benchmark::DoNotOptimize(decode_ev_sequence(encode_ev_sequence(m), m.ef));
}
BENCHMARK(BM_EvCodecRoundTrip)->Arg(6)->Arg(30);

void BM_ChamferDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = geom::sample_surface_points(make_unit_cube(), n, 1);
  const auto b = geom::sample_surface_points(make_regular_prism(5, 1.0, 1.0), n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(geom::chamfer_distance(a, b));
}
BENCHMARK(BM_ChamferDistance)->Arg(500)->Arg(2000);

void BM_DiffusionTrainStep(benchmark::State& state) {
  const TrainingExample ex = l_bracket_example();
  const DiffusionModel model = make_diffusion(desk_preset(), GeometryKind::Edge, 1);
  const NoiseSchedule schedule = make_schedule();
  const nn::Mat x0 = diffusion_target(GeometryKind::Edge, ex);
  const std::vector<bool> valid(static_cast<std::size_t>(x0.rows()), true);
  std::mt19937_64 rng(3);
  const nn::Context ctx{true, 0.0, &rng};
  for (auto _ : state) {
    nn::Tape tape;
    nn::TapeScope scope(tape);
    const nn::Tensor loss = diffusion_loss(model, x0, model.condition(ex.cond).rows, valid, schedule, ctx, rng);
    tape.backward(loss);
  }
}
BENCHMARK(BM_DiffusionTrainStep)->Unit(benchmark::kMillisecond);

void BM_DiffusionSample(benchmark::State& state) {
  const TrainingExample ex = l_bracket_example();
  const DiffusionModel model = make_diffusion(desk_preset(), GeometryKind::Vertex, 1);
  const NoiseSchedule schedule = make_schedule(static_cast<int>(state.range(0)), 1e-4, 0.02);
  const nn::Tensor cond = model.condition(ex.cond).rows;
  for (auto _ : state) benchmark::DoNotOptimize(diffusion_sample(model, cond, schedule, 4));
}
BENCHMARK(BM_DiffusionSample)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_EvSample(benchmark::State& state) {
  const TrainingExample ex = l_bracket_example();
  const EvDecoder model = make_ev_decoder(desk_preset(), Ablation::None, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    try {
      benchmark::DoNotOptimize(ev_sample(model, ex.ev_in, ++seed));
    } catch (const Error&) {
      // An untrained decoder may dead-end; the attempt still counts.
    }
  }
}
BENCHMARK(BM_EvSample)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
