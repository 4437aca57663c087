#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hbrep/dataset_io.hpp"
#include "hbrep/metrics.hpp"
#include "hbrep/pipeline.hpp"
#include "hbrep/training.hpp"

namespace fs = std::filesystem;
using namespace hbrep;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitGate = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f << text;
}

std::string sample_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05d.brep", i);
  return buf;
}

struct GenCorpusArgs {
  std::string family = "mixed";
  int n = 512;
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest;
};

int run_gen_corpus(const GenCorpusArgs& a) {
  const CorpusManifest m = make_synthetic_corpus(a.n, parse_family(a.family), a.seed, a.out);
  const fs::path manifest = a.manifest.empty() ? fs::path(a.out) / "manifest.json" : fs::path(a.manifest);
  m.save(manifest);
  std::printf("wrote %d models to %s, manifest %s\n", m.kept(), a.out.c_str(), manifest.string().c_str());
  return kExitOk;
}

struct FilterArgs {
  std::string in;
  int max_faces = kDefaultMaxFaces;
  int max_edges_per_face = kDefaultMaxEdgesPerFace;
  std::string manifest;
};

int run_filter(const FilterArgs& a) {
  const CorpusManifest m = filter_corpus(list_brep_files(a.in), a.max_faces, a.max_edges_per_face);
  m.save(a.manifest);
  std::printf("kept %d, dropped %zu\n", m.kept(), m.dropped.size());
  for (const auto& [reason, n] : m.drop_counts()) std::printf("  %s: %d\n", reason.c_str(), n);
  return kExitOk;
}

struct TrainArgs {
  std::string model;
  std::string manifest;
  std::string preset = "desk";
  int steps = 2000;
  std::uint64_t seed = 0;
  std::string out;
  std::string ablate = "none";
  int log_every = 100;
};

int run_train(const TrainArgs& a) {
  const ModelKind kind = parse_model_kind(a.model);
  const Ablation ablation = parse_ablation(a.ablate);
  if (ablation != Ablation::None && kind != ModelKind::EvDecoder) {
    throw Error(ErrorCode::InvalidArgument, "--ablate applies to the edge-vertex decoder only");
  }
  const CorpusManifest manifest = CorpusManifest::load(a.manifest);
  std::vector<TrainingExample> data;
  for (const auto& m : load_corpus(manifest, "train")) data.push_back(make_example(m));
  if (data.empty()) throw Error(ErrorCode::EmptySet, "manifest has no training files");

  TrainOptions opt;
  opt.steps = a.steps;
  opt.seed = a.seed;
  opt.preset = preset_by_name(a.preset);
  opt.on_step = [&](int step, double loss) {
    if (a.log_every > 0 && (step + 1) % a.log_every == 0) std::printf("step %d loss %.6f\n", step + 1, loss);
    std::fflush(stdout);
  };
  fs::create_directories(a.out);
  const fs::path path = checkpoint_path(a.out, kind, ablation);
  TrainResult r;
  switch (kind) {
    case ModelKind::EfVae: {
      EfVae m = make_ef_vae(opt.preset, a.seed);
      r = train_ef_vae(m, data, opt);
      save_ef_vae(path, m);
      break;
    }
    case ModelKind::EvDecoder: {
      EvDecoder m = make_ev_decoder(opt.preset, ablation, a.seed);
      r = train_ev_decoder(m, data, opt);
      save_ev_decoder(path, m);
      break;
    }
    default: {
      const GeometryKind g = kind == ModelKind::Box    ? GeometryKind::Box
                             : kind == ModelKind::Edge ? GeometryKind::Edge
                             : kind == ModelKind::Face ? GeometryKind::Face
                                                       : GeometryKind::Vertex;
      DiffusionModel m = make_diffusion(opt.preset, g, a.seed);
      const NoiseSchedule s = make_schedule();
      r = train_diffusion(m, s, data, opt);
      save_diffusion(path, m, s);
      break;
    }
  }
  std::printf("trained %s for %d steps in %.1f s, final loss %.6f, saved %s\n", a.model.c_str(), a.steps, r.seconds,
              r.losses.empty() ? 0.0 : r.losses.back(), path.string().c_str());
  return kExitOk;
}

struct SampleArgs {
  std::string ckpts;
  int n = 64;
  std::uint64_t seed = 0;
  std::string out;
  bool no_snap = false;
  std::string ablate = "none";
  int workers = 1;
  bool timings = false;
};

int run_sample(const SampleArgs& a) {
  const ModelSet models = load_model_set(a.ckpts, parse_ablation(a.ablate));
  PipelineConfig cfg;
  cfg.snap = !a.no_snap;
  const auto results = generate_batch(models, cfg, a.n, a.seed, a.workers);
  fs::create_directories(a.out);
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  std::string traces;
  int produced = 0, valid = 0;
  for (int i = 0; i < a.n; ++i) {
    const auto& r = results[static_cast<std::size_t>(i)];
    nlohmann::ordered_json item = {{"index", i}, {"seed", item_seed(a.seed, i)}};
    if (r.ok()) {
      write_brep(*r.model, fs::path(a.out) / sample_name(i));
      item["file"] = sample_name(i);
      item["valid"] = r.valid();
      ++produced;
      valid += r.valid() ? 1 : 0;
    } else {
      item["failed_stage"] = r.failed_stage ? std::string(to_string(*r.failed_stage)) : std::string("unknown");
      item["error"] = r.error;
    }
    items.push_back(item);
    traces += "# sample " + std::to_string(i) + "\n" + r.trace.to_text(a.timings) + "\n";
  }
  const nlohmann::ordered_json summary = {{"n", a.n}, {"seed", a.seed}, {"produced", produced},
                                          {"valid", valid}, {"snap", !a.no_snap}, {"ablation", a.ablate},
                                          {"items", items}};
  write_text(fs::path(a.out) / "samples.json", summary.dump(2) + "\n");
  write_text(fs::path(a.out) / "trace.txt", traces);
  std::printf("produced %d of %d, valid %d\n", produced, a.n, valid);
  return kExitOk;
}

struct EvalArgs {
  std::string gen;
  std::string ref;
  int points = 2000;
  int grid = kDefaultJsdGrid;
  std::string report;
  int max_ref = 0;
  double min_valid = -1.0;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  std::vector<BrepModel> gen;
  for (const auto& p : list_brep_files(a.gen)) gen.push_back(read_brep(p));
  int attempted = -1;
  const fs::path summary = fs::path(a.gen) / "samples.json";
  if (fs::exists(summary)) {
    std::ifstream f(summary);
    attempted = nlohmann::json::parse(f).at("n").get<int>();
  }
  const CorpusManifest manifest = CorpusManifest::load(a.ref);
  std::vector<std::string> ref_paths = manifest.paths("val");
  if (ref_paths.empty()) ref_paths = manifest.paths();
  if (a.max_ref > 0 && static_cast<int>(ref_paths.size()) > a.max_ref) ref_paths.resize(a.max_ref);
  std::vector<BrepModel> ref;
  for (const auto& p : ref_paths) ref.push_back(read_brep(p));
  std::set<Digest> train;
  for (const auto& p : manifest.paths("train")) train.insert(hash_brep(read_brep(p)));

  MetricOptions opt;
  opt.points = a.points;
  opt.grid = a.grid;
  opt.seed = a.seed;
  const MetricReport r = evaluate(gen, ref, train, opt, attempted);
  std::fputs(r.to_text().c_str(), stdout);
  if (!a.report.empty()) write_text(a.report, r.to_json());
  if (a.min_valid >= 0.0 && r.valid < a.min_valid) {
    std::fprintf(stderr, "valid %.4f below gate %.4f\n", r.valid, a.min_valid);
    return kExitGate;
  }
  return kExitOk;
}

int run_validate(const std::string& in, double tol) {
  const BrepModel m = read_brep(in);
  const ValidityReport r = check_validity(m, tol);
  std::printf("%s: %s (%d faces, %d edges, %d vertices)\n", in.c_str(), r.is_valid ? "valid" : "invalid",
              m.num_faces(), m.num_edges(), m.num_vertices());
  for (const auto& v : r.violations) std::printf("  %s entity %d: %s\n", to_string(v.code), v.entity, v.message.c_str());
  for (const auto& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
  return r.is_valid ? kExitOk : kExitGate;
}

int run_export(const std::string& in, const std::string& obj, int tess) {
  export_obj(read_brep(in), obj, tess);
  std::printf("wrote %s\n", obj.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical B-rep generation toolkit"};
  app.require_subcommand(1);

  GenCorpusArgs gc;
  auto* gen_corpus = app.add_subcommand("gen-corpus", "Write a synthetic corpus of exact B-reps");
  gen_corpus->add_option("--family", gc.family, "cuboids, prisms, lbrackets or mixed");
  gen_corpus->add_option("--n", gc.n, "Number of models")->check(CLI::PositiveNumber);
  gen_corpus->add_option("--seed", gc.seed);
  gen_corpus->add_option("--out", gc.out, "Output directory")->required();
  gen_corpus->add_option("--manifest", gc.manifest, "Manifest path (default OUT/manifest.json)");

  FilterArgs fa;
  auto* filter = app.add_subcommand("filter", "Filter a directory of BrepFiles into a manifest");
  filter->add_option("--in", fa.in, "Input directory")->required();
  filter->add_option("--max-faces", fa.max_faces);
  filter->add_option("--max-edges-per-face", fa.max_edges_per_face);
  filter->add_option("--manifest", fa.manifest, "Output manifest path")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one model of the pipeline");
  train->add_option("--model", ta.model, "ef_vae, ev, box, edge, face or vertex")->required();
  train->add_option("--manifest", ta.manifest)->required();
  train->add_option("--preset", ta.preset, "desk or paper");
  train->add_option("--steps", ta.steps)->check(CLI::PositiveNumber);
  train->add_option("--seed", ta.seed);
  train->add_option("--out", ta.out, "Checkpoint directory")->required();
  train->add_option("--ablate", ta.ablate, "none, mask_B or mask_E (ev only)");
  train->add_option("--log-every", ta.log_every);

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Generate models from trained checkpoints");
  sample->add_option("--ckpts", sa.ckpts, "Checkpoint directory")->required();
  sample->add_option("--n", sa.n)->check(CLI::PositiveNumber);
  sample->add_option("--seed", sa.seed);
  sample->add_option("--out", sa.out, "Output directory")->required();
  sample->add_flag("--no-snap", sa.no_snap, "Skip planar sewing and endpoint snapping");
  sample->add_option("--ablate", sa.ablate, "none, mask_B or mask_E");
  sample->add_option("--workers", sa.workers)->check(CLI::PositiveNumber);
  sample->add_flag("--timings", sa.timings, "Record stage wall times in trace.txt");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score generated models against a reference manifest");
  eval->add_option("--gen", ea.gen, "Directory of generated BrepFiles")->required();
  eval->add_option("--ref", ea.ref, "Reference manifest")->required();
  eval->add_option("--points", ea.points)->check(CLI::PositiveNumber);
  eval->add_option("--grid", ea.grid)->check(CLI::PositiveNumber);
  eval->add_option("--report", ea.report, "JSON report path");
  eval->add_option("--max-ref", ea.max_ref, "Cap on reference models (0 keeps all)");
  eval->add_option("--min-valid", ea.min_valid, "Exit 3 when the valid fraction is below this");
  eval->add_option("--seed", ea.seed, "Point sampling seed");

  std::string v_in;
  double v_tol = kDefaultValidityTol;
  auto* validate = app.add_subcommand("validate", "Check one BrepFile for validity");
  validate->add_option("--in", v_in)->required();
  validate->add_option("--tol", v_tol);

  std::string x_in, x_obj;
  int x_tess = 16;
  auto* exp = app.add_subcommand("export", "Tessellate one BrepFile to OBJ");
  exp->add_option("--in", x_in)->required();
  exp->add_option("--obj", x_obj)->required();
  exp->add_option("--tess", x_tess)->check(CLI::Range(2, 1024));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_corpus) return run_gen_corpus(gc);
    if (*filter) return run_filter(fa);
    if (*train) return run_train(ta);
    if (*sample) return run_sample(sa);
    if (*eval) return run_eval(ea);
    if (*validate) return run_validate(v_in, v_tol);
    if (*exp) return run_export(x_in, x_obj, x_tess);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::InvalidArgument ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
