#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hbrep/brep.hpp"

namespace hbrep {

inline constexpr int kBrepFileVersion = 1;

/// Line-oriented text: "HBREP 1", "counts Nv Ne Nf", then sections V, E, F,
/// B, EF, EV (one entity per line) and END. Reals use 9 significant digits
/// and are read back as single-precision values, so float-quantized models
/// round-trip exactly.
std::string brep_to_string(const BrepModel& m);
/// Throws ParseError ("<source>:<line>: reason") or VersionUnsupported.
BrepModel brep_from_string(const std::string& text, const std::string& source = "<memory>");
void write_brep(const BrepModel& m, const std::filesystem::path& path);
BrepModel read_brep(const std::filesystem::path& path);

/// Regular files with the .brep extension, sorted by path.
std::vector<std::filesystem::path> list_brep_files(const std::filesystem::path& dir);

enum class DropReason { TooManyFaces, TooManyEdgesPerFace, SeamEdge, TooManySharedEdges, Unrepresentable, ParseError };

std::string_view to_string(DropReason r);

struct ManifestEntry {
  std::string path;
  int n_faces = 0;
  int max_edges_per_face = 0;
  std::string split;  // "train" or "val"
};

struct DroppedFile {
  std::string path;
  DropReason reason = DropReason::ParseError;
  std::string detail;
};

struct CorpusManifest {
  std::vector<ManifestEntry> files;
  std::vector<DroppedFile> dropped;

  int kept() const { return static_cast<int>(files.size()); }
  std::map<std::string, int> drop_counts() const;
  std::vector<std::string> paths(std::string_view split = {}) const;

  std::string to_json() const;
  static CorpusManifest from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);
};

/// Deterministic 90/10 train/val assignment from the file name.
std::string split_for(const std::string& path);

inline constexpr int kDefaultMaxFaces = 50;
inline constexpr int kDefaultMaxEdgesPerFace = 30;

/// Keeps files with at most max_faces faces and at most max_edges_per_face
/// edges on every face that the codecs can represent. Unreadable files are
/// recorded, not fatal.
CorpusManifest filter_corpus(const std::vector<std::filesystem::path>& paths, int max_faces = kDefaultMaxFaces,
                             int max_edges_per_face = kDefaultMaxEdgesPerFace);

enum class Family { Cuboids, Prisms, LBrackets, Mixed };

Family parse_family(std::string_view s);
std::string_view to_string(Family f);

/// One normalized, float-quantized member of a family.
BrepModel synthetic_model(Family f, std::mt19937_64& rng);

/// Writes n models as <family>_<index>.brep into out_dir and returns the
/// manifest of the written files. Deterministic per seed.
CorpusManifest make_synthetic_corpus(int n, Family f, std::uint64_t seed, const std::filesystem::path& out_dir);

/// Loads every file of a manifest split ("" for all).
std::vector<BrepModel> load_corpus(const CorpusManifest& manifest, std::string_view split = {});

/// Triangle mesh of all faces: tess_n x tess_n parametric grid per face,
/// vertices merged within 1e-6. Throws IoError.
void export_obj(const BrepModel& m, const std::filesystem::path& path, int tess_n = 16);
std::string obj_to_string(const BrepModel& m, int tess_n = 16);

}  // namespace hbrep
