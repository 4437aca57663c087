#include "hbrep/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "hbrep/builders.hpp"
#include "hbrep/error.hpp"
#include "hbrep/geom.hpp"
#include "hbrep/topo_codec.hpp"

namespace hbrep {

namespace {

void put_real(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(v)));
  out += buf;
}

template <std::size_t N>
void put_row(std::string& out, const std::array<double, N>& v) {
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ' ';
    put_real(out, v[i]);
  }
  out += '\n';
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

class TextReader {
 public:
  TextReader(const std::string& text, std::string source) : source_(std::move(source)) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines_.push_back(line);
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::ParseError, source_ + ":" + std::to_string(line_no_) + ": " + why);
  }

  std::vector<std::string_view> next(const std::string& what) {
    if (pos_ >= lines_.size()) {
      line_no_ = static_cast<int>(lines_.size());
      fail("unexpected end of file while reading " + what);
    }
    line_no_ = static_cast<int>(pos_) + 1;
    return split_ws(lines_[pos_++]);
  }

  bool at_end() {
    while (pos_ < lines_.size() && split_ws(lines_[pos_]).empty()) ++pos_;
    return pos_ >= lines_.size();
  }

  void expect_header(const std::string& name) {
    const auto t = next("section " + name);
    if (t.size() != 1 || t[0] != name) fail("expected section header " + name);
  }

  /// Reads `rows` lines of `width` values of type T for a section.
  template <typename T>
  std::vector<std::vector<T>> rows(const std::string& section, int rows, int width) {
    expect_header(section);
    std::vector<std::vector<T>> out;
    for (int r = 0; r < rows; ++r) {
      const auto t = next(section + " row " + std::to_string(r));
      if (!t.empty() && std::isalpha(static_cast<unsigned char>(t[0][0]))) {
        fail(section + ": expected " + std::to_string(rows) + " rows, found " + std::to_string(r));
      }
      if (static_cast<int>(t.size()) != width) {
        fail(section + " row " + std::to_string(r) + ": expected " + std::to_string(width) + " values, found " +
             std::to_string(t.size()));
      }
      std::vector<T> row;
      for (auto s : t) {
        T v{};
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) fail(section + ": cannot parse '" + std::string(s) + "'");
        row.push_back(v);
      }
      out.push_back(std::move(row));
    }
    return out;
  }

  const std::string& source() const { return source_; }

 private:
  std::vector<std::string> lines_;
  std::string source_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string brep_to_string(const BrepModel& m) {
  m.check_structure();
  std::string out = "HBREP " + std::to_string(kBrepFileVersion) + "\n";
  out += "counts " + std::to_string(m.num_vertices()) + " " + std::to_string(m.num_edges()) + " " +
         std::to_string(m.num_faces()) + "\n";
  out += "V\n";
  for (const Vec3& v : m.vertices) put_row(out, std::array<double, 3>{v.x(), v.y(), v.z()});
  out += "E\n";
  for (const auto& e : m.edges) put_row(out, e.flat());
  out += "F\n";
  for (const auto& f : m.faces) put_row(out, f.flat());
  out += "B\n";
  for (const auto& b : m.boxes) put_row(out, b.flat());
  out += "EF\n";
  for (const auto& r : m.ef.rows) out += std::to_string(r[0]) + " " + std::to_string(r[1]) + "\n";
  out += "EV\n";
  for (const auto& r : m.ev.rows) out += std::to_string(r[0]) + " " + std::to_string(r[1]) + "\n";
  out += "END\n";
  return out;
}

BrepModel brep_from_string(const std::string& text, const std::string& source) {
  TextReader in(text, source);
  const auto header = in.next("header");
  if (header.size() != 2 || header[0] != "HBREP") in.fail("missing HBREP header");
  int version = 0;
  const auto [p, ec] = std::from_chars(header[1].data(), header[1].data() + header[1].size(), version);
  if (ec != std::errc() || p != header[1].data() + header[1].size()) in.fail("bad version field");
  if (version != kBrepFileVersion) {
    throw Error(ErrorCode::VersionUnsupported, source + ": file version " + std::to_string(version));
  }
  const auto counts = in.next("counts");
  int n[3] = {0, 0, 0};
  if (counts.size() != 4 || counts[0] != "counts") in.fail("expected 'counts Nv Ne Nf'");
  for (int k = 0; k < 3; ++k) {
    const auto s = counts[k + 1];
    const auto [q, e2] = std::from_chars(s.data(), s.data() + s.size(), n[k]);
    if (e2 != std::errc() || q != s.data() + s.size() || n[k] < 0) in.fail("bad count '" + std::string(s) + "'");
  }
  BrepModel m;
  for (const auto& r : in.rows<float>("V", n[0], 3)) m.vertices.emplace_back(r[0], r[1], r[2]);
  for (const auto& r : in.rows<float>("E", n[1], 12)) {
    const std::vector<double> d(r.begin(), r.end());
    m.edges.push_back(EdgeCurve::from_flat(d));
  }
  for (const auto& r : in.rows<float>("F", n[2], 48)) {
    const std::vector<double> d(r.begin(), r.end());
    m.faces.push_back(FaceSurface::from_flat(d));
  }
  for (const auto& r : in.rows<float>("B", n[2], 6)) {
    const std::vector<double> d(r.begin(), r.end());
    m.boxes.push_back(Aabb::from_flat(d));
  }
  for (const auto& r : in.rows<int>("EF", n[1], 2)) m.ef.rows.push_back({r[0], r[1]});
  for (const auto& r : in.rows<int>("EV", n[1], 2)) m.ev.rows.push_back({r[0], r[1]});
  in.expect_header("END");
  if (!in.at_end()) in.fail("content after END");
  try {
    m.check_structure();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, source + ": " + e.what());
  }
  return m;
}

void write_brep(const BrepModel& m, const std::filesystem::path& path) { write_file(path, brep_to_string(m)); }

BrepModel read_brep(const std::filesystem::path& path) { return brep_from_string(read_file(path), path.string()); }

std::vector<std::filesystem::path> list_brep_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".brep") out.push_back(entry.path());
  }
  if (ec) throw Error(ErrorCode::IoError, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::TooManyFaces: return "TooManyFaces";
    case DropReason::TooManyEdgesPerFace: return "TooManyEdgesPerFace";
    case DropReason::SeamEdge: return "SeamEdge";
    case DropReason::TooManySharedEdges: return "TooManySharedEdges";
    case DropReason::Unrepresentable: return "Unrepresentable";
    case DropReason::ParseError: return "ParseError";
  }
  return "ParseError";
}

namespace {

DropReason parse_drop_reason(std::string_view s) {
  for (auto r : {DropReason::TooManyFaces, DropReason::TooManyEdgesPerFace, DropReason::SeamEdge,
                 DropReason::TooManySharedEdges, DropReason::Unrepresentable, DropReason::ParseError}) {
    if (to_string(r) == s) return r;
  }
  throw Error(ErrorCode::ParseError, "unknown drop reason '" + std::string(s) + "'");
}

int max_face_degree(const BrepModel& m) {
  int k = 0;
  for (const auto& row : face_edges(m.ef, m.num_faces())) k = std::max(k, static_cast<int>(row.size()));
  return k;
}

}  // namespace

std::map<std::string, int> CorpusManifest::drop_counts() const {
  std::map<std::string, int> out;
  for (const auto& d : dropped) ++out[std::string(to_string(d.reason))];
  return out;
}

std::vector<std::string> CorpusManifest::paths(std::string_view split) const {
  std::vector<std::string> out;
  for (const auto& f : files)
    if (split.empty() || f.split == split) out.push_back(f.path);
  return out;
}

std::string CorpusManifest::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& f : files) {
    j["files"].push_back(
        {{"path", f.path}, {"n_faces", f.n_faces}, {"max_edges_per_face", f.max_edges_per_face}, {"split", f.split}});
  }
  j["dropped"] = nlohmann::ordered_json::array();
  for (const auto& d : dropped) {
    j["dropped"].push_back({{"path", d.path}, {"reason", to_string(d.reason)}, {"detail", d.detail}});
  }
  j["stats"] = {{"kept", kept()}, {"dropped", static_cast<int>(dropped.size())}, {"drop_reasons", drop_counts()}};
  return j.dump(2) + "\n";
}

CorpusManifest CorpusManifest::from_json(const std::string& text) {
  CorpusManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("path").get<std::string>(), f.at("n_faces").get<int>(),
                         f.at("max_edges_per_face").get<int>(), f.at("split").get<std::string>()});
    }
    if (j.contains("dropped")) {
      for (const auto& d : j.at("dropped")) {
        m.dropped.push_back({d.at("path").get<std::string>(), parse_drop_reason(d.at("reason").get<std::string>()),
                             d.value("detail", std::string())});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  return m;
}

// Entry paths are stored relative to the manifest's directory so a corpus
// can be moved or read from any working directory.
void CorpusManifest::save(const std::filesystem::path& path) const {
  namespace fs = std::filesystem;
  const fs::path base = fs::absolute(path).parent_path();
  CorpusManifest rel = *this;
  for (auto& f : rel.files) f.path = fs::absolute(f.path).lexically_normal().lexically_proximate(base).string();
  write_file(path, rel.to_json());
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path base = fs::absolute(path).parent_path();
  CorpusManifest m = from_json(read_file(path));
  for (auto& f : m.files)
    if (fs::path(f.path).is_relative()) f.path = (base / f.path).lexically_normal().string();
  return m;
}

std::string split_for(const std::string& path) {
  const std::string name = std::filesystem::path(path).filename().string();
  return fnv1a(name) % 10 == 0 ? "val" : "train";
}

CorpusManifest filter_corpus(const std::vector<std::filesystem::path>& paths, int max_faces, int max_edges_per_face) {
  CorpusManifest out;
  for (const auto& p : paths) {
    const std::string name = p.string();
    BrepModel m;
    try {
      m = read_brep(p);
    } catch (const Error& e) {
      out.dropped.push_back({name, DropReason::ParseError, e.what()});
      continue;
    }
    const int n_f = m.num_faces();
    const int degree = max_face_degree(m);
    if (n_f > max_faces) {
      out.dropped.push_back({name, DropReason::TooManyFaces, std::to_string(n_f) + " faces"});
      continue;
    }
    if (degree > max_edges_per_face) {
      out.dropped.push_back({name, DropReason::TooManyEdgesPerFace, std::to_string(degree) + " edges on one face"});
      continue;
    }
    if (std::any_of(m.ef.rows.begin(), m.ef.rows.end(), [](const IndexPair& r) { return r[0] == r[1]; })) {
      out.dropped.push_back({name, DropReason::SeamEdge, "edge bounded by a single face"});
      continue;
    }
    const FefMatrix fef = build_fef(m.ef, n_f);
    if (std::any_of(fef.counts.begin(), fef.counts.end(), [](int c) { return c > kMaxSharedEdges; })) {
      out.dropped.push_back({name, DropReason::TooManySharedEdges, "two faces share more than 8 edges"});
      continue;
    }
    try {
      const BrepModel c = canonicalize_model(m);
      encode_ev_sequence(c);
    } catch (const Error& e) {
      out.dropped.push_back({name, DropReason::Unrepresentable, e.what()});
      continue;
    }
    out.files.push_back({name, n_f, degree, split_for(name)});
  }
  return out;
}

Family parse_family(std::string_view s) {
  if (s == "cuboids") return Family::Cuboids;
  if (s == "prisms") return Family::Prisms;
  if (s == "lbrackets") return Family::LBrackets;
  if (s == "mixed") return Family::Mixed;
  throw Error(ErrorCode::InvalidArgument, "unknown family '" + std::string(s) + "'");
}

std::string_view to_string(Family f) {
  switch (f) {
    case Family::Cuboids: return "cuboids";
    case Family::Prisms: return "prisms";
    case Family::LBrackets: return "lbrackets";
    case Family::Mixed: return "mixed";
  }
  return "mixed";
}

BrepModel synthetic_model(Family f, std::mt19937_64& rng) {
  if (f == Family::Mixed) f = static_cast<Family>(std::uniform_int_distribution<int>(0, 2)(rng));
  BrepModel m;
  switch (f) {
    case Family::Cuboids: m = random_cuboid(rng); break;
    case Family::Prisms: m = random_prism(rng, std::uniform_int_distribution<int>(3, 8)(rng)); break;
    default: m = random_l_bracket(rng); break;
  }
  normalize_to_unit_cube(m);
  quantize_to_float(m);
  return m;
}

CorpusManifest make_synthetic_corpus(int n, Family f, std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "corpus size must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  std::mt19937_64 rng(seed);
  CorpusManifest out;
  for (int i = 0; i < n; ++i) {
    const BrepModel m = synthetic_model(f, rng);
    char name[64];
    std::snprintf(name, sizeof name, "%s_%05d.brep", std::string(to_string(f)).c_str(), i);
    const auto path = out_dir / name;
    write_brep(m, path);
    out.files.push_back({path.string(), m.num_faces(), max_face_degree(m), split_for(name)});
  }
  return out;
}

std::vector<BrepModel> load_corpus(const CorpusManifest& manifest, std::string_view split) {
  std::vector<BrepModel> out;
  for (const auto& p : manifest.paths(split)) out.push_back(read_brep(p));
  return out;
}

std::string obj_to_string(const BrepModel& m, int tess_n) {
  if (tess_n < 2) throw Error(ErrorCode::InvalidArgument, "tessellation needs at least 2 samples per side");
  constexpr double kMerge = 1e-6;
  std::vector<Vec3> verts;
  std::unordered_map<std::string, int> index;
  auto vertex_id = [&](const Vec3& p) {
    char key[96];
    std::snprintf(key, sizeof key, "%lld %lld %lld", std::llround(p.x() / kMerge), std::llround(p.y() / kMerge),
                  std::llround(p.z() / kMerge));
    const auto [it, inserted] = index.emplace(key, static_cast<int>(verts.size()));
    if (inserted) verts.push_back(p);
    return it->second;
  };
  std::vector<std::array<int, 3>> tris;
  for (const auto& f : m.faces) {
    const auto grid = geom::surface_grid(f, tess_n);
    std::vector<int> ids;
    ids.reserve(grid.size());
    for (const Vec3& p : grid) ids.push_back(vertex_id(p));
    for (int i = 0; i + 1 < tess_n; ++i) {
      for (int j = 0; j + 1 < tess_n; ++j) {
        const int a = ids[i * tess_n + j], b = ids[(i + 1) * tess_n + j];
        const int c = ids[(i + 1) * tess_n + j + 1], d = ids[i * tess_n + j + 1];
        if (a != b && b != c && a != c) tris.push_back({a, b, c});
        if (a != c && c != d && a != d) tris.push_back({a, c, d});
      }
    }
  }
  std::string out;
  char buf[128];
  for (const Vec3& p : verts) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  for (const auto& t : tris) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += buf;
  }
  return out;
}

void export_obj(const BrepModel& m, const std::filesystem::path& path, int tess_n) {
  write_file(path, obj_to_string(m, tess_n));
}

}  // namespace hbrep
