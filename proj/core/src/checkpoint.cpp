#include "hbrep/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "hbrep/error.hpp"

namespace hbrep::nn {

namespace {

constexpr char kMagic[8] = {'H', 'B', 'R', 'P', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  std::string bytes(std::size_t n, const char* field) {
    need(n, field);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const char* field) {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::ParseError, path_ + ": truncated while reading " + field + " at byte " + std::to_string(pos_));
    }
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    std::size_t n = 1;
    for (int d : r.shape) n *= static_cast<std::size_t>(d);
    if (n != r.data.size()) throw Error(ErrorCode::ShapeMismatch, "record " + r.name + " payload does not match its shape");
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (int d : r.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : r.data) put_f32(out, f);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.bytes(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
    throw Error(ErrorCode::ParseError, path.string() + ": not a checkpoint container");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionUnsupported, path.string() + ": checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32("record count");
  std::vector<CheckpointRecord> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    rec.name = r.bytes(r.u32("name length"), "name");
    const std::uint32_t rank = r.u32("rank");
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      rec.shape.push_back(static_cast<int>(r.u32("shape")));
      n *= static_cast<std::size_t>(rec.shape.back());
    }
    rec.data.reserve(n);
    for (std::size_t k = 0; k < n; ++k) rec.data.push_back(r.f32("payload"));
    out.push_back(std::move(rec));
  }
  if (!r.at_end()) throw Error(ErrorCode::ParseError, path.string() + ": trailing bytes after last record");
  return out;
}

void save_module(const std::filesystem::path& path, const ParamList& params, const ConfigValues& config) {
  std::vector<CheckpointRecord> recs;
  for (const auto& p : params) {
    CheckpointRecord r{p.name, {p.tensor.rows(), p.tensor.cols()}, {}};
    const Mat& v = p.tensor.value();
    r.data.reserve(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) r.data.push_back(static_cast<float>(v.data()[i]));
    recs.push_back(std::move(r));
  }
  for (const auto& [k, v] : config) recs.push_back({kConfigPrefix + k, {1}, {static_cast<float>(v)}});
  write_checkpoint(path, recs);
}

ConfigValues read_module_config(const std::filesystem::path& path) {
  ConfigValues out;
  const std::string prefix = kConfigPrefix;
  for (const auto& r : read_checkpoint(path)) {
    if (r.name.rfind(prefix, 0) == 0 && r.data.size() == 1) out[r.name.substr(prefix.size())] = r.data[0];
  }
  return out;
}

void load_module(const std::filesystem::path& path, const ParamList& params) {
  const auto recs = read_checkpoint(path);
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : recs) by_name[r.name] = &r;
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw Error(ErrorCode::ParseError, path.string() + ": missing parameter " + p.name);
    const CheckpointRecord& r = *it->second;
    if (r.shape != std::vector<int>{p.tensor.rows(), p.tensor.cols()}) {
      throw Error(ErrorCode::ParseError, path.string() + ": shape mismatch for " + p.name);
    }
    Tensor t = p.tensor;
    Mat& v = t.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = r.data[static_cast<std::size_t>(i)];
  }
}

}  // namespace hbrep::nn
