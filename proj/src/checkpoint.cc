#include "kgrec/checkpoint.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace kgrec {

namespace {

constexpr std::array<char, 8> kMagic = {'K', 'G', 'R', 'E', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void tensor(const std::string& name, const Matrix& m) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u64(m.rows());
    u64(m.cols());
    u64(m.size());
    for (double v : m.values()) f32(static_cast<float>(v));
  }

 private:
  template <class T>
  void le(T v) {
    std::array<unsigned char, sizeof(T)> b{};
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    bytes(b.data(), b.size());
  }
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw CheckpointError(path_ + ": truncated checkpoint");
  }
  std::pair<std::string, Matrix> tensor() {
    const std::uint32_t len = u32();
    if (len > 4096) throw CheckpointError(path_ + ": corrupt tensor name length");
    std::string name(len, '\0');
    bytes(name.data(), len);
    const std::uint64_t rows = u64(), cols = u64(), count = u64();
    if (rows * cols != count) throw CheckpointError(path_ + ": tensor '" + name + "' has inconsistent shape");
    Matrix m(rows, cols);
    for (double& v : m.values()) v = static_cast<double>(f32());
    return {name, std::move(m)};
  }

 private:
  template <class T>
  T le() {
    std::array<unsigned char, sizeof(T)> b{};
    bytes(b.data(), b.size());
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
  }
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    Writer w(out);
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.dim));
    w.u64(params.entity_embed.rows());
    w.u64(params.relation_embed.rows());
    w.u64(params.user_embed.rows());
    w.u64(params.step);
    const auto ts = params.tensors();
    w.u32(static_cast<std::uint32_t>(ts.size()));
    for (const auto& [name, m] : ts) w.tensor(name, *m);
    w.u32(static_cast<std::uint32_t>(params.adam_m.size()));
    for (std::size_t i = 0; i < params.adam_m.size(); ++i) w.tensor("adam_m/" + ts.at(i).first, params.adam_m[i]);
    for (std::size_t i = 0; i < params.adam_v.size(); ++i) w.tensor("adam_v/" + ts.at(i).first, params.adam_v[i]);
    out.flush();
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ParamStore load_checkpoint(const std::filesystem::path& path, CheckpointHeader* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  CheckpointHeader h;
  h.version = r.u32();
  if (h.version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(h.version));
  }
  h.dim = r.u32();
  h.num_entities = r.u64();
  h.num_relations = r.u64();
  h.num_users = r.u64();
  h.step = r.u64();

  std::map<std::string, Matrix> loaded;
  const std::uint32_t n = r.u32();
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto [name, m] = r.tensor();
    order.push_back(name);
    loaded.emplace(std::move(name), std::move(m));
  }
  ParamStore p;
  p.dim = h.dim;
  if (loaded.count("cf_user_embed")) {
    p.cf_user_embed = Matrix(1, 1);  // marks presence so tensors() lists the slots
  }
  auto ts = p.tensors();
  if (ts.size() != n) throw CheckpointError(path.string() + ": unexpected tensor count");
  for (auto& [name, slot] : ts) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw CheckpointError(path.string() + ": missing tensor '" + name + "'");
    *slot = std::move(it->second);
  }
  const std::uint32_t nm = r.u32();
  if (nm != ts.size()) throw CheckpointError(path.string() + ": optimizer state does not match tensors");
  p.adam_m.resize(nm);
  p.adam_v.resize(nm);
  for (std::uint32_t i = 0; i < nm; ++i) {
    auto [name, m] = r.tensor();
    if (name != "adam_m/" + ts[i].first) throw CheckpointError(path.string() + ": unexpected moment " + name);
    p.adam_m[i] = std::move(m);
  }
  for (std::uint32_t i = 0; i < nm; ++i) {
    auto [name, m] = r.tensor();
    if (name != "adam_v/" + ts[i].first) throw CheckpointError(path.string() + ": unexpected moment " + name);
    p.adam_v[i] = std::move(m);
  }
  p.step = h.step;
  if (p.entity_embed.cols() != h.dim || p.entity_embed.rows() != h.num_entities ||
      p.relation_embed.rows() != h.num_relations || p.user_embed.rows() != h.num_users) {
    throw CheckpointError(path.string() + ": header does not match tensor shapes");
  }
  if (header) *header = h;
  return p;
}

void round_to_checkpoint_precision(ParamStore& params) {
  auto round = [](Matrix& m) {
    for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
  };
  for (auto& [name, m] : params.tensors()) round(*m);
  for (auto& m : params.adam_m) round(m);
  for (auto& m : params.adam_v) round(m);
}

}  // namespace kgrec
