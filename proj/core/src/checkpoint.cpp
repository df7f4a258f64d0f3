#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mplab/error.hpp"
#include "mplab/minidet.hpp"

namespace mplab::det {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'P', 'L', 'B'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw ConfigError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw ConfigError("write failed for " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path_);
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  void bytes(void* p, std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw ParseError(path_, pos_, std::string("truncated checkpoint while reading ") + what);
    }
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    bytes(&v, 4, what);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  const Shape& s = t.shape();
  for (int d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
  w.bytes(t.data().data(), t.size() * sizeof(float));
}

void read_tensor(Reader& r, const std::string& name, Tensor& t) {
  const std::size_t at = r.pos();
  const std::string got = r.str("tensor name");
  if (got != name) throw ParseError(r.path(), at, "expected tensor \"" + name + "\", found \"" + got + "\"");
  Shape s;
  s.n = static_cast<int>(r.u32("tensor shape"));
  s.c = static_cast<int>(r.u32("tensor shape"));
  s.h = static_cast<int>(r.u32("tensor shape"));
  s.w = static_cast<int>(r.u32("tensor shape"));
  if (!(s == t.shape())) {
    throw ParseError(r.path(), at, "tensor \"" + name + "\" has shape " + to_string(s) + ", expected " +
                                       to_string(t.shape()));
  }
  r.bytes(t.data().data(), t.size() * sizeof(float), "tensor data");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header{{"config", ckpt.model.config},
                        {"seed", ckpt.seed},
                        {"iteration", ckpt.iteration}};
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  w.str(header.dump());
  for (const auto& l : ckpt.model.layers) {
    write_tensor(w, l.name + ".weight", l.params.weights);
    write_tensor(w, l.name + ".bias", l.params.bias);
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw ParseError(r.path(), 0, "not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw ParseError(r.path(), 4, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t header_at = r.pos();
  const std::string header_text = r.str("header");
  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(header_text);
    ModelConfig cfg = header.at("config").get<ModelConfig>();
    cfg.validate();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.iteration = header.at("iteration").get<std::int64_t>();
    ckpt.model = build_model(cfg, ckpt.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(r.path(), header_at, std::string("bad checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(r.path(), header_at, std::string("bad checkpoint header: ") + e.what());
  }
  for (auto& l : ckpt.model.layers) {
    read_tensor(r, l.name + ".weight", l.params.weights);
    read_tensor(r, l.name + ".bias", l.params.bias);
  }
  if (!r.at_end()) throw ParseError(r.path(), r.pos(), "trailing bytes after last tensor");
  return ckpt;
}

}  // namespace mplab::det
