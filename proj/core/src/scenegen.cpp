#include "mplab/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "mplab/rng.hpp"

namespace mplab::scene {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Rgb {
  double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Texture colors stay in the mid range; object colors never do.
std::pair<Rgb, Rgb> texture_colors(Rng& rng) {
  Rgb dark{rng.uniform(70, 120), rng.uniform(70, 120), rng.uniform(70, 120)};
  Rgb light{rng.uniform(140, 185), rng.uniform(140, 185), rng.uniform(140, 185)};
  if (rng.below(2)) std::swap(dark, light);
  return {dark, light};
}

Rgb object_color(Rng& rng) {
  auto channel = [&] { return rng.below(2) ? rng.uniform(210, 255) : rng.uniform(0, 45); };
  const double r = channel();
  const double g = channel();
  const double b = channel();
  return {r, g, b};
}

// Procedural texture; sample() takes global image coordinates so a patch is
// continuous with whatever the same sampler painted elsewhere.
class TextureSampler {
 public:
  TextureSampler(Texture kind, Rng& rng, int image_size) : kind_(kind) {
    std::tie(c1_, c2_) = texture_colors(rng);
    period_ = rng.uniform(4.0, 8.0);
    phase_ = rng.uniform(0.0, period_);
    angle_ = rng.uniform(0.0, kPi);
    vertical_ = rng.below(2) == 1;
    cell_ = rng.range(3, 6);
    cx_ = rng.uniform(0, image_size);
    cy_ = rng.uniform(0, image_size);
    radius_ = rng.uniform(1.5, 2.5);
    noise_seed_ = rng.next_u64();
    span_ = std::max(1, image_size);
  }

  Rgb sample(int x, int y) const {
    switch (kind_) {
      case Texture::stripes: {
        const double u = (vertical_ ? x : y) + phase_;
        return std::fmod(u, period_) < 0.5 * period_ ? c1_ : c2_;
      }
      case Texture::checker: {
        const int a = (x + static_cast<int>(phase_)) / cell_;
        const int b = (y + static_cast<int>(phase_)) / cell_;
        return ((a + b) % 2 == 0) ? c1_ : c2_;
      }
      case Texture::noise: {
        const std::uint64_t h =
            mix_seed(noise_seed_ ^ (static_cast<std::uint64_t>(x / 2) << 32) ^
                     static_cast<std::uint64_t>(y / 2));
        return lerp(c1_, c2_, static_cast<double>(h >> 11) * 0x1.0p-53);
      }
      case Texture::gradient: {
        const double u = (x * std::cos(angle_) + y * std::sin(angle_)) / (1.5 * span_);
        return lerp(c1_, c2_, 0.5 + 0.5 * std::sin(2 * kPi * u + phase_));
      }
      case Texture::dots: {
        const double p = period_ + 2.0;
        const double dx = std::fmod(x + phase_, p) - 0.5 * p;
        const double dy = std::fmod(y + phase_, p) - 0.5 * p;
        return dx * dx + dy * dy <= radius_ * radius_ ? c2_ : c1_;
      }
      case Texture::waves: {
        const double u = x * std::cos(angle_) + y * std::sin(angle_);
        const double wob = 3.0 * std::sin(2 * kPi * (x * std::sin(angle_) - y * std::cos(angle_)) /
                                          (4.0 * period_));
        return lerp(c1_, c2_, 0.5 + 0.5 * std::sin(2 * kPi * (u + wob) / period_));
      }
      case Texture::rings: {
        const double r = std::hypot(x - cx_, y - cy_);
        return lerp(c1_, c2_, 0.5 + 0.5 * std::sin(2 * kPi * r / period_));
      }
      case Texture::plaid: {
        const bool a = std::fmod(x + phase_, period_) < 0.5 * period_;
        const bool b = std::fmod(y + phase_, period_ * 1.5) < 0.75 * period_;
        return lerp(c1_, c2_, 0.5 * (a ? 1 : 0) + 0.5 * (b ? 1 : 0));
      }
    }
    return c1_;
  }

 private:
  Texture kind_;
  Rgb c1_{}, c2_{};
  double period_ = 6, phase_ = 0, angle_ = 0, cx_ = 0, cy_ = 0, radius_ = 2;
  bool vertical_ = false;
  int cell_ = 4;
  int span_ = 1;
  std::uint64_t noise_seed_ = 0;
};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void paint(RgbImage& img, int x0, int y0, int x1, int y1, const TextureSampler& s) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) {
      const Rgb c = s.sample(x, y);
      std::uint8_t* p = img.px(y, x);
      p[0] = to_byte(c.r);
      p[1] = to_byte(c.g);
      p[2] = to_byte(c.b);
    }
  }
}

bool inside_silhouette(ObjectClass cls, int x0, int y0, int size, int px, int py) {
  const double x = px + 0.5;
  const double y = py + 0.5;
  const double half = 0.5 * size;
  switch (cls) {
    case ObjectClass::circle: {
      const double dx = x - (x0 + half);
      const double dy = y - (y0 + half);
      return dx * dx + dy * dy <= half * half;
    }
    case ObjectClass::square:
      return x >= x0 && x <= x0 + size && y >= y0 && y <= y0 + size;
    case ObjectClass::triangle: {
      if (y < y0 || y > y0 + size) return false;
      const double reach = (y - y0) * 0.5;
      return std::abs(x - (x0 + half)) <= reach;
    }
  }
  return false;
}

struct Placement {
  int class_id;
  int x0, y0, size;
};

double overlap_fraction(const Placement& a, const Placement& b) {
  const int ix = std::max(0, std::min(a.x0 + a.size, b.x0 + b.size) - std::max(a.x0, b.x0));
  const int iy = std::max(0, std::min(a.y0 + a.size, b.y0 + b.size) - std::max(a.y0, b.y0));
  const double smaller = std::min(a.size * a.size, b.size * b.size);
  return (ix * iy) / smaller;
}

ImageRecord render_scene(const GenerateConfig& cfg, int index, std::ostream* warnings) {
  Rng rng(mix_seed(cfg.seed ^ mix_seed(static_cast<std::uint64_t>(index))));
  const int size = cfg.image_size;
  ImageRecord rec;
  rec.image_id = cfg.id_prefix + "_" + std::to_string(index);
  rec.image = RgbImage(size, size);
  rec.fg_mask = maskpool::BinaryMask(size, size);

  const auto base = static_cast<Texture>(rng.below(kNumTrainingTextures));
  paint(rec.image, 0, 0, size, size, TextureSampler(base, rng, size));

  const int count = rng.range(cfg.objects_min, cfg.objects_max);
  std::vector<Placement> placed;
  for (int k = 0; k < count; ++k) {
    const int cls = static_cast<int>(rng.below(cfg.bias.matrix.size()));
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      Placement p{cls, 0, 0, rng.range(cfg.object_size_min, cfg.object_size_max)};
      p.x0 = rng.range(0, size - p.size);
      p.y0 = rng.range(0, size - p.size);
      ok = std::all_of(placed.begin(), placed.end(), [&](const Placement& q) {
        return overlap_fraction(p, q) <= cfg.max_overlap;
      });
      if (ok) placed.push_back(p);
    }
    if (!ok && warnings) {
      *warnings << "warning: " << rec.image_id << ": skipped object " << k
                << " after 100 placement attempts\n";
    }
  }

  std::vector<int> textures;
  for (const Placement& p : placed) {
    const auto& row = cfg.bias.matrix[static_cast<std::size_t>(p.class_id)];
    const auto tex = static_cast<int>(rng.categorical(row));
    textures.push_back(tex);
    const int margin = static_cast<int>(std::lround(cfg.context_margin * p.size));
    paint(rec.image, p.x0 - margin, p.y0 - margin, p.x0 + p.size + margin, p.y0 + p.size + margin,
          TextureSampler(static_cast<Texture>(tex), rng, size));
  }

  for (std::size_t i = 0; i < placed.size(); ++i) {
    const Placement& p = placed[i];
    const Rgb color = object_color(rng);
    const auto cls = static_cast<ObjectClass>(p.class_id);
    int bx0 = size, by0 = size, bx1 = -1, by1 = -1;
    for (int y = std::max(0, p.y0 - 1); y < std::min(size, p.y0 + p.size + 1); ++y) {
      for (int x = std::max(0, p.x0 - 1); x < std::min(size, p.x0 + p.size + 1); ++x) {
        if (!inside_silhouette(cls, p.x0, p.y0, p.size, x, y)) continue;
        std::uint8_t* px = rec.image.px(y, x);
        px[0] = to_byte(color.r);
        px[1] = to_byte(color.g);
        px[2] = to_byte(color.b);
        rec.fg_mask.set(y, x, true);
        bx0 = std::min(bx0, x);
        by0 = std::min(by0, y);
        bx1 = std::max(bx1, x);
        by1 = std::max(by1, y);
      }
    }
    if (bx1 < 0) continue;
    Instance inst;
    inst.class_id = p.class_id;
    inst.box = {static_cast<double>(bx0), static_cast<double>(by0), static_cast<double>(bx1 + 1),
                static_cast<double>(by1 + 1)};
    inst.bg_texture = textures[i];
    rec.instances.push_back(inst);
  }
  return rec;
}

}  // namespace

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"circle", "square", "triangle"};
  return names;
}

std::string texture_name(Texture t) {
  static const char* names[] = {"stripes", "checker", "noise", "gradient",
                                "dots",    "waves",   "rings", "plaid"};
  return names[static_cast<int>(t)];
}

void BiasSpec::validate() const {
  if (matrix.empty()) throw ConfigError("bias matrix is empty");
  const std::size_t cols = matrix.front().size();
  if (cols == 0) throw ConfigError("bias matrix has no textures");
  for (std::size_t r = 0; r < matrix.size(); ++r) {
    if (matrix[r].size() != cols) throw ConfigError("bias matrix rows differ in length");
    double sum = 0.0;
    for (double v : matrix[r]) {
      if (!(v >= 0.0)) throw ConfigError("bias matrix entries must be non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("bias matrix row " + std::to_string(r) + " sums to " +
                        std::to_string(sum) + ", expected 1");
    }
  }
}

BiasSpec BiasSpec::uniform(int num_classes, int num_textures) {
  return {std::vector<std::vector<double>>(
      static_cast<std::size_t>(num_classes),
      std::vector<double>(static_cast<std::size_t>(num_textures), 1.0 / num_textures))};
}

BiasSpec BiasSpec::diagonal(int num_classes, int num_textures, double strength) {
  if (num_textures < 2 && strength != 1.0) throw ConfigError("diagonal bias needs >= 2 textures");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("bias strength must be in [0, 1]");
  BiasSpec b;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> row(static_cast<std::size_t>(num_textures),
                            num_textures > 1 ? (1.0 - strength) / (num_textures - 1) : 0.0);
    row[static_cast<std::size_t>(c % num_textures)] = strength;
    b.matrix.push_back(std::move(row));
  }
  return b;
}

void GenerateConfig::validate() const {
  if (n_images < 1) throw ConfigError("n_images must be >= 1");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (objects_min < 1 || objects_max < objects_min) {
    throw ConfigError("objects per image must satisfy 1 <= min <= max");
  }
  if (object_size_min < 2 || object_size_max < object_size_min || object_size_max > image_size) {
    throw ConfigError("object sizes must satisfy 2 <= min <= max <= image_size");
  }
  if (!(max_overlap >= 0.0 && max_overlap <= 1.0)) throw ConfigError("max_overlap in [0, 1]");
  if (context_margin < 0.0) throw ConfigError("context_margin must be non-negative");
  bias.validate();
  if (bias.matrix.size() != static_cast<std::size_t>(kNumObjectClasses)) {
    throw ConfigError("bias matrix must have one row per class (3)");
  }
  if (bias.matrix.front().size() != static_cast<std::size_t>(kNumTrainingTextures)) {
    throw ConfigError("bias matrix must have one column per training texture (4)");
  }
}

DatasetManifest generate_dataset(const GenerateConfig& cfg, std::ostream* warnings) {
  cfg.validate();
  DatasetManifest m;
  m.class_names = class_names();
  for (int t = 0; t < kNumTrainingTextures; ++t) m.texture_names.push_back(texture_name(static_cast<Texture>(t)));
  m.seed = cfg.seed;
  m.bias = cfg.bias;
  m.records.reserve(static_cast<std::size_t>(cfg.n_images));
  for (int i = 0; i < cfg.n_images; ++i) m.records.push_back(render_scene(cfg, i, warnings));
  return m;
}

RgbImage render_texture(Texture t, int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(width, height);
  paint(img, 0, 0, width, height, TextureSampler(t, rng, std::max(width, height)));
  return img;
}

std::vector<RgbImage> make_bg_pool(int count, int size, std::uint64_t seed) {
  if (count < 1) throw ConfigError("background pool size must be >= 1");
  std::vector<RgbImage> pool;
  constexpr int kHeldOut = kNumTextures - kNumTrainingTextures;
  for (int i = 0; i < count; ++i) {
    const auto tex = static_cast<Texture>(kNumTrainingTextures + i % kHeldOut);
    pool.push_back(render_texture(tex, size, size, mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(i) + 1))));
  }
  return pool;
}

std::vector<RgbImage> load_bg_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("background directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RgbImage> pool;
  for (const auto& f : files) pool.push_back(read_ppm(f));
  if (pool.empty()) throw ConfigError("no .ppm backgrounds in " + dir.string());
  return pool;
}

ImageRecord composite_with_bg(const ImageRecord& record, const RgbImage& bg, int feather_radius) {
  if (feather_radius < 0) throw ConfigError("feather_radius must be non-negative");
  const int w = record.image.width;
  const int h = record.image.height;
  const RgbImage scaled = resize_cover(bg, w, h);
  ImageRecord out = record;
  const auto& m = record.fg_mask;
  if (feather_radius == 0) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!m.at(y, x)) std::copy_n(scaled.px(y, x), 3, out.image.px(y, x));
      }
    }
    return out;
  }
  // Box-blurred alpha via a summed-area table over the binary mask.
  std::vector<int> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      sat[(y + 1) * (w + 1) + x + 1] = m.at(y, x) + sat[y * (w + 1) + x + 1] +
                                       sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
    }
  }
  const int r = feather_radius;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const int fg = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] +
                     sat[y0 * (w + 1) + x0];
      const double alpha = static_cast<double>(fg) / ((y1 - y0) * (x1 - x0));
      const std::uint8_t* f = record.image.px(y, x);
      const std::uint8_t* b = scaled.px(y, x);
      std::uint8_t* o = out.image.px(y, x);
      for (int c = 0; c < 3; ++c) o[c] = to_byte(alpha * f[c] + (1.0 - alpha) * b[c]);
    }
  }
  return out;
}

std::size_t pick_bg_index(std::uint64_t seed, const std::string& image_id, std::size_t pool_size) {
  if (pool_size == 0) throw ConfigError("background pool is empty");
  return static_cast<std::size_t>(mix_seed(seed ^ fnv1a(image_id)) % pool_size);
}

ImageRecord composite_random_bg(const ImageRecord& record, std::span<const RgbImage> bg_pool,
                                std::uint64_t seed, int feather_radius) {
  if (bg_pool.empty()) throw ConfigError("background pool is empty");
  return composite_with_bg(record, bg_pool[pick_bg_index(seed, record.image_id, bg_pool.size())],
                           feather_radius);
}

DatasetManifest composite_fixed_bg(const DatasetManifest& manifest, const RgbImage& bg,
                                   int feather_radius, const std::string& id_suffix) {
  if (bg.width <= 0 || bg.height <= 0) throw ConfigError("background pool is empty");
  DatasetManifest out = manifest;
  for (auto& r : out.records) {
    r = composite_with_bg(r, bg, feather_radius);
    r.image_id += id_suffix;
  }
  return out;
}

DatasetManifest composite_random_bg(const DatasetManifest& manifest,
                                    std::span<const RgbImage> bg_pool, std::uint64_t seed,
                                    int feather_radius) {
  if (bg_pool.empty()) throw ConfigError("background pool is empty");
  DatasetManifest out = manifest;
  for (auto& r : out.records) r = composite_random_bg(r, bg_pool, seed, feather_radius);
  return out;
}

void validate_record(const ImageRecord& r, int num_classes) {
  const int w = r.image.width;
  const int h = r.image.height;
  if (r.image.pixels.size() != static_cast<std::size_t>(w) * h * 3) {
    throw ValidationError(r.image_id + ": pixel buffer does not match image size");
  }
  if (r.fg_mask.width() != w || r.fg_mask.height() != h) {
    throw ValidationError(r.image_id + ": mask size differs from image size");
  }
  for (const Instance& inst : r.instances) {
    if (inst.class_id < 0 || inst.class_id >= num_classes) {
      throw ValidationError(r.image_id + ": class_id " + std::to_string(inst.class_id) +
                            " out of range");
    }
    const Box& b = inst.box;
    if (!(b.x_min < b.x_max && b.y_min < b.y_max) || b.x_min < 0 || b.y_min < 0 || b.x_max > w ||
        b.y_max > h) {
      throw ValidationError(r.image_id + ": invalid box");
    }
    bool touches = false;
    for (int y = static_cast<int>(b.y_min); y < static_cast<int>(std::ceil(b.y_max)) && !touches; ++y) {
      for (int x = static_cast<int>(b.x_min); x < static_cast<int>(std::ceil(b.x_max)); ++x) {
        if (r.fg_mask.at(y, x)) {
          touches = true;
          break;
        }
      }
    }
    if (!touches) throw ValidationError(r.image_id + ": box contains no foreground pixel");
  }
}

namespace {

using nlohmann::json;

json number(double v) {
  if (std::floor(v) == v && std::abs(v) < 1e15) return static_cast<std::int64_t>(v);
  return v;
}

[[noreturn]] void schema_error(const std::filesystem::path& file, const std::string& what) {
  throw ParseError(file.string(), 0, what);
}

const json& field(const json& obj, const char* key, const std::filesystem::path& file,
                  const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) schema_error(file, where + ": missing \"" + key + "\"");
  return obj.at(key);
}

}  // namespace

void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& json_path) {
  namespace fs = std::filesystem;
  const fs::path root = json_path.has_parent_path() ? json_path.parent_path() : fs::path(".");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  json doc;
  doc["classes"] = manifest.class_names;
  doc["textures"] = manifest.texture_names;
  doc["seed"] = manifest.seed;
  if (manifest.bias) doc["bias"] = manifest.bias->matrix;
  json images = json::array();
  std::set<std::string> ids;
  for (const ImageRecord& r : manifest.records) {
    if (!ids.insert(r.image_id).second) throw ValidationError("duplicate image id " + r.image_id);
    const std::string file = "images/" + r.image_id + ".ppm";
    const std::string mask_file = "masks/" + r.image_id + ".pgm";
    write_ppm(root / file, r.image);
    write_mask_pgm(root / mask_file, r.fg_mask);
    json insts = json::array();
    for (const Instance& inst : r.instances) {
      json j{{"class_id", inst.class_id},
             {"bbox", {number(inst.box.x_min), number(inst.box.y_min), number(inst.box.x_max),
                       number(inst.box.y_max)}}};
      if (inst.bg_texture >= 0) j["bg_texture"] = inst.bg_texture;
      insts.push_back(std::move(j));
    }
    images.push_back({{"id", r.image_id},
                      {"file", file},
                      {"mask_file", mask_file},
                      {"width", r.image.width},
                      {"height", r.image.height},
                      {"instances", std::move(insts)}});
  }
  doc["images"] = std::move(images);
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + json_path.string());
  out << doc.dump(1) << '\n';
}

DatasetManifest load_dataset(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ParseError(json_path.string(), 0, "cannot open manifest");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(json_path.string(), e.byte, e.what());
  }
  const auto root = json_path.has_parent_path() ? json_path.parent_path() : std::filesystem::path(".");
  DatasetManifest m;
  try {
    m.class_names = field(doc, "classes", json_path, "manifest").get<std::vector<std::string>>();
    if (doc.contains("textures")) m.texture_names = doc["textures"].get<std::vector<std::string>>();
    if (doc.contains("seed")) m.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("bias")) {
      BiasSpec b{doc["bias"].get<std::vector<std::vector<double>>>()};
      b.validate();
      m.bias = std::move(b);
    }
    const json& images = field(doc, "images", json_path, "manifest");
    if (!images.is_array()) schema_error(json_path, "\"images\" must be an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const json& j = images[i];
      const std::string where = "images[" + std::to_string(i) + "]";
      ImageRecord r;
      r.image_id = field(j, "id", json_path, where).get<std::string>();
      if (!ids.insert(r.image_id).second) {
        throw ValidationError(json_path.string() + ": duplicate image id " + r.image_id);
      }
      r.image = read_ppm(root / field(j, "file", json_path, where).get<std::string>());
      r.fg_mask = read_mask_pgm(root / field(j, "mask_file", json_path, where).get<std::string>());
      const int w = field(j, "width", json_path, where).get<int>();
      const int h = field(j, "height", json_path, where).get<int>();
      if (r.image.width != w || r.image.height != h) {
        throw ValidationError(json_path.string() + ": " + where + " image size differs from manifest");
      }
      for (const json& ij : field(j, "instances", json_path, where)) {
        Instance inst;
        inst.class_id = field(ij, "class_id", json_path, where).get<int>();
        const auto bb = field(ij, "bbox", json_path, where).get<std::vector<double>>();
        if (bb.size() != 4) schema_error(json_path, where + ": bbox needs 4 numbers");
        inst.box = {bb[0], bb[1], bb[2], bb[3]};
        if (ij.contains("bg_texture")) inst.bg_texture = ij["bg_texture"].get<int>();
        r.instances.push_back(inst);
      }
      validate_record(r, m.num_classes());
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ParseError(json_path.string(), 0, e.what());
  }
  return m;
}

}  // namespace mplab::scene
