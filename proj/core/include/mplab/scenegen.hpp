#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mplab/box.hpp"
#include "mplab/image.hpp"
#include "mplab/maskpool.hpp"

namespace mplab::scene {

enum class ObjectClass { circle = 0, square = 1, triangle = 2 };
inline constexpr int kNumObjectClasses = 3;

/// Background textures. The first four are used for training scenes; the
/// remaining ones only ever appear in intervention backgrounds.
enum class Texture { stripes = 0, checker, noise, gradient, dots, waves, rings, plaid };
inline constexpr int kNumTrainingTextures = 4;
inline constexpr int kNumTextures = 8;

const std::vector<std::string>& class_names();
std::string texture_name(Texture t);

struct Instance {
  int class_id = 0;
  Box box;              ///< tight integer bounds of the rendered silhouette
  int bg_texture = -1;  ///< texture of the local patch behind the object, -1 if unknown

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct ImageRecord {
  std::string image_id;
  RgbImage image;
  maskpool::BinaryMask fg_mask;
  std::vector<Instance> instances;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Row-stochastic P(texture | class), num_classes x num_textures.
struct BiasSpec {
  std::vector<std::vector<double>> matrix;

  /// Rows must sum to 1 within 1e-9 with non-negative entries.
  void validate() const;

  static BiasSpec uniform(int num_classes, int num_textures);
  /// Class c puts `strength` on texture c and spreads the rest evenly.
  static BiasSpec diagonal(int num_classes, int num_textures, double strength);

  friend bool operator==(const BiasSpec&, const BiasSpec&) = default;
};

struct DatasetManifest {
  std::vector<std::string> class_names;
  std::vector<std::string> texture_names;
  std::vector<ImageRecord> records;
  std::uint64_t seed = 0;
  std::optional<BiasSpec> bias;

  int num_classes() const { return static_cast<int>(class_names.size()); }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct GenerateConfig {
  int n_images = 1;
  int image_size = 128;
  BiasSpec bias = BiasSpec::diagonal(kNumObjectClasses, kNumTrainingTextures, 0.85);
  int objects_min = 1;
  int objects_max = 4;
  int object_size_min = 16;
  int object_size_max = 36;
  /// Fraction of the object size added on each side for the class-dependent
  /// texture patch.
  double context_margin = 0.5;
  /// Maximum intersection over the smaller box area between objects.
  double max_overlap = 0.3;
  std::uint64_t seed = 0;
  std::string id_prefix = "img";

  void validate() const;
};

/// Renders `n_images` scenes. Objects that cannot be placed after 100
/// attempts are skipped with a message on `warnings` (if given).
DatasetManifest generate_dataset(const GenerateConfig& cfg, std::ostream* warnings = nullptr);

/// Fills a width x height image with one texture drawn from `rng`.
RgbImage render_texture(Texture t, int width, int height, std::uint64_t seed);

/// `count` background images using only the intervention textures, so none
/// of them shares a texture family with the training scenes.
std::vector<RgbImage> make_bg_pool(int count, int size, std::uint64_t seed);

/// Every *.ppm file in `dir`, sorted by file name.
std::vector<RgbImage> load_bg_dir(const std::filesystem::path& dir);

/// FG pixels from `record`, BG pixels from `bg` (resized to cover). With
/// feather_radius > 0 the paste uses a box-blurred alpha; the binary mask and
/// annotations are unchanged either way.
ImageRecord composite_with_bg(const ImageRecord& record, const RgbImage& bg, int feather_radius);

/// Index into a pool of `pool_size` chosen for (seed, image_id).
std::size_t pick_bg_index(std::uint64_t seed, const std::string& image_id, std::size_t pool_size);

/// Pastes the record's foreground onto pool[pick_bg_index(seed, id)].
ImageRecord composite_random_bg(const ImageRecord& record, std::span<const RgbImage> bg_pool,
                                std::uint64_t seed, int feather_radius);

/// Every record over the same background; ids gain `id_suffix`.
DatasetManifest composite_fixed_bg(const DatasetManifest& manifest, const RgbImage& bg,
                                   int feather_radius, const std::string& id_suffix = "_fixbg");

/// Dataset-level random recomposition; ids are kept.
DatasetManifest composite_random_bg(const DatasetManifest& manifest,
                                    std::span<const RgbImage> bg_pool, std::uint64_t seed,
                                    int feather_radius);

/// Checks the record invariants (box bounds, mask/image size, boxes touch FG).
void validate_record(const ImageRecord& r, int num_classes);

// On-disk layout: <manifest>.json plus images/<id>.ppm and masks/<id>.pgm
// next to it. Paths inside the JSON are relative to the manifest file.
void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& json_path);
DatasetManifest load_dataset(const std::filesystem::path& json_path);

}  // namespace mplab::scene
