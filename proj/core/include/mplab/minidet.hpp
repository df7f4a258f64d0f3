#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mplab/box.hpp"
#include "mplab/detection.hpp"
#include "mplab/layers.hpp"
#include "mplab/maskpool.hpp"
#include "mplab/optim.hpp"
#include "mplab/scenegen.hpp"

namespace mplab::det {

enum class PoolingVariant { max, avg, mask };
enum class PoolPlacement { post_stem, post_stage1 };

std::string to_string(PoolingVariant v);
PoolingVariant parse_pooling_variant(const std::string& s);
std::string to_string(PoolPlacement p);
PoolPlacement parse_pool_placement(const std::string& s);

struct ModelConfig {
  PoolingVariant pooling = PoolingVariant::max;
  /// Output channels of stem, stage1, stage2, stage3.
  std::vector<int> channels{16, 32, 32, 32};
  int image_size = 128;
  int grid_stride = 8;
  int num_classes = 3;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  PoolPlacement placement = PoolPlacement::post_stem;
  nn::PoolGeometry pool{3, 2, 1};

  void validate() const;
  int grid_size() const { return image_size / grid_stride; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Raw head maps. box_reg holds per-cell (l, t, r, b) distances from the
/// cell center in units of the grid stride.
struct DetHeadOutput {
  Tensor objectness;    ///< (n, 1, g, g) logits
  Tensor class_logits;  ///< (n, C, g, g)
  Tensor box_reg;       ///< (n, 4, g, g)
};

struct ConvLayer {
  std::string name;
  nn::LayerParams params;
  int stride = 1;
  int padding = 1;
  bool relu = true;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// stem conv (stride 2) -> pooling slot -> stage1 -> stage2 (stride 2) ->
/// stage3 -> 1x1 head. With PoolPlacement::post_stage1 the slot moves
/// behind stage1.
class Model {
 public:
  ModelConfig config;
  std::vector<ConvLayer> layers;  ///< stem, stage1, stage2, stage3, head

  std::vector<nn::LayerParams*> parameters();
  std::size_t param_count() const;
  /// Mask strides needed by forward (pool slot input and stage boundaries).
  std::vector<int> mask_strides() const;
  /// Stride of the feature map entering the pooling slot.
  int pool_input_stride() const;

  friend bool operator==(const Model&, const Model&) = default;
};

/// He-normal weights from `seed`, zero biases.
Model build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Intervention hooks applied during inference.
struct ForwardOptions {
  /// Multiply BG activations at the pooling slot input by this weight.
  std::optional<float> bg_weight;
  /// Also apply bg_weight at every later stage boundary.
  bool bg_scale_all_stages = false;
};

/// Activations kept for the backward pass.
struct ForwardCache {
  struct Step {
    enum class Kind { conv, pool, bg_scale } kind;
    int layer = -1;  ///< index into Model::layers for conv steps
    Tensor input;
    Tensor pre_activation;  ///< conv output before ReLU
    int mask_stride = 0;
  };
  std::vector<Step> steps;
  std::vector<std::int64_t> max_argmax;
  maskpool::MaskPoolRecord mask_record;
  std::vector<const maskpool::MaskPyramid*> masks;
};

/// images: (n, 3, S, S) normalized input. masks: one pyramid per image,
/// required for the mask variant or when options.bg_weight is set.
DetHeadOutput forward(const Model& model, const Tensor& images,
                      std::span<const maskpool::MaskPyramid> masks,
                      const ForwardOptions& options = {}, ForwardCache* cache = nullptr);

/// Backpropagates head gradients through the cached pass, accumulating into
/// the model's parameter gradients.
void backward(Model& model, const ForwardCache& cache, const DetHeadOutput& head_grad);

/// (pixel - 127.5) / 64 in NCHW order.
Tensor images_to_tensor(std::span<const RgbImage* const> images);

maskpool::MaskPyramid make_pyramid(const maskpool::BinaryMask& mask, const Model& model);

// Targets and loss.

struct Targets {
  int grid = 0;
  std::vector<float> objectness;  ///< g*g
  std::vector<int> class_id;      ///< g*g
  std::vector<float> box;         ///< 4*g*g, channel-major (l, t, r, b) / stride
  std::vector<std::uint8_t> positive;
};

/// The cell holding each box center is positive; collisions go to the
/// smaller box (ties to the earlier instance).
Targets assign_targets(std::span<const scene::Instance> instances, int grid, int stride);

struct LossBreakdown {
  double total = 0.0;
  double objectness = 0.0;
  double classification = 0.0;
  double box = 0.0;
};

/// BCE(objectness, all cells) + CE(class, positive cells) +
/// smooth-L1(box, positive cells, beta 1), unit weights. `grad` receives the
/// gradient of the total w.r.t. each head map.
LossBreakdown compute_loss(const DetHeadOutput& head, std::span<const Targets> targets,
                           DetHeadOutput* grad);

// Decoding.

using Detection = mplab::Detection;

/// Emits (class, score) pairs with score = sigmoid(obj) * softmax(class)_c
/// >= score_threshold, boxes clipped to the image, then per-class NMS.
/// Returns one list per image, sorted by descending score.
std::vector<std::vector<Detection>> decode(const DetHeadOutput& head, const ModelConfig& cfg);

/// Greedy per-class NMS: descending score (ties by lower cell index),
/// suppressing same-class boxes with IoU >= iou_thresh.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh);

// Training.

struct TrainConfig {
  int iterations = 3000;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int log_every = 50;
  nn::OptimizerConfig optimizer;
};

struct TrainLogEntry {
  int iteration = 0;
  LossBreakdown loss;
};

struct Checkpoint {
  Model model;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

using TrainLogger = std::function<void(const TrainLogEntry&)>;

/// Deterministic SGD training from `build_model(cfg, train.seed)`. Throws
/// NumericError naming the iteration and layer on NaN/Inf.
Checkpoint train(const scene::DatasetManifest& data, const ModelConfig& cfg,
                 const TrainConfig& train, const TrainLogger& log = {});

/// Inference over `records`, one detection list per record. The model
/// reads masks from each record's fg_mask. Work is split across `threads`
/// workers by image; results do not depend on the thread count.
std::vector<std::vector<Detection>> detect(const Model& model,
                                           std::span<const scene::ImageRecord> records,
                                           const ForwardOptions& options = {}, int threads = 1);

// Parameter / FLOP accounting.

struct LayerSpec {
  enum class Kind { conv, max_pool, avg_pool, mask_pool } kind = Kind::conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
};

struct CostReport {
  std::int64_t param_count = 0;
  std::int64_t mult_add_count = 0;
};

/// Conv: k*k*Cin*Cout + Cout params and OH*OW*Cout*Cin*k*k mult-adds.
/// Pooling has no parameters; avg and mask pooling cost one add per valid
/// window pixel plus one divide per window per channel; max pooling costs 0.
CostReport count_params_flops(std::span<const LayerSpec> layers, int image_height,
                              int image_width);
std::vector<LayerSpec> layer_specs(const Model& model);
CostReport count_params_flops(const Model& model, int image_size);

// Checkpoint file: "MPLB", u32 version, u32 length + canonical JSON, then
// per tensor: u32 name length, name, 4 x u32 shape, little-endian f32 data.

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mplab::det
