#include "mplab/minidet.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>

#include "mplab/metrics.hpp"
#include "mplab/rng.hpp"

namespace mplab::det {

std::string to_string(PoolingVariant v) {
  switch (v) {
    case PoolingVariant::max: return "max";
    case PoolingVariant::avg: return "avg";
    case PoolingVariant::mask: return "mask";
  }
  return "?";
}

PoolingVariant parse_pooling_variant(const std::string& s) {
  if (s == "max") return PoolingVariant::max;
  if (s == "avg") return PoolingVariant::avg;
  if (s == "mask") return PoolingVariant::mask;
  throw ConfigError("unknown pooling variant \"" + s + "\" (expected max, avg or mask)");
}

std::string to_string(PoolPlacement p) {
  return p == PoolPlacement::post_stem ? "post_stem" : "post_stage1";
}

PoolPlacement parse_pool_placement(const std::string& s) {
  if (s == "post_stem") return PoolPlacement::post_stem;
  if (s == "post_stage1") return PoolPlacement::post_stage1;
  throw ConfigError("unknown pool placement \"" + s + "\" (expected post_stem or post_stage1)");
}

void ModelConfig::validate() const {
  if (channels.size() != 4) throw ConfigError("channels must list 4 stage widths");
  for (int c : channels) {
    if (c < 1) throw ConfigError("channel counts must be positive");
  }
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (grid_stride != 8) throw ConfigError("grid_stride must be 8 for this topology");
  if (image_size < grid_stride || image_size % grid_stride != 0) {
    throw ConfigError("image_size must be a positive multiple of grid_stride");
  }
  if (pool.kernel != 3 || pool.stride != 2 || pool.padding != 1) {
    throw ConfigError("the pooling slot uses kernel 3, stride 2, padding 1");
  }
  if (!(score_threshold > 0.0 && score_threshold <= 1.0)) {
    throw ConfigError("score_threshold must lie in (0, 1]");
  }
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ConfigError("nms_iou must lie in (0, 1]");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"pooling_variant", to_string(c.pooling)},
                     {"channels", c.channels},
                     {"image_size", c.image_size},
                     {"grid_stride", c.grid_stride},
                     {"num_classes", c.num_classes},
                     {"score_threshold", c.score_threshold},
                     {"nms_iou", c.nms_iou},
                     {"placement", to_string(c.placement)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::vector<std::string> known{"pooling_variant", "channels",        "image_size",
                                              "grid_stride",     "num_classes",     "score_threshold",
                                              "nms_iou",         "placement"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown model config key \"" + key + "\"");
    }
  }
  if (j.contains("pooling_variant")) c.pooling = parse_pooling_variant(j["pooling_variant"].get<std::string>());
  if (j.contains("channels")) c.channels = j["channels"].get<std::vector<int>>();
  if (j.contains("image_size")) c.image_size = j["image_size"].get<int>();
  if (j.contains("grid_stride")) c.grid_stride = j["grid_stride"].get<int>();
  if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<int>();
  if (j.contains("score_threshold")) c.score_threshold = j["score_threshold"].get<double>();
  if (j.contains("nms_iou")) c.nms_iou = j["nms_iou"].get<double>();
  if (j.contains("placement")) c.placement = parse_pool_placement(j["placement"].get<std::string>());
}

std::vector<nn::LayerParams*> Model::parameters() {
  std::vector<nn::LayerParams*> out;
  for (auto& l : layers) out.push_back(&l.params);
  return out;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.params.param_count();
  return n;
}

int Model::pool_input_stride() const { return 2; }

std::vector<int> Model::mask_strides() const { return {2, 4, 8}; }

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  const auto& ch = cfg.channels;
  auto add = [&](const char* name, int in, int out, int k, int stride, int pad, bool relu) {
    m.layers.push_back({name, nn::LayerParams::conv(in, out, k), stride, pad, relu});
  };
  add("stem", 3, ch[0], 3, 2, 1, true);
  add("stage1", ch[0], ch[1], 3, 1, 1, true);
  add("stage2", ch[1], ch[2], 3, 2, 1, true);
  add("stage3", ch[2], ch[3], 3, 1, 1, true);
  add("head", ch[3], 1 + cfg.num_classes + 4, 1, 1, 0, false);

  Rng rng(mix_seed(seed));
  for (auto& l : m.layers) {
    const int fan_in = l.params.in_channels() * l.params.kernel() * l.params.kernel();
    const double stddev = std::sqrt(2.0 / fan_in);
    for (float& w : l.params.weights.data()) w = static_cast<float>(rng.normal() * stddev);
  }
  return m;
}

namespace {

enum class OpKind { conv, pool };
struct Op {
  OpKind kind;
  int layer;
};

std::vector<Op> plan(const Model& m) {
  if (m.config.placement == PoolPlacement::post_stem) {
    return {{OpKind::conv, 0}, {OpKind::pool, -1}, {OpKind::conv, 1},
            {OpKind::conv, 2}, {OpKind::conv, 3},  {OpKind::conv, 4}};
  }
  return {{OpKind::conv, 0}, {OpKind::conv, 1}, {OpKind::pool, -1},
          {OpKind::conv, 2}, {OpKind::conv, 3}, {OpKind::conv, 4}};
}

std::vector<maskpool::BinaryMask> masks_at(std::span<const maskpool::MaskPyramid> pyramids,
                                           int stride, const Shape& feature) {
  std::vector<maskpool::BinaryMask> out;
  out.reserve(pyramids.size());
  for (const auto& p : pyramids) {
    const auto& m = p.at_stride(stride);
    if (m.height() != feature.h || m.width() != feature.w) {
      throw ConfigError("mask at stride " + std::to_string(stride) + " is " +
                        std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                        ", feature map is " + std::to_string(feature.h) + "x" +
                        std::to_string(feature.w));
    }
    out.push_back(m);
  }
  return out;
}

// Splits the fused head map into objectness / class / box tensors.
DetHeadOutput split_head(const Tensor& fused, int num_classes) {
  const Shape& s = fused.shape();
  DetHeadOutput out{Tensor({s.n, 1, s.h, s.w}), Tensor({s.n, num_classes, s.h, s.w}),
                    Tensor({s.n, 4, s.h, s.w})};
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = fused.plane(n, c);
      float* dst = c == 0 ? out.objectness.plane(n, 0)
                   : c <= num_classes ? out.class_logits.plane(n, c - 1)
                                      : out.box_reg.plane(n, c - 1 - num_classes);
      std::copy_n(src, plane, dst);
    }
  }
  return out;
}

Tensor fuse_head(const DetHeadOutput& h) {
  const Shape& o = h.objectness.shape();
  const int nc = h.class_logits.shape().c;
  Tensor fused({o.n, 1 + nc + 4, o.h, o.w});
  const std::size_t plane = o.plane();
  for (int n = 0; n < o.n; ++n) {
    for (int c = 0; c < fused.shape().c; ++c) {
      const float* src = c == 0 ? h.objectness.plane(n, 0)
                         : c <= nc ? h.class_logits.plane(n, c - 1)
                                   : h.box_reg.plane(n, c - 1 - nc);
      std::copy_n(src, plane, fused.plane(n, c));
    }
  }
  return fused;
}

}  // namespace

DetHeadOutput forward(const Model& model, const Tensor& images,
                      std::span<const maskpool::MaskPyramid> masks, const ForwardOptions& options,
                      ForwardCache* cache) {
  const ModelConfig& cfg = model.config;
  const Shape& s = images.shape();
  if (s.c != 3 || s.h != cfg.image_size || s.w != cfg.image_size) {
    throw ConfigError("forward expects (n, 3, " + std::to_string(cfg.image_size) + ", " +
                      std::to_string(cfg.image_size) + ") input, got " + to_string(s));
  }
  const bool needs_masks = cfg.pooling == PoolingVariant::mask || options.bg_weight.has_value();
  if (needs_masks && masks.size() != static_cast<std::size_t>(s.n)) {
    throw ConfigError(cfg.pooling == PoolingVariant::mask
                          ? "mask pooling variant requires one mask per image"
                          : "background scaling requires one mask per image");
  }
  if (cache) {
    *cache = ForwardCache{};
    for (const auto& p : masks) cache->masks.push_back(&p);
  }

  Tensor x = images;
  int stride = 1;
  bool after_stem = false;
  for (const Op& op : plan(model)) {
    if (options.bg_weight && after_stem && (op.kind == OpKind::pool || options.bg_scale_all_stages)) {
      const auto m = masks_at(masks, stride, x.shape());
      x = maskpool::bg_scale(x, std::span<const maskpool::BinaryMask>(m), *options.bg_weight);
      if (cache) cache->steps.push_back({ForwardCache::Step::Kind::bg_scale, -1, {}, {}, stride});
    }
    if (op.kind == OpKind::conv) {
      const ConvLayer& layer = model.layers[static_cast<std::size_t>(op.layer)];
      Tensor pre = nn::conv2d_forward(x, layer.params, layer.stride, layer.padding);
      Tensor out = layer.relu ? nn::relu_forward(pre) : pre;
      if (cache) {
        cache->steps.push_back({ForwardCache::Step::Kind::conv, op.layer, std::move(x),
                                layer.relu ? std::move(pre) : Tensor{}, stride});
      }
      x = std::move(out);
      stride *= layer.stride;
      after_stem = true;
    } else {
      Tensor out;
      switch (cfg.pooling) {
        case PoolingVariant::max: {
          auto r = nn::maxpool2d_forward(x, cfg.pool);
          out = std::move(r.out);
          if (cache) cache->max_argmax = std::move(r.argmax);
          break;
        }
        case PoolingVariant::avg:
          out = nn::avgpool2d_forward(x, cfg.pool);
          break;
        case PoolingVariant::mask: {
          const auto m = masks_at(masks, stride, x.shape());
          auto r = maskpool::maskpool2d_forward(x, std::span<const maskpool::BinaryMask>(m), cfg.pool);
          out = std::move(r.out);
          if (cache) cache->mask_record = std::move(r.record);
          break;
        }
      }
      if (cache) cache->steps.push_back({ForwardCache::Step::Kind::pool, -1, std::move(x), {}, stride});
      x = std::move(out);
      stride *= cfg.pool.stride;
    }
  }
  return split_head(x, cfg.num_classes);
}

void backward(Model& model, const ForwardCache& cache, const DetHeadOutput& head_grad) {
  if (cache.steps.empty()) throw ConfigError("backward: empty forward cache");
  const ModelConfig& cfg = model.config;
  std::vector<maskpool::MaskPyramid> pyramids;
  pyramids.reserve(cache.masks.size());
  for (const auto* p : cache.masks) pyramids.push_back(*p);

  Tensor g = fuse_head(head_grad);
  for (std::size_t i = cache.steps.size(); i-- > 0;) {
    const auto& step = cache.steps[i];
    switch (step.kind) {
      case ForwardCache::Step::Kind::conv: {
        ConvLayer& layer = model.layers[static_cast<std::size_t>(step.layer)];
        if (layer.relu) g = nn::relu_backward(step.pre_activation, g);
        g = nn::conv2d_backward(step.input, layer.params, g, layer.stride, layer.padding);
        break;
      }
      case ForwardCache::Step::Kind::pool: {
        const Shape& in = step.input.shape();
        switch (cfg.pooling) {
          case PoolingVariant::max:
            g = nn::maxpool2d_backward(in, std::span<const std::int64_t>(cache.max_argmax), g);
            break;
          case PoolingVariant::avg:
            g = nn::avgpool2d_backward(in, g, cfg.pool);
            break;
          case PoolingVariant::mask: {
            const auto m = masks_at(pyramids, step.mask_stride, in);
            g = maskpool::maskpool2d_backward(std::span<const maskpool::BinaryMask>(m), g,
                                              cache.mask_record);
            break;
          }
        }
        break;
      }
      case ForwardCache::Step::Kind::bg_scale:
        throw ConfigError("backward through background scaling is not supported");
    }
  }
}

Tensor images_to_tensor(std::span<const RgbImage* const> images) {
  if (images.empty()) return {};
  const int h = images.front()->height;
  const int w = images.front()->width;
  Tensor t({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const RgbImage& img = *images[n];
    if (img.width != w || img.height != h) throw ConfigError("batch images differ in size");
    for (int c = 0; c < 3; ++c) {
      float* dst = t.plane(static_cast<int>(n), c);
      for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) {
        dst[p] = (static_cast<float>(img.pixels[p * 3 + static_cast<std::size_t>(c)]) - 127.5f) / 64.0f;
      }
    }
  }
  return t;
}

maskpool::MaskPyramid make_pyramid(const maskpool::BinaryMask& mask, const Model& model) {
  const auto strides = model.mask_strides();
  return maskpool::MaskPyramid(mask, strides);
}

Targets assign_targets(std::span<const scene::Instance> instances, int grid, int stride) {
  if (grid < 1 || stride < 1) throw ConfigError("assign_targets: grid and stride must be positive");
  const std::size_t cells = static_cast<std::size_t>(grid) * grid;
  Targets t;
  t.grid = grid;
  t.objectness.assign(cells, 0.0f);
  t.class_id.assign(cells, 0);
  t.box.assign(cells * 4, 0.0f);
  t.positive.assign(cells, 0);
  std::vector<double> owner_area(cells, 0.0);
  for (const auto& inst : instances) {
    const int gx = std::clamp(static_cast<int>(std::floor(inst.box.center_x() / stride)), 0, grid - 1);
    const int gy = std::clamp(static_cast<int>(std::floor(inst.box.center_y() / stride)), 0, grid - 1);
    const std::size_t cell = static_cast<std::size_t>(gy) * grid + gx;
    const double area = inst.box.area();
    if (t.positive[cell] && owner_area[cell] <= area) continue;
    owner_area[cell] = area;
    t.positive[cell] = 1;
    t.objectness[cell] = 1.0f;
    t.class_id[cell] = inst.class_id;
    const double cx = (gx + 0.5) * stride;
    const double cy = (gy + 0.5) * stride;
    t.box[0 * cells + cell] = static_cast<float>((cx - inst.box.x_min) / stride);
    t.box[1 * cells + cell] = static_cast<float>((cy - inst.box.y_min) / stride);
    t.box[2 * cells + cell] = static_cast<float>((inst.box.x_max - cx) / stride);
    t.box[3 * cells + cell] = static_cast<float>((inst.box.y_max - cy) / stride);
  }
  return t;
}

LossBreakdown compute_loss(const DetHeadOutput& head, std::span<const Targets> targets,
                           DetHeadOutput* grad) {
  const Shape& os = head.objectness.shape();
  if (targets.size() != static_cast<std::size_t>(os.n)) {
    throw ConfigError("compute_loss: one Targets per image required");
  }
  const std::size_t cells = os.plane();
  Tensor obj_t(os);
  Tensor box_t(head.box_reg.shape());
  std::vector<int> cls(static_cast<std::size_t>(os.n) * cells);
  std::vector<std::uint8_t> pos(cls.size());
  for (int n = 0; n < os.n; ++n) {
    const Targets& t = targets[static_cast<std::size_t>(n)];
    if (t.objectness.size() != cells) throw ConfigError("compute_loss: target grid mismatch");
    std::copy(t.objectness.begin(), t.objectness.end(), obj_t.plane(n, 0));
    for (int c = 0; c < 4; ++c) {
      std::copy_n(t.box.begin() + static_cast<std::ptrdiff_t>(c * cells), cells, box_t.plane(n, c));
    }
    std::copy(t.class_id.begin(), t.class_id.end(), cls.begin() + static_cast<std::ptrdiff_t>(n * cells));
    std::copy(t.positive.begin(), t.positive.end(), pos.begin() + static_cast<std::ptrdiff_t>(n * cells));
  }
  auto bce = nn::loss_bce_logits(head.objectness, obj_t);
  auto ce = nn::loss_softmax_ce(head.class_logits, std::span<const int>(cls),
                                std::span<const std::uint8_t>(pos));
  auto l1 = nn::loss_smooth_l1(head.box_reg, box_t, std::span<const std::uint8_t>(pos), 1.0);
  LossBreakdown out{bce.loss + ce.loss + l1.loss, bce.loss, ce.loss, l1.loss};
  if (grad) {
    grad->objectness = std::move(bce.grad);
    grad->class_logits = std::move(ce.grad);
    grad->box_reg = std::move(l1.grad);
  }
  return out;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cell < b.cell;
  });
  std::vector<Detection> kept;
  std::vector<bool> suppressed(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      if (!suppressed[j] && dets[j].class_id == dets[i].class_id &&
          metrics::iou(dets[i].box, dets[j].box) >= iou_thresh) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

std::vector<std::vector<Detection>> decode(const DetHeadOutput& head, const ModelConfig& cfg) {
  const Shape& os = head.objectness.shape();
  const int nc = head.class_logits.shape().c;
  const int g = os.w;
  const double stride = static_cast<double>(cfg.image_size) / g;
  const double limit = cfg.image_size;
  std::vector<std::vector<Detection>> out(static_cast<std::size_t>(os.n));
  std::vector<double> prob(static_cast<std::size_t>(nc));
  for (int n = 0; n < os.n; ++n) {
    std::vector<Detection> cand;
    for (int gy = 0; gy < os.h; ++gy) {
      for (int gx = 0; gx < g; ++gx) {
        const int cell = gy * g + gx;
        const double z = head.objectness.plane(n, 0)[cell];
        const double obj = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        double mx = -1e300;
        for (int c = 0; c < nc; ++c) mx = std::max(mx, static_cast<double>(head.class_logits.plane(n, c)[cell]));
        double sum = 0.0;
        for (int c = 0; c < nc; ++c) {
          prob[c] = std::exp(head.class_logits.plane(n, c)[cell] - mx);
          sum += prob[c];
        }
        const double cx = (gx + 0.5) * stride;
        const double cy = (gy + 0.5) * stride;
        Box b{std::clamp(cx - stride * head.box_reg.plane(n, 0)[cell], 0.0, limit),
              std::clamp(cy - stride * head.box_reg.plane(n, 1)[cell], 0.0, limit),
              std::clamp(cx + stride * head.box_reg.plane(n, 2)[cell], 0.0, limit),
              std::clamp(cy + stride * head.box_reg.plane(n, 3)[cell], 0.0, limit)};
        if (!(b.x_max > b.x_min && b.y_max > b.y_min)) continue;
        for (int c = 0; c < nc; ++c) {
          const double score = obj * prob[c] / sum;
          if (score >= cfg.score_threshold) cand.push_back({c, score, b, cell});
        }
      }
    }
    out[static_cast<std::size_t>(n)] = nms(std::move(cand), cfg.nms_iou);
  }
  return out;
}

namespace {

std::string first_nonfinite(const ForwardCache& cache, const Model& model) {
  for (const auto& step : cache.steps) {
    if (step.kind == ForwardCache::Step::Kind::conv &&
        (!step.pre_activation.all_finite() || !step.input.all_finite())) {
      return model.layers[static_cast<std::size_t>(step.layer)].name;
    }
  }
  return "head";
}

}  // namespace

Checkpoint train(const scene::DatasetManifest& data, const ModelConfig& cfg,
                 const TrainConfig& tc, const TrainLogger& log) {
  cfg.validate();
  tc.optimizer.validate();
  if (data.records.empty()) throw ConfigError("train: dataset is empty");
  if (tc.iterations < 0) throw ConfigError("train: iterations must be >= 0");
  if (tc.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (data.num_classes() != cfg.num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(data.num_classes()) +
                      " classes, model expects " + std::to_string(cfg.num_classes));
  }

  Checkpoint ckpt{build_model(cfg, tc.seed), tc.seed, 0};
  Model& model = ckpt.model;
  if (tc.iterations == 0) return ckpt;

  const std::size_t n_records = data.records.size();
  std::vector<Targets> targets;
  std::vector<maskpool::MaskPyramid> pyramids;
  targets.reserve(n_records);
  for (const auto& r : data.records) {
    if (r.image.width != cfg.image_size || r.image.height != cfg.image_size) {
      throw ConfigError("train: image " + r.image_id + " is not " +
                        std::to_string(cfg.image_size) + " pixels square");
    }
    targets.push_back(assign_targets(r.instances, cfg.grid_size(), cfg.grid_stride));
    if (cfg.pooling == PoolingVariant::mask) pyramids.push_back(make_pyramid(r.fg_mask, model));
  }

  Rng order_rng(mix_seed(tc.seed ^ 0x5348554646ULL));
  std::vector<std::size_t> order(n_records);
  std::size_t cursor = n_records;
  auto next_index = [&] {
    if (cursor == n_records) {
      for (std::size_t i = 0; i < n_records; ++i) order[i] = i;
      order_rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    return order[cursor++];
  };

  auto params = model.parameters();
  for (int it = 1; it <= tc.iterations; ++it) {
    std::vector<const RgbImage*> imgs;
    std::vector<Targets> batch_targets;
    std::vector<maskpool::MaskPyramid> batch_masks;
    for (int b = 0; b < tc.batch_size; ++b) {
      const std::size_t idx = next_index();
      imgs.push_back(&data.records[idx].image);
      batch_targets.push_back(targets[idx]);
      if (!pyramids.empty()) batch_masks.push_back(pyramids[idx]);
    }
    const Tensor x = images_to_tensor(imgs);
    ForwardCache cache;
    const DetHeadOutput head = forward(model, x, batch_masks, {}, &cache);
    if (!head.objectness.all_finite() || !head.class_logits.all_finite() || !head.box_reg.all_finite()) {
      throw NumericError("non-finite activation at iteration " + std::to_string(it) + " in layer " +
                         first_nonfinite(cache, model));
    }
    DetHeadOutput grad;
    const LossBreakdown loss = compute_loss(head, batch_targets, &grad);
    if (!std::isfinite(loss.total)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(it) + " (layer head)");
    }
    backward(model, cache, grad);
    for (const auto& l : model.layers) {
      if (!l.params.grad_weights.all_finite() || !l.params.grad_bias.all_finite()) {
        throw NumericError("non-finite gradient at iteration " + std::to_string(it) + " in layer " + l.name);
      }
    }
    nn::sgd_step(params, tc.optimizer);
    if (log && (it % std::max(1, tc.log_every) == 0 || it == tc.iterations)) log({it, loss});
  }
  for (auto& l : model.layers) {
    l.params.mom_weights.fill(0.0f);
    l.params.mom_bias.fill(0.0f);
  }
  ckpt.iteration = tc.iterations;
  return ckpt;
}

std::vector<std::vector<Detection>> detect(const Model& model,
                                           std::span<const scene::ImageRecord> records,
                                           const ForwardOptions& options, int threads) {
  constexpr std::size_t kChunk = 16;
  const bool needs_masks =
      model.config.pooling == PoolingVariant::mask || options.bg_weight.has_value();
  std::vector<std::vector<Detection>> out(records.size());

  auto run_chunk = [&](std::size_t begin, std::size_t end) {
    std::vector<const RgbImage*> imgs;
    std::vector<maskpool::MaskPyramid> pyr;
    for (std::size_t i = begin; i < end; ++i) {
      imgs.push_back(&records[i].image);
      if (needs_masks) pyr.push_back(make_pyramid(records[i].fg_mask, model));
    }
    const auto head = forward(model, images_to_tensor(imgs), pyr, options);
    auto dets = decode(head, model.config);
    for (std::size_t i = begin; i < end; ++i) out[i] = std::move(dets[i - begin]);
  };

  const std::size_t chunks = (records.size() + kChunk - 1) / kChunk;
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || chunks <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c * kChunk, std::min(records.size(), (c + 1) * kChunk));
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) {
          run_chunk(c * kChunk, std::min(records.size(), (c + 1) * kChunk));
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

CostReport count_params_flops(std::span<const LayerSpec> layers, int image_height, int image_width) {
  CostReport r;
  int h = image_height;
  int w = image_width;
  for (const LayerSpec& l : layers) {
    const int oh = nn::output_extent(h, l.kernel, l.stride, l.padding);
    const int ow = nn::output_extent(w, l.kernel, l.stride, l.padding);
    switch (l.kind) {
      case LayerSpec::Kind::conv:
        r.param_count += static_cast<std::int64_t>(l.kernel) * l.kernel * l.in_channels * l.out_channels +
                         l.out_channels;
        r.mult_add_count += static_cast<std::int64_t>(oh) * ow * l.out_channels * l.in_channels *
                            l.kernel * l.kernel;
        break;
      case LayerSpec::Kind::max_pool:
        break;
      case LayerSpec::Kind::avg_pool:
      case LayerSpec::Kind::mask_pool: {
        std::int64_t per_channel = 0;
        for (int oy = 0; oy < oh; ++oy) {
          const auto sy = nn::window_span(oy, h, l.kernel, l.stride, l.padding);
          for (int ox = 0; ox < ow; ++ox) {
            const auto sx = nn::window_span(ox, w, l.kernel, l.stride, l.padding);
            per_channel += static_cast<std::int64_t>(sy.end - sy.begin) * (sx.end - sx.begin) + 1;
          }
        }
        r.mult_add_count += per_channel * l.in_channels;
        break;
      }
    }
    h = oh;
    w = ow;
  }
  return r;
}

std::vector<LayerSpec> layer_specs(const Model& model) {
  const ModelConfig& cfg = model.config;
  LayerSpec pool;
  pool.kind = cfg.pooling == PoolingVariant::max   ? LayerSpec::Kind::max_pool
              : cfg.pooling == PoolingVariant::avg ? LayerSpec::Kind::avg_pool
                                                   : LayerSpec::Kind::mask_pool;
  pool.kernel = cfg.pool.kernel;
  pool.stride = cfg.pool.stride;
  pool.padding = cfg.pool.padding;
  std::vector<LayerSpec> specs;
  for (const Op& op : plan(model)) {
    if (op.kind == OpKind::pool) {
      pool.in_channels = pool.out_channels = specs.back().out_channels;
      specs.push_back(pool);
      continue;
    }
    const ConvLayer& l = model.layers[static_cast<std::size_t>(op.layer)];
    specs.push_back({LayerSpec::Kind::conv, l.params.in_channels(), l.params.out_channels(),
                     l.params.kernel(), l.stride, l.padding});
  }
  return specs;
}

CostReport count_params_flops(const Model& model, int image_size) {
  const auto specs = layer_specs(model);
  return count_params_flops(specs, image_size, image_size);
}

}  // namespace mplab::det
