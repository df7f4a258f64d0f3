#include "mplab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mplab/error.hpp"
#include "mplab/rng.hpp"

namespace mplab::exp {

SweepSpec SweepSpec::standard() {
  SweepSpec s;
  for (int i = 0; i <= 9; ++i) s.weights.push_back(0.5 + 0.25 * i);
  return s;
}

void SweepSpec::validate() const {
  if (weights.empty()) throw ConfigError("sweep weights must not be empty");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
      throw ConfigError("sweep weights must be finite and non-negative");
    }
    if (i > 0 && !(weights[i] > weights[i - 1])) {
      throw ConfigError("sweep weights must be strictly increasing");
    }
  }
}

namespace {

std::string model_id_for(const det::Checkpoint& ckpt, const EvalContext& ctx) {
  if (!ctx.model_id.empty()) return ctx.model_id;
  return det::to_string(ckpt.model.config.pooling) + "-s" + std::to_string(ckpt.seed);
}

void require_masks(const scene::DatasetManifest& manifest) {
  for (const auto& r : manifest.records) {
    if (r.fg_mask.height() != r.image.height || r.fg_mask.width() != r.image.width) {
      throw ConfigError("record " + r.image_id + " has no foreground mask matching its image");
    }
  }
}

ExperimentReport new_report(const det::Checkpoint& ckpt, const scene::DatasetManifest& manifest,
                            const EvalContext& ctx, const std::string& intervention) {
  ExperimentReport r;
  r.model_id = model_id_for(ckpt, ctx);
  r.dataset_id = ctx.dataset_id;
  r.intervention = intervention;
  r.class_names = manifest.class_names;
  return r;
}

ReportRow make_row(const ExperimentReport& rep, int repetition, std::optional<double> param,
                   Evaluation ev, const std::string& intervention) {
  return {rep.model_id, rep.dataset_id, intervention, repetition, param, ev.map.map50,
          std::move(ev.map.per_class_ap), std::move(ev.per_class_hf)};
}

std::vector<std::vector<scene::Instance>> ground_truth(const scene::DatasetManifest& m) {
  std::vector<std::vector<scene::Instance>> gts;
  gts.reserve(m.records.size());
  for (const auto& r : m.records) gts.push_back(r.instances);
  return gts;
}

void check_same_ground_truth(const scene::DatasetManifest& a, const scene::DatasetManifest& b) {
  if (a.records.size() != b.records.size()) throw ConfigError("intervention changed the record count");
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (!(a.records[i].instances == b.records[i].instances)) {
      throw ConfigError("intervention altered the annotations of " + a.records[i].image_id);
    }
  }
}

}  // namespace

Evaluation score(const metrics::DetectionsPerImage& dets, const scene::DatasetManifest& manifest,
                 const EvalContext& ctx) {
  const auto gts = ground_truth(manifest);
  Evaluation ev;
  ev.map = metrics::map50(dets, gts, manifest.num_classes());
  metrics::DetectionsPerImage confident(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const auto& d : dets[i]) {
      if (d.score >= ctx.f1_score_threshold) confident[i].push_back(d);
    }
  }
  const auto hf = metrics::hierarchical_f1(confident, gts, manifest.class_names, ctx.hierarchy);
  for (const auto& s : hf) ev.per_class_hf.push_back(s ? std::optional<double>(s->f1) : std::nullopt);
  return ev;
}

Evaluation evaluate(const det::Model& model, const scene::DatasetManifest& manifest,
                    const EvalContext& ctx, const det::ForwardOptions& options) {
  if (manifest.num_classes() != model.config.num_classes) {
    throw ConfigError("dataset has " + std::to_string(manifest.num_classes()) +
                      " classes, model expects " + std::to_string(model.config.num_classes));
  }
  const auto dets = det::detect(model, manifest.records, options, ctx.threads);
  return score(dets, manifest, ctx);
}

Aggregates aggregate(std::span<const double> values) {
  Aggregates a;
  a.n = static_cast<int>(values.size());
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / a.n;
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / (a.n - 1));
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  a.min = *lo;
  a.max = *hi;
  a.diff = a.max - a.min;
  return a;
}

Aggregates ExperimentReport::aggregates() const {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.map50);
  return aggregate(v);
}

metrics::ClassScores ExperimentReport::mean_class_hf() const {
  metrics::ClassScores out;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (c < r.per_class_hf.size() && r.per_class_hf[c]) {
        sum += *r.per_class_hf[c];
        ++n;
      }
    }
    out.emplace_back(class_names[c], n ? std::optional<double>(sum / n) : std::nullopt);
  }
  return out;
}

ExperimentReport run_bg_activation_sweep(const det::Checkpoint& ckpt,
                                         const scene::DatasetManifest& manifest,
                                         const SweepSpec& sweep, const EvalContext& ctx,
                                         bool all_stages) {
  sweep.validate();
  require_masks(manifest);
  ExperimentReport rep = new_report(ckpt, manifest, ctx, "bg_activation_sweep");
  rep.baseline_map50 = evaluate(ckpt.model, manifest, ctx).map.map50;
  for (double w : sweep.weights) {
    det::ForwardOptions opt;
    opt.bg_weight = static_cast<float>(w);
    opt.bg_scale_all_stages = all_stages;
    rep.rows.push_back(make_row(rep, 0, w, evaluate(ckpt.model, manifest, ctx, opt), rep.intervention));
  }
  return rep;
}

ExperimentReport run_random_bg_eval(const det::Checkpoint& ckpt,
                                    const scene::DatasetManifest& manifest,
                                    std::span<const RgbImage> bg_pool, const RandomBgOptions& opts,
                                    const EvalContext& ctx) {
  if (opts.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (!opts.own_background && bg_pool.empty()) throw ConfigError("background pool is empty");
  require_masks(manifest);
  ExperimentReport rep = new_report(ckpt, manifest, ctx, opts.own_background ? "own_bg" : "random_bg");
  rep.baseline_map50 = evaluate(ckpt.model, manifest, ctx).map.map50;
  for (int r = 0; r < opts.repetitions; ++r) {
    scene::DatasetManifest swapped;
    if (opts.own_background) {
      swapped = manifest;
      for (auto& rec : swapped.records) rec = scene::composite_with_bg(rec, rec.image, opts.feather_radius);
    } else {
      swapped = scene::composite_random_bg(manifest, bg_pool, opts.seed ^ static_cast<std::uint64_t>(r),
                                           opts.feather_radius);
    }
    check_same_ground_truth(manifest, swapped);
    rep.rows.push_back(make_row(rep, r, std::nullopt, evaluate(ckpt.model, swapped, ctx), rep.intervention));
  }
  return rep;
}

std::vector<std::size_t> pick_fixed_bgs(std::size_t pool_size, int repetitions, std::uint64_t seed) {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (pool_size < static_cast<std::size_t>(repetitions)) {
    throw ConfigError("background pool has " + std::to_string(pool_size) + " images, need at least " +
                      std::to_string(repetitions));
  }
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed));
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(static_cast<std::size_t>(repetitions));
  return idx;
}

ExperimentReport run_fixed_bg_eval(const det::Checkpoint& ckpt,
                                   const scene::DatasetManifest& manifest,
                                   std::span<const RgbImage> bg_pool, const FixedBgOptions& opts,
                                   const EvalContext& ctx) {
  const auto picks = pick_fixed_bgs(bg_pool.size(), opts.repetitions, opts.seed);
  require_masks(manifest);
  ExperimentReport rep = new_report(ckpt, manifest, ctx, "fixed_bg");
  rep.baseline_map50 = evaluate(ckpt.model, manifest, ctx).map.map50;
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const auto swapped = scene::composite_fixed_bg(manifest, bg_pool[picks[r]], opts.feather_radius);
    check_same_ground_truth(manifest, swapped);
    rep.rows.push_back(make_row(rep, static_cast<int>(r), static_cast<double>(picks[r]),
                                evaluate(ckpt.model, swapped, ctx), rep.intervention));
  }
  return rep;
}

std::vector<double> default_ablation_factors() { return {0.8, 0.9, 1.1, 1.2}; }

ExperimentReport run_boundary_ablation(const det::Checkpoint& ckpt,
                                       const scene::DatasetManifest& manifest,
                                       std::span<const double> factors, const EvalContext& ctx) {
  if (ckpt.model.config.pooling != det::PoolingVariant::mask) {
    throw ConfigError("boundary ablation needs a mask-pooling checkpoint, got " +
                      det::to_string(ckpt.model.config.pooling));
  }
  for (double f : factors) {
    if (!(f > 0.0) || f == 1.0 || !std::isfinite(f)) {
      throw ConfigError("ablation factors must be positive and != 1");
    }
  }
  require_masks(manifest);
  ExperimentReport rep = new_report(ckpt, manifest, ctx, "boundary_ablation");
  const Evaluation base = evaluate(ckpt.model, manifest, ctx);
  rep.baseline_map50 = base.map.map50;
  rep.rows.push_back(make_row(rep, 0, std::nullopt, base, "baseline"));
  for (double f : factors) {
    scene::DatasetManifest perturbed = manifest;
    const auto mode = f > 1.0 ? maskpool::MorphMode::dilate : maskpool::MorphMode::erode;
    for (auto& rec : perturbed.records) rec.fg_mask = maskpool::morph_perturb(rec.fg_mask, mode, f);
    rep.rows.push_back(make_row(rep, 0, f, evaluate(ckpt.model, perturbed, ctx),
                                f > 1.0 ? "dilate" : "erode"));
  }
  return rep;
}

DiffReport diff_report(const ExperimentReport& a, const ExperimentReport& b) {
  DiffReport d;
  const auto sa = a.mean_class_hf();
  const auto sb = b.mean_class_hf();
  const bool disjoint = std::none_of(sa.begin(), sa.end(), [&](const auto& x) {
    return std::any_of(sb.begin(), sb.end(), [&](const auto& y) { return y.first == x.first; });
  });
  if (disjoint && !sa.empty() && !sb.empty()) {
    d.warnings.push_back("reports " + a.model_id + " and " + b.model_id + " share no classes");
  }
  d.rows = metrics::f1_diff(sa, sb);
  std::tie(d.improved, d.compared) = metrics::count_improved(d.rows);
  d.table = metrics::render_diff_table(d.rows, a.model_id, b.model_id);
  d.table += "improved " + std::to_string(d.improved) + " of " + std::to_string(d.compared) + " pairs\n";
  return d;
}

namespace {

nlohmann::json opt_to_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::vector<nlohmann::json> opts_to_json(const std::vector<std::optional<double>>& v) {
  std::vector<nlohmann::json> out;
  for (const auto& x : v) out.push_back(opt_to_json(x));
  return out;
}

std::optional<double> opt_from_json(const nlohmann::json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

std::vector<std::optional<double>> opts_from_json(const nlohmann::json& j) {
  std::vector<std::optional<double>> out;
  for (const auto& x : j) out.push_back(opt_from_json(x));
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void to_json(nlohmann::json& j, const ExperimentReport& r) {
  const Aggregates a = r.aggregates();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"model_id", row.model_id},
                    {"dataset_id", row.dataset_id},
                    {"intervention", row.intervention},
                    {"repetition", row.repetition},
                    {"param", opt_to_json(row.param)},
                    {"map50", row.map50},
                    {"per_class_ap", opts_to_json(row.per_class_ap)},
                    {"per_class_hf", opts_to_json(row.per_class_hf)}});
  }
  j = nlohmann::json{{"schema", 1},
                     {"model_id", r.model_id},
                     {"dataset_id", r.dataset_id},
                     {"intervention", r.intervention},
                     {"class_names", r.class_names},
                     {"baseline_map50", r.baseline_map50},
                     {"rows", rows},
                     {"aggregates",
                      {{"n", a.n}, {"mean", a.mean}, {"std", a.std}, {"min", a.min}, {"max", a.max}, {"diff", a.diff}}}};
}

void from_json(const nlohmann::json& j, ExperimentReport& r) {
  if (j.at("schema").get<int>() != 1) throw ConfigError("unsupported report schema");
  r.model_id = j.at("model_id").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.intervention = j.at("intervention").get<std::string>();
  r.class_names = j.at("class_names").get<std::vector<std::string>>();
  r.baseline_map50 = j.at("baseline_map50").get<double>();
  r.rows.clear();
  for (const auto& row : j.at("rows")) {
    r.rows.push_back({row.at("model_id").get<std::string>(), row.at("dataset_id").get<std::string>(),
                      row.at("intervention").get<std::string>(), row.at("repetition").get<int>(),
                      opt_from_json(row.at("param")), row.at("map50").get<double>(),
                      opts_from_json(row.at("per_class_ap")), opts_from_json(row.at("per_class_hf"))});
  }
}

std::string to_csv(const ExperimentReport& r) {
  std::ostringstream os;
  os << "schema,model_id,dataset_id,intervention,repetition,param,map50";
  for (const auto& c : r.class_names) os << ",ap_" << c;
  for (const auto& c : r.class_names) os << ",hf_" << c;
  os << '\n';
  for (const auto& row : r.rows) {
    os << "1," << row.model_id << ',' << row.dataset_id << ',' << row.intervention << ','
       << row.repetition << ',' << fmt(row.param) << ',' << fmt(row.map50);
    for (std::size_t c = 0; c < r.class_names.size(); ++c) {
      os << ',' << (c < row.per_class_ap.size() ? fmt(row.per_class_ap[c]) : std::string());
    }
    for (std::size_t c = 0; c < r.class_names.size(); ++c) {
      os << ',' << (c < row.per_class_hf.size() ? fmt(row.per_class_hf[c]) : std::string());
    }
    os << '\n';
  }
  return os.str();
}

void write_report(const ExperimentReport& r, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path) {
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw ConfigError("cannot write " + p.string());
  };
  write(json_path, nlohmann::json(r).dump(2) + "\n");
  if (!csv_path.empty()) write(csv_path, to_csv(r));
}

ExperimentReport read_report(const std::filesystem::path& json_path) {
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open report " + json_path.string());
  try {
    return nlohmann::json::parse(in).get<ExperimentReport>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(json_path.string(), e.byte, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(json_path.string(), 0, std::string("bad report: ") + e.what());
  }
}

std::string detections_json(const metrics::DetectionsPerImage& dets,
                            const scene::DatasetManifest& manifest) {
  if (dets.size() != manifest.records.size()) throw ConfigError("detections do not match the dataset");
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (const auto& d : dets[i]) {
      out.push_back({{"image_id", manifest.records[i].image_id},
                     {"class_id", d.class_id},
                     {"score", d.score},
                     {"bbox", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}}});
    }
  }
  return out.dump(1) + "\n";
}

}  // namespace mplab::exp
