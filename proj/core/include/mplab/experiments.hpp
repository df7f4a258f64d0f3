#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mplab/metrics.hpp"
#include "mplab/minidet.hpp"
#include "mplab/scenegen.hpp"

namespace mplab::exp {

struct SweepSpec {
  std::vector<double> weights;

  /// 0.5, 0.75, ..., 2.75 (includes 1.0).
  static SweepSpec standard();
  /// Non-empty, strictly increasing, every weight finite and >= 0.
  void validate() const;
};

/// Settings shared by every evaluation.
struct EvalContext {
  std::string model_id;    ///< defaults to "<pooling>-s<seed>" when empty
  std::string dataset_id = "dataset";
  int threads = 1;
  /// Detections below this score are ignored by hierarchical F1 (mAP uses all).
  double f1_score_threshold = 0.3;
  metrics::ClassHierarchy hierarchy = metrics::ClassHierarchy::default_shapes();
};

struct Evaluation {
  metrics::MapResult map;
  std::vector<std::optional<double>> per_class_hf;
};

/// Runs the model over `manifest` and scores the detections.
Evaluation evaluate(const det::Model& model, const scene::DatasetManifest& manifest,
                    const EvalContext& ctx, const det::ForwardOptions& options = {});

/// Scores precomputed detections against `manifest`.
Evaluation score(const metrics::DetectionsPerImage& dets, const scene::DatasetManifest& manifest,
                 const EvalContext& ctx);

struct ReportRow {
  std::string model_id;
  std::string dataset_id;
  std::string intervention;
  int repetition = 0;
  std::optional<double> param;  ///< sweep weight, ablation factor or BG pool index
  double map50 = 0.0;
  std::vector<std::optional<double>> per_class_ap;
  std::vector<std::optional<double>> per_class_hf;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct Aggregates {
  int n = 0;
  double mean = 0.0;
  double std = 0.0;  ///< sample std (n - 1), 0 when n == 1
  double min = 0.0;
  double max = 0.0;
  double diff = 0.0;  ///< max - min

  friend bool operator==(const Aggregates&, const Aggregates&) = default;
};

Aggregates aggregate(std::span<const double> values);

struct ExperimentReport {
  std::string model_id;
  std::string dataset_id;
  std::string intervention;
  std::vector<std::string> class_names;
  double baseline_map50 = 0.0;  ///< unperturbed mAP50 of the same model and dataset
  std::vector<ReportRow> rows;

  /// mAP50 statistics over `rows`.
  Aggregates aggregates() const;
  /// Per-class hierarchical F1 averaged over the rows that define it.
  metrics::ClassScores mean_class_hf() const;

  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

/// One row per weight: inference with BG activations scaled at the pooling
/// slot input (or every stage boundary when `all_stages`).
ExperimentReport run_bg_activation_sweep(const det::Checkpoint& ckpt,
                                         const scene::DatasetManifest& manifest,
                                         const SweepSpec& sweep, const EvalContext& ctx,
                                         bool all_stages = false);

struct RandomBgOptions {
  int repetitions = 5;
  std::uint64_t seed = 0;
  int feather_radius = 0;
  /// Recompose every record over its own image instead of the pool.
  bool own_background = false;
};

/// Repetition r recomposes every record with composite_random_bg(seed ^ r).
ExperimentReport run_random_bg_eval(const det::Checkpoint& ckpt,
                                    const scene::DatasetManifest& manifest,
                                    std::span<const RgbImage> bg_pool, const RandomBgOptions& opts,
                                    const EvalContext& ctx);

struct FixedBgOptions {
  int repetitions = 5;
  std::uint64_t seed = 0;
  int feather_radius = 0;
};

/// Picks `repetitions` distinct pool entries from `seed`; each repetition
/// places the whole dataset over one of them.
ExperimentReport run_fixed_bg_eval(const det::Checkpoint& ckpt,
                                   const scene::DatasetManifest& manifest,
                                   std::span<const RgbImage> bg_pool, const FixedBgOptions& opts,
                                   const EvalContext& ctx);

/// Pool indices used by run_fixed_bg_eval.
std::vector<std::size_t> pick_fixed_bgs(std::size_t pool_size, int repetitions, std::uint64_t seed);

std::vector<double> default_ablation_factors();

/// Baseline row, then one row per factor with every mask morphologically
/// perturbed (factor < 1 erodes, > 1 dilates). Mask-variant checkpoints only.
ExperimentReport run_boundary_ablation(const det::Checkpoint& ckpt,
                                       const scene::DatasetManifest& manifest,
                                       std::span<const double> factors, const EvalContext& ctx);

struct DiffReport {
  std::vector<metrics::DiffRow> rows;
  int improved = 0;
  int compared = 0;
  std::string table;
  std::vector<std::string> warnings;
};

/// Per-class hierarchical F1 of b minus a, using each report's mean_class_hf.
DiffReport diff_report(const ExperimentReport& a, const ExperimentReport& b);

// Serialization. JSON carries "schema": 1; CSV has one row per evaluation.

void to_json(nlohmann::json& j, const ExperimentReport& r);
void from_json(const nlohmann::json& j, ExperimentReport& r);
std::string to_csv(const ExperimentReport& r);
void write_report(const ExperimentReport& r, const std::filesystem::path& json_path,
                  const std::filesystem::path& csv_path);
ExperimentReport read_report(const std::filesystem::path& json_path);

/// JSON list of {image_id, class_id, score, bbox} for every detection.
std::string detections_json(const metrics::DetectionsPerImage& dets,
                            const scene::DatasetManifest& manifest);

}  // namespace mplab::exp
