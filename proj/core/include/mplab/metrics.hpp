#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mplab/box.hpp"
#include "mplab/detection.hpp"
#include "mplab/scenegen.hpp"

namespace mplab::metrics {

using DetectionsPerImage = std::vector<std::vector<Detection>>;
using GroundTruthPerImage = std::vector<std::vector<scene::Instance>>;

/// Intersection over union; 0 for disjoint or zero-area boxes.
double iou(const Box& a, const Box& b);

struct MatchPair {
  int det = 0;
  int gt = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_dets;
  std::vector<int> unmatched_gts;
};

/// Greedy matching in the given detection order (callers pass descending
/// score): each detection takes the highest-IoU unmatched gt of the same
/// class with IoU >= iou_thresh, ties to the lower gt index.
MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const scene::Instance> gts, double iou_thresh = 0.5);

/// As match_detections but ignores classes.
MatchResult match_class_agnostic(std::span<const Detection> dets,
                                 std::span<const scene::Instance> gts, double iou_thresh = 0.5);

struct PRPoint {
  double precision = 0.0;
  double recall = 0.0;
  double score_threshold = 0.0;
};

/// Precision/recall at every distinct score threshold of `class_id`
/// detections, highest threshold first.
std::vector<PRPoint> pr_curve(std::span<const std::vector<Detection>> dets,
                              std::span<const std::vector<scene::Instance>> gts, int class_id,
                              double iou_thresh);

/// All-points interpolated AP for one class over a dataset. nullopt when the
/// class has neither ground truth nor detections; 0 when it has detections
/// but no ground truth.
std::optional<double> average_precision(std::span<const std::vector<Detection>> dets,
                                        std::span<const std::vector<scene::Instance>> gts,
                                        int class_id, double iou_thresh = 0.5);

/// Test oracle for average_precision: re-matches from scratch at every
/// distinct score threshold and takes the precision envelope by direct
/// maximisation. Refuses more than 1000 detections.
std::optional<double> brute_force_ap(std::span<const std::vector<Detection>> dets,
                                     std::span<const std::vector<scene::Instance>> gts,
                                     int class_id, double iou_thresh = 0.5);

struct MapResult {
  double map50 = 0.0;                             ///< percent
  std::vector<std::optional<double>> per_class_ap;  ///< fraction, by class id
};

/// Unweighted mean of the defined per-class APs at IoU 0.5, in percent.
/// Throws ConfigError if no image has any ground truth.
MapResult map50(std::span<const std::vector<Detection>> dets,
                std::span<const std::vector<scene::Instance>> gts, int num_classes);
MapResult map50(std::span<const std::vector<Detection>> dets,
                const scene::DatasetManifest& manifest);

/// Value rounded to 3 decimals, as reported in tables.
double round3(double v);

/// Rooted class tree. Detector classes must be leaves.
class ClassHierarchy {
 public:
  /// `parents` maps each non-root node to its parent.
  ClassHierarchy(std::string root, std::map<std::string, std::string> parents);

  /// root -> {round -> circle, angular -> {square, triangle}}
  static ClassHierarchy default_shapes();

  const std::string& root() const { return root_; }
  bool contains(const std::string& node) const;
  bool is_leaf(const std::string& node) const;
  /// Path from the parent of `node` up to, but excluding, the root.
  std::vector<std::string> ancestors(const std::string& node) const;

 private:
  std::string root_;
  std::map<std::string, std::string> parents_;
};

struct HierarchicalScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double overlap = 0.0;    ///< sum |P & T|
  double predicted = 0.0;  ///< sum |P|
  double truth = 0.0;      ///< sum |T|
};

/// Hierarchical precision/recall/F1 per class row (by class id; nullopt for
/// rows with no contributions). Matching is class-agnostic greedy by IoU.
/// A matched pair adds to its gt class row; unmatched gts add |T| to their
/// row; unmatched detections add |P| to the predicted class row.
std::vector<std::optional<HierarchicalScore>> hierarchical_f1(
    std::span<const std::vector<Detection>> dets, std::span<const std::vector<scene::Instance>> gts,
    std::span<const std::string> class_names, const ClassHierarchy& hierarchy,
    double iou_thresh = 0.5);

/// Named per-class scores, in display order; nullopt marks a missing value.
using ClassScores = std::vector<std::pair<std::string, std::optional<double>>>;

struct DiffRow {
  std::string name;
  std::optional<double> a;
  std::optional<double> b;
  std::optional<double> diff;  ///< b - a, missing if either side is
};

/// Per-class b - a over the union of class names (a's order, then b's extras).
std::vector<DiffRow> f1_diff(const ClassScores& a, const ClassScores& b);

/// Fixed-width table with columns (fg, A, B, Diff); missing values are "-".
std::string render_diff_table(std::span<const DiffRow> rows, const std::string& label_a,
                              const std::string& label_b);

/// Number of rows with a defined, strictly positive Diff, and of rows with a
/// defined Diff.
std::pair<int, int> count_improved(std::span<const DiffRow> rows);

}  // namespace mplab::metrics
