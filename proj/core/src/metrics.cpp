#include "mplab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "mplab/error.hpp"

namespace mplab::metrics {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

MatchResult greedy_match(std::span<const Detection> dets, std::span<const scene::Instance> gts,
                         double iou_thresh, bool class_gated) {
  MatchResult r;
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      if (class_gated && gts[g].class_id != dets[d].class_id) continue;
      const double v = iou(dets[d].box, gts[g].box);
      if (v >= iou_thresh && v > best_iou) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best < 0) {
      r.unmatched_dets.push_back(static_cast<int>(d));
    } else {
      taken[static_cast<std::size_t>(best)] = true;
      r.pairs.push_back({static_cast<int>(d), best, best_iou});
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!taken[g]) r.unmatched_gts.push_back(static_cast<int>(g));
  }
  return r;
}

struct RankedDet {
  double score;
  std::size_t image;
  std::size_t index;
};

void check_sizes(std::size_t dets, std::size_t gts) {
  if (dets != gts) {
    throw ConfigError("detections cover " + std::to_string(dets) + " images, ground truth " +
                      std::to_string(gts));
  }
}

// Class `class_id` detections across the dataset, descending score, ties by
// (image, index).
std::vector<RankedDet> ranked(std::span<const std::vector<Detection>> dets, int class_id) {
  std::vector<RankedDet> out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t k = 0; k < dets[i].size(); ++k) {
      if (dets[i][k].class_id == class_id) out.push_back({dets[i][k].score, i, k});
    }
  }
  std::sort(out.begin(), out.end(), [](const RankedDet& a, const RankedDet& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.index < b.index;
  });
  return out;
}

std::vector<std::vector<scene::Instance>> class_gts(std::span<const std::vector<scene::Instance>> gts,
                                                    int class_id, std::size_t& total) {
  std::vector<std::vector<scene::Instance>> out(gts.size());
  total = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (const auto& g : gts[i]) {
      if (g.class_id == class_id) out[i].push_back(g);
    }
    total += out[i].size();
  }
  return out;
}

// Marks each ranked detection TP/FP by greedy matching within its image, in
// ranked order.
std::vector<bool> mark_tp(std::span<const RankedDet> order, std::span<const std::vector<Detection>> dets,
                          const std::vector<std::vector<scene::Instance>>& gts, double iou_thresh) {
  std::vector<std::vector<Detection>> per_image(gts.size());
  std::vector<std::vector<std::size_t>> slot(gts.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    per_image[order[r].image].push_back(dets[order[r].image][order[r].index]);
    slot[order[r].image].push_back(r);
  }
  std::vector<bool> tp(order.size(), false);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (per_image[i].empty()) continue;
    const MatchResult m = greedy_match(per_image[i], gts[i], iou_thresh, true);
    for (const auto& p : m.pairs) tp[slot[i][static_cast<std::size_t>(p.det)]] = true;
  }
  return tp;
}

double area_under_envelope(const std::vector<PRPoint>& pts) {
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].recall - prev_recall) * envelope[i];
    prev_recall = pts[i].recall;
  }
  return ap;
}

}  // namespace

MatchResult match_detections(std::span<const Detection> dets, std::span<const scene::Instance> gts,
                             double iou_thresh) {
  return greedy_match(dets, gts, iou_thresh, true);
}

MatchResult match_class_agnostic(std::span<const Detection> dets,
                                 std::span<const scene::Instance> gts, double iou_thresh) {
  return greedy_match(dets, gts, iou_thresh, false);
}

std::vector<PRPoint> pr_curve(std::span<const std::vector<Detection>> dets,
                              std::span<const std::vector<scene::Instance>> gts, int class_id,
                              double iou_thresh) {
  check_sizes(dets.size(), gts.size());
  std::size_t n_gt = 0;
  const auto cls_gts = class_gts(gts, class_id, n_gt);
  const auto order = ranked(dets, class_id);
  const auto tp = mark_tp(order, dets, cls_gts, iou_thresh);
  std::vector<PRPoint> pts;
  std::size_t n_tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (tp[r]) ++n_tp;
    if (r + 1 < order.size() && order[r + 1].score == order[r].score) continue;
    const double count = static_cast<double>(r + 1);
    pts.push_back({static_cast<double>(n_tp) / count,
                   n_gt ? static_cast<double>(n_tp) / static_cast<double>(n_gt) : 0.0,
                   order[r].score});
  }
  return pts;
}

std::optional<double> average_precision(std::span<const std::vector<Detection>> dets,
                                        std::span<const std::vector<scene::Instance>> gts,
                                        int class_id, double iou_thresh) {
  check_sizes(dets.size(), gts.size());
  std::size_t n_gt = 0;
  class_gts(gts, class_id, n_gt);
  const bool any_det = std::any_of(dets.begin(), dets.end(), [&](const auto& v) {
    return std::any_of(v.begin(), v.end(), [&](const Detection& d) { return d.class_id == class_id; });
  });
  if (n_gt == 0) return any_det ? std::optional<double>(0.0) : std::nullopt;
  return area_under_envelope(pr_curve(dets, gts, class_id, iou_thresh));
}

std::optional<double> brute_force_ap(std::span<const std::vector<Detection>> dets,
                                     std::span<const std::vector<scene::Instance>> gts,
                                     int class_id, double iou_thresh) {
  check_sizes(dets.size(), gts.size());
  std::size_t total_dets = 0;
  for (const auto& v : dets) total_dets += v.size();
  if (total_dets > 1000) throw ConfigError("brute_force_ap: more than 1000 detections");

  std::size_t n_gt = 0;
  const auto cls_gts = class_gts(gts, class_id, n_gt);
  const auto all = ranked(dets, class_id);
  if (n_gt == 0) return all.empty() ? std::nullopt : std::optional<double>(0.0);

  std::set<double, std::greater<>> thresholds;
  for (const auto& r : all) thresholds.insert(r.score);

  std::vector<double> precision;
  std::vector<double> recall;
  for (double t : thresholds) {
    std::vector<RankedDet> kept;
    for (const auto& r : all) {
      if (r.score >= t) kept.push_back(r);
    }
    const auto tp = mark_tp(kept, dets, cls_gts, iou_thresh);
    const auto n_tp = static_cast<double>(std::count(tp.begin(), tp.end(), true));
    precision.push_back(n_tp / static_cast<double>(kept.size()));
    recall.push_back(n_tp / static_cast<double>(n_gt));
  }
  double ap = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    double best = 0.0;
    for (std::size_t j = i; j < precision.size(); ++j) best = std::max(best, precision[j]);
    ap += (recall[i] - prev) * best;
    prev = recall[i];
  }
  return ap;
}

MapResult map50(std::span<const std::vector<Detection>> dets,
                std::span<const std::vector<scene::Instance>> gts, int num_classes) {
  check_sizes(dets.size(), gts.size());
  if (num_classes < 1) throw ConfigError("map50: num_classes must be >= 1");
  const bool any_gt = std::any_of(gts.begin(), gts.end(), [](const auto& v) { return !v.empty(); });
  if (!any_gt) throw ConfigError("map50: no class has ground truth");
  MapResult r;
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < num_classes; ++c) {
    auto ap = average_precision(dets, gts, c, 0.5);
    if (ap) {
      sum += *ap;
      ++defined;
    }
    r.per_class_ap.push_back(ap);
  }
  r.map50 = 100.0 * sum / defined;
  return r;
}

MapResult map50(std::span<const std::vector<Detection>> dets, const scene::DatasetManifest& manifest) {
  std::vector<std::vector<scene::Instance>> gts;
  gts.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) gts.push_back(rec.instances);
  return map50(dets, gts, manifest.num_classes());
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

ClassHierarchy::ClassHierarchy(std::string root, std::map<std::string, std::string> parents)
    : root_(std::move(root)), parents_(std::move(parents)) {
  if (parents_.count(root_)) throw ConfigError("hierarchy root \"" + root_ + "\" has a parent");
  for (const auto& [node, _] : parents_) {
    std::string cur = node;
    std::size_t steps = 0;
    while (cur != root_) {
      auto it = parents_.find(cur);
      if (it == parents_.end()) {
        throw ConfigError("hierarchy node \"" + cur + "\" is not connected to root \"" + root_ + "\"");
      }
      cur = it->second;
      if (++steps > parents_.size()) throw ConfigError("hierarchy contains a cycle through \"" + node + "\"");
    }
  }
}

ClassHierarchy ClassHierarchy::default_shapes() {
  return ClassHierarchy("root", {{"round", "root"},
                                 {"angular", "root"},
                                 {"circle", "round"},
                                 {"square", "angular"},
                                 {"triangle", "angular"}});
}

bool ClassHierarchy::contains(const std::string& node) const {
  return node == root_ || parents_.count(node) > 0;
}

bool ClassHierarchy::is_leaf(const std::string& node) const {
  if (!contains(node)) return false;
  return std::none_of(parents_.begin(), parents_.end(), [&](const auto& kv) { return kv.second == node; });
}

std::vector<std::string> ClassHierarchy::ancestors(const std::string& node) const {
  if (!contains(node)) throw ConfigError("class \"" + node + "\" is missing from the hierarchy");
  std::vector<std::string> out;
  if (node == root_) return out;
  std::string cur = parents_.at(node);
  while (cur != root_) {
    out.push_back(cur);
    cur = parents_.at(cur);
  }
  return out;
}

std::vector<std::optional<HierarchicalScore>> hierarchical_f1(
    std::span<const std::vector<Detection>> dets, std::span<const std::vector<scene::Instance>> gts,
    std::span<const std::string> class_names, const ClassHierarchy& hierarchy, double iou_thresh) {
  check_sizes(dets.size(), gts.size());
  const std::size_t nc = class_names.size();
  std::vector<std::set<std::string>> label_sets(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    if (!hierarchy.contains(class_names[c])) {
      throw ConfigError("class \"" + class_names[c] + "\" is missing from the hierarchy");
    }
    if (!hierarchy.is_leaf(class_names[c])) {
      throw ConfigError("class \"" + class_names[c] + "\" is not a leaf of the hierarchy");
    }
    const auto anc = hierarchy.ancestors(class_names[c]);
    label_sets[c].insert(anc.begin(), anc.end());
    label_sets[c].insert(class_names[c]);
  }
  auto check_class = [&](int c) {
    if (c < 0 || static_cast<std::size_t>(c) >= nc) {
      throw ConfigError("class id " + std::to_string(c) + " has no name in the hierarchy mapping");
    }
    return static_cast<std::size_t>(c);
  };

  std::vector<HierarchicalScore> rows(nc);
  std::vector<bool> touched(nc, false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    std::vector<Detection> sorted = dets[i];
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    const MatchResult m = match_class_agnostic(sorted, gts[i], iou_thresh);
    for (const auto& p : m.pairs) {
      const std::size_t pc = check_class(sorted[static_cast<std::size_t>(p.det)].class_id);
      const std::size_t tc = check_class(gts[i][static_cast<std::size_t>(p.gt)].class_id);
      const auto& P = label_sets[pc];
      const auto& T = label_sets[tc];
      const auto common = static_cast<double>(std::count_if(P.begin(), P.end(), [&](const auto& s) {
        return T.count(s) > 0;
      }));
      rows[tc].overlap += common;
      rows[tc].predicted += static_cast<double>(P.size());
      rows[tc].truth += static_cast<double>(T.size());
      touched[tc] = true;
    }
    for (int g : m.unmatched_gts) {
      const std::size_t tc = check_class(gts[i][static_cast<std::size_t>(g)].class_id);
      rows[tc].truth += static_cast<double>(label_sets[tc].size());
      touched[tc] = true;
    }
    for (int d : m.unmatched_dets) {
      const std::size_t pc = check_class(sorted[static_cast<std::size_t>(d)].class_id);
      rows[pc].predicted += static_cast<double>(label_sets[pc].size());
      touched[pc] = true;
    }
  }

  std::vector<std::optional<HierarchicalScore>> out(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    if (!touched[c]) continue;
    HierarchicalScore s = rows[c];
    s.precision = s.predicted > 0 ? s.overlap / s.predicted : 0.0;
    s.recall = s.truth > 0 ? s.overlap / s.truth : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    out[c] = s;
  }
  return out;
}

std::vector<DiffRow> f1_diff(const ClassScores& a, const ClassScores& b) {
  std::vector<DiffRow> rows;
  auto find = [](const ClassScores& s, const std::string& name) -> const std::optional<double>* {
    for (const auto& [n, v] : s) {
      if (n == name) return &v;
    }
    return nullptr;
  };
  auto add = [&](const std::string& name) {
    DiffRow row{name, {}, {}, {}};
    if (const auto* v = find(a, name)) row.a = *v;
    if (const auto* v = find(b, name)) row.b = *v;
    if (row.a && row.b) row.diff = *row.b - *row.a;
    rows.push_back(row);
  };
  for (const auto& [name, _] : a) add(name);
  for (const auto& [name, _] : b) {
    if (!find(a, name)) add(name);
  }
  return rows;
}

std::string render_diff_table(std::span<const DiffRow> rows, const std::string& label_a,
                              const std::string& label_b) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  std::size_t w0 = 2;
  std::size_t w = std::max({label_a.size(), label_b.size(), std::size_t{9}});
  for (const auto& r : rows) w0 = std::max(w0, r.name.size());
  std::ostringstream os;
  auto line = [&](const std::string& c0, const std::string& c1, const std::string& c2, const std::string& c3) {
    os << c0 << std::string(w0 - c0.size() + 2, ' ');
    for (const std::string* c : {&c1, &c2, &c3}) {
      os << std::string(w - std::min(w, c->size()), ' ') << *c << (c == &c3 ? "" : "  ");
    }
    os << '\n';
  };
  line("fg", label_a, label_b, "Diff");
  for (const auto& r : rows) line(r.name, cell(r.a), cell(r.b), cell(r.diff));
  return os.str();
}

std::pair<int, int> count_improved(std::span<const DiffRow> rows) {
  int improved = 0;
  int defined = 0;
  for (const auto& r : rows) {
    if (!r.diff) continue;
    ++defined;
    if (*r.diff > 0) ++improved;
  }
  return {improved, defined};
}

}  // namespace mplab::metrics
