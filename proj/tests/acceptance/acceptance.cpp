// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
// Usage: mplab_acceptance <path to maskpool-lab> [work dir]

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mplab/experiments.hpp"
#include "mplab/gradcheck.hpp"
#include "mplab/layers.hpp"
#include "mplab/maskpool.hpp"
#include "mplab/metrics.hpp"
#include "mplab/minidet.hpp"
#include "mplab/rng.hpp"
#include "mplab/scenegen.hpp"

namespace fs = std::filesystem;
using namespace mplab;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::map<int, Outcome> results;

void record(int id, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  results[id] = o;
  std::printf("  [criterion %d done in %.1f s] %s\n", id, o.seconds, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- 1. gradient fidelity ----------------------------------------------

using mplab::TensorD;

TensorD random_tensor(Shape s, Rng& rng) {
  TensorD t(s);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

maskpool::BinaryMask random_mask(int h, int w, Rng& rng) {
  maskpool::BinaryMask m(h, w);
  const double p = rng.uniform();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, rng.uniform() < p);
  return m;
}

TensorD scalar(double v) { return TensorD({1, 1, 1, 1}, v); }

Outcome gradient_fidelity() {
  constexpr double kEps = 1e-3;
  Rng rng(0x67726164);
  std::map<std::string, double> worst;
  auto note = [&](const std::string& op, double err) { worst[op] = std::max(worst[op], err); };
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(2));
    const int c = 1 + static_cast<int>(rng.below(4));
    const int h = 3 + static_cast<int>(rng.below(7));
    const int w = 3 + static_cast<int>(rng.below(7));
    const Shape s{n, c, h, w};
    const TensorD x = random_tensor(s, rng);
    std::vector<maskpool::BinaryMask> masks;
    for (int i = 0; i < n; ++i) masks.push_back(random_mask(h, w, rng));
    const nn::PoolGeometry g{3, 1 + static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))};
    nn::GradCheckOptions opt;
    opt.epsilon = kEps;
    opt.projection_seed = static_cast<std::uint64_t>(trial) + 1;

    note("maskpool2d", nn::grad_check<double>(
                           [&](const TensorD& in) { return maskpool::maskpool2d_forward(in, std::span<const maskpool::BinaryMask>(masks), g).out; },
                           [&](const TensorD& in, const TensorD& go) {
                             const auto r = maskpool::maskpool2d_forward(in, std::span<const maskpool::BinaryMask>(masks), g);
                             return maskpool::maskpool2d_backward(std::span<const maskpool::BinaryMask>(masks), go, r.record);
                           },
                           x, opt));

    note("avgpool2d", nn::grad_check<double>(
                          [&](const TensorD& in) { return nn::avgpool2d_forward(in, g); },
                          [&](const TensorD&, const TensorD& go) { return nn::avgpool2d_backward(s, go, g); }, x, opt));

    // Max pooling: skip inputs whose nudge changes any window's winner.
    const auto base = nn::maxpool2d_forward(x, g).argmax;
    auto max_opt = opt;
    max_opt.skip = [&](std::size_t i) {
      for (double d : {kEps, -kEps}) {
        TensorD y = x;
        y[i] += d;
        if (nn::maxpool2d_forward(y, g).argmax != base) return true;
      }
      return false;
    };
    note("maxpool2d", nn::grad_check<double>(
                          [&](const TensorD& in) { return nn::maxpool2d_forward(in, g).out; },
                          [&](const TensorD& in, const TensorD& go) {
                            return nn::maxpool2d_backward(s, std::span<const std::int64_t>(nn::maxpool2d_forward(in, g).argmax), go);
                          },
                          x, max_opt));

    auto relu_opt = opt;
    relu_opt.skip = [&](std::size_t i) { return std::abs(x[i]) < 2 * kEps; };
    note("relu", nn::grad_check<double>([](const TensorD& in) { return nn::relu_forward(in); },
                                        [](const TensorD& in, const TensorD& go) { return nn::relu_backward(in, go); }, x,
                                        relu_opt));

    const int cout = 1 + static_cast<int>(rng.below(4));
    const int k = rng.below(2) ? 3 : 1;
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = k == 3 ? static_cast<int>(rng.below(2)) : 0;
    auto params = nn::BasicLayerParams<double>::conv(c, cout, k);
    params.weights = random_tensor(params.weights.shape(), rng);
    params.bias = random_tensor(params.bias.shape(), rng);
    note("conv2d (input)", nn::grad_check<double>(
                               [&](const TensorD& in) { return nn::conv2d_forward(in, params, stride, pad); },
                               [&](const TensorD& in, const TensorD& go) {
                                 auto p = params;
                                 p.zero_grad();
                                 return nn::conv2d_backward(in, p, go, stride, pad);
                               },
                               x, opt));
    note("conv2d (weights)", nn::grad_check<double>(
                                 [&](const TensorD& wt) {
                                   auto p = params;
                                   p.weights = wt;
                                   return nn::conv2d_forward(x, p, stride, pad);
                                 },
                                 [&](const TensorD& wt, const TensorD& go) {
                                   auto p = params;
                                   p.weights = wt;
                                   p.zero_grad();
                                   nn::conv2d_backward(x, p, go, stride, pad);
                                   return p.grad_weights;
                                 },
                                 params.weights, opt));

    const TensorD targets = [&] {
      TensorD t(s);
      for (auto& v : t.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
      return t;
    }();
    note("bce_logits", nn::grad_check<double>(
                           [&](const TensorD& in) { return scalar(nn::loss_bce_logits(in, targets).loss); },
                           [&](const TensorD& in, const TensorD& go) {
                             auto r = nn::loss_bce_logits(in, targets);
                             for (auto& v : r.grad.data()) v *= go[0];
                             return r.grad;
                           },
                           x, opt));

    const std::size_t cells = static_cast<std::size_t>(n) * h * w;
    std::vector<int> cls(cells);
    std::vector<std::uint8_t> valid(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      cls[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
      valid[i] = rng.uniform() < 0.6;
    }
    note("softmax_ce", nn::grad_check<double>(
                           [&](const TensorD& in) { return scalar(nn::loss_softmax_ce(in, std::span<const int>(cls), std::span<const std::uint8_t>(valid)).loss); },
                           [&](const TensorD& in, const TensorD& go) {
                             auto r = nn::loss_softmax_ce(in, std::span<const int>(cls), std::span<const std::uint8_t>(valid));
                             for (auto& v : r.grad.data()) v *= go[0];
                             return r.grad;
                           },
                           x, opt));

    const TensorD box_target = random_tensor(s, rng);
    auto l1_opt = opt;
    l1_opt.skip = [&](std::size_t i) { return std::abs(std::abs(x[i] - box_target[i]) - 1.0) < 2 * kEps; };
    note("smooth_l1", nn::grad_check<double>(
                          [&](const TensorD& in) {
                            return scalar(nn::loss_smooth_l1(in, box_target, std::span<const std::uint8_t>(valid), 1.0).loss);
                          },
                          [&](const TensorD& in, const TensorD& go) {
                            auto r = nn::loss_smooth_l1(in, box_target, std::span<const std::uint8_t>(valid), 1.0);
                            for (auto& v : r.grad.data()) v *= go[0];
                            return r.grad;
                          },
                          x, l1_opt));
  }
  bool pass = true;
  std::string detail = "max rel err:";
  for (const auto& [op, err] : worst) {
    pass &= err < 1e-3;
    detail += " " + op + "=" + fmt("%.2e", err);
  }
  return {pass, detail};
}

// ---- 2. all-FG / all-BG degeneracy ----------------------------------------

Outcome degeneracy() {
  Rng rng(0x646567);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Shape s{1 + static_cast<int>(rng.below(2)), 1 + static_cast<int>(rng.below(8)),
                  3 + static_cast<int>(rng.below(30)), 3 + static_cast<int>(rng.below(30))};
    Tensor x(s);
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    const nn::PoolGeometry g{3, 1 + static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))};
    const auto avg = nn::avgpool2d_forward(x, g);
    for (std::uint8_t fill : {std::uint8_t{1}, std::uint8_t{0}}) {
      std::vector<maskpool::BinaryMask> m(static_cast<std::size_t>(s.n), maskpool::BinaryMask(s.h, s.w, fill));
      const auto out = maskpool::maskpool2d_forward(x, std::span<const maskpool::BinaryMask>(m), g).out;
      for (std::size_t i = 0; i < avg.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(out[i] - avg[i])));
    }
  }
  return {worst <= 1e-6, fmt("max |maskpool - avgpool| = %.3e over 50 inputs x {all-FG, all-BG}", worst)};
}

// ---- 3. AP oracle equivalence ---------------------------------------------

Outcome ap_oracle() {
  using metrics::DetectionsPerImage;
  using metrics::GroundTruthPerImage;
  Rng rng(0x6170);
  int mismatches = 0, compared = 0;
  for (int t = 0; t < 1000; ++t) {
    const int images = 1 + static_cast<int>(rng.below(2));
    DetectionsPerImage d(static_cast<std::size_t>(images));
    GroundTruthPerImage g(static_cast<std::size_t>(images));
    auto box = [&] {
      const double x0 = 4.0 * static_cast<double>(rng.below(4));
      const double y0 = 4.0 * static_cast<double>(rng.below(3));
      return Box{x0, y0, x0 + 10, y0 + 10};
    };
    const int ngt = static_cast<int>(rng.below(5));
    for (int i = 0; i < ngt; ++i) g[rng.below(static_cast<std::uint64_t>(images))].push_back({static_cast<int>(rng.below(2)), box(), -1});
    const int ndet = static_cast<int>(rng.below(7));
    for (int i = 0; i < ndet; ++i)
      d[rng.below(static_cast<std::uint64_t>(images))].push_back(
          {static_cast<int>(rng.below(2)), 0.2 * static_cast<double>(1 + rng.below(4)), box(), -1});
    for (int c = 0; c < 2; ++c) {
      const auto a = metrics::average_precision(d, g, c);
      const auto b = metrics::brute_force_ap(d, g, c);
      ++compared;
      if (a.has_value() != b.has_value() || (a && *a != *b)) ++mismatches;
    }
  }
  const Box gt_box{0, 0, 10, 10}, far{50, 50, 60, 60};
  const GroundTruthPerImage one{{{0, gt_box, -1}}};
  const auto tp_first = metrics::average_precision(DetectionsPerImage{{{0, 0.9, gt_box, -1}, {0, 0.5, far, -1}}}, one, 0);
  const auto fp_first = metrics::average_precision(DetectionsPerImage{{{0, 0.9, far, -1}, {0, 0.5, gt_box, -1}}}, one, 0);
  const bool hand = tp_first && *tp_first == 1.0 && fp_first && *fp_first == 0.5;
  return {mismatches == 0 && hand,
          std::to_string(mismatches) + " mismatches in " + std::to_string(compared) + " class comparisons; AP(TP first)=" +
              fmt("%.17g", tp_first.value_or(-1)) + ", AP(FP first)=" + fmt("%.17g", fp_first.value_or(-1))};
}

// ---- shared trained checkpoints ---------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  det::Checkpoint max_ckpt, mask_ckpt;
  double max_base = 0, mask_base = 0;
  double max_random = 0, mask_random = 0;
  double max_diff = 0, mask_diff = 0;
};

struct Bench {
  scene::DatasetManifest train, val;
  std::vector<RgbImage> pool;
  std::vector<SeedRun> runs;
};

Bench build_bench() {
  Bench b;
  scene::GenerateConfig g;  // default: 128 px, bias 0.85 toward one texture per class
  g.n_images = 2000;
  g.seed = 1001;
  g.id_prefix = "train";
  b.train = scene::generate_dataset(g);
  g.n_images = 500;
  g.seed = 2002;
  g.id_prefix = "val";
  b.val = scene::generate_dataset(g);
  b.pool = scene::make_bg_pool(50, 128, 3003);
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    SeedRun r;
    r.seed = seed;
    det::TrainConfig tc;  // 3000 iterations, batch 8
    tc.seed = seed;
    for (auto v : {det::PoolingVariant::max, det::PoolingVariant::mask}) {
      det::ModelConfig cfg;
      cfg.pooling = v;
      const auto t0 = std::chrono::steady_clock::now();
      auto ck = det::train(b.train, cfg, tc);
      std::printf("  trained %s seed %llu in %.0f s\n", det::to_string(v).c_str(), static_cast<unsigned long long>(seed),
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      std::fflush(stdout);
      (v == det::PoolingVariant::max ? r.max_ckpt : r.mask_ckpt) = std::move(ck);
    }
    b.runs.push_back(std::move(r));
  }
  return b;
}

// ---- 4. identity interventions ----------------------------------------------

Outcome identity_interventions(const Bench& b) {
  scene::DatasetManifest fixture = b.val;
  fixture.records.resize(50);
  exp::EvalContext ctx;
  std::string detail;
  bool pass = true;
  for (const auto* ck : {&b.runs[0].max_ckpt, &b.runs[0].mask_ckpt}) {
    const std::string name = det::to_string(ck->model.config.pooling);
    const double base = exp::evaluate(ck->model, fixture, ctx).map.map50;
    const double sweep = exp::run_bg_activation_sweep(*ck, fixture, exp::SweepSpec{{1.0}}, ctx).rows.at(0).map50;
    exp::RandomBgOptions own;
    own.own_background = true;
    own.repetitions = 1;
    const double self_bg = exp::run_random_bg_eval(*ck, fixture, {}, own, ctx).rows.at(0).map50;
    const bool ok = sweep == base && self_bg == base;
    pass &= ok;
    detail += name + ": base " + fmt("%.6f", base) + ", w=1 " + fmt("%.6f", sweep) + ", self-BG " + fmt("%.6f", self_bg) + "; ";
    if (ck->model.config.pooling == det::PoolingVariant::mask) {
      const double abl = exp::run_boundary_ablation(*ck, fixture, {}, ctx).rows.at(0).map50;
      pass &= abl == base;
      detail += "empty ablation " + fmt("%.6f", abl) + "; ";
    }
  }
  return {pass, detail + "(bitwise comparison)"};
}

// ---- 5/6. directional claims --------------------------------------------------

void run_interventions(Bench& b) {
  exp::EvalContext ctx;
  for (auto& r : b.runs) {
    exp::RandomBgOptions ro;
    ro.repetitions = 5;
    ro.seed = r.seed;
    for (auto* ck : {&r.max_ckpt, &r.mask_ckpt}) {
      const bool is_mask = ck == &r.mask_ckpt;
      const auto rnd = exp::run_random_bg_eval(*ck, b.val, b.pool, ro, ctx);
      const auto sw = exp::run_bg_activation_sweep(*ck, b.val, exp::SweepSpec::standard(), ctx);
      (is_mask ? r.mask_base : r.max_base) = rnd.baseline_map50;
      (is_mask ? r.mask_random : r.max_random) = rnd.aggregates().mean;
      (is_mask ? r.mask_diff : r.max_diff) = sw.aggregates().diff;
      std::printf("  seed %llu %-4s: in-domain %.3f, random BG %.3f +- %.3f, sweep min %.3f max %.3f diff %.3f\n",
                  static_cast<unsigned long long>(r.seed), is_mask ? "mask" : "max", rnd.baseline_map50,
                  rnd.aggregates().mean, rnd.aggregates().std, sw.aggregates().min, sw.aggregates().max,
                  sw.aggregates().diff);
      std::fflush(stdout);
    }
  }
}

Outcome random_bg_direction(const Bench& b) {
  int wins = 0;
  std::string detail;
  for (const auto& r : b.runs) {
    const double dmax = r.max_base - r.max_random;
    const double dmask = r.mask_base - r.mask_random;
    wins += dmask < dmax;
    detail += "seed " + std::to_string(r.seed) + ": drop(mask) " + fmt("%.3f", dmask) + " vs drop(max) " + fmt("%.3f", dmax) + "; ";
  }
  return {wins >= 2, detail + std::to_string(wins) + " of 3 seeds"};
}

Outcome sweep_direction(const Bench& b) {
  int wins = 0;
  std::string detail;
  for (const auto& r : b.runs) {
    wins += r.mask_diff <= r.max_diff;
    detail += "seed " + std::to_string(r.seed) + ": Diff(mask) " + fmt("%.3f", r.mask_diff) + " vs Diff(max) " +
              fmt("%.3f", r.max_diff) + "; ";
  }
  return {wins >= 2, detail + std::to_string(wins) + " of 3 seeds"};
}

// ---- 7. boundary ablation ------------------------------------------------------

Outcome ablation_monotone(const Bench& b) {
  exp::EvalContext ctx;
  const std::vector<double> factors = exp::default_ablation_factors();  // 0.8 0.9 1.1 1.2
  const auto rep = exp::run_boundary_ablation(b.runs[0].mask_ckpt, b.val, factors, ctx);
  std::map<double, double> m;
  for (const auto& row : rep.rows) m[row.param.value_or(1.0)] = row.map50;
  const double base = m.at(1.0);
  constexpr double slack = 1.0;
  const bool pass = m.at(1.2) <= m.at(1.1) + slack && m.at(1.1) <= base + slack && m.at(0.8) <= m.at(0.9) + slack &&
                    m.at(0.9) <= base + slack;
  std::string detail = "seed 0 mask: baseline " + fmt("%.3f", base) + ", 0.8 " + fmt("%.3f", m.at(0.8)) + ", 0.9 " +
                       fmt("%.3f", m.at(0.9)) + ", 1.1 " + fmt("%.3f", m.at(1.1)) + ", 1.2 " + fmt("%.3f", m.at(1.2));
  return {pass, detail + " (slack 1.0)"};
}

// ---- 8. hierarchical F1 fixtures ------------------------------------------------

Outcome hierarchical_fixtures() {
  const metrics::ClassHierarchy h("root", {{"vehicle", "root"}, {"car", "vehicle"}, {"truck", "vehicle"}});
  const std::vector<std::string> names{"car", "truck"};
  const Box b{0, 0, 10, 10};
  const auto confused = metrics::hierarchical_f1(metrics::DetectionsPerImage{{{0, 0.9, b, -1}}},
                                                 metrics::GroundTruthPerImage{{{1, b, -1}}}, names, h);
  const bool half = confused[1] && confused[1]->f1 == 0.5;
  const Box b2{20, 20, 30, 30};
  const auto perfect = metrics::hierarchical_f1(metrics::DetectionsPerImage{{{0, 0.9, b, -1}, {1, 0.8, b2, -1}}},
                                                metrics::GroundTruthPerImage{{{0, b, -1}, {1, b2, -1}}}, names, h);
  const bool ones = perfect[0] && perfect[0]->f1 == 1.0 && perfect[1] && perfect[1]->f1 == 1.0;
  const metrics::ClassScores a{{"car", 0.4}};
  const metrics::ClassScores bb{{"car", 0.7}, {"truck", 0.5}};
  const auto rows = metrics::f1_diff(a, bb);
  const std::string table = metrics::render_diff_table(rows, "A", "B");
  const bool dash = rows.size() == 2 && !rows[1].diff && table.find("truck") != std::string::npos &&
                    table.substr(table.find("truck")).find('-') != std::string::npos;
  return {half && ones && dash, std::string("car/truck hF ") + (confused[1] ? fmt("%.3f", confused[1]->f1) : "-") +
                                    ", perfect hF " + (ones ? "1,1" : "not 1") + ", dash for absent class " +
                                    (dash ? "rendered" : "missing")};
}

// ---- 9. CLI determinism -----------------------------------------------------------

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = cli + " " + args + " --threads 1 >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli_determinism(const std::string& cli, const fs::path& work) {
  auto write = [](const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); };
  std::vector<fs::path> roots{work / "run_a", work / "run_b"};
  for (const auto& root : roots) {
    fs::remove_all(root);
    fs::create_directories(root);
    write(root / "gen.json", {{"schema", 1}, {"seed", 7}, {"out", "data"}, {"dataset", {{"n_images", 300}}}, {"bg_pool", {{"count", 5}}}});
    write(root / "train.json", {{"schema", 1}, {"seed", 7}, {"out", "model"}, {"dataset", "data/dataset.json"},
                                {"model", {{"pooling_variant", "mask"}}}, {"train", {{"iterations", 300}}}});
    write(root / "eval.json", {{"schema", 1}, {"seed", 7}, {"out", "eval"}, {"dataset", "data/dataset.json"},
                               {"checkpoint", "model/model.ckpt"},
                               {"random_bg", {{"repetitions", 2}, {"bg_dir", "data/bg_pool"}}}});
    write(root / "perturb.json", {{"schema", 1}, {"seed", 7}, {"out", "perturb"}, {"dataset", "data/dataset.json"},
                                  {"checkpoint", "model/model.ckpt"}});
    for (const char* step : {"gen", "train", "eval", "perturb"}) {
      const int code = run_cli(cli, std::string(step) + " --config " + (root / (std::string(step) + ".json")).string(), root / "log.txt");
      if (code != 0) return {false, std::string(step) + " exited with " + std::to_string(code)};
    }
  }
  int compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(roots[0])) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), roots[0]);
    // Run manifests carry a wall-clock timestamp; the training log carries no timing.
    if (rel.filename() == "run_manifest.json" || rel.filename() == "log.txt") continue;
    ++compared;
    if (slurp(e.path()) != slurp(roots[1] / rel)) differing.push_back(rel.string());
  }
  std::string detail = std::to_string(compared) + " output files compared";
  for (const auto& d : differing) detail += ", differs: " + d;
  return {differing.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <maskpool-lab binary> [work dir]\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "mplab_acceptance";
  fs::create_directories(work);

  record(1, gradient_fidelity);
  record(2, degeneracy);
  record(3, ap_oracle);
  record(8, hierarchical_fixtures);

  std::printf("  building the biased benchmark and training 2 variants x 3 seeds\n");
  std::fflush(stdout);
  Bench bench;
  bool bench_ok = true;
  std::string bench_error;
  try {
    bench = build_bench();
    run_interventions(bench);
  } catch (const std::exception& e) {
    bench_ok = false;
    bench_error = e.what();
  }
  if (bench_ok) {
    record(4, [&] { return identity_interventions(bench); });
    record(5, [&] { return random_bg_direction(bench); });
    record(6, [&] { return sweep_direction(bench); });
    record(7, [&] { return ablation_monotone(bench); });
  } else {
    for (int id : {4, 5, 6, 7}) results[id] = {false, "benchmark failed: " + bench_error};
  }
  record(9, [&] { return cli_determinism(cli, work); });

  const std::map<int, std::string> names{{1, "gradient fidelity"},          {2, "all-FG/all-BG degeneracy"},
                                         {3, "AP oracle equivalence"},      {4, "identity interventions"},
                                         {5, "random-BG drop direction"},   {6, "activation-sweep Diff direction"},
                                         {7, "boundary ablation monotone"}, {8, "hierarchical F1 fixtures"},
                                         {9, "pipeline determinism"}};
  int failed = 0;
  std::printf("\n");
  for (const auto& [id, o] : results) {
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, names.at(id).c_str(), o.detail.c_str());
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
  return failed ? 1 : 0;
}
