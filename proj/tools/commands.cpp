#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mplab/error.hpp"
#include "mplab/experiments.hpp"
#include "mplab/rng.hpp"

namespace mplab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Config access with unknown-key rejection and typed lookups.
class Section {
 public:
  Section(const json& j, std::string where, fs::path base)
      : j_(j), where_(std::move(where)), base_(std::move(base)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, _] : j_.items()) {
      if (!ok.count(k)) throw ConfigError("unknown key \"" + k + "\" in " + where_);
    }
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? required<T>(key) : fallback;
  }

  template <typename T>
  T required(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing key \"" + key + "\" in " + where_);
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("key \"" + key + "\" in " + where_ + " has the wrong type");
    }
  }

  fs::path path(const std::string& key) const {
    fs::path p = required<std::string>(key);
    return p.is_absolute() ? p : base_ / p;
  }

  Section sub(const std::string& key) const { return {j_.at(key), where_ + "." + key, base_}; }
  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string where_;
  fs::path base_;
};

struct Run {
  std::string command;
  json config;  ///< effective config after overrides
  fs::path base;
  fs::path out;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> artifacts;

  Section root() const { return {config, "config", base}; }
  fs::path artifact(const std::string& name) {
    artifacts.push_back(name);
    return out / name;
  }
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string(), e.byte, e.what());
  }
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

det::Checkpoint load_ckpt(const Section& s) { return det::load_checkpoint(s.path("checkpoint")); }

exp::EvalContext eval_context(const Run& run, const Section& s, const det::Checkpoint* ckpt) {
  exp::EvalContext ctx;
  ctx.threads = run.threads;
  ctx.model_id = s.get<std::string>("model_id", "");
  if (ctx.model_id.empty() && ckpt) {
    ctx.model_id = det::to_string(ckpt->model.config.pooling) + "-s" + std::to_string(ckpt->seed);
  }
  ctx.dataset_id = s.get<std::string>("dataset_id", s.path("dataset").stem().string());
  ctx.f1_score_threshold = s.get<double>("f1_score_threshold", ctx.f1_score_threshold);
  if (!(ctx.f1_score_threshold >= 0.0 && ctx.f1_score_threshold <= 1.0)) {
    throw ConfigError("f1_score_threshold must lie in [0, 1]");
  }
  return ctx;
}

std::vector<RgbImage> background_pool(const Section& s, std::uint64_t seed, int image_size) {
  if (s.has("bg_dir")) return scene::load_bg_dir(s.path("bg_dir"));
  const int count = s.get<int>("bg_pool_size", 50);
  return scene::make_bg_pool(count, image_size, mix_seed(seed ^ 0x42475f504f4f4cULL));
}

void save_report(Run& run, const exp::ExperimentReport& rep, const std::string& stem) {
  exp::write_report(rep, run.artifact(stem + ".json"), run.artifact(stem + ".csv"));
  const auto a = rep.aggregates();
  std::printf("%s %s %s: baseline %.3f, mean %.3f +- %.3f, min %.3f, max %.3f, diff %.3f\n",
              rep.model_id.c_str(), rep.dataset_id.c_str(), rep.intervention.c_str(),
              metrics::round3(rep.baseline_map50), metrics::round3(a.mean), metrics::round3(a.std),
              metrics::round3(a.min), metrics::round3(a.max), metrics::round3(a.diff));
}

// gen

void cmd_gen(Run& run) {
  const Section root = run.root();
  root.allow({"schema", "seed", "out", "threads", "name", "dataset", "bg_pool"});
  scene::GenerateConfig g;
  g.seed = run.seed;
  if (root.has("dataset")) {
    const Section d = root.sub("dataset");
    d.allow({"n_images", "image_size", "bias_strength", "bias", "objects_min", "objects_max",
             "object_size_min", "object_size_max", "context_margin", "max_overlap", "id_prefix"});
    g.n_images = d.get("n_images", g.n_images);
    g.image_size = d.get("image_size", g.image_size);
    if (d.has("bias") && d.has("bias_strength")) {
      throw ConfigError("give either bias or bias_strength in config.dataset, not both");
    }
    if (d.has("bias_strength")) {
      g.bias = scene::BiasSpec::diagonal(scene::kNumObjectClasses, scene::kNumTrainingTextures,
                                         d.required<double>("bias_strength"));
    }
    if (d.has("bias")) g.bias.matrix = d.required<std::vector<std::vector<double>>>("bias");
    g.objects_min = d.get("objects_min", g.objects_min);
    g.objects_max = d.get("objects_max", g.objects_max);
    g.object_size_min = d.get("object_size_min", g.object_size_min);
    g.object_size_max = d.get("object_size_max", g.object_size_max);
    g.context_margin = d.get("context_margin", g.context_margin);
    g.max_overlap = d.get("max_overlap", g.max_overlap);
    g.id_prefix = d.get<std::string>("id_prefix", g.id_prefix);
  }
  g.validate();
  const std::string name = root.get<std::string>("name", "dataset");
  const auto manifest = scene::generate_dataset(g, &std::cerr);
  scene::save_dataset(manifest, run.artifact(name + ".json"));
  run.artifacts.push_back("images/");
  run.artifacts.push_back("masks/");
  std::printf("generated %zu images into %s\n", manifest.records.size(), (run.out / (name + ".json")).c_str());

  if (root.has("bg_pool")) {
    const Section b = root.sub("bg_pool");
    b.allow({"count", "size"});
    const auto pool = scene::make_bg_pool(b.get("count", 50), b.get("size", g.image_size),
                                          mix_seed(run.seed ^ 0x42475f504f4f4cULL));
    fs::create_directories(run.out / "bg_pool");
    for (std::size_t i = 0; i < pool.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "bg_%04zu.ppm", i);
      write_ppm(run.out / "bg_pool" / buf, pool[i]);
    }
    run.artifacts.push_back("bg_pool/");
    std::printf("wrote %zu backgrounds into %s\n", pool.size(), (run.out / "bg_pool").c_str());
  }
}

// train

void cmd_train(Run& run) {
  const Section root = run.root();
  root.allow({"schema", "seed", "out", "threads", "dataset", "model", "train"});
  const auto data = scene::load_dataset(root.path("dataset"));
  det::ModelConfig mc;
  mc.num_classes = data.num_classes();
  if (!data.records.empty()) mc.image_size = data.records.front().image.width;
  if (root.has("model")) {
    try {
      det::from_json(root.raw().at("model"), mc);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config.model: ") + e.what());
    }
  }
  mc.validate();
  det::TrainConfig tc;
  tc.seed = run.seed;
  if (root.has("train")) {
    const Section t = root.sub("train");
    t.allow({"iterations", "batch_size", "log_every", "learning_rate", "momentum", "weight_decay"});
    tc.iterations = t.get("iterations", tc.iterations);
    tc.batch_size = t.get("batch_size", tc.batch_size);
    tc.log_every = t.get("log_every", tc.log_every);
    tc.optimizer.learning_rate = t.get("learning_rate", tc.optimizer.learning_rate);
    tc.optimizer.momentum = t.get("momentum", tc.optimizer.momentum);
    tc.optimizer.weight_decay = t.get("weight_decay", tc.optimizer.weight_decay);
  }
  if (tc.log_every < 1) throw ConfigError("log_every must be >= 1");
  std::ostringstream log;
  log << "iteration,total,objectness,classification,box\n";
  const auto ckpt = det::train(data, mc, tc, [&](const det::TrainLogEntry& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g\n", e.iteration, e.loss.total,
                  e.loss.objectness, e.loss.classification, e.loss.box);
    log << buf;
    std::printf("iter %d loss %.5f\n", e.iteration, e.loss.total);
    std::fflush(stdout);
  });
  det::save_checkpoint(ckpt, run.artifact("model.ckpt"));
  write_text(run.artifact("train_log.csv"), log.str());
  std::printf("saved %s\n", (run.out / "model.ckpt").c_str());
}

// eval

metrics::DetectionsPerImage read_detections(const fs::path& p, const scene::DatasetManifest& m) {
  const json j = read_json(p);
  if (!j.is_array()) throw ParseError(p.string(), 0, "detections file must be a JSON list");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < m.records.size(); ++i) index[m.records[i].image_id] = i;
  metrics::DetectionsPerImage dets(m.records.size());
  for (const auto& e : j) {
    try {
      const auto id = e.at("image_id").get<std::string>();
      const auto it = index.find(id);
      if (it == index.end()) throw ConfigError("detection for unknown image \"" + id + "\"");
      const auto b = e.at("bbox").get<std::vector<double>>();
      if (b.size() != 4) throw ConfigError("bbox needs 4 numbers");
      dets[it->second].push_back({e.at("class_id").get<int>(), e.at("score").get<double>(),
                                  Box{b[0], b[1], b[2], b[3]}, -1});
    } catch (const json::exception& ex) {
      throw ParseError(p.string(), 0, std::string("bad detection entry: ") + ex.what());
    }
  }
  return dets;
}

void cmd_eval(Run& run) {
  const Section root = run.root();
  root.allow({"schema", "seed", "out", "threads", "dataset", "checkpoint", "detections", "model_id",
              "dataset_id", "f1_score_threshold", "random_bg", "fixed_bg"});
  if (root.has("checkpoint") == root.has("detections")) {
    throw ConfigError("config needs exactly one of \"checkpoint\" or \"detections\"");
  }
  const auto data = scene::load_dataset(root.path("dataset"));
  std::optional<det::Checkpoint> ckpt;
  if (root.has("checkpoint")) ckpt = load_ckpt(root);
  const auto ctx = eval_context(run, root, ckpt ? &*ckpt : nullptr);

  metrics::DetectionsPerImage dets =
      ckpt ? det::detect(ckpt->model, data.records, {}, run.threads) : read_detections(root.path("detections"), data);
  const auto ev = exp::score(dets, data, ctx);
  exp::ExperimentReport rep;
  rep.model_id = ctx.model_id.empty() ? "external" : ctx.model_id;
  rep.dataset_id = ctx.dataset_id;
  rep.intervention = "baseline";
  rep.class_names = data.class_names;
  rep.baseline_map50 = ev.map.map50;
  rep.rows.push_back({rep.model_id, rep.dataset_id, "baseline", 0, std::nullopt, ev.map.map50,
                      ev.map.per_class_ap, ev.per_class_hf});
  save_report(run, rep, "eval");
  if (ckpt) write_text(run.artifact("detections.json"), exp::detections_json(dets, data));
  std::printf("mAP50 %.3f\n", metrics::round3(ev.map.map50));
  for (std::size_t c = 0; c < data.class_names.size(); ++c) {
    const auto& ap = ev.map.per_class_ap[c];
    const auto& hf = ev.per_class_hf[c];
    auto cell = [](const std::optional<double>& v) {
      char b[32];
      if (!v) return std::string("-");
      std::snprintf(b, sizeof b, "%.3f", *v);
      return std::string(b);
    };
    std::printf("  %-10s AP %s  hF %s\n", data.class_names[c].c_str(), cell(ap).c_str(), cell(hf).c_str());
  }

  const int size = data.records.empty() ? 128 : data.records.front().image.width;
  if (root.has("random_bg")) {
    if (!ckpt) throw ConfigError("random_bg needs a checkpoint");
    const Section s = root.sub("random_bg");
    s.allow({"repetitions", "feather_radius", "bg_dir", "bg_pool_size", "own_background"});
    exp::RandomBgOptions o;
    o.repetitions = s.get("repetitions", o.repetitions);
    o.feather_radius = s.get("feather_radius", o.feather_radius);
    o.own_background = s.get("own_background", false);
    o.seed = run.seed;
    const auto pool = o.own_background ? std::vector<RgbImage>{} : background_pool(s, run.seed, size);
    save_report(run, exp::run_random_bg_eval(*ckpt, data, pool, o, ctx), "random_bg");
  }
  if (root.has("fixed_bg")) {
    if (!ckpt) throw ConfigError("fixed_bg needs a checkpoint");
    const Section s = root.sub("fixed_bg");
    s.allow({"repetitions", "feather_radius", "bg_dir", "bg_pool_size"});
    exp::FixedBgOptions o;
    o.repetitions = s.get("repetitions", o.repetitions);
    o.feather_radius = s.get("feather_radius", o.feather_radius);
    o.seed = run.seed;
    const auto pool = background_pool(s, run.seed, size);
    save_report(run, exp::run_fixed_bg_eval(*ckpt, data, pool, o, ctx), "fixed_bg");
  }
}

// swap-bg

void cmd_swap_bg(Run& run) {
  const Section root = run.root();
  root.allow({"schema", "seed", "out", "threads", "dataset", "mode", "name", "feather_radius",
              "bg_dir", "bg_pool_size"});
  const auto data = scene::load_dataset(root.path("dataset"));
  const std::string mode = root.get<std::string>("mode", "random");
  const int feather = root.get("feather_radius", 0);
  const int size = data.records.empty() ? 128 : data.records.front().image.width;
  const auto pool = background_pool(root, run.seed, size);
  scene::DatasetManifest swapped;
  if (mode == "random") {
    swapped = scene::composite_random_bg(data, pool, run.seed, feather);
  } else if (mode == "fixed") {
    const auto pick = exp::pick_fixed_bgs(pool.size(), 1, run.seed).front();
    swapped = scene::composite_fixed_bg(data, pool[pick], feather);
    std::printf("fixed background: pool entry %zu\n", pick);
  } else {
    throw ConfigError("mode must be \"random\" or \"fixed\", got \"" + mode + "\"");
  }
  const std::string name = root.get<std::string>("name", root.path("dataset").stem().string() + "_" + mode + "bg");
  scene::save_dataset(swapped, run.artifact(name + ".json"));
  run.artifacts.push_back("images/");
  run.artifacts.push_back("masks/");
  std::printf("wrote %zu recomposed images into %s\n", swapped.records.size(),
              (run.out / (name + ".json")).c_str());
}

// perturb / ablate

void cmd_perturb(Run& run) {
  const Section root = run.root();
  root.allow({"schema", "seed", "out", "threads", "dataset", "checkpoint", "weights", "all_stages",
              "model_id", "dataset_id", "f1_score_threshold"});
  const auto data = scene::load_dataset(root.path("dataset"));
  const auto ckpt = load_ckpt(root);
  const auto ctx = eval_context(run, root, &ckpt);
  exp::SweepSpec sweep = exp::SweepSpec::standard();
  if (root.has("weights")) sweep.weights = root.required<std::vector<double>>("weights");
  save_report(run, exp::run_bg_activation_sweep(ckpt, data, sweep, ctx, root.get("all_stages", false)),
              "perturb");
}

void cmd_ablate(Run& run) {
  const Section root = run.root();
  root.allow({"schema", "seed", "out", "threads", "dataset", "checkpoint", "factors", "model_id",
              "dataset_id", "f1_score_threshold"});
  const auto data = scene::load_dataset(root.path("dataset"));
  const auto ckpt = load_ckpt(root);
  const auto ctx = eval_context(run, root, &ckpt);
  const auto factors = root.get<std::vector<double>>("factors", exp::default_ablation_factors());
  save_report(run, exp::run_boundary_ablation(ckpt, data, factors, ctx), "ablate");
}

// report

void cmd_report(Run& run) {
  const Section root = run.root();
  root.allow({"schema", "seed", "out", "threads", "reports", "diffs"});
  std::ostringstream text;
  json summary{{"schema", 1}, {"reports", json::array()}, {"diffs", json::array()}};
  char buf[256];
  const auto paths = root.required<std::vector<std::string>>("reports");
  text << "model  dataset  intervention  n  baseline  mean  std  min  max  diff\n";
  for (const auto& p : paths) {
    const fs::path path = fs::path(p).is_absolute() ? fs::path(p) : run.base / p;
    const auto rep = exp::read_report(path);
    const auto a = rep.aggregates();
    std::snprintf(buf, sizeof buf, "%s  %s  %s  %d  %.3f  %.3f  %.3f  %.3f  %.3f  %.3f\n",
                  rep.model_id.c_str(), rep.dataset_id.c_str(), rep.intervention.c_str(), a.n,
                  metrics::round3(rep.baseline_map50), metrics::round3(a.mean), metrics::round3(a.std),
                  metrics::round3(a.min), metrics::round3(a.max), metrics::round3(a.diff));
    text << buf;
    summary["reports"].push_back({{"path", p},
                                  {"model_id", rep.model_id},
                                  {"dataset_id", rep.dataset_id},
                                  {"intervention", rep.intervention},
                                  {"baseline_map50", rep.baseline_map50},
                                  {"n", a.n},
                                  {"mean", a.mean},
                                  {"std", a.std},
                                  {"min", a.min},
                                  {"max", a.max},
                                  {"diff", a.diff}});
  }
  if (root.has("diffs")) {
    for (const auto& d : root.raw().at("diffs")) {
      const Section s(d, "config.diffs[]", run.base);
      s.allow({"a", "b"});
      const auto ra = exp::read_report(s.path("a"));
      const auto rb = exp::read_report(s.path("b"));
      const auto diff = exp::diff_report(ra, rb);
      for (const auto& w : diff.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      text << "\n" << diff.table;
      json rows = json::array();
      for (const auto& r : diff.rows) {
        rows.push_back({{"fg", r.name},
                        {"a", r.a ? json(*r.a) : json(nullptr)},
                        {"b", r.b ? json(*r.b) : json(nullptr)},
                        {"diff", r.diff ? json(*r.diff) : json(nullptr)}});
      }
      summary["diffs"].push_back({{"a", ra.model_id},
                                  {"b", rb.model_id},
                                  {"rows", rows},
                                  {"improved", diff.improved},
                                  {"compared", diff.compared}});
    }
  }
  write_text(run.artifact("summary.txt"), text.str());
  write_text(run.artifact("summary.json"), summary.dump(2) + "\n");
  std::fputs(text.str().c_str(), stdout);
}

void write_manifest(const Run& run) {
  json m{{"command", run.command},
         {"config_hash", hex64(fnv1a(run.config.dump()))},
         {"seed", run.seed},
         {"threads", run.threads},
         {"config", run.config},
         {"artifacts", run.artifacts},
         {"created_at", utc_now()}};
  write_text(run.out / "run_manifest.json", m.dump(2) + "\n");
}

}  // namespace

int run_command(const std::string& command, const fs::path& config_path, const Overrides& overrides) {
  try {
    Run run;
    run.command = command;
    run.base = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
    run.config = read_json(config_path);
    if (!run.config.is_object()) throw ConfigError("config must be a JSON object");
    if (!run.config.contains("schema")) throw ConfigError("config is missing the required \"schema\" field");
    if (run.config["schema"] != 1) throw ConfigError("unsupported config schema (expected 1)");
    if (overrides.seed) run.config["seed"] = *overrides.seed;
    if (overrides.threads) run.config["threads"] = *overrides.threads;
    const Section root = run.root();
    run.seed = root.get<std::uint64_t>("seed", 0);
    run.threads = root.get("threads", 1);
    if (run.threads < 1) throw ConfigError("threads must be >= 1");
    if (overrides.out) {
      run.out = *overrides.out;
    } else {
      run.out = root.has("out") ? root.path("out") : run.base / "out";
    }
    fs::create_directories(run.out);

    if (command == "gen") cmd_gen(run);
    else if (command == "train") cmd_train(run);
    else if (command == "eval") cmd_eval(run);
    else if (command == "swap-bg") cmd_swap_bg(run);
    else if (command == "perturb") cmd_perturb(run);
    else if (command == "ablate") cmd_ablate(run);
    else if (command == "report") cmd_report(run);
    else throw ConfigError("unknown command \"" + command + "\"");
    write_manifest(run);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
}

}  // namespace mplab::cli
