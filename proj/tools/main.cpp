#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"maskpool-lab: synthetic context-bias experiments for tiny detectors"};
  app.require_subcommand(1);

  std::string config;
  mplab::cli::Overrides overrides;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;

  const std::vector<std::pair<const char*, const char*>> commands{
      {"gen", "generate a synthetic dataset"},
      {"train", "train one detector variant"},
      {"eval", "mAP50 and hierarchical F1 on a dataset, optional background swaps"},
      {"swap-bg", "write a dataset with replaced backgrounds"},
      {"perturb", "background activation sweep"},
      {"ablate", "mask boundary ablation"},
      {"report", "merge reports into summary tables"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto* sub = app.get_subcommands().front();
  if (sub->count("--seed")) overrides.seed = seed;
  if (sub->count("--out")) overrides.out = out;
  if (sub->count("--threads")) overrides.threads = threads;
  return mplab::cli::run_command(sub->get_name(), config, overrides);
}
