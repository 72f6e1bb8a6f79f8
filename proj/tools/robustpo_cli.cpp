#include <iostream>

#include <CLI11.hpp>

#include "robustpo/harness.hpp"

using namespace robustpo;

int main(int argc, char** argv) {
  CLI::App app{"Robust policy optimization for a simulated Furuta pendulum"};
  app.require_subcommand(1);

  harness::CommandOptions o;
  std::string config, out, mode, controller;
  std::uint64_t seed = 0;
  int stop_after = -1;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Run configuration (JSON)");
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--out", out, "Run directory (overrides output_dir)");
    sub->add_flag("--force", o.force, "Overwrite existing outputs");
    sub->add_option("--mode", mode, "Objective wiring")->check(CLI::IsMember({"robust-dm", "robust-gm", "scalar"}));
  };

  auto* train = app.add_subcommand("train", "Run the optimizer and write the front, checkpoints and audit log");
  common(train);
  train->add_flag("--resume", o.resume, "Continue from the latest checkpoint in --out");
  train->add_option("--stop-after", stop_after, "Stop once this many evaluations exist (resumable)");

  auto* select = app.add_subcommand("select", "Pick a controller from a trained front");
  common(select);
  select->add_option("--strategy", o.strategy, "elbow or index")->check(CLI::IsMember({"elbow", "index"}));
  select->add_option("--index", o.index, "Front index for --strategy index");

  auto* test = app.add_subcommand("test", "Run the perturbation test battery on the nominal plant");
  common(test);
  test->add_option("--controller", controller, "Controller JSON (default: <out>/selected.json)");

  auto* plots = app.add_subcommand("export-plots", "Emit plot data and check the hypervolume trace");
  common(plots);

  auto* verify = app.add_subcommand("verify-front", "Re-simulate front controllers with longer episodes");
  common(verify);

  CLI11_PARSE(app, argc, argv);

  for (auto* sub : {train, select, test, plots, verify}) {
    if (!sub->parsed()) continue;
    if (sub->count("--config")) o.config = config;
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--out")) o.out = out;
    if (sub->count("--mode")) o.mode = opt::mode_from_string(mode);
  }
  if (train->count("--stop-after")) o.stop_after = stop_after;
  if (test->count("--controller")) o.controller = controller;

  if (train->parsed()) return harness::cmd_train(o, std::cout, std::cerr);
  if (select->parsed()) return harness::cmd_select(o, std::cout, std::cerr);
  if (test->parsed()) return harness::cmd_test(o, std::cout, std::cerr);
  if (plots->parsed()) return harness::cmd_export_plots(o, std::cout, std::cerr);
  return harness::cmd_verify_front(o, std::cout, std::cerr);
}
