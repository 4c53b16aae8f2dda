#include <CLI11.hpp>

#include <iostream>

#include "dmt/cli/commands.hpp"

namespace dmt::cli {

int run(int argc, char** argv) {
  CLI::App app{"RGB-D tracking toolkit: synthetic data, training, tracking, evaluation and checks"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Render synthetic RGB-D sequences from a spec file");
  s->add_option("spec", synth.spec, "Spec file with [suite] or [scene] sections")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Random seed")->required();

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a tracker and write checkpoint.dmf and train_log.csv");
  t->add_option("--profile", train.profile, "desk or paper")->capture_default_str();
  t->add_option("--config", train.config, "Config overrides; [data] selects a generated suite");
  t->add_option("--data", train.data, "Directory of sequences");
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--seed", train.seed, "Random seed")->required();

  TrackOptions track;
  double gate = 0.0;
  auto* k = app.add_subcommand("track", "Track every sequence and write one prediction file each");
  k->add_option("--profile", track.profile, "desk or paper")->capture_default_str();
  k->add_option("--config", track.config, "Config overrides");
  k->add_option("--checkpoint", track.checkpoint, "Trained checkpoint")->required();
  k->add_option("--data", track.data, "Directory of sequences")->required();
  k->add_option("--out", track.out, "Output directory for predictions")->required();
  k->add_option("--seed", track.seed, "Random seed")->required();
  k->add_option("--jobs", track.jobs, "Sequences tracked in parallel")->capture_default_str();
  auto* gate_opt = k->add_option("--gate", gate, "Confidence gate for memory updates");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Score prediction files against groundtruth");
  e->add_option("--data", ev.data, "Directory of sequences with groundtruth");
  e->add_option("--predictions", ev.predictions, "Directory of prediction files");
  e->add_option("--out", ev.out, "Output directory for report.txt, metrics.csv and curves.csv");
  e->add_option("--table", ev.table, "Published (Pr, Re, F) rows to recompute");

  std::string scope = "all";
  auto* v = app.add_subcommand("verify", "Run the built-in checks");
  v->add_option("scope", scope, "gradcheck, metrics, tables or all")->capture_default_str();

  std::string profile = "desk";
  std::filesystem::path config;
  auto* p = app.add_subcommand("profile", "Print the resolved constants of a profile");
  p->add_option("--profile", profile, "desk or paper")->capture_default_str();
  p->add_option("--config", config, "Config overrides");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  if (s->parsed()) return cmd_synth(synth, std::cout, std::cerr);
  if (t->parsed()) return cmd_train(train, std::cout, std::cerr);
  if (k->parsed()) {
    if (gate_opt->count() > 0) track.gate = gate;
    return cmd_track(track, std::cout, std::cerr);
  }
  if (e->parsed()) return cmd_eval(ev, std::cout, std::cerr);
  if (v->parsed()) return cmd_verify(scope, std::cout, std::cerr);
  if (p->parsed()) return cmd_profile(profile, config, std::cout, std::cerr);
  return 2;
}

}  // namespace dmt::cli
