#include "dmt/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "dmt/cli/verify.hpp"
#include "dmt/evalkit/evalkit.hpp"
#include "dmt/numcore/checkpoint.hpp"
#include "dmt/synthdata/synthdata.hpp"

namespace fs = std::filesystem;

namespace dmt::cli {

namespace {

template <class F>
int guarded(std::ostream& err, const char* command, F&& body) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "dmtrack " << command << ": " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "dmtrack " << command << ": numeric failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "dmtrack " << command << ": " << e.what() << "\n";
    return 1;
  }
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

synth::Color read_color(SectionReader& r, const std::string& key, const synth::Color& fallback) {
  const auto v = r.numbers(key, {fallback.r, fallback.g, fallback.b});
  if (v.size() != 3) r.fail(key, "expected r,g,b");
  for (double c : v) {
    if (c < 0.0 || c > 255.0) r.fail(key, "channel values must lie in [0, 255]");
  }
  return {v[0], v[1], v[2]};
}

synth::ObjectSpec read_object(SectionReader& r, const synth::ObjectSpec& base) {
  synth::ObjectSpec o = base;
  const std::string shape = r.text("shape", o.shape == synth::ShapeKind::Disk ? "disk" : "rectangle");
  if (shape == "disk") o.shape = synth::ShapeKind::Disk;
  else if (shape == "rectangle") o.shape = synth::ShapeKind::Rectangle;
  else r.fail("shape", "expected disk or rectangle, got '" + shape + "'");
  o.color = read_color(r, "color", o.color);
  o.width = r.number("width", o.width);
  o.height = r.number("height", o.height);
  o.x = r.number("x", o.x);
  o.y = r.number("y", o.y);
  o.vx = r.number("vx", o.vx);
  o.vy = r.number("vy", o.vy);
  o.turn_period = r.count("turn_period", o.turn_period);
  o.bounce = r.flag("bounce", o.bounce);
  o.depth_mm = r.number("depth_mm", o.depth_mm);
  o.depth_velocity = r.number("depth_velocity", o.depth_velocity);
  return o;
}

struct SceneBlock {
  synth::SceneSpec spec;
  std::size_t line = 0;
};

// [scene] opens a scene; [scene.target], [scene.distractor] and [scene.occluder]
// attach to the most recent one.
std::vector<SceneBlock> read_scenes(const Config& cfg) {
  std::vector<SceneBlock> scenes;
  for (const auto& section : cfg.sections) {
    SectionReader r(section, cfg.source);
    const auto where = cfg.source + ":" + std::to_string(section.line);
    if (section.name == "scene") {
      SceneBlock b;
      b.line = section.line;
      auto& s = b.spec;
      s.width = r.count("width", s.width);
      s.height = r.count("height", s.height);
      s.length = r.count("length", s.length);
      s.illumination = r.number("illumination", s.illumination);
      const std::string bg = r.text("background", s.background == synth::Background::Plain ? "plain" : "clutter");
      if (bg == "plain") s.background = synth::Background::Plain;
      else if (bg == "clutter") s.background = synth::Background::Clutter;
      else r.fail("background", "expected plain or clutter, got '" + bg + "'");
      s.background_color = read_color(r, "background_color", s.background_color);
      s.background_depth_mm = r.number("background_depth_mm", s.background_depth_mm);
      s.tags = r.words("tags", {});
      r.finish();
      scenes.push_back(std::move(b));
      continue;
    }
    if (section.name.rfind("scene.", 0) != 0) {
      if (section.name == "suite") continue;
      throw UsageError(where + ": unknown section [" + section.name + "]");
    }
    if (scenes.empty()) throw UsageError(where + ": [" + section.name + "] before any [scene]");
    auto& s = scenes.back().spec;
    if (section.name == "scene.target") {
      s.target = read_object(r, s.target);
    } else if (section.name == "scene.distractor") {
      s.distractors.push_back(read_object(r, {}));
    } else if (section.name == "scene.occluder") {
      synth::OccluderSpec occ;
      occ.object = read_object(r, {});
      occ.frame_begin = r.count("frame_begin", 0);
      occ.frame_end = r.count("frame_end", s.length);
      s.occluders.push_back(occ);
    } else {
      throw UsageError(where + ": unknown section [" + section.name + "]");
    }
    r.finish();
  }
  return scenes;
}

std::string seq_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%03zu", i);
  return buf;
}

std::vector<synth::Sequence> load_dataset(const fs::path& root) {
  std::vector<synth::Sequence> data;
  for (const auto& dir : sequence_dirs(root)) data.push_back(synth::read_sequence(dir));
  if (data.empty()) throw UsageError("no sequences under " + root.string());
  return data;
}

}  // namespace

std::vector<fs::path> sequence_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw UsageError("not a directory: " + root.string());
  if (fs::exists(root / "groundtruth.txt")) return {root};
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "groundtruth.txt")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

Profile load_profile(const std::string& name, const fs::path& config) {
  Profile p = Profile::named(name);
  if (!config.empty()) p.apply(Config::load(config));
  return p;
}

int cmd_synth(const SynthOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, "synth", [&] {
    if (o.spec.empty()) throw UsageError("a spec file is required");
    const Config cfg = Config::load(o.spec);
    std::vector<synth::SceneSpec> specs;
    if (const auto* suite = cfg.find("suite")) {
      SectionReader r(*suite, cfg.source);
      const std::string kind = r.text("kind", "");
      if (kind.empty()) r.fail("kind", "missing");
      const std::size_t count = r.count("count", 1);
      r.finish();
      try {
        specs = synth::make_suite(synth::parse_suite(kind), count, o.seed);
      } catch (const ValueError& e) {
        r.fail("kind", e.what());
      }
    }
    for (auto& block : read_scenes(cfg)) {
      try {
        block.spec.validate();
      } catch (const ValueError& e) {
        throw UsageError(cfg.source + ":" + std::to_string(block.line) + ": [scene]: " + e.what());
      }
      specs.push_back(block.spec);
    }
    if (specs.empty()) throw UsageError(cfg.source + ": no [suite] or [scene] section");
    ensure_dir(o.out);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto seq = synth::generate(specs[i], synth::sequence_seed(o.seed, i));
      synth::write_sequence(seq, o.out / seq_name(i));
    }
    out << "wrote " << specs.size() << " sequences to " << o.out.string() << "\n";
    return 0;
  });
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, "train", [&] {
    Profile profile = load_profile(o.profile, o.config);
    profile.train.seed = o.seed;
    std::vector<synth::Sequence> data;
    if (!o.data.empty()) {
      data = load_dataset(o.data);
    } else {
      const Config cfg = o.config.empty() ? Config{} : Config::load(o.config);
      const auto* section = cfg.find("data");
      if (!section) throw UsageError("training data needs --data or a [data] section in --config");
      SectionReader r(*section, cfg.source);
      const std::string kind = r.text("suite", "training");
      const std::size_t count = r.count("count", 20);
      const std::uint64_t seed = r.seed("seed", o.seed);
      r.finish();
      try {
        data = synth::generate_suite(synth::parse_suite(kind), count, seed);
      } catch (const ValueError& e) {
        r.fail("suite", e.what());
      }
    }
    ensure_dir(o.out);
    model::TrackerModel model(profile.model, o.seed);
    const auto log = pipeline::train(model, data, profile.train, [&](const pipeline::EpochLog& e) {
      out << pipeline::format_log_line(e) << "\n" << std::flush;
    });
    pipeline::save_training(model, log, o.out / "checkpoint.dmf", o.out / "train_log.csv");
    out << "wrote " << (o.out / "checkpoint.dmf").string() << "\n";
    return 0;
  });
}

int cmd_track(const TrackOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, "track", [&] {
    Profile profile = load_profile(o.profile, o.config);
    profile.tracker.seed = o.seed;
    if (o.gate) profile.tracker.confidence_gate = *o.gate;
    try {
      profile.tracker.validate();
    } catch (const ValueError& e) {
      throw UsageError(e.what());
    }
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
    if (o.data.empty()) throw UsageError("--data is required");
    if (o.jobs == 0) throw UsageError("--jobs must be positive");
    model::TrackerModel model(profile.model, 0);
    {
      ParamSet params = model.parameters();
      try {
        load_checkpoint(o.checkpoint, params);
      } catch (const Error& e) {
        throw IoError(std::string("checkpoint: ") + e.what());
      }
    }
    const auto dirs = sequence_dirs(o.data);
    if (dirs.empty()) throw UsageError("no sequences under " + o.data.string());
    ensure_dir(o.out);

    std::vector<std::string> failures(dirs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < dirs.size(); i = next++) {
        try {
          const auto seq = synth::read_sequence(dirs[i]);
          const auto result = pipeline::track_sequence(seq, model, profile.tracker);
          eval::PredictionTrace trace;
          for (std::size_t t = 0; t < result.boxes.size(); ++t) {
            trace.push_back({result.boxes[t], std::clamp(result.confidences[t], 0.0, 1.0)});
          }
          eval::write_trace(trace, o.out / (dirs[i].filename().string() + ".txt"));
        } catch (const std::exception& e) {
          failures[i] = dirs[i].filename().string() + ": " + e.what();
        }
      }
    };
    const std::size_t jobs = std::min(o.jobs, dirs.size());
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& f : failures) {
      if (!f.empty()) throw Error(f);
    }
    out << "tracked " << dirs.size() << " sequences into " << o.out.string() << "\n";
    return 0;
  });
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, "eval", [&] {
    if (o.data.empty() && o.table.empty()) throw UsageError("nothing to evaluate: give --data or --table");
    if (!o.data.empty()) {
      if (o.predictions.empty()) throw UsageError("--predictions is required with --data");
      const auto dirs = sequence_dirs(o.data);
      if (dirs.empty()) throw UsageError("no sequences under " + o.data.string());
      std::vector<eval::LongTermResult> per_seq;
      std::vector<eval::SequenceScore> f_scores, auc_scores;
      std::string seq_table = "sequence              F      AUC    frames\n";
      for (const auto& dir : dirs) {
        const std::string name = dir.filename().string();
        const auto ann = synth::read_annotations(dir);
        const auto trace = eval::read_trace(o.predictions / (name + ".txt"));
        auto r = eval::pr_re_f(trace, ann.boxes, ann.visible);
        std::vector<double> overlaps;
        for (std::size_t t = 0; t < trace.size(); ++t) {
          if (!ann.visible[t]) continue;
          overlaps.push_back(trace[t].box ? eval::iou(*trace[t].box, ann.boxes[t]) : 0.0);
        }
        const double auc = overlaps.empty() ? 0.0 : eval::success_auc(overlaps).summary;
        f_scores.push_back({name, ann.tags, r.peak_f});
        auc_scores.push_back({name, ann.tags, auc});
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-20s  %.3f  %.3f  %zu\n", name.c_str(), r.peak_f, auc, trace.size());
        seq_table += buf;
        per_seq.push_back(std::move(r));
      }
      const auto overall = eval::aggregate(per_seq);
      double mean_auc = 0.0;
      for (const auto& s : auc_scores) mean_auc += s.value / static_cast<double>(auc_scores.size());

      const auto f_rows = eval::attribute_report(f_scores, synth::known_tags());
      const auto auc_rows = eval::attribute_report(auc_scores, synth::known_tags());
      std::string report;
      report += "sequences  " + std::to_string(dirs.size()) + "\n";
      report += "Pr         " + fixed(overall.peak_precision) + "\n";
      report += "Re         " + fixed(overall.peak_recall) + "\n";
      report += "F          " + fixed(overall.peak_f) + "\n";
      report += "tau        " + fixed(overall.peak_tau, 2) + "\n";
      report += "AUC        " + fixed(mean_auc) + "\n\n";
      report += seq_table;
      if (!f_rows.empty()) report += "\n" + eval::format_table("F", f_rows) + "\n" + eval::format_table("AUC", auc_rows);

      std::vector<eval::MetricLine> lines = {{"pr", "all", overall.peak_precision},
                                             {"re", "all", overall.peak_recall},
                                             {"f", "all", overall.peak_f},
                                             {"tau", "all", overall.peak_tau},
                                             {"auc", "all", mean_auc}};
      for (const auto& r : f_rows) lines.push_back({"f", r.tag, r.mean});
      for (const auto& r : auc_rows) lines.push_back({"auc", r.tag, r.mean});

      ensure_dir(o.out);
      write_file(o.out / "report.txt", report);
      write_file(o.out / "metrics.csv", "metric,tag,value\n" + eval::report_lines(lines));
      eval::write_curves(overall, o.out / "curves.csv");
      out << report;
    }
    if (!o.table.empty()) {
      const auto rows = read_published_table(o.table);
      if (!o.data.empty()) out << "\n";
      out << "benchmark   method           Pr     Re     F(printed)  F(recomputed)\n";
      for (const auto& r : rows) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "%-10s  %-15s  %.3f  %.3f  %.3f       %.3f\n", r.benchmark.c_str(),
                      r.method.c_str(), r.precision, r.recall, r.f, eval::f_score(r.precision, r.recall));
        out << buf;
      }
    }
    return 0;
  });
}

int cmd_verify(const std::string& scope, std::ostream& out, std::ostream& err) {
  return guarded(err, "verify", [&] {
    if (scope != "gradcheck" && scope != "metrics" && scope != "tables" && scope != "all") {
      throw UsageError("unknown scope '" + scope + "' (expected gradcheck, metrics, tables or all)");
    }
    std::vector<CheckLine> lines;
    auto take = [&](std::vector<CheckLine> more) {
      for (auto& l : more) {
        out << (l.passed ? "PASS " : "FAIL ") << l.name << "  " << l.detail << "\n" << std::flush;
        lines.push_back(std::move(l));
      }
    };
    if (scope == "tables" || scope == "all") take(verify_tables(fixture_dir() / "published_tables.csv"));
    if (scope == "metrics" || scope == "all") take(verify_metrics());
    if (scope == "gradcheck" || scope == "all") take(verify_gradcheck());
    std::size_t failed = 0;
    for (const auto& l : lines) failed += !l.passed;
    out << (failed == 0 ? "all " + std::to_string(lines.size()) + " checks passed\n"
                        : std::to_string(failed) + " of " + std::to_string(lines.size()) + " checks failed\n");
    if (failed > 0) {
      for (const auto& l : lines) {
        if (!l.passed) err << "failed: " << l.name << " (" << l.detail << ")\n";
      }
    }
    return failed == 0 ? 0 : 1;
  });
}

int cmd_profile(const std::string& profile, const fs::path& config, std::ostream& out, std::ostream& err) {
  return guarded(err, "profile", [&] {
    out << load_profile(profile, config).describe();
    return 0;
  });
}

}  // namespace dmt::cli
