// Acceptance report: one PASS/FAIL line per criterion A1..A7.
//
//   acceptance            run every criterion
//   acceptance A2 A6      run the named criteria
//
// Exit status is 0 iff every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "../naive.hpp"
#include "dmt/attention/attention.hpp"
#include "dmt/cli/commands.hpp"
#include "dmt/cli/verify.hpp"
#include "dmt/evalkit/evalkit.hpp"
#include "dmt/evalkit/oracle.hpp"
#include "dmt/fusion/fusion.hpp"
#include "dmt/model/model.hpp"
#include "dmt/numcore/ops.hpp"
#include "dmt/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dmt;

namespace {

// Pinned tolerances and budgets.
constexpr double kExact = 1e-12;            // A3 equation values
constexpr double kLossRatio = 0.5;          // A4 final/first epoch L_total
constexpr double kMinOverlap = 0.5;         // A4 held-out mean overlap
constexpr double kA1Seconds = 1.0;
constexpr double kA2Seconds = 60.0;
constexpr double kA3Seconds = 10.0;
constexpr double kA4Seconds = 15 * 60.0;
constexpr double kA5Seconds = 45 * 60.0;
constexpr double kA6Seconds = 5.0;

// Seeds and corpus sizes.
constexpr std::uint64_t kA4ModelSeed = 1;
constexpr std::uint64_t kA4TrainData = 101;
constexpr std::uint64_t kA4HeldOut = 202;
constexpr std::uint64_t kA4Absence = 303;
constexpr std::uint64_t kA5HeldOut = 777;
constexpr std::size_t kTrainSequences = 20;
constexpr std::size_t kHeldOutSequences = 10;

struct Outcome {
  bool passed = false;
  std::string detail;
  std::vector<std::string> notes;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

double max_gap(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dmt_acceptance_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

// ---------------------------------------------------------------------------

Outcome a1_tables() {
  const auto lines = cli::verify_tables(cli::fixture_dir() / "published_tables.csv");
  Outcome o;
  std::size_t failed = 0;
  for (const auto& l : lines) {
    if (l.passed) continue;
    ++failed;
    o.notes.push_back(l.name + "  " + l.detail);
  }
  o.passed = !lines.empty() && failed == 0;
  o.detail = fmt("%zu of %zu rows within %.0e of the printed F", lines.size() - failed, lines.size(),
                 cli::kTableTolerance);
  return o;
}

Outcome a2_gradcheck() {
  const auto lines = cli::verify_gradcheck();
  Outcome o;
  o.passed = !lines.empty();
  for (const auto& l : lines) {
    o.passed = o.passed && l.passed;
    o.notes.push_back(std::string(l.passed ? "pass " : "FAIL ") + l.name + "  " + l.detail);
  }
  o.detail = fmt("%zu modules, relative error bound %.0e", lines.size(), cli::kGradTolerance);
  return o;
}

naive::Mat naive_mha(const naive::Mat& q, const naive::Mat& k, const naive::Mat& v, const attention::MHAParams& p) {
  naive::Mat cat(q.size());
  for (std::size_t h = 0; h < p.w_q.size(); ++h) {
    auto head = naive::sdpa(naive::matmul(q, naive::to_mat(p.w_q[h])), naive::matmul(k, naive::to_mat(p.w_k[h])),
                            naive::matmul(v, naive::to_mat(p.w_v[h])));
    for (std::size_t i = 0; i < q.size(); ++i) cat[i].insert(cat[i].end(), head[i].begin(), head[i].end());
  }
  return naive::matmul(cat, naive::to_mat(p.w_o));
}

Outcome a3_equations() {
  using namespace attention;
  std::vector<std::pair<std::string, double>> gaps;
  SplitMix64 rng(303);

  {
    Tensor q = random_tensor({2, 3}, rng), k = random_tensor({4, 3}, rng), v = random_tensor({4, 5}, rng);
    gaps.emplace_back("sdpa", max_gap(sdpa(q, k, v).data(),
                                      naive::flat(naive::sdpa(naive::to_mat(q), naive::to_mat(k), naive::to_mat(v)))));
    Tensor v1 = random_tensor({1, 3}, rng);
    Tensor one = sdpa(random_tensor({4, 2}, rng), random_tensor({1, 2}, rng), v1);
    std::vector<double> rows;
    for (int i = 0; i < 4; ++i) rows.insert(rows.end(), v1.data().begin(), v1.data().end());
    gaps.emplace_back("sdpa single key", max_gap(one.data(), rows));
  }
  AttentionConfig cfg;
  cfg.heads = 2;
  cfg.d_model = 8;
  cfg.d_k = cfg.d_v = 4;
  cfg.ffn_hidden = 32;
  {
    auto p = MHAParams::init(cfg, rng);
    Tensor q = random_tensor({4, 8}, rng), k = random_tensor({6, 8}, rng), v = random_tensor({6, 8}, rng);
    gaps.emplace_back("mha", max_gap(mha(q, k, v, p, cfg).data(),
                                     naive::flat(naive_mha(naive::to_mat(q), naive::to_mat(k), naive::to_mat(v), p))));
  }
  {
    auto p = CMAParams::init(cfg, rng);
    p.norm1.gamma = random_tensor({8}, rng, 0.5, 1.5);
    p.norm2.beta = random_tensor({8}, rng);
    Tensor d = random_tensor({9, 8}, rng), i = random_tensor({4, 8}, rng);
    Tensor pe_d = pos_encoding_2d(3, 3, 8), pe_i = pos_encoding_2d(2, 2, 8);
    auto dm = naive::to_mat(d), im = naive::to_mat(i);
    auto attended = naive_mha(naive::add(dm, naive::to_mat(pe_d)), naive::add(im, naive::to_mat(pe_i)), im, p.mha);
    auto f = naive::layer_norm(naive::add(dm, attended), p.norm1.gamma.to_vector(), p.norm1.beta.to_vector(), 1e-5);
    auto g = naive::ffn(f, naive::to_mat(p.ffn.w1), p.ffn.b1.to_vector(), naive::to_mat(p.ffn.w2),
                        p.ffn.b2.to_vector());
    auto expect = naive::layer_norm(naive::add(f, g), p.norm2.gamma.to_vector(), p.norm2.beta.to_vector(), 1e-5);
    gaps.emplace_back("cma block", max_gap(cma_block(d, i, p, cfg, pe_d, pe_i).data(), naive::flat(expect)));
  }
  {
    const Tensor d0 = Tensor::from({2, 1, 1}, {1, 2}), f0 = Tensor::from({2, 1, 1}, {3, 4});
    const Tensor i0 = Tensor::from({2, 1, 1}, {5, 6});
    const auto p = fusion::SPMParams::init(2);
    const std::vector<double> expect = {3.015, 4.02};
    gaps.emplace_back("spm", max_gap(fusion::spm(f0, i0, d0, p).data(), expect));
    gaps.emplace_back("spm swapped", max_gap(fusion::spm_swapped(f0, i0, d0, p).data(), expect));
    const fusion::SPMParams f1_only{p.v, Tensor::from({1}, {0.0}), Tensor::from({1}, {1.0})};
    gaps.emplace_back("spm F1", max_gap(fusion::spm(f0, i0, d0, f1_only).data(), std::vector<double>{1.03, 2.04}));
  }
  {
    auto h = [](double s, double z) {
      return hinge_residual(Tensor::from({1}, {s}), Tensor::from({1}, {z}), 0.05).item();
    };
    gaps.emplace_back("hinge z>T", std::abs(h(0.5, 0.8) + 0.3));
    gaps.emplace_back("hinge z<=T", std::abs(h(0.3, 0.02) - 0.3));
    gaps.emplace_back("hinge clamp", std::abs(h(-0.2, 0.02)));

    const Tensor s = Tensor::from({1, 1}, {0.5}), z = Tensor::from({1, 1}, {0.8});
    gaps.emplace_back("loss_cls", std::abs(model::loss_cls({{s}}, std::span(&z, 1), 0.05).item() - 0.09));
    const BBox gt{10, 20, 30, 40};
    const Tensor off = Tensor::from({4}, {10 + 9.6, 20, 30, 40});
    gaps.emplace_back("loss_bbox", std::abs(model::loss_bbox(std::span(&off, 1), std::span(&gt, 1), 96.0).item() -
                                            0.0025));
    gaps.emplace_back("loss_total",
                      std::abs(model::loss_total(Tensor::from({1}, {2.0}), Tensor::from({1}, {0.5}), 0.01).item() -
                               0.52));
  }

  Outcome o;
  o.passed = true;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, gap] : gaps) {
    if (!(gap <= kExact)) o.passed = false;
    if (!(gap <= worst)) {
      worst = gap;
      worst_name = name;
    }
    o.notes.push_back(fmt("%-16s %.3e", name.c_str(), gap));
  }
  o.detail = fmt("%zu equation values, worst %.3e (%s), bound %.0e", gaps.size(), worst,
                 worst_name.empty() ? "-" : worst_name.c_str(), kExact);
  return o;
}

double held_out_overlap(const model::TrackerModel& m, const std::vector<synth::Sequence>& seqs) {
  double total = 0.0;
  for (const auto& seq : seqs) total += pipeline::mean_overlap(seq, pipeline::track_sequence(seq, m, {}));
  return total / static_cast<double>(seqs.size());
}

// Static target on a plain background, every frame identical: the tracker
// should not drift away from its first tracked overlap.
std::string no_drift_note(const model::TrackerModel& m) {
  synth::SceneSpec spec;
  spec.length = 12;
  const auto seq = synth::generate(spec, 41);
  const auto out = pipeline::track_sequence(seq, m, {});
  const double first = eval::iou(out.boxes[1], seq.boxes[1]);
  double lowest = first;
  for (std::size_t t = 2; t < seq.length(); ++t) lowest = std::min(lowest, eval::iou(out.boxes[t], seq.boxes[t]));
  const BBox& last = out.boxes.back();
  return fmt("no drift on a static scene: first tracked overlap %.3f, lowest later %.3f (%s); final box %.1fx%.1f, "
             "target %.1fx%.1f",
             first, lowest, lowest >= first - 1e-9 ? "holds" : "drifts", last.w, last.h, seq.boxes.back().w,
             seq.boxes.back().h);
}

// Target leaves the frame: confidence should fall below the gate within three frames.
std::string absence_note(const model::TrackerModel& m) {
  const auto seqs = synth::generate_suite(synth::SuiteKind::Absence, 5, kA4Absence);
  const double gate = pipeline::TrackerConfig{}.confidence_gate;
  std::size_t with_exit = 0, dropped = 0;
  for (const auto& seq : seqs) {
    const auto out = pipeline::track_sequence(seq, m, {});
    const auto it = std::find(seq.visible.begin(), seq.visible.end(), false);
    if (it == seq.visible.end()) continue;
    ++with_exit;
    const std::size_t t0 = static_cast<std::size_t>(it - seq.visible.begin());
    for (std::size_t t = t0; t < std::min(seq.length(), t0 + 3); ++t) {
      if (out.confidences[t] < gate) {
        ++dropped;
        break;
      }
    }
  }
  return fmt("absence: confidence below %.2f within 3 frames of the exit in %zu of %zu sequences", gate, dropped,
             with_exit);
}

Outcome a4_trainability() {
  const auto data = synth::generate_suite(synth::SuiteKind::Easy, kTrainSequences, kA4TrainData);
  model::TrackerModel m(model::ModelConfig::desk(), kA4ModelSeed);
  pipeline::TrainConfig tc;
  tc.epochs = 20;
  tc.pairs_per_epoch = 200;
  tc.seed = kA4ModelSeed;
  const auto log = pipeline::train(m, data, tc);
  const double ratio = log.back().total / log.front().total;
  const double overlap =
      held_out_overlap(m, synth::generate_suite(synth::SuiteKind::Easy, kHeldOutSequences, kA4HeldOut));
  Outcome o;
  o.passed = ratio <= kLossRatio && overlap >= kMinOverlap;
  o.detail = fmt("L_total %.5f -> %.5f (ratio %.3f, bound %.2f); held-out overlap %.3f (bound %.2f)",
                 log.front().total, log.back().total, ratio, kLossRatio, overlap, kMinOverlap);
  o.notes.push_back(no_drift_note(m));
  o.notes.push_back(absence_note(m));
  return o;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome a5_ablation() {
  const auto held_out = synth::generate_suite(synth::SuiteKind::DistractorDark, kHeldOutSequences, kA5HeldOut);
  std::vector<double> full, base;
  Outcome o;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = synth::generate_suite(synth::SuiteKind::DistractorDark, kTrainSequences, 1000 + seed);
    for (auto mode : {fusion::FusionMode::Full, fusion::FusionMode::Base}) {
      auto cfg = model::ModelConfig::desk();
      cfg.fusion_mode = mode;
      model::TrackerModel m(cfg, seed);
      pipeline::TrainConfig tc;
      tc.epochs = 20;
      tc.pairs_per_epoch = 200;
      tc.seed = seed;
      pipeline::train(m, data, tc);
      const double overlap = held_out_overlap(m, held_out);
      (mode == fusion::FusionMode::Full ? full : base).push_back(overlap);
      o.notes.push_back(fmt("seed %llu %-5s overlap %.4f", static_cast<unsigned long long>(seed),
                            fusion::fusion_mode_name(mode).c_str(), overlap));
    }
  }
  const double mf = median(full), mb = median(base);
  o.passed = mf >= mb;
  o.detail = fmt("median overlap full %.4f vs base %.4f over 5 seeds", mf, mb);
  return o;
}

Outcome a6_metrics() {
  const auto r = eval::oracle::check_equivalence(20, 10, 2024);
  Outcome o;
  o.passed = r.passed();
  o.detail = fmt("%zu instances, %zu mismatches, max |AUC - mean overlap| %.4f (bound 1/101)", r.instances,
                 r.mismatches, r.max_auc_gap);
  if (!r.first_failure.empty()) o.notes.push_back(r.first_failure);
  return o;
}

Outcome a7_determinism() {
  const auto dir = scratch("a7");
  std::ostringstream out, err;
  Outcome o;
  std::vector<std::string> broken;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) broken.push_back(what);
  };

  {
    std::ofstream(dir / "suite.cfg") << "[suite]\nkind = training\ncount = 3\n";
    std::ofstream(dir / "train.cfg") << "[train]\nepochs = 2\npairs_per_epoch = 4\n";
  }
  expect(cli::cmd_synth({dir / "suite.cfg", dir / "data_a", 17}, out, err) == 0, "synth run a");
  expect(cli::cmd_synth({dir / "suite.cfg", dir / "data_b", 17}, out, err) == 0, "synth run b");
  expect(snapshot(dir / "data_a") == snapshot(dir / "data_b"), "synth artifacts differ");

  for (const char* run : {"train_a", "train_b"}) {
    cli::TrainOptions t;
    t.config = dir / "train.cfg";
    t.data = dir / "data_a";
    t.out = dir / run;
    t.seed = 5;
    expect(cli::cmd_train(t, out, err) == 0, std::string(run) + " failed");
  }
  expect(snapshot(dir / "train_a") == snapshot(dir / "train_b"), "train artifacts differ");

  for (auto [run, jobs] : {std::pair{"track_a", 1}, std::pair{"track_b", 1}, std::pair{"track_c", 3}}) {
    cli::TrackOptions k;
    k.checkpoint = dir / "train_a" / "checkpoint.dmf";
    k.data = dir / "data_a";
    k.out = dir / run;
    k.seed = 9;
    k.jobs = static_cast<std::size_t>(jobs);
    expect(cli::cmd_track(k, out, err) == 0, std::string(run) + " failed");
  }
  expect(snapshot(dir / "track_a") == snapshot(dir / "track_b"), "track artifacts differ");
  expect(snapshot(dir / "track_a") == snapshot(dir / "track_c"), "track artifacts differ with --jobs 3");

  const std::size_t files = snapshot(dir / "data_a").size() + snapshot(dir / "train_a").size() +
                            snapshot(dir / "track_a").size();
  fs::remove_all(dir);
  o.passed = broken.empty();
  o.detail = fmt("synth, train and track repeated with equal seeds: %zu artifacts compared byte for byte", files);
  for (const auto& b : broken) o.notes.push_back(b);
  if (!err.str().empty() && !o.passed) o.notes.push_back(err.str());
  return o;
}

struct Criterion {
  const char* id;
  const char* name;
  double seconds;  // runtime bound, 0 = none
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"A1", "table arithmetic", kA1Seconds, a1_tables},
      {"A2", "gradient integrity", kA2Seconds, a2_gradcheck},
      {"A3", "equation suite", kA3Seconds, a3_equations},
      {"A4", "end-to-end trainability", kA4Seconds, a4_trainability},
      {"A5", "ablation direction", kA5Seconds, a5_ablation},
      {"A6", "metric oracle equivalence", kA6Seconds, a6_metrics},
      {"A7", "determinism", 0.0, a7_determinism},
  };
  std::vector<const Criterion*> selected;
  for (int i = 1; i < argc; ++i) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const Criterion& c) { return argv[i] == std::string(c.id); });
    if (it == all.end()) {
      std::fprintf(stderr, "unknown criterion '%s' (expected A1..A7)\n", argv[i]);
      return 2;
    }
    selected.push_back(&*it);
  }
  if (selected.empty())
    for (const auto& c : all) selected.push_back(&c);

  bool ok = true;
  for (const auto* c : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c->run();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (c->seconds > 0.0) {
      timing += fmt(" of %.0f s", c->seconds);
      if (secs > c->seconds) {
        o.passed = false;
        timing += ", over budget";
      }
    }
    std::printf("%s %s  %s: %s  [%s]\n", c->id, o.passed ? "PASS" : "FAIL", c->name, o.detail.c_str(),
                timing.c_str());
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    ok = ok && o.passed;
  }
  return ok ? 0 : 1;
}
