// Runs the ten acceptance checks and prints one PASS/FAIL line for each.
// Exit status is the number of failed checks.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "oracles.hpp"
#include "pipeline.hpp"
#include "zstad/cli.hpp"
#include "zstad/eval.hpp"
#include "zstad/gradcheck.hpp"
#include "zstad/losses.hpp"
#include "zstad/superclass.hpp"
#include "zstad/trainer.hpp"

using namespace zstad;
using namespace zstad::test;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures without stopping at the first one.
struct Checker {
  bool ok = true;
  std::ostringstream why;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

Outcome background_solver() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  double worst_feasible = -1.0;
  std::vector<EmbeddingTable> feasible = {make_table({vec({1, 0})}, {true}),
                                          make_table({vec({1, 0}), vec({0, 1})}, {true, true})};
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    std::vector<Vec> vs;
    for (int j = 0; j < 5; ++j) {
      Vec v(16);
      for (int i = 0; i < 16; ++i) v[i] = rng.normal();
      vs.push_back(v);
    }
    feasible.push_back(make_table(vs, std::vector<bool>(5, true)));
  }
  for (const auto& table : feasible) {
    auto [bg, rep] = solve_background_embedding(table, 0.1);
    worst_feasible = std::max(worst_feasible, max_cosine(table, bg));
  }
  c.expect(worst_feasible <= 0.1 + 1e-6, "feasible max cosine above margin");

  const auto four = make_table({vec({1, 0}), vec({-1, 0}), vec({0, 1}), vec({0, -1})}, {true, true, true, true});
  const auto solve_t0 = std::chrono::steady_clock::now();
  auto [v, rep] = solve_background_embedding(four, 0.1);
  const double solver_time = seconds_since(solve_t0);
  const double oracle = four_direction_optimum();
  c.expect(std::abs(rep.final_objective - oracle) <= 1e-3, "four-direction objective off the oracle");
  const double elapsed = seconds_since(t0);
  c.expect(solver_time < 1.0, "solver slower than 1 s");
  return {c.ok, "feasible max cos " + fmt(worst_feasible, 7) + " over " + std::to_string(feasible.size()) +
                    " tables; four-direction objective " + fmt(rep.final_objective, 5) + " vs oracle " +
                    fmt(oracle, 5) + "; " + fmt(elapsed, 2) + " s" + c.why.str()};
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_grad_suite(100, 2024);
  const double elapsed = seconds_since(t0);
  Checker c;
  double worst = 0.0;
  std::string names;
  for (const auto& r : results) {
    c.expect(r.configurations >= 100, r.name + " ran fewer than 100 configurations");
    c.expect(r.passed(1e-5), r.name + " above 1e-5");
    worst = std::max(worst, r.max_rel_error);
    names += (names.empty() ? "" : ",") + r.name;
  }
  c.expect(results.size() == 6, "suite is missing a check");
  c.expect(elapsed < 120.0, "suite slower than 2 min");
  return {c.ok, std::to_string(results.size()) + " checks (" + names + ") x 100 configs, max rel err " +
                    fmt(worst * 1e6, 3) + "e-6; " + fmt(elapsed, 2) + " s" + c.why.str()};
}

Outcome superclass_loss() {
  Checker c;
  const SuperClassPartition part({1, 1, 2}, 2);
  const double a = loss_sc(vec({0.1, 0.4, 0.3, 0.2}), 1, part, 0.1).value;
  const double b = loss_sc(vec({0.3, 0.25, 0.15, 0.3}), 1, part, 0.1).value;
  c.expect(a == 0.0, "hand example 0.0");
  c.expect(std::abs(b - 0.2) <= 1e-15, "hand example 0.2");

  Rng rng(31);
  int zero = 0, positive = 0, wrong = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    const int q = static_cast<int>(rng.uniform_int(1, n));
    std::vector<int> assign(n);
    for (int j = 0; j < n; ++j) assign[j] = j < q ? j + 1 : static_cast<int>(rng.uniform_int(1, q));
    shuffle(assign, rng);
    SuperClassPartition p(assign, q);
    const int p_star = static_cast<int>(rng.uniform_int(1, n));
    const double delta = rng.uniform(0.0, 0.3);
    Vec prob = random_distribution(rng, n + 1);
    if (trial % 2 == 0)
      for (int j = 0; j < n; ++j)
        if (assign[j] == assign[p_star - 1]) prob[j + 1] += rng.uniform(0.0, 1.5);
    prob /= prob.sum();
    double in_min = 1e9, out_max = -1e9;
    for (int i = 0; i <= n; ++i) {
      const bool inside = i > 0 && assign[i - 1] == assign[p_star - 1];
      if (inside) in_min = std::min(in_min, prob[i]);
      else out_max = std::max(out_max, prob[i]);
    }
    const double loss = loss_sc(prob, p_star, p, delta).value;
    const bool holds = in_min >= out_max + delta;
    if (holds ? loss != 0.0 : !(loss > 0.0)) ++wrong;
    (holds ? zero : positive)++;
  }
  c.expect(wrong == 0, "margin rule violated");
  return {c.ok, "hand values " + fmt(a, 1) + " and " + fmt(b, 15) + "; 10000 tuples (" + std::to_string(zero) +
                    " margin held, " + std::to_string(positive) + " violated), " + std::to_string(wrong) +
                    " disagreements" + c.why.str()};
}

Outcome nms_oracle() {
  Rng rng(2024);
  int mismatches = 0, ambiguous = 0, largest = 0;
  for (int instance = 0; instance < 1000; ++instance) {
    const int n = static_cast<int>(rng.uniform_int(0, 20));
    const double t = rng.uniform(0.1, 0.9);
    auto dets = random_detections(rng, n);
    int found = 0;
    const auto reference = exhaustive_nms(dets, t, &found);
    if (found != 1) ++ambiguous;
    if (!(nms(dets, t) == reference)) ++mismatches;
    largest = std::max(largest, n);
  }
  return {mismatches == 0 && ambiguous == 0,
          "1000 instances up to " + std::to_string(largest) + " detections, " + std::to_string(mismatches) +
              " mismatches"};
}

Outcome ap_oracle() {
  Checker c;
  const std::string dir = ZSTAD_FIXTURES "/eval_mini/";
  const auto r = evaluate_files(dir + "dets.txt", dir + "gt.txt", {0.1, 0.5, 0.7});
  for (std::size_t a = 0; a < 3; ++a) c.expect(std::abs(*r.ap_at(1, a) - 11.0 / 15.0) <= 1e-12, "fixture class 1");
  c.expect(*r.ap_at(2, 0) == 1.0 && *r.ap_at(2, 1) == 1.0 && *r.ap_at(2, 2) == 0.5, "fixture class 2");
  const double tft = average_precision({true, false, true}, 2);
  c.expect(std::abs(tft - 0.8333) <= 1e-4 && std::abs(tft - 5.0 / 6.0) <= 1e-9, "[TP,FP,TP]");

  Rng rng(19);
  const std::vector<double> alphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int increases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto gts = random_records(rng, static_cast<int>(rng.uniform_int(1, 15)), true, 3, 3);
    auto dets = random_records(rng, static_cast<int>(rng.uniform_int(0, 40)), false, 3, 3);
    const auto e = evaluate(dets, gts, alphas);
    for (std::size_t a = 1; a < alphas.size(); ++a)
      if (e.map[a] > e.map[a - 1]) ++increases;
  }
  c.expect(increases == 0, "mAP rose with alpha");
  return {c.ok, "fixture APs 11/15 and {1,1,0.5} reproduced; [TP,FP,TP] = " + fmt(tft, 10) +
                    "; 100 random instances, " + std::to_string(increases) + " increases in alpha" + c.why.str()};
}

Outcome anchor_arithmetic() {
  Checker c;
  const auto thumos = generate_anchors(512, {2, 4, 5, 6, 8, 9, 10, 12, 14, 16});
  c.expect(thumos.anchors.size() == 640, "THUMOS configuration");
  Rng rng(7);
  int bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int length = 8 * static_cast<int>(rng.uniform_int(1, 128));
    std::vector<int> scales;
    for (int s = 1; s <= 32; ++s)
      if (rng.uniform() < 0.3) scales.push_back(s);
    if (scales.empty()) scales.push_back(3);
    const auto grid = generate_anchors(length, scales);
    if (grid.anchors.size() != scales.size() * static_cast<std::size_t>(length / 8)) ++bad;
  }
  c.expect(bad == 0, "random configurations");
  return {c.ok, "L=512 with 10 scales gives " + std::to_string(thumos.anchors.size()) + " anchors; " +
                    std::to_string(bad) + " of 50 random configurations off k*L/8" + c.why.str()};
}

Outcome clustering() {
  Checker c;
  double worst = 1.0;
  for (int blobs : {2, 3})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto [t, truth] = planted(blobs, 4, 100 + seed);
      PartitionOptions opts;
      opts.c_plus = blobs;
      opts.seed = seed;
      worst = std::min(worst, adjusted_rand(build_partition(t, opts).assignments(), truth));
    }
  c.expect(worst == 1.0, "planted recovery");
  const int e3 = eigengap_estimate(block_affinity({3, 4, 3}), 5);
  const int e2 = eigengap_estimate(block_affinity({2, 2}), 2);
  c.expect(e3 == 3 && e2 == 2, "eigengap");
  return {c.ok, "lowest adjusted Rand index over 2x20 planted tables " + fmt(worst, 4) + "; eigengap gives " +
                    std::to_string(e2) + " and " + std::to_string(e3) + " on 2- and 3-block affinities" +
                    c.why.str()};
}

// Criterion 8's corpus: the generator defaults (c 20, c_s 12, noise 0.1, 200/50 videos).
struct Corpus {
  SynthDataset ds;
  SuperClassPartition partition;
};

Corpus default_corpus() {
  SynthConfig sc;
  auto ds = generate_dataset(sc);
  ds.table.set_background(solve_background_embedding(ds.table, 0.1).first, BackgroundOrigin::kSolved);
  auto part = build_partition(ds.table);
  return {std::move(ds), std::move(part)};
}

TrainConfig reference_config() {
  ConfigSet c(command_schema("train"));
  c.load_file(ZSTAD_CONFIGS "/reference.conf");
  return train_config(c, true);
}

double unseen_map(const Corpus& corpus, const ModelParams& params, const TrainConfig& cfg) {
  const auto mc = cfg.model_config(corpus.ds.table, corpus.ds.test.front().features.channels());
  const auto dets = detect_videos(corpus.ds.test, params, mc, corpus.ds.table, corpus.partition, cfg.detect_config());
  return evaluate(dets, ground_truth_records(corpus.ds.test), {0.5}, unseen_class_ids(corpus.ds.table)).map[0];
}

Outcome end_to_end(const Corpus& corpus) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig cfg = reference_config();
  const auto mc = cfg.model_config(corpus.ds.table, corpus.ds.train.front().features.channels());
  const auto untrained = ParamSet::initialize(mc, Rng(cfg.seed).fork(0).next_u64(), cfg.init_bias);
  const double floor_map = unseen_map(corpus, untrained, cfg);
  auto [params, report] = train(corpus.ds.train, corpus.ds.table, corpus.partition, cfg, false);
  const double trained_map = unseen_map(corpus, params, cfg);
  const double elapsed = seconds_since(t0);
  Checker c;
  c.expect(trained_map >= 0.50, "; trained unseen mAP below 0.50");
  c.expect(floor_map <= 0.05, "; untrained floor above 0.05");
  c.expect(elapsed < 600.0, "; slower than 10 min");
  return {c.ok, "unseen mAP@0.5 after " + std::to_string(cfg.epochs) + " epochs " + fmt(trained_map) +
                    " (needs >= 0.50), untrained " + fmt(floor_map) + " (needs <= 0.05); " + fmt(elapsed, 1) +
                    " s" + c.why.str()};
}

Outcome ablation(const Corpus& corpus) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg = reference_config();
  const auto rows = ablation_run(corpus.ds.train, corpus.ds.test, corpus.ds.table, corpus.partition, cfg,
                                 all_variants(), {0, 1, 2, 3, 4}, {0.5});
  std::ostringstream detail;
  double best = 0.0, base = 0.0;
  for (const auto& r : rows) {
    double lo = 1.0, hi = 0.0;
    for (const auto& per_alpha : r.per_seed) {
      lo = std::min(lo, per_alpha[0]);
      hi = std::max(hi, per_alpha[0]);
    }
    detail << r.variant.name() << " " << fmt(r.mean_map[0]) << " (seeds " << fmt(lo, 3) << ".." << fmt(hi, 3)
           << "); ";
    if (r.variant.improved_tpn && r.variant.sc_loss) best = r.mean_map[0];
    if (!r.variant.improved_tpn && !r.variant.sc_loss) base = r.mean_map[0];
  }
  detail << fmt(seconds_since(t0), 1) << " s";
  return {rows.size() == 4 && best >= base, "mean unseen mAP@0.5 over 5 seeds: " + detail.str()};
}

Outcome cli_determinism() {
  TempDir dir("acceptance_cli");
  const std::vector<std::string> gen = {"--train_videos", "8", "--test_videos", "4", "--length", "128",
                                        "--max_segment_length", "40"};
  const std::vector<std::string> train = {"--config", ZSTAD_CONFIGS "/reference.conf", "--epochs", "2"};
  Checker c;
  auto r = run_pipeline(dir.path().string(), gen, train);
  c.expect(r.code == kExitOk, "; pipeline failed: " + r.err);
  const std::string d = dir.file("data");
  const std::vector<std::string> ablate = {"ablate", "--data", d, "--embeddings", d + "/embeddings_bg.txt",
                                           "--partition", d + "/partition.txt", "--seeds", "0,1", "--epochs", "1",
                                           "--out", dir.file("ablation"), "--verbosity", "quiet"};
  const std::vector<std::string> grad = {"grad-check", "--configs", "3", "--out", dir.file("grad.txt")};
  c.expect(cli(ablate).code == kExitOk, "; ablate failed");
  c.expect(cli(grad).code == kExitOk, "; grad-check failed");
  const auto first = snapshot(dir.path());

  r = run_pipeline(dir.path().string(), gen, train);
  c.expect(r.code == kExitOk, "; rerun failed");
  cli(ablate);
  cli(grad);
  const auto second = snapshot(dir.path());
  int differing = 0;
  for (const auto& [name, body] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != body) {
      ++differing;
      c.expect(false, "; " + name + " differs");
    }
  }
  c.expect(first.size() == second.size(), "; file sets differ");
  return {c.ok, "8 stages rerun, " + std::to_string(first.size()) + " output files compared, " +
                    std::to_string(differing) + " differ" + c.why.str()};
}

}  // namespace

int main() {
  set_verbosity(Verbosity::kQuiet);
  int failed = 0;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << id << " [" << title << "]: " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail
              << std::endl;
  };
  report(1, "background solver", background_solver);
  report(2, "gradient suite", gradient_suite);
  report(3, "super-class loss", superclass_loss);
  report(4, "NMS oracle", nms_oracle);
  report(5, "AP oracle", ap_oracle);
  report(6, "anchor arithmetic", anchor_arithmetic);
  report(7, "clustering recovery", clustering);
  std::optional<Corpus> corpus;
  auto with_corpus = [&](Outcome (*f)(const Corpus&)) {
    return [&, f] {
      if (!corpus) corpus = default_corpus();
      return f(*corpus);
    };
  };
  report(8, "end-to-end zero-shot detection", with_corpus(end_to_end));
  report(9, "ablation ordering", with_corpus(ablation));
  report(10, "CLI determinism", cli_determinism);
  std::cout << (10 - failed) << " of 10 criteria passed" << std::endl;
  return failed;
}
