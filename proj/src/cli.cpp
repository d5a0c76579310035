#include "zstad/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "zstad/gradcheck.hpp"
#include "zstad/trainer.hpp"

namespace fs = std::filesystem;

namespace zstad {

std::string version_text() {
  return std::string("zstad ") + ZSTAD_VERSION +
         "\nformats: embeddings 1, partition 1, videos.bin 1, ground-truth 1, detections 1, checkpoint 1, config 1";
}

namespace {

const std::vector<KeySpec>& train_keys() {
  static const std::vector<KeySpec> keys = {
      {"learning_rate", "0.0001", "SGD learning rate"},
      {"momentum", "0.9", "SGD momentum"},
      {"weight_decay", "0.00005", "L2 weight decay"},
      {"epochs", "30", "passes over the training videos"},
      {"lambda", "0.6", "weight of the improved TPN branch"},
      {"beta", "0.1", "weight of the super-class loss"},
      {"delta_sc", "0.1", "super-class loss margin"},
      {"tau", "0.1", "softmax temperature over cosine scores"},
      {"scales", "2,4,8,16", "anchor scales in feature cells"},
      {"assign_hi", "0.7", "anchor IoU for a positive"},
      {"assign_lo", "0.3", "anchor IoU below which an anchor is negative"},
      {"tpn_batch", "64", "anchors sampled per video"},
      {"tpn_positive_fraction", "0.5", "largest positive share of the anchor batch"},
      {"proposal_batch", "32", "proposals per video for the zero-shot head"},
      {"proposal_positive_fraction", "0.25", "foreground share of the proposal batch"},
      {"train_proposals", "16", "TPN proposals kept after NMS during training"},
      {"proposal_nms", "0.7", "NMS threshold on training proposals"},
      {"proposal_fg_iou", "0.5", "IoU making a proposal foreground"},
      {"enable_improved_tpn", "true", "use the background-embedding TPN branch"},
      {"enable_sc_loss", "true", "use the super-class loss"},
      {"channels", "32", "backbone width"},
      {"improved_dim", "16", "improved TPN feature width"},
      {"hidden", "64", "zero-shot head trunk width"},
      {"bins", "4", "temporal RoI bins"},
      {"init_bias", "0", "initial bias of rectified units"},
  };
  return keys;
}

std::vector<KeySpec> with(std::vector<KeySpec> a, const std::vector<KeySpec>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const KeySpec kVerbosity{"verbosity", "warn", "quiet, warn, info or debug"};

}  // namespace

std::vector<std::string> command_names() {
  return {"gen-data", "solve-bg", "cluster", "train", "detect", "eval", "ablate", "grad-check"};
}

std::vector<KeySpec> command_schema(const std::string& command) {
  if (command == "gen-data")
    return {{"out", "data", "dataset directory"},
            {"seed", "0", "random seed"},
            {"num_classes", "20", "activity classes c"},
            {"num_seen", "12", "seen classes c_s"},
            {"num_superclasses", "5", "planted super-classes"},
            {"embed_dim", "16", "embedding dimension d"},
            {"embed_rank", "6", "dimension of the subspace holding the labels"},
            {"in_channels", "8", "per-frame feature channels"},
            {"length", "256", "frames per video"},
            {"train_videos", "200", "videos in the train split"},
            {"test_videos", "50", "videos in the test split"},
            {"min_segments", "1", "fewest segments per video"},
            {"max_segments", "3", "most segments per video"},
            {"min_segment_length", "16", "shortest segment in frames"},
            {"max_segment_length", "80", "longest segment in frames"},
            {"noise", "0.1", "per-frame Gaussian noise sigma"},
            {"label_jitter", "0.1", "spread of labels around their super-class centre"},
            {"max_center_cosine", "0.3", "largest cosine between super-class centres"},
            {"transfer_scale", "1", "scale of the hidden feature map"},
            kVerbosity};
  if (command == "solve-bg")
    return {{"embeddings", "data/embeddings.txt", "input embedding file"},
            {"out", "data/embeddings_bg.txt", "embedding file with the solved background"},
            {"delta_bg", "0.1", "similarity margin"},
            {"initial_step", "0.1", "initial gradient step"},
            {"tolerance", "1e-12", "objective change that stops the solver"},
            {"max_iterations", "10000", "iteration cap"},
            {"seed", "0", "seed for the fallback starting point"},
            kVerbosity};
  if (command == "cluster")
    return {{"embeddings", "data/embeddings_bg.txt", "input embedding file"},
            {"out", "data/partition.txt", "partition file"},
            {"c_plus", "auto", "number of super-classes or auto (eigengap)"},
            {"k_neighbors", "7", "neighbour rank for local scaling"},
            {"seed", "0", "k-means seed"},
            kVerbosity};
  if (command == "train")
    return with({{"data", "data", "dataset directory"},
                 {"split", "train", "split to train on"},
                 {"embeddings", "data/embeddings_bg.txt", "embedding file with background"},
                 {"partition", "data/partition.txt", "partition file"},
                 {"out", "run", "run directory"},
                 {"seed", "0", "training seed"},
                 {"report_train_map", "true", "evaluate seen-class mAP on the training split"}},
                with(train_keys(), {kVerbosity}));
  if (command == "detect")
    return {{"checkpoint", "run/checkpoint.txt", "trained checkpoint"},
            {"embeddings", "data/embeddings_bg.txt", "embedding file with background"},
            {"partition", "data/partition.txt", "partition file"},
            {"input", "data/test/videos.bin", "videos to run on"},
            {"out", "run/detections.txt", "detection file"},
            {"proposal_nms", "0.7", "NMS threshold on proposals"},
            {"max_proposals", "16", "proposals kept per video"},
            {"final_nms", "0.4", "per-class NMS threshold"},
            {"score_floor", "0.05", "smallest class probability emitted"},
            {"tau", "auto", "softmax temperature; auto reads the checkpoint"},
            {"lambda", "auto", "improved TPN weight; auto reads the checkpoint"},
            {"multiply_tpn_score", "false", "multiply the class probability by the TPN score"},
            kVerbosity};
  if (command == "eval")
    return {{"detections", "run/detections.txt", "detection file"},
            {"ground_truth", "data/test/gt.txt", "ground-truth file"},
            {"embeddings", "data/embeddings_bg.txt", "embedding file, for the seen/unseen split"},
            {"classes", "unseen", "all, seen or unseen"},
            {"alphas", "0.1,0.2,0.3,0.4,0.5", "IoU thresholds"},
            {"per_class", "true", "include per-class AP rows"},
            {"out", "run/eval.txt", "table file"},
            {"csv", "run/eval.csv", "CSV file"},
            kVerbosity};
  if (command == "ablate") {
    std::vector<KeySpec> tk;
    for (const auto& k : train_keys())
      if (k.key != "enable_improved_tpn" && k.key != "enable_sc_loss") tk.push_back(k);
    return with({{"data", "data", "dataset directory"},
                 {"embeddings", "data/embeddings_bg.txt", "embedding file with background"},
                 {"partition", "data/partition.txt", "partition file"},
                 {"seeds", "0,1,2,3,4", "training seeds"},
                 {"alphas", "0.1,0.2,0.3,0.4,0.5", "IoU thresholds"},
                 {"out", "ablation", "output directory"}},
                with(tk, {kVerbosity}));
  }
  if (command == "grad-check")
    return {{"configs", "100", "random configurations per check"},
            {"seed", "0", "random seed"},
            {"tolerance", "1e-5", "largest accepted relative error"},
            {"out", "grad-check.txt", "report file"},
            kVerbosity};
  throw UsageError("unknown command '" + command + "'");
}

TrainConfig train_config(const ConfigSet& c, bool with_variant) {
  TrainConfig t;
  t.learning_rate = c.get_double("learning_rate");
  t.momentum = c.get_double("momentum");
  t.weight_decay = c.get_double("weight_decay");
  t.epochs = c.get_int("epochs");
  t.lambda = c.get_double("lambda");
  t.beta = c.get_double("beta");
  t.delta_sc = c.get_double("delta_sc");
  t.tau = c.get_double("tau");
  t.scales = c.get_int_list("scales");
  t.assign_hi = c.get_double("assign_hi");
  t.assign_lo = c.get_double("assign_lo");
  t.tpn_batch = c.get_int("tpn_batch");
  t.tpn_positive_fraction = c.get_double("tpn_positive_fraction");
  t.proposal_batch = c.get_int("proposal_batch");
  t.proposal_positive_fraction = c.get_double("proposal_positive_fraction");
  t.train_proposals = c.get_int("train_proposals");
  t.proposal_nms = c.get_double("proposal_nms");
  t.proposal_fg_iou = c.get_double("proposal_fg_iou");
  if (with_variant) {
    t.enable_improved_tpn = c.get_bool("enable_improved_tpn");
    t.enable_sc_loss = c.get_bool("enable_sc_loss");
    t.seed = c.get_u64("seed");
  }
  t.channels = c.get_int("channels");
  t.improved_dim = c.get_int("improved_dim");
  t.hidden = c.get_int("hidden");
  t.bins = c.get_int("bins");
  t.init_bias = c.get_double("init_bias");
  t.validate();
  return t;
}

namespace {

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_echo(const ConfigSet& cfg, const std::string& command, const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# effective configuration of: zstad " << command << '\n';
  cfg.write(out);
}

void apply_verbosity(const ConfigSet& cfg) {
  const std::string& v = cfg.get("verbosity");
  if (v == "quiet") set_verbosity(Verbosity::kQuiet);
  else if (v == "warn") set_verbosity(Verbosity::kWarn);
  else if (v == "info") set_verbosity(Verbosity::kInfo);
  else if (v == "debug") set_verbosity(Verbosity::kDebug);
  else throw UsageError("verbosity: expected quiet, warn, info or debug, got '" + v + "'");
}

EmbeddingTable load_table_with_background(const std::string& path) {
  EmbeddingTable table = load_embeddings(path);
  if (!table.has_background())
    throw DataError(path + " has no background vector; run `zstad solve-bg` first");
  return table;
}

SuperClassPartition load_matching_partition(const std::string& path, const EmbeddingTable& table) {
  SuperClassPartition p = load_partition(path);
  if (p.num_labels() != table.num_classes())
    throw DataError(path + " covers " + std::to_string(p.num_labels()) + " labels but the embedding table has " +
                    std::to_string(table.num_classes()));
  return p;
}

int cmd_gen_data(const ConfigSet& c, std::ostream& out) {
  SynthConfig s;
  s.seed = c.get_u64("seed");
  s.num_classes = c.get_int("num_classes");
  s.num_seen = c.get_int("num_seen");
  s.num_superclasses = c.get_int("num_superclasses");
  s.embed_dim = c.get_int("embed_dim");
  s.embed_rank = c.get_int("embed_rank");
  s.in_channels = c.get_int("in_channels");
  s.length = c.get_int("length");
  s.train_videos = c.get_int("train_videos");
  s.test_videos = c.get_int("test_videos");
  s.min_segments = c.get_int("min_segments");
  s.max_segments = c.get_int("max_segments");
  s.min_segment_length = c.get_int("min_segment_length");
  s.max_segment_length = c.get_int("max_segment_length");
  s.noise = c.get_double("noise");
  s.label_jitter = c.get_double("label_jitter");
  s.max_center_cosine = c.get_double("max_center_cosine");
  s.transfer_scale = c.get_double("transfer_scale");
  const std::string dir = c.get("out");
  const SynthDataset ds = generate_dataset(s);
  save_dataset(ds, dir);
  write_echo(c, "gen-data", (fs::path(dir) / "gen-data.config").string());
  out << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test videos (" << s.num_classes
      << " classes, " << s.num_seen << " seen) to " << dir << '\n';
  return kExitOk;
}

int cmd_solve_bg(const ConfigSet& c, std::ostream& out) {
  EmbeddingTable table = load_embeddings(c.get("embeddings"));
  BgSolverOptions opts;
  opts.initial_step = c.get_double("initial_step");
  opts.tolerance = c.get_double("tolerance");
  opts.max_iterations = c.get_int("max_iterations");
  opts.seed = c.get_u64("seed");
  const auto [bg, report] = solve_background_embedding(table, c.get_double("delta_bg"), opts);
  table.set_background(bg, BackgroundOrigin::kSolved);
  ensure_parent(c.get("out"));
  save_embeddings(table, c.get("out"));
  write_echo(c, "solve-bg", c.get("out") + ".config");
  out << "iterations " << report.iterations << (report.converged ? " (converged)" : " (iteration cap)")
      << "\nobjective " << format_double(report.final_objective) << "\nmax cosine to a label "
      << format_double(report.max_similarity) << '\n';
  return kExitOk;
}

int cmd_cluster(const ConfigSet& c, std::ostream& out) {
  const EmbeddingTable table = load_embeddings(c.get("embeddings"));
  PartitionOptions opts;
  if (c.get("c_plus") != "auto") opts.c_plus = c.get_int("c_plus");
  opts.k_neighbors = c.get_int("k_neighbors");
  opts.seed = c.get_u64("seed");
  const SuperClassPartition p = build_partition(table, opts);
  ensure_parent(c.get("out"));
  save_partition(p, c.get("out"));
  write_echo(c, "cluster", c.get("out") + ".config");
  out << p.num_superclasses() << " super-classes over " << p.num_labels() << " labels\n";
  for (int s = 1; s <= p.num_superclasses(); ++s) {
    out << "  " << s << ":";
    for (int j : p.members(s)) out << ' ' << table.label(j);
    out << '\n';
  }
  return kExitOk;
}

int cmd_train(const ConfigSet& c, std::ostream& out) {
  const TrainConfig cfg = train_config(c, true);
  const EmbeddingTable table = load_table_with_background(c.get("embeddings"));
  const SuperClassPartition partition = load_matching_partition(c.get("partition"), table);
  const std::vector<Video> videos = load_split(c.get("data"), c.get("split"));
  if (videos.empty()) throw DataError("split '" + c.get("split") + "' has no videos");
  const bool report_map = c.get_bool("report_train_map");
  auto [params, report] = train(videos, table, partition, cfg, report_map);

  const fs::path dir = c.get("out");
  fs::create_directories(dir);
  const ModelConfig mc = cfg.model_config(table, videos.front().features.channels());
  save_checkpoint((dir / "checkpoint.txt").string(), mc, params,
                  {{"tau", format_double(cfg.tau)},
                   {"lambda", format_double(cfg.effective_lambda())},
                   {"beta", format_double(cfg.effective_beta())},
                   {"epochs", std::to_string(cfg.epochs)},
                   {"seed", std::to_string(cfg.seed)}});
  {
    std::ofstream trace(dir / "trace.csv");
    if (!trace) throw DataError("cannot write " + (dir / "trace.csv").string());
    write_trace_csv(report, trace);
  }
  write_echo(c, "train", (dir / "train.config").string());
  out << "trained " << cfg.epochs << " epochs on " << videos.size() << " videos";
  if (!report.epoch_mean_total.empty())
    out << "; final mean loss " << format_double(report.epoch_mean_total.back());
  if (report.skipped_steps) out << "; " << report.skipped_steps << " steps skipped";
  out << '\n';
  if (report_map) out << "seen-class training mAP@0.5 " << format_double(report.train_map) << '\n';
  return kExitOk;
}

double from_checkpoint(const ConfigSet& c, const std::string& key,
                       const std::vector<std::pair<std::string, std::string>>& echo, double fallback) {
  if (c.get(key) != "auto") return c.get_double(key);
  for (const auto& [k, v] : echo) {
    double x = 0.0;
    if (k == key && parse_double(v, x)) return x;
  }
  return fallback;
}

int cmd_detect(const ConfigSet& c, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> echo;
  const auto [model_cfg, params] = load_checkpoint(c.get("checkpoint"), &echo);
  const EmbeddingTable table = load_table_with_background(c.get("embeddings"));
  const SuperClassPartition partition = load_matching_partition(c.get("partition"), table);
  DetectConfig d;
  d.proposal_nms = c.get_double("proposal_nms");
  d.max_proposals = c.get_int("max_proposals");
  d.final_nms = c.get_double("final_nms");
  d.score_floor = c.get_double("score_floor");
  d.tau = from_checkpoint(c, "tau", echo, d.tau);
  d.lambda = from_checkpoint(c, "lambda", echo, d.lambda);
  d.multiply_tpn_score = c.get_bool("multiply_tpn_score");
  d.validate();
  const auto videos = read_videos(c.get("input"));
  const auto dets = detect_videos(videos, params, model_cfg, table, partition, d);
  ensure_parent(c.get("out"));
  write_detection_file(dets, c.get("out"));
  write_echo(c, "detect", c.get("out") + ".config");
  out << dets.size() << " detections over " << videos.size() << " videos\n";
  return kExitOk;
}

int cmd_eval(const ConfigSet& c, std::ostream& out) {
  const std::string which = c.get("classes");
  std::optional<std::set<int>> classes;
  if (which == "seen" || which == "unseen") {
    const EmbeddingTable table = load_embeddings(c.get("embeddings"));
    classes = which == "seen" ? seen_class_ids(table) : unseen_class_ids(table);
  } else if (which != "all") {
    throw UsageError("classes: expected all, seen or unseen, got '" + which + "'");
  }
  const auto alphas = c.get_double_list("alphas");
  if (alphas.empty()) throw UsageError("alphas: at least one threshold is required");
  const EvalResult res = evaluate_files(c.get("detections"), c.get("ground_truth"), alphas, classes);
  const bool per_class = c.get_bool("per_class");
  ensure_parent(c.get("out"));
  {
    std::ofstream f(c.get("out"));
    if (!f) throw DataError("cannot write " + c.get("out"));
    write_eval_table(res, f, per_class);
  }
  ensure_parent(c.get("csv"));
  {
    std::ofstream f(c.get("csv"));
    if (!f) throw DataError("cannot write " + c.get("csv"));
    write_eval_csv(res, f);
  }
  write_echo(c, "eval", c.get("out") + ".config");
  write_eval_table(res, out, per_class);
  return kExitOk;
}

int cmd_ablate(const ConfigSet& c, std::ostream& out) {
  const TrainConfig cfg = train_config(c, false);
  const EmbeddingTable table = load_table_with_background(c.get("embeddings"));
  const SuperClassPartition partition = load_matching_partition(c.get("partition"), table);
  const auto train_videos = load_split(c.get("data"), "train");
  const auto test_videos = load_split(c.get("data"), "test");
  if (train_videos.empty() || test_videos.empty()) throw DataError("ablation needs non-empty train and test splits");
  const auto seeds = c.get_u64_list("seeds");
  const auto alphas = c.get_double_list("alphas");
  if (seeds.empty() || alphas.empty()) throw UsageError("seeds and alphas must be non-empty");
  const auto rows = ablation_run(train_videos, test_videos, table, partition, cfg, all_variants(), seeds, alphas);

  const fs::path dir = c.get("out");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "ablation.txt");
    if (!f) throw DataError("cannot write " + (dir / "ablation.txt").string());
    write_ablation_table(rows, alphas, f);
  }
  {
    std::ofstream f(dir / "ablation.csv");
    if (!f) throw DataError("cannot write " + (dir / "ablation.csv").string());
    f << "method,seed,alpha,map\n";
    for (const auto& r : rows)
      for (std::size_t s = 0; s < seeds.size(); ++s)
        for (std::size_t a = 0; a < alphas.size(); ++a)
          f << r.variant.name() << ',' << seeds[s] << ',' << format_double(alphas[a]) << ','
            << format_double(r.per_seed[s][a]) << '\n';
  }
  write_echo(c, "ablate", (dir / "ablate.config").string());
  write_ablation_table(rows, alphas, out);
  return kExitOk;
}

int cmd_grad_check(const ConfigSet& c, std::ostream& out, std::ostream& err) {
  const int configs = c.get_int("configs");
  if (configs < 1) throw UsageError("configs must be at least 1");
  const double tol = c.get_double("tolerance");
  const Verbosity saved = verbosity();
  if (saved < Verbosity::kInfo) set_verbosity(Verbosity::kQuiet);  // zero-positive batches warn on every call
  std::vector<GradCheckResult> results;
  try {
    results = run_grad_suite(configs, c.get_u64("seed"));
  } catch (...) {
    set_verbosity(saved);
    throw;
  }
  set_verbosity(saved);

  std::ostringstream table;
  bool ok = true;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s %8s %8s %9s %13s  %s\n", "check", "configs", "rejected", "entries",
                "max rel err", "result");
  table << buf;
  for (const auto& r : results) {
    const bool pass = r.passed(tol);
    ok = ok && pass;
    std::snprintf(buf, sizeof(buf), "%-12s %8d %8d %9lld %13.3e  %s\n", r.name.c_str(), r.configurations,
                  r.rejected, r.entries, r.max_rel_error, pass ? "PASS" : ("FAIL at " + r.worst).c_str());
    table << buf;
  }
  ensure_parent(c.get("out"));
  {
    std::ofstream f(c.get("out"));
    if (!f) throw DataError("cannot write " + c.get("out"));
    f << table.str();
  }
  write_echo(c, "grad-check", c.get("out") + ".config");
  out << table.str();
  if (!ok) {
    err << "error: gradient check exceeded tolerance " << format_double(tol) << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"zstad: zero-shot temporal activity detection on per-frame feature sequences"};
  app.set_version_flag("--version", version_text());
  app.require_subcommand(1);
  app.fallthrough(false);

  struct Sub {
    std::string name;
    CLI::App* app;
    std::string config_path;
    std::vector<KeySpec> schema;
    std::map<std::string, std::string> flags;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  const std::map<std::string, std::string> blurbs = {
      {"gen-data", "generate a synthetic corpus"},
      {"solve-bg", "solve the background embedding"},
      {"cluster", "partition labels into super-classes"},
      {"train", "train a model"},
      {"detect", "detect activities with a trained model"},
      {"eval", "score detections against ground truth"},
      {"ablate", "train and score the four model variants"},
      {"grad-check", "compare analytic and numerical gradients"}};
  for (const auto& name : command_names()) {
    auto s = std::make_unique<Sub>();
    s->name = name;
    s->schema = command_schema(name);
    s->app = app.add_subcommand(name, blurbs.at(name));
    s->app->add_option("--config", s->config_path, "flat key = value file; flags override it");
    for (const auto& k : s->schema)
      s->app->add_option("--" + k.key, s->flags[k.key], k.help + " (default " + k.default_value + ")");
    subs.push_back(std::move(s));
  }

  // Friendlier messages than the parser's for misspelled commands and flags.
  const auto names = command_names();
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("-", 0) == 0) continue;
    if (std::find(names.begin(), names.end(), a) == names.end()) {
      const auto near = suggestions(a, names);
      err << "error: unknown command '" << a << "'";
      if (!near.empty()) err << "; did you mean '" << near.front() << "'?";
      err << "\nrun `zstad --help` for the command list\n";
      return kExitUsage;
    }
    std::vector<std::string> keys;
    for (const auto& k : command_schema(a)) keys.push_back(k.key);
    for (std::size_t j = i + 1; j < args.size(); ++j) {
      const std::string& f = args[j];
      if (f.rfind("--", 0) != 0 || f == "--help" || f == "--config" || f.rfind("--config=", 0) == 0) continue;
      const std::string key = f.substr(2, f.find('=') == std::string::npos ? std::string::npos : f.find('=') - 2);
      if (std::find(keys.begin(), keys.end(), key) != keys.end()) continue;
      const auto near = suggestions(key, keys);
      err << "error: unknown flag '--" << key << "'";
      if (!near.empty()) err << "; did you mean '--" << near.front() << "'?";
      err << "\nrun `zstad " << a << " --help` for the accepted flags\n";
      return kExitUsage;
    }
    break;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (auto& s : subs) {
    if (!s->app->parsed()) continue;
    try {
      ConfigSet cfg(s->schema);
      if (!s->config_path.empty()) cfg.load_file(s->config_path);
      for (const auto& k : s->schema)
        if (s->app->count("--" + k.key) > 0) cfg.set(k.key, s->flags[k.key]);
      apply_verbosity(cfg);
      if (s->name == "gen-data") return cmd_gen_data(cfg, out);
      if (s->name == "solve-bg") return cmd_solve_bg(cfg, out);
      if (s->name == "cluster") return cmd_cluster(cfg, out);
      if (s->name == "train") return cmd_train(cfg, out);
      if (s->name == "detect") return cmd_detect(cfg, out);
      if (s->name == "eval") return cmd_eval(cfg, out);
      if (s->name == "ablate") return cmd_ablate(cfg, out);
      if (s->name == "grad-check") return cmd_grad_check(cfg, out, err);
      throw InternalError("no handler for " + s->name);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\nrun `zstad " << s->name << " --help` for the accepted keys\n";
      return kExitUsage;
    } catch (const ParseError& e) {
      err << "error: " << e.what() << '\n';
      return kExitData;
    } catch (const DataError& e) {
      err << "error: " << e.what() << '\n';
      return kExitData;
    } catch (const std::domain_error& e) {
      err << "error: " << e.what() << '\n';
      return kExitData;
    } catch (const fs::filesystem_error& e) {
      err << "error: " << e.what() << '\n';
      return kExitData;
    } catch (const std::exception& e) {
      err << "internal error: " << e.what() << '\n';
      return kExitInternal;
    }
  }
  err << "error: no subcommand given\n";
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace zstad
