#include "zstad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace zstad {

ModelConfig TrainConfig::model_config(const EmbeddingTable& table, int in_channels) const {
  ModelConfig m;
  m.in_channels = in_channels;
  m.channels = channels;
  m.improved_dim = improved_dim;
  m.embed_dim = table.dim();
  m.hidden = hidden;
  m.bins = bins;
  m.num_classes = table.num_classes();
  m.num_seen = table.num_seen();
  m.scales = scales;
  m.validate();
  return m;
}

DetectConfig TrainConfig::detect_config() const {
  DetectConfig d;
  d.tau = tau;
  d.lambda = effective_lambda();
  return d;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw DomainError("weight_decay must be non-negative");
  if (epochs < 0) throw DomainError("epochs must be non-negative");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0, 1]");
  if (!(beta >= 0.0)) throw DomainError("beta must be non-negative");
  if (!(delta_sc >= 0.0)) throw DomainError("delta_sc must be non-negative");
  if (!(delta_bg > 0.0 && delta_bg < 1.0)) throw DomainError("delta_bg must lie in (0, 1)");
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  if (!(assign_hi > assign_lo)) throw DomainError("assign_hi must exceed assign_lo");
  if (tpn_batch < 1 || proposal_batch < 1 || train_proposals < 1)
    throw DomainError("batch sizes must be positive");
  if (!std::isfinite(init_bias)) throw DomainError("init_bias must be finite");
  for (double f : {tpn_positive_fraction, proposal_positive_fraction, proposal_nms, proposal_fg_iou})
    if (!(f >= 0.0 && f <= 1.0)) throw DomainError("fractions and thresholds must lie in [0, 1]");
}

namespace {

template <typename T>
std::vector<T> take(std::vector<T> v, std::size_t n) {
  if (v.size() > n) v.resize(n);
  return v;
}

}  // namespace

VideoPlan plan_video(const ModelParams& params, const TrainContext& ctx, const Video& video, Rng& rng) {
  const TrainConfig& cfg = ctx.cfg;
  const double length = video.features.length();
  const TemporalFeatureMap map = backbone_forward(video.features, params);
  const TpnOutput tpn = tpn_forward(map, params, ctx.model, ctx.table->background(), cfg.effective_lambda());
  const AnchorGrid grid = generate_anchors(video.features.length(), ctx.model.scales);

  VideoPlan plan;
  plan.assignment = assign_anchors(grid, video.gts, cfg.assign_hi, cfg.assign_lo);
  std::vector<int> pos, neg;
  for (std::size_t a = 0; a < grid.anchors.size(); ++a) {
    if (plan.assignment.labels[a] == AnchorLabel::kPositive) pos.push_back(static_cast<int>(a));
    if (plan.assignment.labels[a] == AnchorLabel::kNegative) neg.push_back(static_cast<int>(a));
  }
  shuffle(pos, rng);
  shuffle(neg, rng);
  const auto max_pos = static_cast<std::size_t>(cfg.tpn_batch * cfg.tpn_positive_fraction);
  pos = take(pos, max_pos);
  neg = take(neg, static_cast<std::size_t>(cfg.tpn_batch) - pos.size());
  plan.sampled_anchors = pos;
  plan.sampled_anchors.insert(plan.sampled_anchors.end(), neg.begin(), neg.end());
  std::sort(plan.sampled_anchors.begin(), plan.sampled_anchors.end());

  std::vector<Segment> pool;
  for (const auto& d : select_proposals(tpn, grid, length, cfg.proposal_nms, cfg.train_proposals))
    pool.push_back(d.segment);
  for (std::size_t a = 0; a < grid.anchors.size(); ++a)
    if (plan.assignment.labels[a] == AnchorLabel::kPositive)
      if (auto s = clip_segment(grid.anchors[a], length)) pool.push_back(*s);
  for (const auto& g : video.gts)
    if (auto s = clip_segment(g.segment, length)) pool.push_back(*s);

  std::vector<std::pair<Segment, int>> fg, bg;  // (proposal, gt index)
  for (const Segment& s : pool) {
    double best = 0.0;
    int best_g = -1;
    for (std::size_t g = 0; g < video.gts.size(); ++g) {
      const double v = iou(s, video.gts[g].segment);
      if (v > best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0 && best >= cfg.proposal_fg_iou) {
      fg.emplace_back(s, best_g);
    } else {
      bg.emplace_back(s, -1);
    }
  }
  shuffle(fg, rng);
  shuffle(bg, rng);
  const auto n = static_cast<std::size_t>(cfg.proposal_batch);
  fg = take(fg, static_cast<std::size_t>(std::max(1.0, n * cfg.proposal_positive_fraction)));
  bg = take(bg, n - std::min(n, fg.size()));

  for (const auto& [s, g] : fg) {
    const GroundTruth& gt = video.gts[g];
    plan.proposals.push_back(s);
    plan.labels.push_back(gt.class_id);
    plan.targets.push_back(RegTarget{encode_offsets(s, gt.segment), ctx.table->seen_rank(gt.class_id - 1)});
  }
  for (const auto& [s, g] : bg) {
    plan.proposals.push_back(s);
    plan.labels.push_back(0);
    plan.targets.push_back(std::nullopt);
  }
  return plan;
}

LossBreakdown video_loss(const ModelParams& params, const TrainContext& ctx, const Video& video,
                         const VideoPlan& plan, ModelGrads* grads) {
  const TrainConfig& cfg = ctx.cfg;
  BackboneCache bcache;
  const TemporalFeatureMap map = backbone_forward(video.features, params, &bcache);
  const TpnOutput tpn = tpn_forward(map, params, ctx.model, ctx.table->background(), cfg.effective_lambda());
  const TpnLoss tl = tpn_losses(tpn, plan.assignment, plan.sampled_anchors);

  LossBreakdown out;
  out.tpn_cls = tl.cls;
  out.tpn_reg = tl.reg;

  const std::size_t n = plan.proposals.size();
  std::vector<RoiCache> roi(n);
  std::vector<ZsdnOutput> z;
  z.reserve(n);
  ScoredProposalBatch batch;
  for (std::size_t i = 0; i < n; ++i) {
    z.push_back(zsdn_forward(roi_pool(map, plan.proposals[i], ctx.model.bins, &roi[i]), params, *ctx.table,
                             cfg.tau));
    batch.probs.push_back(z.back().probs);
    batch.gt_labels.push_back(plan.labels[i]);
    batch.reg_pred.push_back(z.back().reg);
    batch.reg_targets.push_back(plan.targets[i]);
  }

  ZsClsLoss zs;
  RegLoss rl;
  if (n > 0) {
    zs = loss_zs_cls(batch, *ctx.partition, cfg.effective_beta(), cfg.delta_sc);
    rl = zsdn_reg_loss(batch);
    out.zs_bc = zs.bc;
    out.zs_sc = zs.sc;
    out.zs_cls = zs.value;
    out.zsdn_reg = rl.value;
  }

  if (grads) {
    Mat d_map = tpn_backward(tl.d_fused, tl.d_offsets, tpn, params, ctx.model, *grads);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec d_pooled = zsdn_backward(zs.grad_logits[i], rl.grad[i], z[i], params, *ctx.table, *grads);
      roi_pool_backward(d_pooled, roi[i], d_map);
    }
    backbone_backward(d_map, bcache, params, *grads);
  }
  return out;
}

std::optional<std::string> sgd_step(ModelParams& params, const ModelGrads& grads, ModelParams& velocity,
                                    const TrainConfig& cfg) {
  std::optional<std::string> bad;
  grads.for_each([&](const char* name, const Mat& g) {
    if (!bad && !g.allFinite()) bad = name;
  });
  if (bad) return bad;

  std::vector<const Mat*> g_list;
  grads.for_each([&](const char*, const Mat& g) { g_list.push_back(&g); });
  std::vector<Mat*> v_list;
  velocity.for_each([&](const char*, Mat& v) { v_list.push_back(&v); });
  std::size_t i = 0;
  params.for_each([&](const char* name, Mat& theta) {
    const Mat& g = *g_list[i];
    Mat& v = *v_list[i];
    ++i;
    if (g.rows() != theta.rows() || g.cols() != theta.cols() || v.rows() != theta.rows() || v.cols() != theta.cols())
      throw DomainError(std::string("sgd_step: shape mismatch in ") + name);
    v = cfg.momentum * v - cfg.learning_rate * (g + cfg.weight_decay * theta);
    theta += v;
  });
  return std::nullopt;
}

void check_zsl_hygiene(const std::vector<Video>& train, const EmbeddingTable& table) {
  for (const Video& v : train)
    for (const GroundTruth& g : v.gts) {
      if (g.class_id < 1 || g.class_id > table.num_classes())
        throw DataError("video " + v.id + ": class id " + std::to_string(g.class_id) + " out of range");
      if (!table.is_seen(g.class_id - 1))
        throw DataError("video " + v.id + " is annotated with unseen class '" + table.label(g.class_id - 1) +
                        "'; unseen classes must not appear in training data");
    }
}

std::set<int> unseen_class_ids(const EmbeddingTable& table) {
  std::set<int> out;
  for (int j = 0; j < table.num_classes(); ++j)
    if (!table.is_seen(j)) out.insert(j + 1);
  return out;
}

std::set<int> seen_class_ids(const EmbeddingTable& table) {
  std::set<int> out;
  for (int j = 0; j < table.num_classes(); ++j)
    if (table.is_seen(j)) out.insert(j + 1);
  return out;
}

std::vector<DetectionRecord> ground_truth_records(const std::vector<Video>& videos) {
  std::vector<DetectionRecord> out;
  for (const Video& v : videos)
    for (const GroundTruth& g : v.gts) out.push_back({v.id, Detection{g.segment, g.class_id, 1.0}});
  return out;
}

std::pair<ModelParams, TrainReport> train(const std::vector<Video>& videos, const EmbeddingTable& table,
                                          const SuperClassPartition& partition, const TrainConfig& cfg,
                                          bool compute_train_map) {
  cfg.validate();
  check_zsl_hygiene(videos, table);
  if (!table.has_background()) throw DataError("training requires an embedding table with a background vector");
  if (partition.num_labels() != table.num_classes())
    throw DataError("partition does not cover the embedding table");
  if (videos.empty() && cfg.epochs > 0) throw DataError("training set is empty");
  const int in_channels = videos.empty() ? 1 : videos.front().features.channels();
  for (const Video& v : videos)
    if (v.features.channels() != in_channels) throw DataError("video " + v.id + " has a different channel count");

  TrainContext ctx{cfg.model_config(table, in_channels), &table, &partition, cfg};
  Rng root(cfg.seed);
  ModelParams params = ModelParams::initialize(ctx.model, root.fork(0).next_u64(), cfg.init_bias);
  ModelParams velocity = ModelParams::zeros(ctx.model);
  TrainReport report;

  Rng epoch_rng = root.fork(1);
  Rng plan_rng = root.fork(2);
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(videos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, epoch_rng);
    double epoch_total = 0.0;
    for (std::size_t idx : order) {
      const Video& v = videos[idx];
      const VideoPlan plan = plan_video(params, ctx, v, plan_rng);
      ModelGrads grads = ModelGrads::zeros(ctx.model);
      const LossBreakdown loss = video_loss(params, ctx, v, plan, &grads);
      if (auto bad = sgd_step(params, grads, velocity, cfg)) {
        log_warning("step " + std::to_string(step) + ": non-finite gradient in " + *bad + "; step skipped");
        ++report.skipped_steps;
      }
      report.trace.push_back({step++, loss});
      epoch_total += loss.total();
    }
    report.epoch_mean_total.push_back(videos.empty() ? 0.0 : epoch_total / static_cast<double>(videos.size()));
    log_info("epoch " + std::to_string(epoch + 1) + " mean loss " + format_double(report.epoch_mean_total.back()));
  }

  if (compute_train_map && !videos.empty()) {
    const auto dets = detect_videos(videos, params, ctx.model, table, partition, cfg.detect_config());
    report.train_map = evaluate(dets, ground_truth_records(videos), {0.5}, seen_class_ids(table)).map[0];
  }
  return {std::move(params), std::move(report)};
}

void write_trace_csv(const TrainReport& report, std::ostream& out) {
  out << "step,total,tpn_cls,tpn_reg,zs_bc,zs_sc,zsdn_reg\n";
  for (const auto& r : report.trace)
    out << r.step << ',' << format_double(r.loss.total()) << ',' << format_double(r.loss.tpn_cls) << ','
        << format_double(r.loss.tpn_reg) << ',' << format_double(r.loss.zs_bc) << ','
        << format_double(r.loss.zs_sc) << ',' << format_double(r.loss.zsdn_reg) << '\n';
}

std::string Variant::name() const {
  return std::string("Ours (") + (improved_tpn ? "+" : "-") + "TPN*" + (sc_loss ? "+" : "-") + "L_sc)";
}

std::vector<Variant> all_variants() {
  return {{false, false}, {true, false}, {false, true}, {true, true}};
}

std::vector<AblationRow> ablation_run(const std::vector<Video>& train_videos, const std::vector<Video>& test_videos,
                                      const EmbeddingTable& table, const SuperClassPartition& partition,
                                      const TrainConfig& cfg, const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds, const std::vector<double>& alphas) {
  const auto gts = ground_truth_records(test_videos);
  const auto unseen = unseen_class_ids(table);
  std::vector<AblationRow> rows;
  for (const Variant& var : variants) {
    AblationRow row{var, std::vector<double>(alphas.size(), 0.0), {}};
    for (std::uint64_t seed : seeds) {
      TrainConfig vc = cfg;
      vc.enable_improved_tpn = var.improved_tpn;
      vc.enable_sc_loss = var.sc_loss;
      vc.seed = seed;
      auto [params, report] = train(train_videos, table, partition, vc, false);
      const ModelConfig mc = vc.model_config(table, train_videos.front().features.channels());
      const auto dets = detect_videos(test_videos, params, mc, table, partition, vc.detect_config());
      const auto res = evaluate(dets, gts, alphas, unseen);
      row.per_seed.push_back(res.map);
      for (std::size_t a = 0; a < alphas.size(); ++a) row.mean_map[a] += res.map[a] / static_cast<double>(seeds.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, const std::vector<double>& alphas,
                          std::ostream& out) {
  char buf[64];
  out << "Unseen-class mAP (%) at IoU threshold alpha, mean over seeds\n";
  out << "Method                ";
  for (double a : alphas) {
    std::snprintf(buf, sizeof(buf), " a=%-5.2f", a);
    out << buf;
  }
  out << '\n';
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-22s", r.variant.name().c_str());
    out << buf;
    for (double m : r.mean_map) {
      std::snprintf(buf, sizeof(buf), " %7.2f", 100.0 * m);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace zstad
