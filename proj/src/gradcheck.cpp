#include "zstad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "zstad/losses.hpp"
#include "zstad/trainer.hpp"

namespace zstad {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

void compare_gradient(const std::function<double()>& f, Mat& x, const Mat& analytic, const std::string& label,
                      GradCheckResult& result, double step) {
  if (analytic.rows() != x.rows() || analytic.cols() != x.cols())
    throw InternalError("gradient shape mismatch for " + label);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double saved = x(i, j);
      x(i, j) = saved + step;
      const double up = f();
      x(i, j) = saved - step;
      const double down = f();
      x(i, j) = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic(i, j), numeric);
      ++result.entries;
      if (!(err <= result.max_rel_error)) {
        result.max_rel_error = std::isfinite(err) ? std::max(err, result.max_rel_error)
                                                  : std::numeric_limits<double>::infinity();
        result.worst = label + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
      }
    }
}

namespace {

Vec random_vec(int n, Rng& rng, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

Vec random_unit(int n, Rng& rng) {
  Vec v;
  do {
    v = random_vec(n, rng);
  } while (v.norm() < 1e-6);
  return v.normalized();
}

SuperClassPartition random_partition(int c, Rng& rng) {
  const int q = static_cast<int>(rng.uniform_int(1, c));
  std::vector<int> a(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) a[static_cast<std::size_t>(i)] = i % q + 1;
  shuffle(a, rng);
  return SuperClassPartition(std::move(a), q);
}

EmbeddingTable random_table(int c, int c_s, int d, Rng& rng) {
  std::vector<std::string> labels;
  std::vector<Vec> vecs;
  std::vector<bool> seen;
  for (int j = 0; j < c; ++j) {
    labels.push_back("a" + std::to_string(j));
    vecs.push_back(random_unit(d, rng));
    seen.push_back(j < c_s);
  }
  EmbeddingTable t(std::move(labels), std::move(vecs), std::move(seen));
  t.set_background(random_unit(d, rng), BackgroundOrigin::kLoaded);
  return t;
}

// Distance of the super-class hinge from its kinks.
double sc_margin(const Vec& probs, int p_star, const SuperClassPartition& part, double delta) {
  const int z = part.superclass_of(p_star - 1);
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index j1 = 0; j1 < probs.size(); ++j1) {
    if (j1 > 0 && part.superclass_of(static_cast<int>(j1) - 1) == z) continue;
    for (Eigen::Index j2 = 1; j2 < probs.size(); ++j2) {
      if (part.superclass_of(static_cast<int>(j2) - 1) != z) continue;
      m = std::min(m, std::abs(probs[j1] - probs[j2] + delta));
    }
  }
  return m;
}

double smooth_l1_margin(double residual) { return std::abs(std::abs(residual) - 1.0); }

double relu_margin(const Mat& pre) { return pre.size() ? pre.cwiseAbs().minCoeff() : 1.0; }

// Smallest gap between the winner and runner-up of any max window with a live winner.
double pool_margin(const Mat& pre, int window) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index ch = 0; ch < pre.rows(); ++ch)
    for (Eigen::Index t0 = 0; t0 + window <= pre.cols(); t0 += window) {
      double top = 0.0, second = 0.0;
      for (int w = 0; w < window; ++w) {
        const double v = relu(pre(ch, t0 + w));
        if (v > top) {
          second = top;
          top = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (top > 0.0) m = std::min(m, top - second);
    }
  return m;
}

double roi_margin(const TemporalFeatureMap& map, const Segment& proposal, int bins) {
  double m = std::numeric_limits<double>::infinity();
  for (int b = 0; b < bins; ++b) {
    const auto [first, last] = roi_bin_range(map.length(), proposal, bins, b);
    for (Eigen::Index ch = 0; ch < map.values.rows(); ++ch) {
      double top = -std::numeric_limits<double>::infinity(), second = top;
      for (int i = first; i <= last; ++i) {
        const double v = map.values(ch, i);
        if (v > top) {
          second = top;
          top = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (last > first && top > 0.0) m = std::min(m, top - second);
    }
  }
  return m;
}

void randomize(ModelParams& p, Rng& rng, double scale) {
  p.for_each([&](const char*, Mat& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
  });
}

Mat& tensor(ModelParams& p, const std::string& name) {
  Mat* out = nullptr;
  p.for_each([&](const char* n, Mat& m) {
    if (name == n) out = &m;
  });
  if (!out) throw InternalError("no tensor named " + name);
  return *out;
}

constexpr int kMaxDraws = 1000;

template <typename Draw>
GradCheckResult run_checks(const std::string& name, int configurations, std::uint64_t seed, Draw&& draw) {
  GradCheckResult r;
  r.name = name;
  Rng root(seed);
  for (int i = 0; i < configurations; ++i) {
    Rng rng = root.fork(static_cast<std::uint64_t>(i));
    int attempts = 0;
    while (!draw(rng, r)) {
      ++r.rejected;
      if (++attempts >= kMaxDraws) throw InternalError(name + ": could not draw a kink-free configuration");
    }
    ++r.configurations;
  }
  return r;
}

}  // namespace

GradCheckResult check_loss_bc(int configurations, std::uint64_t seed) {
  return run_checks("L_bc", configurations, seed, [](Rng& rng, GradCheckResult& r) {
    const int n = static_cast<int>(rng.uniform_int(2, 9));
    const int p_star = static_cast<int>(rng.uniform_int(0, n - 1));
    Mat logits = random_vec(n, rng, 2.0);
    const Mat analytic = loss_bc(softmax(logits.col(0)), p_star).grad;
    compare_gradient([&] { return loss_bc(softmax(logits.col(0)), p_star).value; }, logits, analytic, "logits", r);
    return true;
  });
}

GradCheckResult check_loss_sc(int configurations, std::uint64_t seed) {
  return run_checks("L_sc", configurations, seed, [](Rng& rng, GradCheckResult& r) {
    const int c = static_cast<int>(rng.uniform_int(2, 8));
    const SuperClassPartition part = random_partition(c, rng);
    const int p_star = static_cast<int>(rng.uniform_int(1, c));
    const double delta = rng.uniform(0.05, 0.5);
    Mat probs = softmax(random_vec(c + 1, rng, 1.5));
    if (sc_margin(probs.col(0), p_star, part, delta) < kKinkMargin) return false;
    const Mat analytic = loss_sc(probs.col(0), p_star, part, delta).grad;
    compare_gradient([&] { return loss_sc(probs.col(0), p_star, part, delta).value; }, probs, analytic, "probs", r);
    return true;
  });
}

GradCheckResult check_smooth_l1(int configurations, std::uint64_t seed) {
  return run_checks("smooth-L1", configurations, seed, [](Rng& rng, GradCheckResult& r) {
    Mat x(1, 1);
    x(0, 0) = rng.uniform(-3.0, 3.0);
    if (smooth_l1_margin(x(0, 0)) < kKinkMargin) return false;
    Mat analytic(1, 1);
    analytic(0, 0) = smooth_l1(x(0, 0)).derivative;
    compare_gradient([&] { return smooth_l1(x(0, 0)).value; }, x, analytic, "x", r);
    return true;
  });
}

GradCheckResult check_tpn_heads(int configurations, std::uint64_t seed) {
  return run_checks("TPN heads", configurations, seed, [](Rng& rng, GradCheckResult& r) {
    ModelConfig cfg;
    cfg.in_channels = 2;
    cfg.channels = static_cast<int>(rng.uniform_int(2, 5));
    cfg.improved_dim = static_cast<int>(rng.uniform_int(2, 4));
    cfg.embed_dim = static_cast<int>(rng.uniform_int(2, 5));
    cfg.hidden = 2;
    cfg.bins = 1;
    cfg.num_classes = 2;
    cfg.num_seen = 1;
    cfg.scales.clear();
    const int k = static_cast<int>(rng.uniform_int(1, 3));
    for (int s = 0; s < k; ++s) cfg.scales.push_back(1 << s);
    ModelParams params = ModelParams::zeros(cfg);
    randomize(params, rng, 0.7);
    const int locations = static_cast<int>(rng.uniform_int(2, 5));
    TemporalFeatureMap map;
    map.values = random_mat(cfg.channels, locations, rng);
    const Vec bg = random_unit(cfg.embed_dim, rng);
    const double lambda = rng.uniform();

    const int n = locations * k;
    AnchorAssignment assign;
    std::vector<int> sampled;
    for (int a = 0; a < n; ++a) {
      const double u = rng.uniform();
      const AnchorLabel l = u < 0.4 ? AnchorLabel::kPositive : (u < 0.8 ? AnchorLabel::kNegative : AnchorLabel::kIgnore);
      assign.labels.push_back(l);
      assign.gt_index.push_back(l == AnchorLabel::kPositive ? 0 : -1);
      assign.max_iou.push_back(l == AnchorLabel::kPositive ? 0.8 : 0.1);
      assign.targets.push_back({0.5 * rng.normal(), 0.5 * rng.normal()});
      if (l != AnchorLabel::kIgnore) sampled.push_back(a);
    }
    if (sampled.empty()) return false;

    const TpnOutput out = tpn_forward(map, params, cfg, bg, lambda);
    for (int a : sampled)
      if (assign.labels[static_cast<std::size_t>(a)] == AnchorLabel::kPositive) {
        const Offsets& p = out.offsets[static_cast<std::size_t>(a)];
        const Offsets& t = assign.targets[static_cast<std::size_t>(a)];
        if (smooth_l1_margin(p.center - t.center) < kKinkMargin ||
            smooth_l1_margin(p.log_length - t.log_length) < kKinkMargin)
          return false;
      }

    const TpnLoss tl = tpn_losses(out, assign, sampled);
    ModelGrads grads = ModelGrads::zeros(cfg);
    const Mat d_map = tpn_backward(tl.d_fused, tl.d_offsets, out, params, cfg, grads);

    auto loss = [&] {
      const TpnLoss l = tpn_losses(tpn_forward(map, params, cfg, bg, lambda), assign, sampled);
      return l.cls + l.reg;
    };
    for (const char* name : {"tpn_reg_w", "tpn_reg_b", "tpn_cls_w", "tpn_cls_b", "tpn_imp_w", "tpn_imp_b",
                             "tpn_bg_w", "tpn_bg_b"})
      compare_gradient(loss, tensor(params, name), tensor(grads, name), name, r);
    compare_gradient(loss, map.values, d_map, "map", r);
    return true;
  });
}

GradCheckResult check_zsdn_head(int configurations, std::uint64_t seed) {
  return run_checks("ZSDN head", configurations, seed, [](Rng& rng, GradCheckResult& r) {
    const int c = static_cast<int>(rng.uniform_int(2, 6));
    const int c_s = static_cast<int>(rng.uniform_int(1, c - 1));
    const int d = static_cast<int>(rng.uniform_int(2, 5));
    const EmbeddingTable table = random_table(c, c_s, d, rng);
    const SuperClassPartition part = random_partition(c, rng);
    ModelConfig cfg;
    cfg.in_channels = 2;
    cfg.channels = static_cast<int>(rng.uniform_int(1, 4));
    cfg.bins = static_cast<int>(rng.uniform_int(1, 3));
    cfg.hidden = static_cast<int>(rng.uniform_int(2, 6));
    cfg.improved_dim = 2;
    cfg.embed_dim = d;
    cfg.num_classes = c;
    cfg.num_seen = c_s;
    cfg.scales = {1};
    ModelParams params = ModelParams::zeros(cfg);
    randomize(params, rng, 0.8);
    const double tau = rng.uniform(0.1, 1.0);
    const double beta = rng.uniform(0.0, 1.0);
    const double delta_sc = rng.uniform(0.05, 0.3);

    const int n = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<Mat> pooled;
    ScoredProposalBatch batch;
    std::vector<ZsdnOutput> outs;
    for (int i = 0; i < n; ++i) {
      pooled.push_back(random_vec(cfg.channels * cfg.bins, rng));
      const int label = rng.uniform() < 0.3 ? 0 : table.seen_index(static_cast<int>(rng.uniform_int(0, c_s - 1))) + 1;
      outs.push_back(zsdn_forward(pooled.back().col(0), params, table, tau));
      const ZsdnOutput& z = outs.back();
      if (relu_margin(z.pre1) < kKinkMargin || relu_margin(z.pre2) < kKinkMargin) return false;
      batch.probs.push_back(z.probs);
      batch.gt_labels.push_back(label);
      batch.reg_pred.push_back(z.reg);
      if (label > 0) {
        const int rank = table.seen_rank(label - 1);
        const RegTarget t{{0.5 * rng.normal(), 0.5 * rng.normal()}, rank};
        if (smooth_l1_margin(z.reg[2 * rank] - t.offsets.center) < kKinkMargin ||
            smooth_l1_margin(z.reg[2 * rank + 1] - t.offsets.log_length) < kKinkMargin)
          return false;
        if (sc_margin(z.probs, label, part, delta_sc) < kKinkMargin) return false;
        batch.reg_targets.emplace_back(t);
      } else {
        batch.reg_targets.emplace_back(std::nullopt);
      }
    }

    const ZsClsLoss zs = loss_zs_cls(batch, part, beta, delta_sc);
    const RegLoss rl = zsdn_reg_loss(batch);
    ModelGrads grads = ModelGrads::zeros(cfg);
    std::vector<Mat> d_pooled;
    for (int i = 0; i < n; ++i)
      d_pooled.emplace_back(zsdn_backward(zs.grad_logits[static_cast<std::size_t>(i)],
                                          rl.grad[static_cast<std::size_t>(i)], outs[static_cast<std::size_t>(i)],
                                          params, table, grads));

    auto loss = [&] {
      ScoredProposalBatch b = batch;
      for (int i = 0; i < n; ++i) {
        const ZsdnOutput z = zsdn_forward(pooled[static_cast<std::size_t>(i)].col(0), params, table, tau);
        b.probs[static_cast<std::size_t>(i)] = z.probs;
        b.reg_pred[static_cast<std::size_t>(i)] = z.reg;
      }
      return loss_zs_cls(b, part, beta, delta_sc).value + zsdn_reg_loss(b).value;
    };
    for (const char* name : {"zsdn_fc1_w", "zsdn_fc1_b", "zsdn_fc2_w", "zsdn_fc2_b", "zsdn_proj_w", "zsdn_proj_b",
                             "zsdn_reg_w", "zsdn_reg_b"})
      compare_gradient(loss, tensor(params, name), tensor(grads, name), name, r);
    for (int i = 0; i < n; ++i)
      compare_gradient(loss, pooled[static_cast<std::size_t>(i)], d_pooled[static_cast<std::size_t>(i)],
                       "pooled[" + std::to_string(i) + "]", r);
    return true;
  });
}

GradCheckResult check_end_to_end(int configurations, std::uint64_t seed) {
  return run_checks("end-to-end", configurations, seed, [](Rng& rng, GradCheckResult& r) {
    const int c = static_cast<int>(rng.uniform_int(2, 5));
    const int c_s = static_cast<int>(rng.uniform_int(1, c - 1));
    const int d = static_cast<int>(rng.uniform_int(2, 4));
    const EmbeddingTable table = random_table(c, c_s, d, rng);
    const SuperClassPartition part = random_partition(c, rng);

    TrainConfig tc;
    tc.scales = {2, 4};
    tc.channels = 3;
    tc.improved_dim = 2;
    tc.hidden = 4;
    tc.bins = 2;
    tc.tpn_batch = 8;
    tc.proposal_batch = 6;
    tc.train_proposals = 4;
    tc.tau = rng.uniform(0.2, 1.0);
    tc.beta = rng.uniform(0.0, 1.0);
    tc.lambda = rng.uniform();
    tc.delta_sc = rng.uniform(0.05, 0.3);
    tc.enable_improved_tpn = rng.uniform() < 0.7;
    tc.enable_sc_loss = rng.uniform() < 0.7;

    Video video;
    video.id = "gc";
    const int length = 32;
    video.features.values = random_mat(2, length, rng, 0.5);
    const int g_len = static_cast<int>(rng.uniform_int(10, 20));
    const int g_start = static_cast<int>(rng.uniform_int(0, length - g_len));
    const int label = table.seen_index(static_cast<int>(rng.uniform_int(0, c_s - 1))) + 1;
    video.gts.push_back({Segment(g_start, g_start + g_len), label});
    video.features.values.middleCols(g_start, g_len).colwise() += random_vec(2, rng);

    TrainContext ctx{tc.model_config(table, 2), &table, &part, tc};
    ModelParams params = ModelParams::zeros(ctx.model);
    randomize(params, rng, 0.6);
    Rng plan_rng = rng.fork(7);
    const VideoPlan plan = plan_video(params, ctx, video, plan_rng);
    if (plan.proposals.empty()) return false;

    // Reject draws whose forward pass sits within the kink margin anywhere.
    BackboneCache cache;
    const TemporalFeatureMap map = backbone_forward(video.features, params, &cache);
    if (relu_margin(cache.pre1) < kKinkMargin || relu_margin(cache.pre2) < kKinkMargin) return false;
    if (pool_margin(cache.pre1, 2) < kKinkMargin || pool_margin(cache.pre2, 4) < kKinkMargin) return false;
    const TpnOutput tpn = tpn_forward(map, params, ctx.model, table.background(), tc.effective_lambda());
    for (int a : plan.sampled_anchors)
      if (plan.assignment.labels[static_cast<std::size_t>(a)] == AnchorLabel::kPositive) {
        const Offsets& p = tpn.offsets[static_cast<std::size_t>(a)];
        const Offsets& t = plan.assignment.targets[static_cast<std::size_t>(a)];
        if (smooth_l1_margin(p.center - t.center) < kKinkMargin ||
            smooth_l1_margin(p.log_length - t.log_length) < kKinkMargin)
          return false;
      }
    for (std::size_t i = 0; i < plan.proposals.size(); ++i) {
      if (roi_margin(map, plan.proposals[i], ctx.model.bins) < kKinkMargin) return false;
      const ZsdnOutput z = zsdn_forward(roi_pool(map, plan.proposals[i], ctx.model.bins), params, table, tc.tau);
      if (relu_margin(z.pre1) < kKinkMargin || relu_margin(z.pre2) < kKinkMargin) return false;
      if (plan.labels[i] > 0) {
        if (tc.effective_beta() > 0.0 && sc_margin(z.probs, plan.labels[i], part, tc.delta_sc) < kKinkMargin)
          return false;
        const RegTarget& t = *plan.targets[i];
        if (smooth_l1_margin(z.reg[2 * t.seen_rank] - t.offsets.center) < kKinkMargin ||
            smooth_l1_margin(z.reg[2 * t.seen_rank + 1] - t.offsets.log_length) < kKinkMargin)
          return false;
      }
    }

    ModelGrads grads = ModelGrads::zeros(ctx.model);
    video_loss(params, ctx, video, plan, &grads);
    auto loss = [&] { return video_loss(params, ctx, video, plan, nullptr).total(); };
    std::vector<std::string> names;
    params.for_each([&](const char* n, const Mat&) { names.emplace_back(n); });
    for (const auto& name : names) compare_gradient(loss, tensor(params, name), tensor(grads, name), name, r);
    return true;
  });
}

std::vector<GradCheckResult> run_grad_suite(int configurations, std::uint64_t seed) {
  Rng root(seed);
  return {check_loss_bc(configurations, root.fork(1).next_u64()),
          check_loss_sc(configurations, root.fork(2).next_u64()),
          check_smooth_l1(configurations, root.fork(3).next_u64()),
          check_tpn_heads(configurations, root.fork(4).next_u64()),
          check_zsdn_head(configurations, root.fork(5).next_u64()),
          check_end_to_end(configurations, root.fork(6).next_u64())};
}

}  // namespace zstad
