#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zstad/detector.hpp"
#include "zstad/eval.hpp"
#include "zstad/losses.hpp"

namespace zstad {

struct TrainConfig {
  double learning_rate = 0.0001;
  double momentum = 0.9;
  double weight_decay = 0.00005;
  int epochs = 30;
  std::uint64_t seed = 0;
  double lambda = 0.6;
  double beta = 0.1;
  double delta_sc = 0.1;
  double delta_bg = 0.1;
  double tau = 0.1;
  std::vector<int> scales = {2, 4, 8, 16};
  double assign_hi = 0.7;
  double assign_lo = 0.3;
  int tpn_batch = 64;
  double tpn_positive_fraction = 0.5;
  int proposal_batch = 32;           // N in the zero-shot classification loss
  double proposal_positive_fraction = 0.25;
  int train_proposals = 16;          // top proposals kept after NMS
  double proposal_nms = 0.7;
  double proposal_fg_iou = 0.5;
  bool enable_improved_tpn = true;
  bool enable_sc_loss = true;
  // model widths
  int channels = 32;
  int improved_dim = 16;
  int hidden = 64;
  int bins = 4;
  double init_bias = 0.0;  // starting bias of rectified units

  double effective_lambda() const { return enable_improved_tpn ? lambda : 0.0; }
  double effective_beta() const { return enable_sc_loss ? beta : 0.0; }
  ModelConfig model_config(const EmbeddingTable& table, int in_channels) const;
  DetectConfig detect_config() const;
  void validate() const;
};

struct TrainContext {
  ModelConfig model;
  const EmbeddingTable* table;
  const SuperClassPartition* partition;
  TrainConfig cfg;
};

/// Discrete choices for one video: which anchors and proposals enter the
/// losses and with which labels. Holding a plan fixed makes the loss a smooth
/// function of the parameters.
struct VideoPlan {
  AnchorAssignment assignment;
  std::vector<int> sampled_anchors;
  std::vector<Segment> proposals;
  std::vector<int> labels;  // 0 = background, j = activity class j
  std::vector<std::optional<RegTarget>> targets;
};

VideoPlan plan_video(const ModelParams& params, const TrainContext& ctx, const Video& video, Rng& rng);

/// Full forward/backward for one video under a fixed plan. Gradients are
/// accumulated into `grads` when it is non-null.
LossBreakdown video_loss(const ModelParams& params, const TrainContext& ctx, const Video& video,
                         const VideoPlan& plan, ModelGrads* grads);

/// v <- momentum v - lr (g + wd theta); theta <- theta + v. Returns the name
/// of the first non-finite gradient tensor and leaves everything untouched in
/// that case.
std::optional<std::string> sgd_step(ModelParams& params, const ModelGrads& grads, ModelParams& velocity,
                                    const TrainConfig& cfg);

struct TraceRow {
  int step;
  LossBreakdown loss;
};

struct TrainReport {
  std::vector<TraceRow> trace;
  std::vector<double> epoch_mean_total;
  double train_map = 0.0;  // seen classes, alpha = 0.5
  int skipped_steps = 0;
};

/// Rejects any annotation of an unseen class (zero-shot contract).
void check_zsl_hygiene(const std::vector<Video>& train, const EmbeddingTable& table);

std::pair<ModelParams, TrainReport> train(const std::vector<Video>& videos, const EmbeddingTable& table,
                                          const SuperClassPartition& partition, const TrainConfig& cfg,
                                          bool compute_train_map = true);

void write_trace_csv(const TrainReport& report, std::ostream& out);

struct Variant {
  bool improved_tpn;
  bool sc_loss;
  std::string name() const;
};

std::vector<Variant> all_variants();

struct AblationRow {
  Variant variant;
  std::vector<double> mean_map;             // per alpha, over seeds
  std::vector<std::vector<double>> per_seed; // seed -> alpha -> mAP
};

/// Trains every variant on identical data and seeds and evaluates unseen-class
/// mAP on the test videos.
std::vector<AblationRow> ablation_run(const std::vector<Video>& train_videos, const std::vector<Video>& test_videos,
                                      const EmbeddingTable& table, const SuperClassPartition& partition,
                                      const TrainConfig& cfg, const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds, const std::vector<double>& alphas);

void write_ablation_table(const std::vector<AblationRow>& rows, const std::vector<double>& alphas,
                          std::ostream& out);

std::set<int> unseen_class_ids(const EmbeddingTable& table);
std::set<int> seen_class_ids(const EmbeddingTable& table);
std::vector<DetectionRecord> ground_truth_records(const std::vector<Video>& videos);

}  // namespace zstad
