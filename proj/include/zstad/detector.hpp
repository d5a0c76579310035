#pragma once

#include <functional>
#include <string>
#include <vector>

#include "zstad/model.hpp"
#include "zstad/superclass.hpp"
#include "zstad/synthdata.hpp"

namespace zstad {

struct DetectConfig {
  double proposal_nms = 0.7;
  int max_proposals = 16;
  double final_nms = 0.4;
  double score_floor = 0.05;
  double tau = 0.1;
  double lambda = 0.6;
  bool multiply_tpn_score = false;

  void validate() const;
};

// Observes the regression column chosen for each classified proposal.
struct RegressionChoice {
  int class_id;     // 1..c
  int source_label; // 0-based label whose column was used
};
using RegressionHook = std::function<void(const RegressionChoice&)>;

/// Scored proposals after NMS and top-K, clipped to [0, L].
std::vector<Detection> select_proposals(const TpnOutput& tpn, const AnchorGrid& grid, double length,
                                        double nms_threshold, int max_proposals);

std::vector<Detection> detect(const FeatureSequence& features, const ModelParams& params,
                              const ModelConfig& model_cfg, const EmbeddingTable& table,
                              const SuperClassPartition& partition, const DetectConfig& cfg,
                              const RegressionHook& hook = {});

std::vector<DetectionRecord> detect_videos(const std::vector<Video>& videos, const ModelParams& params,
                                           const ModelConfig& model_cfg, const EmbeddingTable& table,
                                           const SuperClassPartition& partition, const DetectConfig& cfg);

void write_detection_file(const std::vector<DetectionRecord>& records, const std::string& path);

/// Reads videos, a checkpoint, embeddings and a partition and writes detections.
void detect_file(const std::string& videos_path, const std::string& checkpoint_path,
                 const std::string& embeddings_path, const std::string& partition_path, const DetectConfig& cfg,
                 const std::string& out_path);

}  // namespace zstad
