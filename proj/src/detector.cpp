#include "zstad/detector.hpp"

#include <algorithm>
#include <fstream>

namespace zstad {

void DetectConfig::validate() const {
  for (double t : {proposal_nms, final_nms, score_floor})
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("detection thresholds must lie in [0, 1]");
  if (max_proposals < 1) throw DomainError("max_proposals must be >= 1");
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0, 1]");
}

std::vector<Detection> select_proposals(const TpnOutput& tpn, const AnchorGrid& grid, double length,
                                        double nms_threshold, int max_proposals) {
  std::vector<Detection> cands;
  cands.reserve(grid.anchors.size());
  for (std::size_t a = 0; a < grid.anchors.size(); ++a) {
    Offsets off = tpn.offsets[a];
    off.log_length = std::clamp(off.log_length, -10.0, 10.0);
    auto seg = clip_segment(decode_offsets(grid.anchors[a], off), length);
    if (!seg) continue;
    // class_id carries no meaning here; the anchor index keeps ties deterministic.
    cands.push_back({*seg, 1, tpn.fused[static_cast<Eigen::Index>(a)]});
  }
  auto kept = nms(std::move(cands), nms_threshold);
  if (static_cast<int>(kept.size()) > max_proposals) kept.resize(static_cast<std::size_t>(max_proposals));
  return kept;
}

std::vector<Detection> detect(const FeatureSequence& features, const ModelParams& params,
                              const ModelConfig& model_cfg, const EmbeddingTable& table,
                              const SuperClassPartition& partition, const DetectConfig& cfg,
                              const RegressionHook& hook) {
  cfg.validate();
  if (table.num_classes() != model_cfg.num_classes || table.num_seen() != model_cfg.num_seen ||
      table.dim() != model_cfg.embed_dim)
    throw DomainError("embedding table does not match the model configuration");
  if (partition.num_labels() != table.num_classes())
    throw DomainError("partition does not cover the embedding table");

  const TemporalFeatureMap map = backbone_forward(features, params);
  const TpnOutput tpn = tpn_forward(map, params, model_cfg, table.background(), cfg.lambda);
  const AnchorGrid grid = generate_anchors(features.length(), model_cfg.scales);
  const double length = features.length();
  const auto proposals = select_proposals(tpn, grid, length, cfg.proposal_nms, cfg.max_proposals);

  const int c = table.num_classes();
  std::vector<int> borrow(c);
  for (int j = 0; j < c; ++j) borrow[j] = nearest_seen_class(table, j);

  std::vector<Detection> dets;
  for (const Detection& prop : proposals) {
    const Vec pooled = roi_pool(map, prop.segment, model_cfg.bins);
    const ZsdnOutput z = zsdn_forward(pooled, params, table, cfg.tau);
    Eigen::Index global = 0;
    z.probs.maxCoeff(&global);
    if (global == 0) continue;
    Eigen::Index best = 1;
    z.probs.tail(c).maxCoeff(&best);
    const int label = static_cast<int>(best);  // 0-based activity label
    const int source = borrow[label];
    if (hook) hook({label + 1, source});
    Offsets off = z.reg_column(table.seen_rank(source));
    off.log_length = std::clamp(off.log_length, -10.0, 10.0);
    auto seg = clip_segment(decode_offsets(prop.segment, off), length);
    if (!seg) continue;
    double score = z.probs[label + 1];
    if (cfg.multiply_tpn_score) score *= prop.score;
    if (score < cfg.score_floor) continue;
    dets.push_back({*seg, label + 1, score});
  }

  std::vector<Detection> out;
  std::vector<int> classes;
  for (const auto& d : dets) classes.push_back(d.class_id);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (int cls : classes) {
    std::vector<Detection> group;
    for (const auto& d : dets)
      if (d.class_id == cls) group.push_back(d);
    for (auto& d : nms(std::move(group), cfg.final_nms)) out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), detection_before);
  return out;
}

std::vector<DetectionRecord> detect_videos(const std::vector<Video>& videos, const ModelParams& params,
                                           const ModelConfig& model_cfg, const EmbeddingTable& table,
                                           const SuperClassPartition& partition, const DetectConfig& cfg) {
  std::vector<DetectionRecord> out;
  for (const Video& v : videos)
    for (const Detection& d : detect(v.features, params, model_cfg, table, partition, cfg))
      out.push_back({v.id, d});
  return out;
}

void write_detection_file(const std::vector<DetectionRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# video_id class_id score start end\n";
  write_detections(records, out, false);
}

void detect_file(const std::string& videos_path, const std::string& checkpoint_path,
                 const std::string& embeddings_path, const std::string& partition_path, const DetectConfig& cfg,
                 const std::string& out_path) {
  const auto videos = read_videos(videos_path);
  const auto [model_cfg, params] = load_checkpoint(checkpoint_path);
  const EmbeddingTable table = load_embeddings(embeddings_path);
  const SuperClassPartition partition = load_partition(partition_path);
  write_detection_file(detect_videos(videos, params, model_cfg, table, partition, cfg), out_path);
}

}  // namespace zstad
