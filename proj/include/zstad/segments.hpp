#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "zstad/common.hpp"

namespace zstad {

/// Half-open temporal interval in frame units.
struct Segment {
  double start = 0.0;
  double end = 1.0;

  Segment() = default;
  Segment(double s, double e);

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool operator==(const Segment&) const = default;
};

constexpr int kFeatureStride = 8;

struct AnchorGrid {
  int num_locations = 0;
  std::vector<int> scales;      // feature-map units
  std::vector<Segment> anchors;  // index = location * k + scale_index

  int num_scales() const { return static_cast<int>(scales.size()); }
};

struct Offsets {
  double center = 0.0;
  double log_length = 0.0;
};

enum class AnchorLabel { kNegative, kIgnore, kPositive };

struct AnchorAssignment {
  std::vector<AnchorLabel> labels;
  std::vector<int> gt_index;      // matched ground truth for positives, -1 otherwise
  std::vector<double> max_iou;
  std::vector<Offsets> targets;   // meaningful for positives only
};

struct GroundTruth {
  Segment segment;
  int class_id = 1;  // 1..c
};

struct Detection {
  Segment segment;
  int class_id = 1;  // never 0
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

double iou(const Segment& a, const Segment& b);

/// k * L/8 anchors centred on the L/8 feature locations. Anchors are not clipped.
AnchorGrid generate_anchors(int length, const std::vector<int>& scales);

Offsets encode_offsets(const Segment& anchor, const Segment& gt);
Segment decode_offsets(const Segment& anchor, const Offsets& offsets);
/// Clips to [0, length]; nullopt when nothing of positive length remains.
std::optional<Segment> clip_segment(const Segment& s, double length);

AnchorAssignment assign_anchors(const AnchorGrid& grid, const std::vector<GroundTruth>& gts,
                                double hi, double lo);

/// Orders by descending score, then earlier start, then lower class id.
bool detection_before(const Detection& a, const Detection& b);

/// Greedy NMS: keeps the best remaining detection and drops every other one
/// whose IoU with it exceeds `threshold`. Output follows detection_before.
std::vector<Detection> nms(std::vector<Detection> detections, double threshold);

// `video_id class_id score start end`; ground truth may omit the score.
struct DetectionRecord {
  std::string video_id;
  Detection det;
};

std::vector<DetectionRecord> parse_detections(std::istream& in, const std::string& source,
                                              bool ground_truth);
std::vector<DetectionRecord> load_detections(const std::string& path, bool ground_truth);
void write_detections(const std::vector<DetectionRecord>& records, std::ostream& out, bool ground_truth);

}  // namespace zstad
