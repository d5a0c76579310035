#include "zstad/segments.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace zstad {

Segment::Segment(double s, double e) : start(s), end(e) {
  if (!std::isfinite(s) || !std::isfinite(e) || !(s < e))
    throw DomainError("invalid segment [" + format_double(s) + ", " + format_double(e) + "]");
}

double iou(const Segment& a, const Segment& b) {
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return std::min(1.0, inter / uni);
}

AnchorGrid generate_anchors(int length, const std::vector<int>& scales) {
  if (length < kFeatureStride || length % kFeatureStride != 0)
    throw DomainError("input length " + std::to_string(length) +
                      " is not a positive multiple of 8; pad the sequence");
  if (scales.empty()) throw DomainError("anchor scales must be non-empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] <= 0) throw DomainError("anchor scales must be positive");
    if (i > 0 && scales[i] <= scales[i - 1]) throw DomainError("anchor scales must be strictly increasing");
  }
  AnchorGrid grid;
  grid.num_locations = length / kFeatureStride;
  grid.scales = scales;
  grid.anchors.reserve(static_cast<std::size_t>(grid.num_locations) * scales.size());
  for (int t = 0; t < grid.num_locations; ++t) {
    const double center = (t + 0.5) * kFeatureStride;
    for (int s : scales) {
      const double half = 0.5 * s * kFeatureStride;
      grid.anchors.emplace_back(center - half, center + half);
    }
  }
  return grid;
}

Offsets encode_offsets(const Segment& anchor, const Segment& gt) {
  return {(gt.center() - anchor.center()) / anchor.length(), std::log(gt.length() / anchor.length())};
}

Segment decode_offsets(const Segment& anchor, const Offsets& offsets) {
  const double center = anchor.center() + offsets.center * anchor.length();
  const double len = anchor.length() * std::exp(offsets.log_length);
  return Segment(center - 0.5 * len, center + 0.5 * len);
}

std::optional<Segment> clip_segment(const Segment& s, double length) {
  const double a = std::clamp(s.start, 0.0, length);
  const double b = std::clamp(s.end, 0.0, length);
  if (!(b > a)) return std::nullopt;
  return Segment(a, b);
}

AnchorAssignment assign_anchors(const AnchorGrid& grid, const std::vector<GroundTruth>& gts,
                                double hi, double lo) {
  if (!(hi > lo)) throw DomainError("assignment requires hi > lo");
  const std::size_t n = grid.anchors.size();
  AnchorAssignment out;
  out.labels.assign(n, AnchorLabel::kNegative);
  out.gt_index.assign(n, -1);
  out.max_iou.assign(n, 0.0);
  out.targets.assign(n, Offsets{});
  if (gts.empty()) return out;

  std::vector<double> best_for_gt(gts.size(), -1.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(grid.anchors[a], gts[g].segment);
      if (out.gt_index[a] < 0 || v > out.max_iou[a]) {
        out.max_iou[a] = v;
        out.gt_index[a] = static_cast<int>(g);
      }
      best_for_gt[g] = std::max(best_for_gt[g], v);
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    if (out.max_iou[a] >= hi) {
      out.labels[a] = AnchorLabel::kPositive;
    } else if (out.max_iou[a] < lo) {
      out.labels[a] = AnchorLabel::kNegative;
    } else {
      out.labels[a] = AnchorLabel::kIgnore;
    }
  }
  // Every ground truth keeps at least its best-matching anchor(s).
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (best_for_gt[g] <= 0.0) continue;
    for (std::size_t a = 0; a < n; ++a) {
      if (iou(grid.anchors[a], gts[g].segment) == best_for_gt[g]) {
        out.labels[a] = AnchorLabel::kPositive;
        out.gt_index[a] = static_cast<int>(g);
      }
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (out.labels[a] == AnchorLabel::kPositive) {
      out.targets[a] = encode_offsets(grid.anchors[a], gts[out.gt_index[a]].segment);
    } else if (out.labels[a] == AnchorLabel::kNegative) {
      out.gt_index[a] = -1;
    }
  }
  return out;
}

bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.class_id < b.class_id;
}

std::vector<Detection> nms(std::vector<Detection> detections, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("NMS threshold must lie in [0, 1]");
  std::stable_sort(detections.begin(), detections.end(), detection_before);
  std::vector<Detection> kept;
  std::vector<bool> removed(detections.size(), false);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(detections[i]);
    for (std::size_t j = i + 1; j < detections.size(); ++j)
      if (!removed[j] && iou(detections[i].segment, detections[j].segment) > threshold) removed[j] = true;
  }
  return kept;
}

std::vector<DetectionRecord> parse_detections(std::istream& in, const std::string& source,
                                              bool ground_truth) {
  std::vector<DetectionRecord> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::istringstream ss(raw);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    if (toks.empty() || toks.front().front() == '#') continue;
    const bool has_score = toks.size() == 5;
    if (!(toks.size() == 5 || (ground_truth && toks.size() == 4)))
      throw ParseError(source, line_no,
                       ground_truth ? "expected 'video_id class_id [score] start end'"
                                    : "expected 'video_id class_id score start end'");
    DetectionRecord rec;
    rec.video_id = toks[0];
    try {
      std::size_t pos = 0;
      rec.det.class_id = std::stoi(toks[1], &pos);
      if (pos != toks[1].size()) throw std::invalid_argument("class");
      std::size_t k = 2;
      double s = 0.0;
      double e = 0.0;
      rec.det.score = 1.0;
      if (has_score && !parse_double(toks[k++], rec.det.score)) throw std::invalid_argument("score");
      if (!parse_double(toks[k], s) || !parse_double(toks[k + 1], e)) throw std::invalid_argument("bounds");
      rec.det.segment = Segment(s, e);
    } catch (const DomainError& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const std::exception&) {
      throw ParseError(source, line_no, "malformed number");
    }
    if (rec.det.class_id < 1) throw ParseError(source, line_no, "class id must be >= 1");
    if (!std::isfinite(rec.det.score)) throw ParseError(source, line_no, "non-finite score");
    if (ground_truth && has_score) rec.det.score = 1.0;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DetectionRecord> load_detections(const std::string& path, bool ground_truth) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return parse_detections(in, path, ground_truth);
}

void write_detections(const std::vector<DetectionRecord>& records, std::ostream& out, bool ground_truth) {
  for (const auto& r : records) {
    out << r.video_id << ' ' << r.det.class_id << ' ';
    if (!ground_truth) out << format_double(r.det.score) << ' ';
    out << format_double(r.det.segment.start) << ' ' << format_double(r.det.segment.end) << '\n';
  }
}

}  // namespace zstad
