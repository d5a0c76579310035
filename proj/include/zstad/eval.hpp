#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zstad/segments.hpp"

namespace zstad {

/// Greedy matching in the given (score-descending) order. A detection is a
/// true positive when its best unmatched ground truth reaches IoU >= alpha.
std::vector<bool> match_detections(const std::vector<Segment>& dets, const std::vector<Segment>& gts,
                                   double alpha);

/// All-point interpolated AP: area under the precision envelope of the
/// ranked precision/recall curve.
double average_precision(const std::vector<bool>& tp_flags, int num_gt);

struct ClassCounts {
  int num_gt = 0;
  int num_det = 0;
  std::vector<int> matched;  // per alpha
};

struct EvalResult {
  std::vector<double> alphas;
  // class_id -> AP per alpha; only classes with at least one ground truth.
  std::map<int, std::vector<double>> ap;
  std::vector<double> map;  // per alpha
  std::map<int, ClassCounts> counts;

  std::optional<double> ap_at(int class_id, std::size_t alpha_index) const;
};

/// Per-class AP across all videos and mAP over classes with ground truth.
/// If `classes` is given, only those class ids enter the result.
EvalResult evaluate(const std::vector<DetectionRecord>& dets, const std::vector<DetectionRecord>& gts,
                    const std::vector<double>& alphas, const std::optional<std::set<int>>& classes = std::nullopt);

EvalResult evaluate_files(const std::string& dets_path, const std::string& gts_path,
                          const std::vector<double>& alphas,
                          const std::optional<std::set<int>>& classes = std::nullopt);

void write_eval_table(const EvalResult& result, std::ostream& out, bool per_class);
void write_eval_csv(const EvalResult& result, std::ostream& out);

}  // namespace zstad
