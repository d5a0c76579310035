#include "zstad/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace zstad {

std::vector<bool> match_detections(const std::vector<Segment>& dets, const std::vector<Segment>& gts,
                                   double alpha) {
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> tp(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double v = iou(dets[i], gts[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best >= alpha) {
      used[best_g] = true;
      tp[i] = true;
    }
  }
  return tp;
}

double average_precision(const std::vector<bool>& tp_flags, int num_gt) {
  if (num_gt < 1) throw DomainError("average_precision: class has no ground truth");
  const std::size_t n = tp_flags.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_flags[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / num_gt;
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

std::optional<double> EvalResult::ap_at(int class_id, std::size_t alpha_index) const {
  auto it = ap.find(class_id);
  if (it == ap.end()) return std::nullopt;
  return it->second.at(alpha_index);
}

EvalResult evaluate(const std::vector<DetectionRecord>& dets, const std::vector<DetectionRecord>& gts,
                    const std::vector<double>& alphas, const std::optional<std::set<int>>& classes) {
  EvalResult result;
  result.alphas = alphas;
  auto wanted = [&](int cls) { return !classes || classes->count(cls) > 0; };

  // class -> video -> gt segments
  std::map<int, std::map<std::string, std::vector<Segment>>> gt_index;
  for (const auto& g : gts) {
    if (!wanted(g.det.class_id)) continue;
    gt_index[g.det.class_id][g.video_id].push_back(g.det.segment);
    ++result.counts[g.det.class_id].num_gt;
  }

  std::map<int, std::vector<std::size_t>> det_index;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const int cls = dets[i].det.class_id;
    if (!wanted(cls)) continue;
    det_index[cls].push_back(i);
    ++result.counts[cls].num_det;
  }
  for (const auto& [cls, idx] : det_index)
    if (!gt_index.count(cls))
      log_warning("class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                  " detections but no ground truth; excluded from mAP");

  for (auto& [cls, cnt] : result.counts) cnt.matched.assign(alphas.size(), 0);

  for (const auto& [cls, videos] : gt_index) {
    std::vector<std::size_t> order = det_index[cls];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const Detection& da = dets[a].det;
      const Detection& db = dets[b].det;
      if (da.score != db.score) return da.score > db.score;
      return da.segment.start < db.segment.start;
    });
    int num_gt = 0;
    for (const auto& [vid, segs] : videos) num_gt += static_cast<int>(segs.size());

    std::vector<double> aps;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
      std::map<std::string, std::vector<bool>> used;
      std::vector<bool> flags;
      flags.reserve(order.size());
      for (std::size_t di : order) {
        const auto vit = videos.find(dets[di].video_id);
        if (vit == videos.end()) {
          flags.push_back(false);
          continue;
        }
        auto& u = used[dets[di].video_id];
        u.resize(vit->second.size(), false);
        double best = -1.0;
        std::size_t best_g = u.size();
        for (std::size_t g = 0; g < u.size(); ++g) {
          if (u[g]) continue;
          const double v = iou(dets[di].det.segment, vit->second[g]);
          if (v > best) {
            best = v;
            best_g = g;
          }
        }
        const bool hit = best_g < u.size() && best >= alphas[ai];
        if (hit) u[best_g] = true;
        flags.push_back(hit);
      }
      result.counts[cls].matched[ai] = static_cast<int>(std::count(flags.begin(), flags.end(), true));
      aps.push_back(average_precision(flags, num_gt));
    }
    result.ap[cls] = std::move(aps);
  }

  result.map.assign(alphas.size(), 0.0);
  if (!result.ap.empty()) {
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
      double s = 0.0;
      for (const auto& [cls, aps] : result.ap) s += aps[ai];
      result.map[ai] = s / static_cast<double>(result.ap.size());
    }
  }
  return result;
}

EvalResult evaluate_files(const std::string& dets_path, const std::string& gts_path,
                          const std::vector<double>& alphas, const std::optional<std::set<int>>& classes) {
  return evaluate(load_detections(dets_path, false), load_detections(gts_path, true), alphas, classes);
}

void write_eval_table(const EvalResult& result, std::ostream& out, bool per_class) {
  char buf[64];
  out << "mAP (%) at IoU threshold alpha\n";
  out << "            ";
  for (double a : result.alphas) {
    std::snprintf(buf, sizeof(buf), " a=%-5.2f", a);
    out << buf;
  }
  out << '\n' << "mAP         ";
  for (double m : result.map) {
    std::snprintf(buf, sizeof(buf), " %7.2f", 100.0 * m);
    out << buf;
  }
  out << '\n';
  if (!per_class) return;
  for (const auto& [cls, aps] : result.ap) {
    std::snprintf(buf, sizeof(buf), "class %-6d", cls);
    out << buf;
    for (double a : aps) {
      std::snprintf(buf, sizeof(buf), " %7.2f", 100.0 * a);
      out << buf;
    }
    const auto& cnt = result.counts.at(cls);
    out << "   (gt " << cnt.num_gt << ", det " << cnt.num_det << ")\n";
  }
}

void write_eval_csv(const EvalResult& result, std::ostream& out) {
  out << "class,alpha,ap,num_gt,num_det,matched\n";
  for (const auto& [cls, aps] : result.ap) {
    const auto& cnt = result.counts.at(cls);
    for (std::size_t i = 0; i < aps.size(); ++i)
      out << cls << ',' << format_double(result.alphas[i]) << ',' << format_double(aps[i]) << ',' << cnt.num_gt
          << ',' << cnt.num_det << ',' << cnt.matched[i] << '\n';
  }
  for (std::size_t i = 0; i < result.map.size(); ++i)
    out << "mAP," << format_double(result.alphas[i]) << ',' << format_double(result.map[i]) << ",,,\n";
}

}  // namespace zstad
