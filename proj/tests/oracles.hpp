#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance run. None of these call into the code they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "helpers.hpp"
#include "zstad/segments.hpp"

namespace zstad::test {

inline double choose2(double n) { return n * (n - 1.0) / 2.0; }

// Hubert-Arabie adjusted Rand index from the contingency table.
inline double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, int> nij;
  std::map<int, int> ai, bj;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++nij[{a[i], b[i]}];
    ++ai[a[i]];
    ++bj[b[i]];
  }
  double index = 0, sa = 0, sb = 0;
  for (auto& [k, n] : nij) index += choose2(n);
  for (auto& [k, n] : ai) sa += choose2(n);
  for (auto& [k, n] : bj) sb += choose2(n);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// Blobs around mutually orthogonal centres; centre separation is sqrt2 and the
// spread is at most sqrt2 / (5 * sqrt d) per label.
inline std::pair<EmbeddingTable, std::vector<int>> planted(int blobs, int per_blob, std::uint64_t seed) {
  Rng rng(seed);
  const int d = 8;
  const double spread = std::sqrt(2.0) / 5.0 / std::sqrt(static_cast<double>(d)) / 2.0;
  std::vector<Vec> vs;
  std::vector<int> truth;
  for (int q = 0; q < blobs; ++q)
    for (int i = 0; i < per_blob; ++i) {
      Vec v = Vec::Zero(d);
      v[q] = 1.0;
      for (int k = 0; k < d; ++k) v[k] += rng.uniform(-spread, spread);
      vs.push_back(v);
      truth.push_back(q);
    }
  return {make_table(vs, std::vector<bool>(vs.size(), true)), truth};
}

inline Mat block_affinity(const std::vector<int>& sizes) {
  int n = 0;
  for (int s : sizes) n += s;
  Mat a = Mat::Zero(n, n);
  int off = 0;
  for (int s : sizes) {
    a.block(off, off, s, s).setOnes();
    off += s;
  }
  a.diagonal().setZero();
  return a;
}

inline bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.segment.start != b.segment.start) return a.segment.start < b.segment.start;
  return a.class_id < b.class_id;
}

// Enumerates every subset of the ranked detections and keeps the unique one
// in which each detection is present exactly when no present detection ranked
// above it overlaps it beyond the threshold. `found` receives the number of
// such subsets, which must be one.
inline std::vector<Detection> exhaustive_nms(std::vector<Detection> dets, double threshold, int* found) {
  std::stable_sort(dets.begin(), dets.end(), ranks_before);
  const std::size_t n = dets.size();
  std::vector<std::vector<bool>> conflict(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) conflict[i][j] = i != j && iou(dets[i].segment, dets[j].segment) > threshold;

  auto consistent = [&](std::uint64_t mask) {
    for (std::size_t i = 0; i < n; ++i) {
      bool suppressed = false;
      for (std::size_t j = 0; j < i; ++j)
        if ((mask >> j & 1) && conflict[j][i]) suppressed = true;
      if (((mask >> i & 1) != 0) == suppressed) return false;
    }
    return true;
  };
  std::vector<Detection> out;
  *found = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    if (!consistent(mask)) continue;
    ++*found;
    out.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) out.push_back(dets[i]);
  }
  return out;
}

inline std::vector<Detection> random_detections(Rng& rng, int n) {
  std::vector<Detection> d;
  for (int i = 0; i < n; ++i) {
    const double s = std::floor(rng.uniform(0, 40));
    // Coarse scores and starts make ties common.
    d.push_back({Segment(s, s + 1 + std::floor(rng.uniform(0, 20))), static_cast<int>(rng.uniform_int(1, 3)),
                 std::floor(rng.uniform(0, 5)) / 4.0});
  }
  return d;
}

// For every recall level reached by a true positive, the best precision over
// all cut-offs with at least that recall, weighted by the recall step.
inline double brute_force_ap(const std::vector<bool>& flags, int num_gt) {
  const std::size_t n = flags.size();
  std::vector<double> prec(n), rec(n);
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += flags[k] ? 1 : 0;
    prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    rec[k] = static_cast<double>(tp) / num_gt;
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!flags[k]) continue;
    double best = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (rec[j] >= rec[k]) best = std::max(best, prec[j]);
    ap += best / num_gt;
  }
  return ap;
}

inline std::vector<DetectionRecord> random_records(Rng& rng, int n, bool gt, int videos, int classes) {
  std::vector<DetectionRecord> out;
  for (int i = 0; i < n; ++i) {
    const double s = rng.uniform(0, 100);
    DetectionRecord r;
    r.video_id = "v" + std::to_string(rng.uniform_int(0, videos - 1));
    r.det = {Segment(s, s + rng.uniform(2, 40)), static_cast<int>(rng.uniform_int(1, classes)), gt ? 0.0 : rng.uniform()};
    out.push_back(r);
  }
  return out;
}

// Background objective for the labels +-e1, +-e2 with margin 0.1, minimized by
// a grid search over the unit circle at 1e-4 rad.
inline double four_direction_optimum() {
  double best = 1e9;
  for (double a = 0.0; a < 2.0 * std::numbers::pi; a += 1e-4) {
    const double x = std::abs(std::cos(a)), y = std::abs(std::sin(a));
    const double o = std::pow(std::max(0.0, x - 0.1), 2) + std::pow(std::max(0.0, y - 0.1), 2);
    best = std::min(best, o);
  }
  return best;
}

// Largest cosine between `v` and any activity label.
inline double max_cosine(const EmbeddingTable& t, const Vec& v) {
  double m = -1.0;
  for (int j = 0; j < t.num_classes(); ++j) m = std::max(m, cosine_similarity(v, t.vector(j)));
  return m;
}

inline Vec random_distribution(Rng& rng, int n) {
  Vec p(n);
  for (int i = 0; i < n; ++i) p[i] = rng.uniform(0.01, 1.0);
  return p / p.sum();
}

}  // namespace zstad::test
