#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "zstad/common.hpp"
#include "zstad/segments.hpp"

using namespace zstad;
using namespace zstad::test;

TEST_CASE("iou") {
  CHECK(iou({0, 10}, {0, 10}) == 1.0);
  CHECK(iou({0, 10}, {20, 30}) == 0.0);
  CHECK(iou({0, 10}, {5, 15}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(0, 50), b = rng.uniform(0, 50);
    Segment x(a, a + rng.uniform(0.1, 30)), y(b, b + rng.uniform(0.1, 30));
    const double v = iou(x, y);
    CHECK(v == iou(y, x));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(Segment(3, 3), DomainError);
}

TEST_CASE("anchor grid") {
  auto g = generate_anchors(64, {2, 4});
  CHECK(g.anchors.size() == 16);
  CHECK(g.num_locations == 8);
  for (int t = 0; t < 8; ++t) {
    CHECK(g.anchors[t * 2].center() == 4.0 + 8.0 * t);
    CHECK(g.anchors[t * 2 + 1].center() == 4.0 + 8.0 * t);
    CHECK(g.anchors[t * 2].length() == 16.0);
    CHECK(g.anchors[t * 2 + 1].length() == 32.0);
  }
  CHECK(generate_anchors(512, {2, 4, 5, 6, 8, 9, 10, 12, 14, 16}).anchors.size() == 640);
  CHECK(generate_anchors(8, {1}).anchors.size() == 1);
  CHECK_THROWS_AS(generate_anchors(60, {2}), DomainError);

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int length = 8 * static_cast<int>(rng.uniform_int(1, 128));
    std::vector<int> scales;
    for (int s = 1; s <= 32; ++s)
      if (rng.uniform() < 0.3) scales.push_back(s);
    if (scales.empty()) scales.push_back(3);
    const auto grid = generate_anchors(length, scales);
    CHECK(grid.anchors.size() == scales.size() * static_cast<std::size_t>(length / 8));
  }
}

TEST_CASE("offset encoding") {
  const Segment a(28, 36), g(26, 42);
  const auto o = encode_offsets(a, g);
  CHECK(o.center == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(o.log_length == doctest::Approx(0.69315).epsilon(1e-5));
  const auto z = encode_offsets(a, a);
  CHECK(z.center == 0.0);
  CHECK(z.log_length == 0.0);

  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double s1 = rng.uniform(-100, 100), s2 = rng.uniform(-100, 100);
    const Segment x(s1, s1 + rng.uniform(0.5, 80)), y(s2, s2 + rng.uniform(0.5, 80));
    const Segment back = decode_offsets(x, encode_offsets(x, y));
    CHECK(std::abs(back.start - y.start) <= 1e-9);
    CHECK(std::abs(back.end - y.end) <= 1e-9);
  }
}

TEST_CASE("clip segment") {
  CHECK(clip_segment({-5, 10}, 64)->start == 0.0);
  CHECK(clip_segment({60, 70}, 64)->end == 64.0);
  CHECK_FALSE(clip_segment({70, 80}, 64).has_value());
}

TEST_CASE("anchor assignment") {
  auto g = generate_anchors(64, {2, 4});
  auto none = assign_anchors(g, {}, 0.7, 0.3);
  for (auto l : none.labels) CHECK(l == AnchorLabel::kNegative);

  auto exact = assign_anchors(g, {{g.anchors[5], 1}}, 0.7, 0.3);
  CHECK(exact.labels[5] == AnchorLabel::kPositive);
  CHECK(exact.targets[5].center == 0.0);
  CHECK(exact.targets[5].log_length == 0.0);

  AnchorGrid two;
  two.num_locations = 1;
  two.scales = {1, 2};
  two.anchors = {Segment(0, 10), Segment(0, 20)};
  auto m = assign_anchors(two, {{Segment(0, 8), 1}}, 0.7, 0.3);
  CHECK(m.max_iou[0] == doctest::Approx(0.8));
  CHECK(m.max_iou[1] == doctest::Approx(0.4));
  CHECK(m.labels[0] == AnchorLabel::kPositive);
  CHECK(m.labels[1] == AnchorLabel::kIgnore);

  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GroundTruth> gts;
    const int n = static_cast<int>(rng.uniform_int(1, 3));
    for (int i = 0; i < n; ++i) {
      const double s = rng.uniform(0, 200);
      gts.push_back({Segment(s, s + rng.uniform(8, 60)), 1});
    }
    auto grid = generate_anchors(256, {2, 4, 8, 16});
    auto as = assign_anchors(grid, gts, 0.7, 0.3);
    for (std::size_t a = 0; a < grid.anchors.size(); ++a) {
      if (as.labels[a] == AnchorLabel::kNegative) CHECK(as.max_iou[a] < 0.3);
      if (as.labels[a] == AnchorLabel::kPositive && as.max_iou[a] < 0.7) {
        // Only a best anchor for its ground truth may be positive below hi.
        double best = 0.0;
        for (const auto& b : grid.anchors) best = std::max(best, iou(b, gts[as.gt_index[a]].segment));
        CHECK(iou(grid.anchors[a], gts[as.gt_index[a]].segment) == best);
      }
    }
  }
}


TEST_CASE("nms basics") {
  std::vector<Detection> one{{Segment(0, 10), 1, 0.5}};
  CHECK(nms(one, 0.5) == one);
  std::vector<Detection> dup{{Segment(0, 10), 1, 0.8}, {Segment(0, 10), 1, 0.9}};
  auto kept = nms(dup, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms matches the exhaustive reference") {
  Rng rng(2024);
  for (int instance = 0; instance < 1000; ++instance) {
    const int n = static_cast<int>(rng.uniform_int(0, 20));
    const double t = rng.uniform(0.1, 0.9);
    auto dets = random_detections(rng, n);
    int found = 0;
    const auto reference = exhaustive_nms(dets, t, &found);
    REQUIRE(found == 1);
    CHECK(nms(dets, t) == reference);
  }
}

TEST_CASE("nms properties up to twenty detections") {
  Rng rng(77);
  for (int instance = 0; instance < 300; ++instance) {
    const double t = rng.uniform(0.1, 0.9);
    auto dets = random_detections(rng, static_cast<int>(rng.uniform_int(0, 20)));
    auto once = nms(dets, t);
    CHECK(nms(once, t) == once);
    for (std::size_t i = 0; i < once.size(); ++i)
      for (std::size_t j = i + 1; j < once.size(); ++j) CHECK(iou(once[i].segment, once[j].segment) <= t);
  }
}

TEST_CASE("detection records") {
  std::istringstream in("# comment\nv1 3 0.5 1.5 9\n\nv2 1 0.25 0 4\n");
  auto recs = parse_detections(in, "d.txt", false);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].video_id == "v1");
  CHECK(recs[0].det.class_id == 3);
  std::stringstream ss;
  write_detections(recs, ss, false);
  auto back = parse_detections(ss, "mem", false);
  CHECK(back.size() == 2);
  CHECK(back[1].det == recs[1].det);
  std::istringstream bad("v1 0 0.5 1 2\n");
  CHECK_THROWS_AS(parse_detections(bad, "bad.txt", false), ParseError);
  std::istringstream gt("v1 2 3 9\n");
  CHECK(parse_detections(gt, "gt.txt", true)[0].det.segment.end == 9.0);
}
