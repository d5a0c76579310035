#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "zstad/linalg.hpp"
#include "zstad/superclass.hpp"

using namespace zstad;
using namespace zstad::test;


TEST_CASE("adjusted rand oracle sanity") {
  CHECK(adjusted_rand({0, 0, 1, 1}, {5, 5, 2, 2}) == doctest::Approx(1.0));
  CHECK(adjusted_rand({0, 0, 1, 1}, {0, 1, 0, 1}) < 0.0);
}

TEST_CASE("jacobi eigen-decomposition") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 10));
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.normal();
    auto eig = jacobi_eigen(m);
    for (int i = 1; i < n; ++i) CHECK(eig.values[i - 1] >= eig.values[i]);
    Mat rebuilt = eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
    CHECK((rebuilt - m).norm() < 1e-9);
    CHECK((eig.vectors.transpose() * eig.vectors - Mat::Identity(n, n)).norm() < 1e-9);
  }
}

TEST_CASE("affinity matrix") {
  auto t = test::make_table({vec({1, 0, 0}), vec({1, 0, 0}), vec({0, 1, 0}), vec({0, 0, 1})}, {true, true, true, true});
  Mat a = affinity_matrix(t, 1);
  CHECK(a(0, 1) == doctest::Approx(1.0));
  CHECK(a(0, 0) == 0.0);

  const double s = std::sqrt(3.0) / 2.0;
  auto tri = test::make_table({vec({1, 0, 0}), vec({-0.5, s, 0}), vec({-0.5, -s, 0})}, {true, true, true});
  Mat b = affinity_matrix(tri, 1);
  CHECK(b(0, 1) == doctest::Approx(b(0, 2)));
  CHECK(b(1, 2) == doctest::Approx(b(0, 1)));

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec> vs;
    const int c = 3 + static_cast<int>(rng.uniform_int(0, 9));
    for (int j = 0; j < c; ++j) {
      Vec v(5);
      for (int i = 0; i < 5; ++i) v[i] = rng.normal();
      vs.push_back(v);
    }
    Mat m = affinity_matrix(test::make_table(vs, std::vector<bool>(c, true)), 2);
    CHECK((m - m.transpose()).norm() == 0.0);
  }
}

TEST_CASE("spectral partition edge counts") {
  auto [t, truth] = planted(3, 3, 1);
  Mat a = affinity_matrix(t, 2);
  auto each = spectral_partition(a, 9, 0);
  std::set<int> distinct(each.begin(), each.end());
  CHECK(distinct.size() == 9);
  auto one = spectral_partition(a, 1, 0);
  for (int id : one) CHECK(id == 1);
}

TEST_CASE("planted super-classes are recovered") {
  for (int blobs : {2, 3}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto [t, truth] = planted(blobs, 4, 100 + seed);
      PartitionOptions opts;
      opts.c_plus = blobs;
      opts.seed = seed;
      auto p = build_partition(t, opts);
      CHECK(adjusted_rand(p.assignments(), truth) == 1.0);
    }
  }
}

TEST_CASE("eigengap estimate") {
  CHECK(eigengap_estimate(block_affinity({3, 4, 3}), 5) == 3);
  CHECK(eigengap_estimate(block_affinity({2, 2}), 2) == 2);
  Mat flat = Mat::Ones(6, 6);
  flat.diagonal().setZero();
  CHECK(eigengap_estimate(flat, 3) == 2);
  CHECK(eigengap_estimate(block_affinity({6}), 3) == 2);
  CHECK(eigengap_estimate(block_affinity({1, 1}), 1) == 2);
}

TEST_CASE("build partition") {
  auto pairs = test::make_table({vec({1, 0.05}), vec({1, -0.05}), vec({-0.05, 1}), vec({0.05, 1})},
                                {true, true, true, true});
  PartitionOptions opts;
  opts.c_plus = 2;
  opts.k_neighbors = 1;
  auto p = build_partition(pairs, opts);
  CHECK(p.superclass_of(0) == p.superclass_of(1));
  CHECK(p.superclass_of(2) == p.superclass_of(3));
  CHECK(p.superclass_of(0) != p.superclass_of(2));
  for (int j = 0; j < 4; ++j) CHECK(p.superclass_of(j) != SuperClassPartition::kBackground);

  auto single = build_partition(test::make_table({vec({1, 0})}, {true}));
  CHECK(single.num_superclasses() == 1);
  CHECK(single.superclass_of(0) == 1);

  auto [t, truth] = planted(3, 4, 9);
  CHECK(build_partition(t) == build_partition(t));
}

TEST_CASE("partition is permutation equivariant") {
  auto [t, truth] = planted(3, 4, 21);
  PartitionOptions opts;
  opts.c_plus = 3;
  auto base = build_partition(t, opts);
  std::vector<int> perm(t.num_classes());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(5);
  shuffle(perm, rng);
  std::vector<Vec> vs;
  for (int j : perm) vs.push_back(t.vector(j));
  auto moved = build_partition(test::make_table(vs, std::vector<bool>(vs.size(), true)), opts);
  std::vector<int> expected;
  for (int j : perm) expected.push_back(base.superclass_of(j));
  CHECK(adjusted_rand(moved.assignments(), expected) == 1.0);
}

TEST_CASE("partition invariants and file format") {
  SuperClassPartition p({1, 2, 1, 3}, 3);
  std::vector<int> seen_labels;
  for (int q = 1; q <= 3; ++q)
    for (int j : p.members(q)) seen_labels.push_back(j);
  std::sort(seen_labels.begin(), seen_labels.end());
  CHECK(seen_labels == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(SuperClassPartition({1, 0}, 1), DomainError);
  CHECK_THROWS_AS(SuperClassPartition({1, 3}, 2), DomainError);

  std::stringstream ss;
  write_partition(p, ss);
  CHECK(parse_partition(ss, "mem") == p);
  std::istringstream bad("2 1\n1 1\n2 x\n");
  try {
    parse_partition(bad, "bad.txt");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}
