#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zstad/embedding.hpp"

namespace zstad {

/// Disjoint super-classes over activity labels. Ids 1..c+ hold activities;
/// id 0 is reserved for the background singleton.
class SuperClassPartition {
 public:
  static constexpr int kBackground = 0;

  // `assignments[j]` is the super-class id of activity label j (0-based).
  SuperClassPartition(std::vector<int> assignments, int num_superclasses);

  int num_labels() const { return static_cast<int>(assignments_.size()); }
  int num_superclasses() const { return num_superclasses_; }
  const std::vector<int>& assignments() const { return assignments_; }
  // g(.) on activity label index j.
  int superclass_of(int label_index) const;
  // Label indices (0-based) of activities in super-class `id` (1..c+).
  const std::vector<int>& members(int id) const;

  bool operator==(const SuperClassPartition&) const = default;

 private:
  std::vector<int> assignments_;
  int num_superclasses_;
  std::vector<std::vector<int>> members_;
};

/// Local-scaling affinity: A_ij = exp(-|l_i - l_j|^2 / (sigma_i sigma_j)), with
/// sigma_i the distance to the k-th nearest neighbour. Diagonal is zero.
Mat affinity_matrix(const EmbeddingTable& table, int k_neighbors);

/// Spectral embedding from the top `c_plus` eigenvectors of D^-1/2 A D^-1/2,
/// rows normalized, then k-means with farthest-point seeding and 10 restarts.
/// Returns super-class ids in 1..c_plus, numbered by first appearance.
std::vector<int> spectral_partition(const Mat& affinity, int c_plus, std::uint64_t seed);

/// Largest eigengap of the normalized affinity over q in [2, max_c_plus].
int eigengap_estimate(const Mat& affinity, int max_c_plus);

struct PartitionOptions {
  std::optional<int> c_plus;
  int k_neighbors = 7;
  std::uint64_t seed = 0;
};

SuperClassPartition build_partition(const EmbeddingTable& table, const PartitionOptions& opts = {});

SuperClassPartition load_partition(const std::string& path);
void save_partition(const SuperClassPartition& partition, const std::string& path);
SuperClassPartition parse_partition(std::istream& in, const std::string& source);
void write_partition(const SuperClassPartition& partition, std::ostream& out);

}  // namespace zstad
