#include "zstad/superclass.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "zstad/linalg.hpp"

namespace zstad {

SuperClassPartition::SuperClassPartition(std::vector<int> assignments, int num_superclasses)
    : assignments_(std::move(assignments)), num_superclasses_(num_superclasses) {
  if (assignments_.empty()) throw DomainError("partition needs at least one label");
  if (num_superclasses_ < 1 || num_superclasses_ > num_labels())
    throw DomainError("number of super-classes must lie in [1, c]");
  members_.assign(static_cast<std::size_t>(num_superclasses_) + 1, {});
  for (int j = 0; j < num_labels(); ++j) {
    const int id = assignments_[j];
    if (id < 1 || id > num_superclasses_)
      throw DomainError("label " + std::to_string(j + 1) + " has super-class id " + std::to_string(id) +
                        " outside [1, " + std::to_string(num_superclasses_) + "]");
    members_[id].push_back(j);
  }
  for (int q = 1; q <= num_superclasses_; ++q)
    if (members_[q].empty()) throw DomainError("super-class " + std::to_string(q) + " is empty");
}

int SuperClassPartition::superclass_of(int label_index) const {
  if (label_index < 0 || label_index >= num_labels()) throw DomainError("label index out of range");
  return assignments_[label_index];
}

const std::vector<int>& SuperClassPartition::members(int id) const {
  if (id < 1 || id > num_superclasses_) throw DomainError("super-class id out of range");
  return members_[id];
}

Mat affinity_matrix(const EmbeddingTable& table, int k_neighbors) {
  const int c = table.num_classes();
  if (c < 2) throw DomainError("affinity_matrix needs c >= 2");
  if (k_neighbors < 1 || k_neighbors >= c) throw DomainError("k_neighbors must lie in [1, c)");

  Mat dist2(c, c);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) dist2(i, j) = (table.vector(i) - table.vector(j)).squaredNorm();

  Vec sigma(c);
  for (int i = 0; i < c; ++i) {
    std::vector<double> row;
    row.reserve(c - 1);
    for (int j = 0; j < c; ++j)
      if (j != i) row.push_back(dist2(i, j));
    std::nth_element(row.begin(), row.begin() + (k_neighbors - 1), row.end());
    sigma[i] = std::sqrt(row[k_neighbors - 1]);
    if (sigma[i] <= 0.0) {
      log_warning("label '" + table.label(i) + "' has " + std::to_string(k_neighbors) +
                  " duplicate neighbours; local scale set to 1e-8");
      sigma[i] = 1e-8;
    }
  }

  Mat a = Mat::Zero(c, c);
  for (int i = 0; i < c; ++i)
    for (int j = i + 1; j < c; ++j) {
      const double v = std::exp(-dist2(i, j) / (sigma[i] * sigma[j]));
      a(i, j) = v;
      a(j, i) = v;
    }
  return a;
}

namespace {

Mat normalized_affinity(const Mat& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw DomainError("affinity must be square");
  Vec inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double deg = a.row(i).sum();
    inv_sqrt[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

struct KMeansResult {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

KMeansResult kmeans_once(const Mat& x, int k, Rng& rng, int max_iter = 300) {
  const int n = static_cast<int>(x.rows());
  Mat centers(k, x.cols());
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());

  int first = static_cast<int>(rng.uniform_int(0, n - 1));
  centers.row(0) = x.row(first);
  for (int q = 1; q < k; ++q) {
    for (int i = 0; i < n; ++i)
      min_d2[i] = std::min(min_d2[i], (x.row(i) - centers.row(q - 1)).squaredNorm());
    int far = static_cast<int>(std::max_element(min_d2.begin(), min_d2.end()) - min_d2.begin());
    centers.row(q) = x.row(far);
  }

  KMeansResult res;
  res.labels.assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int q = 0; q < k; ++q) {
        const double d = (x.row(i) - centers.row(q)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = q;
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }

    Mat sums = Mat::Zero(k, x.cols());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += x.row(i);
      ++counts[res.labels[i]];
    }
    for (int q = 0; q < k; ++q) {
      if (counts[q] > 0) {
        centers.row(q) = sums.row(q) / counts[q];
        continue;
      }
      // Empty cluster: move its center to the point worst served by its own.
      int worst = 0;
      double worst_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d = (x.row(i) - centers.row(res.labels[i])).squaredNorm();
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      centers.row(q) = x.row(worst);
      res.labels[worst] = q;
      changed = true;
    }
    if (!changed) break;
  }

  res.inertia = 0.0;
  for (int i = 0; i < n; ++i) res.inertia += (x.row(i) - centers.row(res.labels[i])).squaredNorm();
  return res;
}

std::vector<int> canonical_ids(const std::vector<int>& labels) {
  std::vector<int> remap(labels.size() + 1, 0);
  std::vector<int> out(labels.size());
  int next = 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int& id = remap[static_cast<std::size_t>(labels[i])];
    if (id == 0) id = next++;
    out[i] = id;
  }
  return out;
}

}  // namespace

std::vector<int> spectral_partition(const Mat& affinity, int c_plus, std::uint64_t seed) {
  const int n = static_cast<int>(affinity.rows());
  if (c_plus < 1 || c_plus > n) throw DomainError("c_plus must lie in [1, c]");
  if (c_plus == 1) return std::vector<int>(n, 1);

  const SymmetricEigen eig = jacobi_eigen(normalized_affinity(affinity));
  Mat x = eig.vectors.leftCols(c_plus);
  for (int i = 0; i < n; ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0) x.row(i) /= norm;
  }

  constexpr int kRestarts = 10;
  Rng rng(seed);
  KMeansResult best;
  for (int r = 0; r < kRestarts; ++r) {
    Rng child = rng.fork(static_cast<std::uint64_t>(r));
    KMeansResult res = kmeans_once(x, c_plus, child);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return canonical_ids(best.labels);
}

int eigengap_estimate(const Mat& affinity, int max_c_plus) {
  const int n = static_cast<int>(affinity.rows());
  if (max_c_plus > n) throw DomainError("max_c_plus exceeds the number of labels");
  if (n < 3) return std::min(n, 2);
  const Vec values = jacobi_eigen(normalized_affinity(affinity)).values;
  int best_q = 2;
  double best_gap = -std::numeric_limits<double>::infinity();
  // values are 0-indexed; lambda_q is values[q - 1].
  for (int q = 2; q <= std::min(max_c_plus, n - 1); ++q) {
    const double gap = values[q - 1] - values[q];
    if (gap > best_gap + 1e-12) {
      best_gap = gap;
      best_q = q;
    }
  }
  return best_q;
}

SuperClassPartition build_partition(const EmbeddingTable& table, const PartitionOptions& opts) {
  const int c = table.num_classes();
  if (c == 1) return SuperClassPartition({1}, 1);
  const int k = std::min(opts.k_neighbors, c - 1);
  const Mat a = affinity_matrix(table, k);
  int c_plus;
  if (opts.c_plus) {
    c_plus = *opts.c_plus;
  } else {
    const int max_c_plus = std::max(1, (c + 1) / 2);
    c_plus = max_c_plus < 2 ? 1 : eigengap_estimate(a, max_c_plus);
  }
  return SuperClassPartition(spectral_partition(a, c_plus, opts.seed), c_plus);
}

SuperClassPartition parse_partition(std::istream& in, const std::string& source) {
  std::string raw;
  std::size_t line_no = 0;
  long c = -1;
  long c_plus = -1;
  std::vector<int> assign;
  while (std::getline(in, raw)) {
    ++line_no;
    std::istringstream ss(raw);
    std::string first;
    if (!(ss >> first) || first.front() == '#') continue;
    long a = 0;
    long b = 0;
    std::string extra;
    try {
      a = std::stol(first);
    } catch (...) {
      throw ParseError(source, line_no, "expected an integer, found '" + first + "'");
    }
    if (!(ss >> b) || (ss >> extra)) throw ParseError(source, line_no, "expected two integers");
    if (c < 0) {
      c = a;
      c_plus = b;
      if (c < 1 || c_plus < 1 || c_plus > c) throw ParseError(source, line_no, "invalid header 'c c_plus'");
      assign.assign(static_cast<std::size_t>(c), 0);
      continue;
    }
    if (a < 1 || a > c) throw ParseError(source, line_no, "label index out of range");
    if (assign[a - 1] != 0) throw ParseError(source, line_no, "label listed twice");
    if (b < 1 || b > c_plus) throw ParseError(source, line_no, "super-class id out of range");
    assign[a - 1] = static_cast<int>(b);
  }
  if (c < 0) throw ParseError(source, line_no, "missing header");
  for (long j = 0; j < c; ++j)
    if (assign[j] == 0) throw ParseError(source, line_no, "label " + std::to_string(j + 1) + " not assigned");
  try {
    return SuperClassPartition(std::move(assign), static_cast<int>(c_plus));
  } catch (const DomainError& e) {
    throw ParseError(source, line_no, e.what());
  }
}

void write_partition(const SuperClassPartition& partition, std::ostream& out) {
  out << partition.num_labels() << ' ' << partition.num_superclasses() << '\n';
  for (int j = 0; j < partition.num_labels(); ++j) out << (j + 1) << ' ' << partition.assignments()[j] << '\n';
}

SuperClassPartition load_partition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return parse_partition(in, path);
}

void save_partition(const SuperClassPartition& partition, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_partition(partition, out);
}

}  // namespace zstad
