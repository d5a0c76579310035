#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zstad/common.hpp"

namespace zstad {

enum class BackgroundOrigin { kNone, kSolved, kLoaded };

/// Label embeddings for c activities, seen/unseen flags and an optional
/// background vector. Every stored vector is unit-norm, so cosine similarity
/// reduces to a dot product.
class EmbeddingTable {
 public:
  EmbeddingTable(std::vector<std::string> labels, std::vector<Vec> vectors,
                 std::vector<bool> seen_mask);

  int dim() const { return dim_; }
  int num_classes() const { return static_cast<int>(labels_.size()); }
  int num_seen() const { return num_seen_; }
  int num_unseen() const { return num_classes() - num_seen_; }

  // Activity labels are addressed with 0-based indices here; the detection
  // pipeline uses class_id = index + 1 because 0 is the background.
  const std::string& label(int index) const { return labels_.at(check(index)); }
  const Vec& vector(int index) const { return vectors_.at(check(index)); }
  bool is_seen(int index) const { return seen_.at(check(index)); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<bool>& seen_mask() const { return seen_; }

  // Position of a seen label among the seen labels (its regression column).
  int seen_rank(int index) const;
  // Inverse of seen_rank.
  int seen_index(int rank) const;

  bool has_background() const { return background_.has_value(); }
  const Vec& background() const;
  BackgroundOrigin background_origin() const { return bg_origin_; }
  // The origin must be stated explicitly; kNone clears the background.
  void set_background(const Vec& v, BackgroundOrigin origin);

  bool operator==(const EmbeddingTable& other) const;

 private:
  int check(int index) const;

  int dim_;
  int num_seen_ = 0;
  std::vector<std::string> labels_;
  std::vector<Vec> vectors_;
  std::vector<bool> seen_;
  std::vector<int> seen_rank_;
  std::vector<int> seen_index_;
  std::optional<Vec> background_;
  BackgroundOrigin bg_origin_ = BackgroundOrigin::kNone;
};

/// Cosine of the angle between two nonzero vectors. Throws DomainError on a
/// zero-norm input or dimension mismatch.
double cosine_similarity(const Vec& a, const Vec& b);

struct BgSolverOptions {
  double initial_step = 0.1;
  double tolerance = 1e-12;
  int max_iterations = 10000;
  std::uint64_t seed = 0;
};

struct BgSolverReport {
  std::vector<double> objective_trace;
  double final_objective = 0.0;
  double max_similarity = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Sum over labels of max(0, cos(v, l_j) - delta_bg)^2.
double background_objective(const EmbeddingTable& table, const Vec& v, double delta_bg);

/// Finds a unit vector at most `delta_bg` similar to every activity
/// embedding by projected gradient descent on the unit sphere. Steps that do
/// not decrease the objective are rejected and the step size halved, so the
/// objective trace is monotone.
std::pair<Vec, BgSolverReport> solve_background_embedding(const EmbeddingTable& table,
                                                          double delta_bg,
                                                          const BgSolverOptions& opts = {});

/// Most similar seen label (lowest index wins ties). Seen labels map to themselves.
int nearest_seen_class(const EmbeddingTable& table, int index);

EmbeddingTable load_embeddings(const std::string& path);
void save_embeddings(const EmbeddingTable& table, const std::string& path);
EmbeddingTable parse_embeddings(std::istream& in, const std::string& source);
void write_embeddings(const EmbeddingTable& table, std::ostream& out);

}  // namespace zstad
