#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "zstad/common.hpp"

namespace zstad {

inline constexpr double kFdStep = 1e-6;
inline constexpr double kKinkMargin = 1e-4;
// Gradients smaller than this are compared in absolute terms: the central
// difference of an O(1) loss carries roughly 1e-10 of rounding noise.
inline constexpr double kRelErrorFloor = 1e-3;

double relative_error(double analytic, double numeric, double floor = kRelErrorFloor);

struct GradCheckResult {
  std::string name;
  int configurations = 0;
  int rejected = 0;        // random draws discarded for sitting near a kink
  long long entries = 0;   // individual partial derivatives compared
  double max_rel_error = 0.0;
  std::string worst;       // where max_rel_error occurred

  bool passed(double tolerance) const { return configurations > 0 && max_rel_error <= tolerance; }
};

/// Central differences of `f` with respect to every entry of `x`, compared
/// against `analytic`. Updates the running maximum in `result`.
void compare_gradient(const std::function<double()>& f, Mat& x, const Mat& analytic, const std::string& label,
                      GradCheckResult& result, double step = kFdStep);

GradCheckResult check_loss_bc(int configurations, std::uint64_t seed);
GradCheckResult check_loss_sc(int configurations, std::uint64_t seed);
GradCheckResult check_smooth_l1(int configurations, std::uint64_t seed);
GradCheckResult check_tpn_heads(int configurations, std::uint64_t seed);
GradCheckResult check_zsdn_head(int configurations, std::uint64_t seed);
GradCheckResult check_end_to_end(int configurations, std::uint64_t seed);

std::vector<GradCheckResult> run_grad_suite(int configurations, std::uint64_t seed);

}  // namespace zstad
