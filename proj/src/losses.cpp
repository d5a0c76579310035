#include "zstad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace zstad {

namespace {
constexpr double kMinProb = 1e-12;
// A hinge within a few ulps of its margin is rounding noise (0.2 - 0.3 + 0.1
// is 2.8e-17 in doubles) and counts as satisfied.
constexpr double kHingeSlack = 8.0 * std::numeric_limits<double>::epsilon();
}

LossGrad loss_bc(const Vec& probs, int p_star) {
  if (p_star < 0 || p_star >= probs.size()) throw DomainError("loss_bc: label out of range");
  double p = probs[p_star];
  if (p < kMinProb) {
    log_warning("loss_bc: probability of the true label clamped at 1e-12");
    p = kMinProb;
  }
  LossGrad out;
  out.value = -std::log(p);
  out.grad = probs;
  out.grad[p_star] -= 1.0;
  return out;
}

LossGrad loss_sc(const Vec& probs, int p_star, const SuperClassPartition& partition, double delta_sc) {
  const int c = partition.num_labels();
  if (probs.size() != c + 1) throw DomainError("loss_sc: score vector must have c + 1 entries");
  if (p_star == 0) throw DomainError("loss_sc: background proposals have no super-class peers");
  if (p_star < 0 || p_star > c) throw DomainError("loss_sc: label out of range");

  // Score indices are label index + 1; index 0 is the background.
  const auto& members = partition.members(partition.superclass_of(p_star - 1));
  std::vector<bool> inside(static_cast<std::size_t>(c) + 1, false);
  for (int j : members) inside[j + 1] = true;
  const double n_sc = static_cast<double>(c + 1 - static_cast<int>(members.size())) * members.size();

  LossGrad out;
  out.grad = Vec::Zero(c + 1);
  for (int j1 = 0; j1 <= c; ++j1) {
    if (inside[j1]) continue;
    for (int m : members) {
      const int j2 = m + 1;
      const double h = probs[j1] - probs[j2] + delta_sc;
      if (h > kHingeSlack * (std::abs(probs[j1]) + std::abs(probs[j2]) + std::abs(delta_sc))) {
        out.value += h;
        out.grad[j1] += 1.0;
        out.grad[j2] -= 1.0;
      }
    }
  }
  out.value /= n_sc;
  out.grad /= n_sc;
  return out;
}

ZsClsLoss loss_zs_cls(const ScoredProposalBatch& batch, const SuperClassPartition& partition, double beta,
                      double delta_sc) {
  if (batch.size() == 0) throw DomainError("loss_zs_cls: empty proposal batch");
  if (batch.gt_labels.size() != batch.size()) throw DomainError("loss_zs_cls: label count mismatch");
  if (beta < 0.0) throw DomainError("loss_zs_cls: beta must be non-negative");
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  ZsClsLoss out;
  out.grad_logits.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec& p = batch.probs[i];
    const int label = batch.gt_labels[i];
    LossGrad bc = loss_bc(p, label);
    out.bc += bc.value * inv_n;
    Vec g = bc.grad * inv_n;
    if (label > 0 && beta > 0.0) {
      LossGrad sc = loss_sc(p, label, partition, delta_sc);
      out.sc += sc.value * inv_n;
      g += softmax_backward(p, sc.grad) * (beta * inv_n);
    } else if (label > 0) {
      out.sc += loss_sc(p, label, partition, delta_sc).value * inv_n;
    }
    out.grad_logits.push_back(std::move(g));
  }
  out.value = out.bc + beta * out.sc;
  return out;
}

SmoothL1 smooth_l1(double x) {
  const double ax = std::abs(x);
  if (ax < 1.0) return {0.5 * x * x, x};
  return {ax - 0.5, x > 0.0 ? 1.0 : -1.0};
}

TpnLoss tpn_losses(const TpnOutput& out, const AnchorAssignment& assignment, const std::vector<int>& sampled) {
  const auto n = static_cast<std::size_t>(out.fused.size());
  if (assignment.labels.size() != n) throw DomainError("tpn_losses: assignment does not match the anchor grid");
  if (static_cast<std::size_t>(out.fused_rest.size()) != n) throw DomainError("tpn_losses: missing 1 - fused scores");
  TpnLoss loss;
  loss.d_fused = Vec::Zero(static_cast<Eigen::Index>(n));
  loss.d_offsets.assign(n, Offsets{});
  if (sampled.empty()) {
    log_warning("tpn_losses: no sampled anchors; losses set to zero");
    return loss;
  }

  int positives = 0;
  for (int a : sampled)
    if (assignment.labels.at(a) == AnchorLabel::kPositive) ++positives;

  const double inv = 1.0 / static_cast<double>(sampled.size());
  for (int a : sampled) {
    const AnchorLabel lab = assignment.labels[a];
    if (lab == AnchorLabel::kIgnore) throw DomainError("tpn_losses: ignored anchor in the sample");
    if (lab == AnchorLabel::kPositive) {
      const double f = std::max(out.fused[a], kMinProb);
      loss.cls -= std::log(f) * inv;
      loss.d_fused[a] = -inv / f;
      const Offsets& tgt = assignment.targets[a];
      const SmoothL1 dc = smooth_l1(out.offsets[a].center - tgt.center);
      const SmoothL1 dl = smooth_l1(out.offsets[a].log_length - tgt.log_length);
      loss.reg += (dc.value + dl.value) / positives;
      loss.d_offsets[a] = {dc.derivative / positives, dl.derivative / positives};
    } else {
      const double q = std::max(out.fused_rest[a], kMinProb);
      loss.cls -= std::log(q) * inv;
      loss.d_fused[a] = inv / q;
    }
  }
  return loss;
}

RegLoss zsdn_reg_loss(const ScoredProposalBatch& batch) {
  RegLoss out;
  out.grad.reserve(batch.size());
  int positives = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.grad.push_back(Vec::Zero(batch.reg_pred[i].size()));
    if (batch.reg_targets[i]) ++positives;
  }
  if (positives == 0) {
    log_warning("zsdn_reg_loss: no positive proposals; loss set to zero");
    return out;
  }
  const double scale = 1.0 / (2.0 * positives);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch.reg_targets[i]) continue;
    const RegTarget& t = *batch.reg_targets[i];
    const int col = 2 * t.seen_rank;
    if (col + 1 >= batch.reg_pred[i].size()) throw DomainError("zsdn_reg_loss: seen rank out of range");
    const SmoothL1 dc = smooth_l1(batch.reg_pred[i][col] - t.offsets.center);
    const SmoothL1 dl = smooth_l1(batch.reg_pred[i][col + 1] - t.offsets.log_length);
    out.value += (dc.value + dl.value) * scale;
    out.grad[i][col] = dc.derivative * scale;
    out.grad[i][col + 1] = dl.derivative * scale;
  }
  return out;
}

double total_loss(double tpn_cls, double tpn_reg, double zs_cls, double zsdn_reg) {
  return tpn_cls + tpn_reg + zs_cls + zsdn_reg;
}

}  // namespace zstad
