#pragma once

#include <optional>
#include <vector>

#include "zstad/model.hpp"
#include "zstad/superclass.hpp"

namespace zstad {

struct LossGrad {
  double value = 0.0;
  Vec grad;
};

/// -log p[p_star]; gradient is returned w.r.t. the softmax logits (p - onehot).
LossGrad loss_bc(const Vec& probs, int p_star);

/// Super-class hinge loss for an activity proposal (p_star >= 1). Pairs every
/// index outside the true super-class (background included) with every index
/// inside it, normalized by (c + 1 - |z|) |z|. Gradient is w.r.t. probs.
LossGrad loss_sc(const Vec& probs, int p_star, const SuperClassPartition& partition, double delta_sc);

struct RegTarget {
  Offsets offsets;
  int seen_rank = 0;  // regression column of the ground-truth class
};

struct ScoredProposalBatch {
  std::vector<Vec> probs;       // each c + 1
  std::vector<int> gt_labels;   // 0 = background, j = activity j
  std::vector<Vec> reg_pred;    // each 2 c_s
  std::vector<std::optional<RegTarget>> reg_targets;

  std::size_t size() const { return probs.size(); }
};

struct ZsClsLoss {
  double value = 0.0;
  double bc = 0.0;  // mean L_bc
  double sc = 0.0;  // mean L_sc (0 for background proposals)
  std::vector<Vec> grad_logits;
};

/// (1/N) sum_i (L_bc + beta L_sc). Background proposals contribute L_bc only.
ZsClsLoss loss_zs_cls(const ScoredProposalBatch& batch, const SuperClassPartition& partition, double beta,
                      double delta_sc);

struct SmoothL1 {
  double value;
  double derivative;
};
SmoothL1 smooth_l1(double x);

struct TpnLoss {
  double cls = 0.0;
  double reg = 0.0;
  Vec d_fused;
  std::vector<Offsets> d_offsets;
};

/// Binary cross-entropy of the fused score over `sampled` anchors, plus
/// smooth-L1 regression summed over both offsets and averaged over sampled positives.
TpnLoss tpn_losses(const TpnOutput& out, const AnchorAssignment& assignment, const std::vector<int>& sampled);

struct RegLoss {
  double value = 0.0;
  std::vector<Vec> grad;  // per proposal, same shape as reg_pred
};

/// Smooth-L1 on the ground-truth class's two columns, averaged over both
/// coordinates of every positive proposal.
RegLoss zsdn_reg_loss(const ScoredProposalBatch& batch);

struct LossBreakdown {
  double tpn_cls = 0.0;
  double tpn_reg = 0.0;
  double zs_bc = 0.0;
  double zs_sc = 0.0;
  double zs_cls = 0.0;
  double zsdn_reg = 0.0;
  double total() const { return tpn_cls + tpn_reg + zs_cls + zsdn_reg; }
};

/// Unit-weight sum of the four training objectives.
double total_loss(double tpn_cls, double tpn_reg, double zs_cls, double zsdn_reg);

}  // namespace zstad
