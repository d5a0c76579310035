#pragma once

#include <functional>
#include <string>
#include <vector>

#include "zstad/embedding.hpp"
#include "zstad/segments.hpp"

namespace zstad {

struct ModelConfig {
  int in_channels = 8;   // C_in
  int channels = 32;     // C, backbone output width
  int improved_dim = 16; // m
  int embed_dim = 16;    // d
  int hidden = 64;       // ZSDN trunk width
  int bins = 4;          // temporal RoI bins
  int num_classes = 20;  // c
  int num_seen = 12;     // c_s
  std::vector<int> scales = {2, 4, 8, 16};

  int num_scales() const { return static_cast<int>(scales.size()); }
  void validate() const;
};

/// One set of tensors shaped like the model. Used for parameters, gradients
/// and optimizer state alike. Biases are stored as n x 1 matrices.
struct ParamSet {
  Mat conv1_w, conv1_b;
  Mat conv2_w, conv2_b;
  Mat tpn_reg_w, tpn_reg_b;
  Mat tpn_cls_w, tpn_cls_b;
  Mat tpn_imp_w, tpn_imp_b;
  Mat tpn_bg_w, tpn_bg_b;
  Mat zsdn_fc1_w, zsdn_fc1_b;
  Mat zsdn_fc2_w, zsdn_fc2_b;
  Mat zsdn_proj_w, zsdn_proj_b;
  Mat zsdn_reg_w, zsdn_reg_b;

  static ParamSet zeros(const ModelConfig& cfg);
  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)). Biases feeding a
  // rectifier start at `hidden_bias` so most units begin in their linear
  // regime; all other biases start at zero.
  static ParamSet initialize(const ModelConfig& cfg, std::uint64_t seed, double hidden_bias = 0.0);

  template <typename F>
  void for_each(F&& f) {
    f("conv1_w", conv1_w); f("conv1_b", conv1_b);
    f("conv2_w", conv2_w); f("conv2_b", conv2_b);
    f("tpn_reg_w", tpn_reg_w); f("tpn_reg_b", tpn_reg_b);
    f("tpn_cls_w", tpn_cls_w); f("tpn_cls_b", tpn_cls_b);
    f("tpn_imp_w", tpn_imp_w); f("tpn_imp_b", tpn_imp_b);
    f("tpn_bg_w", tpn_bg_w); f("tpn_bg_b", tpn_bg_b);
    f("zsdn_fc1_w", zsdn_fc1_w); f("zsdn_fc1_b", zsdn_fc1_b);
    f("zsdn_fc2_w", zsdn_fc2_w); f("zsdn_fc2_b", zsdn_fc2_b);
    f("zsdn_proj_w", zsdn_proj_w); f("zsdn_proj_b", zsdn_proj_b);
    f("zsdn_reg_w", zsdn_reg_w); f("zsdn_reg_b", zsdn_reg_b);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ParamSet*>(this)->for_each(
        [&](const char* name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }

  ParamSet& operator+=(const ParamSet& other);
  bool operator==(const ParamSet& other) const;
  bool all_finite() const;
  double squared_norm() const;
};

using ModelParams = ParamSet;
using ModelGrads = ParamSet;

// Per-frame feature vectors: rows are channels, columns are frames.
struct FeatureSequence {
  Mat values;  // C_in x L
  int channels() const { return static_cast<int>(values.rows()); }
  int length() const { return static_cast<int>(values.cols()); }
};

struct BackboneCache {
  Mat input;
  Mat pre1;                  // conv1 pre-activation, C x L
  Eigen::MatrixXi arg1;      // pool1 source frame, C x L/2
  Mat pooled1;               // C x L/2
  Mat pre2;                  // conv2 pre-activation, C x L/2
  Eigen::MatrixXi arg2;      // pool2 source position, C x L/8
};

struct TemporalFeatureMap {
  Mat values;  // C x L/8
  int length() const { return static_cast<int>(values.cols()); }
};

TemporalFeatureMap backbone_forward(const FeatureSequence& input, const ModelParams& params,
                                    BackboneCache* cache = nullptr);
/// Accumulates parameter gradients into `grads`; returns d loss / d input.
Mat backbone_backward(const Mat& d_map, const BackboneCache& cache, const ModelParams& params,
                      ModelGrads& grads);

struct TpnOutput {
  // Indexed by anchor = location * k + scale_index.
  Vec fused, basic, improved;
  Vec fused_rest;  // 1 - fused, computed without cancellation
  std::vector<Offsets> offsets;
  double lambda = 0.0;
  // caches
  Mat map, reg, logits, imp;
  Vec bg_mapped;
  Vec bg_embedding;
};

TpnOutput tpn_forward(const TemporalFeatureMap& map, const ModelParams& params, const ModelConfig& cfg,
                      const Vec& bg_embedding, double lambda);
/// `d_fused[a]` and `d_offsets[a]` are loss gradients per anchor. Returns d loss / d map.
Mat tpn_backward(const Vec& d_fused, const std::vector<Offsets>& d_offsets, const TpnOutput& out,
                 const ModelParams& params, const ModelConfig& cfg, ModelGrads& grads);

struct RoiCache {
  Eigen::MatrixXi argmax;  // C x bins, source feature cell
  int map_length = 0;
};

/// Inclusive feature-cell range [first, last] covered by bin `b` of a proposal.
std::pair<int, int> roi_bin_range(int cells, const Segment& proposal, int bins, int b);

/// Temporal RoI max pooling of a frame-unit proposal; output index c * bins + b.
Vec roi_pool(const TemporalFeatureMap& map, const Segment& proposal, int bins, RoiCache* cache = nullptr);
void roi_pool_backward(const Vec& d_pooled, const RoiCache& cache, Mat& d_map);

struct ZsdnOutput {
  Vec probs;  // c + 1, index 0 = background
  Vec reg;    // 2 * c_s; column r of the 2 x c_s matrix is (reg[2r], reg[2r+1])
  // caches
  Vec pooled, pre1, pre2, h2, u, scores;
  double tau = 1.0;

  Offsets reg_column(int seen_rank) const { return {reg[2 * seen_rank], reg[2 * seen_rank + 1]}; }
};

/// Semantic projection followed by cosine scores against [bg, l_1..l_c] and a
/// temperature softmax; the regression head emits one offset pair per seen class.
ZsdnOutput zsdn_forward(const Vec& pooled, const ModelParams& params, const EmbeddingTable& table,
                        double tau);
/// `d_logits` is the gradient with respect to scores / tau; `d_reg` w.r.t. reg.
/// Returns d loss / d pooled.
Vec zsdn_backward(const Vec& d_logits, const Vec& d_reg, const ZsdnOutput& out, const ModelParams& params,
                  const EmbeddingTable& table, ModelGrads& grads);

/// Cosine similarity with gradients w.r.t. both arguments (either may be null).
double cosine_with_grad(const Vec& a, const Vec& b, Vec* grad_a, Vec* grad_b);

Vec softmax(const Vec& logits);
/// Chain rule through softmax: returns d loss / d logits given d loss / d probs.
Vec softmax_backward(const Vec& probs, const Vec& d_probs);

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// Checkpoint: text container with a config echo and a shape table.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                     const std::vector<std::pair<std::string, std::string>>& extra_config = {});
/// `echo`, if given, receives the extra key/value pairs stored at save time.
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path,
                                                    std::vector<std::pair<std::string, std::string>>* echo = nullptr);

}  // namespace zstad
