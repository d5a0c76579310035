#include "zstad/model.hpp"

#include <fstream>
#include <sstream>

namespace zstad {

void ModelConfig::validate() const {
  if (in_channels < 1 || channels < 1 || improved_dim < 1 || embed_dim < 1 || hidden < 1 || bins < 1)
    throw DomainError("model dimensions must be positive");
  if (num_classes < 1 || num_seen < 1 || num_seen > num_classes)
    throw DomainError("model requires 1 <= c_s <= c");
  if (scales.empty()) throw DomainError("model requires at least one anchor scale");
  for (std::size_t i = 0; i < scales.size(); ++i)
    if (scales[i] < 1 || (i > 0 && scales[i] <= scales[i - 1]))
      throw DomainError("anchor scales must be positive and strictly increasing");
}

ParamSet ParamSet::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int k = cfg.num_scales();
  ParamSet p;
  p.conv1_w = Mat::Zero(cfg.channels, cfg.in_channels * 3);
  p.conv1_b = Mat::Zero(cfg.channels, 1);
  p.conv2_w = Mat::Zero(cfg.channels, cfg.channels * 3);
  p.conv2_b = Mat::Zero(cfg.channels, 1);
  p.tpn_reg_w = Mat::Zero(2 * k, cfg.channels);
  p.tpn_reg_b = Mat::Zero(2 * k, 1);
  p.tpn_cls_w = Mat::Zero(2 * k, cfg.channels);
  p.tpn_cls_b = Mat::Zero(2 * k, 1);
  p.tpn_imp_w = Mat::Zero(cfg.improved_dim * k, cfg.channels);
  p.tpn_imp_b = Mat::Zero(cfg.improved_dim * k, 1);
  p.tpn_bg_w = Mat::Zero(cfg.improved_dim, cfg.embed_dim);
  p.tpn_bg_b = Mat::Zero(cfg.improved_dim, 1);
  p.zsdn_fc1_w = Mat::Zero(cfg.hidden, cfg.channels * cfg.bins);
  p.zsdn_fc1_b = Mat::Zero(cfg.hidden, 1);
  p.zsdn_fc2_w = Mat::Zero(cfg.hidden, cfg.hidden);
  p.zsdn_fc2_b = Mat::Zero(cfg.hidden, 1);
  p.zsdn_proj_w = Mat::Zero(cfg.embed_dim, cfg.hidden);
  p.zsdn_proj_b = Mat::Zero(cfg.embed_dim, 1);
  p.zsdn_reg_w = Mat::Zero(2 * cfg.num_seen, cfg.hidden);
  p.zsdn_reg_b = Mat::Zero(2 * cfg.num_seen, 1);
  return p;
}

ParamSet ParamSet::initialize(const ModelConfig& cfg, std::uint64_t seed, double hidden_bias) {
  ParamSet p = zeros(cfg);
  Rng rng(seed);
  p.for_each([&](const char*, Mat& m) {
    if (m.cols() == 1) return;  // bias
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  });
  p.conv1_b.setConstant(hidden_bias);
  p.conv2_b.setConstant(hidden_bias);
  p.zsdn_fc1_b.setConstant(hidden_bias);
  p.zsdn_fc2_b.setConstant(hidden_bias);
  return p;
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
  std::vector<const Mat*> rhs;
  other.for_each([&](const char*, const Mat& m) { rhs.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const char* name, Mat& m) {
    const Mat& o = *rhs[i++];
    if (o.rows() != m.rows() || o.cols() != m.cols())
      throw InternalError(std::string("shape mismatch in ") + name);
    m += o;
  });
  return *this;
}

bool ParamSet::operator==(const ParamSet& other) const {
  std::vector<const Mat*> rhs;
  other.for_each([&](const char*, const Mat& m) { rhs.push_back(&m); });
  std::size_t i = 0;
  bool equal = true;
  for_each([&](const char*, const Mat& m) {
    const Mat& o = *rhs[i++];
    if (o.rows() != m.rows() || o.cols() != m.cols() || o != m) equal = false;
  });
  return equal;
}

bool ParamSet::all_finite() const {
  bool ok = true;
  for_each([&](const char*, const Mat& m) { ok = ok && m.allFinite(); });
  return ok;
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for_each([&](const char*, const Mat& m) { s += m.squaredNorm(); });
  return s;
}

namespace {

// Columns are (channel, tap) pairs with taps at offsets -1, 0, +1 (zero padded).
Mat im2col3(const Mat& x) {
  const Eigen::Index c = x.rows();
  const Eigen::Index len = x.cols();
  Mat cols = Mat::Zero(c * 3, len);
  for (Eigen::Index ch = 0; ch < c; ++ch)
    for (Eigen::Index t = 0; t < len; ++t)
      for (int tap = 0; tap < 3; ++tap) {
        const Eigen::Index src = t + tap - 1;
        if (src >= 0 && src < len) cols(ch * 3 + tap, t) = x(ch, src);
      }
  return cols;
}

Mat col2im3(const Mat& cols, Eigen::Index channels) {
  const Eigen::Index len = cols.cols();
  Mat x = Mat::Zero(channels, len);
  for (Eigen::Index ch = 0; ch < channels; ++ch)
    for (Eigen::Index t = 0; t < len; ++t)
      for (int tap = 0; tap < 3; ++tap) {
        const Eigen::Index src = t + tap - 1;
        if (src >= 0 && src < len) x(ch, src) += cols(ch * 3 + tap, t);
      }
  return x;
}

Mat relu_of(const Mat& x) { return x.cwiseMax(0.0); }

void max_pool(const Mat& x, int window, Mat& out, Eigen::MatrixXi& arg) {
  const Eigen::Index n = x.cols() / window;
  out.resize(x.rows(), n);
  arg.resize(x.rows(), n);
  for (Eigen::Index ch = 0; ch < x.rows(); ++ch)
    for (Eigen::Index t = 0; t < n; ++t) {
      Eigen::Index best = t * window;
      for (Eigen::Index s = t * window + 1; s < (t + 1) * window; ++s)
        if (x(ch, s) > x(ch, best)) best = s;
      out(ch, t) = x(ch, best);
      arg(ch, t) = static_cast<int>(best);
    }
}

Mat conv_forward(const Mat& x, const Mat& w, const Mat& b) {
  Mat y = w * im2col3(x);
  y.colwise() += b.col(0);
  return y;
}

}  // namespace

constexpr double kMinNorm = 1e-12;

TemporalFeatureMap backbone_forward(const FeatureSequence& input, const ModelParams& params,
                                    BackboneCache* cache) {
  const Mat& x = input.values;
  if (x.rows() != params.conv1_w.cols() / 3)
    throw DomainError("input has " + std::to_string(x.rows()) + " channels, model expects " +
                      std::to_string(params.conv1_w.cols() / 3));
  if (x.cols() < kFeatureStride || x.cols() % kFeatureStride != 0)
    throw DomainError("input length must be a positive multiple of 8");
  if (!x.allFinite()) throw DomainError("input contains non-finite values");

  BackboneCache local;
  BackboneCache& c = cache ? *cache : local;
  c.input = x;
  c.pre1 = conv_forward(x, params.conv1_w, params.conv1_b);
  max_pool(relu_of(c.pre1), 2, c.pooled1, c.arg1);
  c.pre2 = conv_forward(c.pooled1, params.conv2_w, params.conv2_b);
  TemporalFeatureMap map;
  max_pool(relu_of(c.pre2), 4, map.values, c.arg2);
  return map;
}

Mat backbone_backward(const Mat& d_map, const BackboneCache& cache, const ModelParams& params,
                      ModelGrads& grads) {
  if (d_map.rows() != cache.arg2.rows() || d_map.cols() != cache.arg2.cols())
    throw InternalError("backbone_backward: gradient does not match cached forward");

  Mat d_pre2 = Mat::Zero(cache.pre2.rows(), cache.pre2.cols());
  for (Eigen::Index ch = 0; ch < d_map.rows(); ++ch)
    for (Eigen::Index t = 0; t < d_map.cols(); ++t) {
      const int src = cache.arg2(ch, t);
      if (cache.pre2(ch, src) > 0.0) d_pre2(ch, src) += d_map(ch, t);
    }
  const Mat cols2 = im2col3(cache.pooled1);
  grads.conv2_w += d_pre2 * cols2.transpose();
  grads.conv2_b += d_pre2.rowwise().sum();
  const Mat d_pooled1 = col2im3(params.conv2_w.transpose() * d_pre2, cache.pooled1.rows());

  Mat d_pre1 = Mat::Zero(cache.pre1.rows(), cache.pre1.cols());
  for (Eigen::Index ch = 0; ch < d_pooled1.rows(); ++ch)
    for (Eigen::Index t = 0; t < d_pooled1.cols(); ++t) {
      const int src = cache.arg1(ch, t);
      if (cache.pre1(ch, src) > 0.0) d_pre1(ch, src) += d_pooled1(ch, t);
    }
  const Mat cols1 = im2col3(cache.input);
  grads.conv1_w += d_pre1 * cols1.transpose();
  grads.conv1_b += d_pre1.rowwise().sum();
  return col2im3(params.conv1_w.transpose() * d_pre1, cache.input.rows());
}

double cosine_with_grad(const Vec& a, const Vec& b, Vec* grad_a, Vec* grad_b) {
  const double na = std::max(a.norm(), kMinNorm);
  const double nb = std::max(b.norm(), kMinNorm);
  const double cos = a.dot(b) / (na * nb);
  if (grad_a) *grad_a = (b / nb - cos * a / na) / na;
  if (grad_b) *grad_b = (a / na - cos * b / nb) / nb;
  return cos;
}

TpnOutput tpn_forward(const TemporalFeatureMap& map, const ModelParams& params, const ModelConfig& cfg,
                      const Vec& bg_embedding, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0, 1]");
  if (map.values.rows() != cfg.channels) throw DomainError("feature map channel mismatch");
  if (bg_embedding.size() != cfg.embed_dim) throw DomainError("background embedding dimension mismatch");
  const int k = cfg.num_scales();
  const int m = cfg.improved_dim;
  const int locations = map.length();

  TpnOutput out;
  out.lambda = lambda;
  out.map = map.values;
  out.bg_embedding = bg_embedding;
  out.reg = params.tpn_reg_w * map.values;
  out.reg.colwise() += params.tpn_reg_b.col(0);
  out.logits = params.tpn_cls_w * map.values;
  out.logits.colwise() += params.tpn_cls_b.col(0);
  out.imp = params.tpn_imp_w * map.values;
  out.imp.colwise() += params.tpn_imp_b.col(0);
  out.bg_mapped = params.tpn_bg_w * bg_embedding + params.tpn_bg_b.col(0);

  const int n = locations * k;
  out.fused.resize(n);
  out.fused_rest.resize(n);
  out.basic.resize(n);
  out.improved.resize(n);
  out.offsets.resize(n);
  for (int t = 0; t < locations; ++t)
    for (int s = 0; s < k; ++s) {
      const int a = t * k + s;
      const double margin = out.logits(2 * s + 1, t) - out.logits(2 * s, t);
      const double basic = 1.0 / (1.0 + std::exp(-margin));
      const double basic_rest = 1.0 / (1.0 + std::exp(margin));
      const Vec feat = out.imp.block(s * m, t, m, 1);
      double improved = 0.0, improved_rest = 0.0;
      if (feat.norm() >= kMinNorm && out.bg_mapped.norm() >= kMinNorm) {
        // Half-angle forms stay accurate when the cosine is close to +-1.
        const Vec ua = feat.normalized(), ub = out.bg_mapped.normalized();
        improved = 0.25 * (ua - ub).squaredNorm();
        improved_rest = 0.25 * (ua + ub).squaredNorm();
      } else {
        const double cos = cosine_with_grad(feat, out.bg_mapped, nullptr, nullptr);
        improved = 0.5 * (1.0 - cos);
        improved_rest = 0.5 * (1.0 + cos);
      }
      out.basic[a] = basic;
      out.improved[a] = improved;
      out.fused[a] = (1.0 - lambda) * basic + lambda * improved;
      out.fused_rest[a] = (1.0 - lambda) * basic_rest + lambda * improved_rest;
      out.offsets[a] = {out.reg(2 * s, t), out.reg(2 * s + 1, t)};
    }
  return out;
}

Mat tpn_backward(const Vec& d_fused, const std::vector<Offsets>& d_offsets, const TpnOutput& out,
                 const ModelParams& params, const ModelConfig& cfg, ModelGrads& grads) {
  const int k = cfg.num_scales();
  const int m = cfg.improved_dim;
  const int locations = static_cast<int>(out.map.cols());
  if (d_fused.size() != out.fused.size() || d_offsets.size() != out.offsets.size())
    throw InternalError("tpn_backward: gradient does not match cached forward");

  Mat d_reg = Mat::Zero(out.reg.rows(), out.reg.cols());
  Mat d_logits = Mat::Zero(out.logits.rows(), out.logits.cols());
  Mat d_imp = Mat::Zero(out.imp.rows(), out.imp.cols());
  Vec d_bg = Vec::Zero(m);

  for (int t = 0; t < locations; ++t)
    for (int s = 0; s < k; ++s) {
      const int a = t * k + s;
      d_reg(2 * s, t) = d_offsets[a].center;
      d_reg(2 * s + 1, t) = d_offsets[a].log_length;
      if (d_fused[a] == 0.0) continue;
      const double b = out.basic[a];
      const double d_margin = (1.0 - out.lambda) * d_fused[a] * b * (1.0 - b);
      d_logits(2 * s + 1, t) += d_margin;
      d_logits(2 * s, t) -= d_margin;
      if (out.lambda == 0.0) continue;
      const double d_cos = -0.5 * out.lambda * d_fused[a];
      Vec g_feat, g_bg;
      cosine_with_grad(out.imp.block(s * m, t, m, 1), out.bg_mapped, &g_feat, &g_bg);
      d_imp.block(s * m, t, m, 1) += d_cos * g_feat;
      d_bg += d_cos * g_bg;
    }

  grads.tpn_reg_w += d_reg * out.map.transpose();
  grads.tpn_reg_b += d_reg.rowwise().sum();
  grads.tpn_cls_w += d_logits * out.map.transpose();
  grads.tpn_cls_b += d_logits.rowwise().sum();
  grads.tpn_imp_w += d_imp * out.map.transpose();
  grads.tpn_imp_b += d_imp.rowwise().sum();
  grads.tpn_bg_w += d_bg * out.bg_embedding.transpose();
  grads.tpn_bg_b += d_bg;

  return params.tpn_reg_w.transpose() * d_reg + params.tpn_cls_w.transpose() * d_logits +
         params.tpn_imp_w.transpose() * d_imp;
}

std::pair<int, int> roi_bin_range(int cells, const Segment& proposal, int bins, int b) {
  const double lo = proposal.start / kFeatureStride;
  const double hi = proposal.end / kFeatureStride;
  const double width = (hi - lo) / bins;
  int first = static_cast<int>(std::floor(lo + b * width));
  int last = static_cast<int>(std::ceil(lo + (b + 1) * width)) - 1;
  if (last < first) last = first;
  return {std::clamp(first, 0, cells - 1), std::clamp(last, 0, cells - 1)};
}

Vec roi_pool(const TemporalFeatureMap& map, const Segment& proposal, int bins, RoiCache* cache) {
  if (bins < 1) throw DomainError("roi_pool: bins must be >= 1");
  const int cells = map.length();
  const double lo = proposal.start / kFeatureStride;
  const double hi = proposal.end / kFeatureStride;
  if (!(hi > 0.0 && lo < cells)) throw DomainError("roi_pool: proposal does not overlap the feature map");

  const Eigen::Index channels = map.values.rows();
  Vec out(channels * bins);
  Eigen::MatrixXi arg(channels, bins);
  for (int b = 0; b < bins; ++b) {
    const auto [first, last] = roi_bin_range(cells, proposal, bins, b);
    for (Eigen::Index ch = 0; ch < channels; ++ch) {
      int best = first;
      for (int i = first + 1; i <= last; ++i)
        if (map.values(ch, i) > map.values(ch, best)) best = i;
      out[ch * bins + b] = map.values(ch, best);
      arg(ch, b) = best;
    }
  }
  if (cache) {
    cache->argmax = std::move(arg);
    cache->map_length = cells;
  }
  return out;
}

void roi_pool_backward(const Vec& d_pooled, const RoiCache& cache, Mat& d_map) {
  const Eigen::Index channels = cache.argmax.rows();
  const Eigen::Index bins = cache.argmax.cols();
  if (d_pooled.size() != channels * bins || d_map.rows() != channels || d_map.cols() != cache.map_length)
    throw InternalError("roi_pool_backward: shape mismatch with cached forward");
  for (Eigen::Index ch = 0; ch < channels; ++ch)
    for (Eigen::Index b = 0; b < bins; ++b) d_map(ch, cache.argmax(ch, b)) += d_pooled[ch * bins + b];
}

Vec softmax(const Vec& logits) {
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

Vec softmax_backward(const Vec& probs, const Vec& d_probs) {
  const double inner = probs.dot(d_probs);
  return (probs.array() * (d_probs.array() - inner)).matrix();
}

namespace {

const Vec& label_vector(const EmbeddingTable& table, int j) {
  return j == 0 ? table.background() : table.vector(j - 1);
}

}  // namespace

ZsdnOutput zsdn_forward(const Vec& pooled, const ModelParams& params, const EmbeddingTable& table,
                        double tau) {
  if (!table.has_background()) throw DomainError("zsdn_forward: embedding table lacks a background vector");
  if (!(tau > 0.0)) throw DomainError("zsdn_forward: temperature must be positive");
  if (pooled.size() != params.zsdn_fc1_w.cols()) throw DomainError("zsdn_forward: pooled size mismatch");
  if (table.dim() != params.zsdn_proj_w.rows()) throw DomainError("zsdn_forward: embedding dimension mismatch");
  if (2 * table.num_seen() != params.zsdn_reg_w.rows())
    throw DomainError("zsdn_forward: seen-class count does not match the regression head");

  ZsdnOutput out;
  out.tau = tau;
  out.pooled = pooled;
  out.pre1 = params.zsdn_fc1_w * pooled + params.zsdn_fc1_b.col(0);
  const Vec h1 = out.pre1.cwiseMax(0.0);
  out.pre2 = params.zsdn_fc2_w * h1 + params.zsdn_fc2_b.col(0);
  out.h2 = out.pre2.cwiseMax(0.0);
  out.u = params.zsdn_proj_w * out.h2 + params.zsdn_proj_b.col(0);
  out.reg = params.zsdn_reg_w * out.h2 + params.zsdn_reg_b.col(0);

  const int c = table.num_classes();
  out.scores.resize(c + 1);
  for (int j = 0; j <= c; ++j) out.scores[j] = cosine_with_grad(out.u, label_vector(table, j), nullptr, nullptr);
  out.probs = softmax(out.scores / tau);
  return out;
}

Vec zsdn_backward(const Vec& d_logits, const Vec& d_reg, const ZsdnOutput& out, const ModelParams& params,
                  const EmbeddingTable& table, ModelGrads& grads) {
  if (d_logits.size() != out.probs.size() || d_reg.size() != out.reg.size())
    throw InternalError("zsdn_backward: gradient does not match cached forward");
  Vec d_u = Vec::Zero(out.u.size());
  Vec g;
  for (Eigen::Index j = 0; j < d_logits.size(); ++j) {
    if (d_logits[j] == 0.0) continue;
    cosine_with_grad(out.u, label_vector(table, static_cast<int>(j)), &g, nullptr);
    d_u += (d_logits[j] / out.tau) * g;
  }

  grads.zsdn_proj_w += d_u * out.h2.transpose();
  grads.zsdn_proj_b += d_u;
  grads.zsdn_reg_w += d_reg * out.h2.transpose();
  grads.zsdn_reg_b += d_reg;
  Vec d_h2 = params.zsdn_proj_w.transpose() * d_u + params.zsdn_reg_w.transpose() * d_reg;
  Vec d_pre2 = (out.pre2.array() > 0.0).select(d_h2, 0.0);
  const Vec h1 = out.pre1.cwiseMax(0.0);
  grads.zsdn_fc2_w += d_pre2 * h1.transpose();
  grads.zsdn_fc2_b += d_pre2;
  Vec d_h1 = params.zsdn_fc2_w.transpose() * d_pre2;
  Vec d_pre1 = (out.pre1.array() > 0.0).select(d_h1, 0.0);
  grads.zsdn_fc1_w += d_pre1 * out.pooled.transpose();
  grads.zsdn_fc1_b += d_pre1;
  return params.zsdn_fc1_w.transpose() * d_pre1;
}

namespace {

std::string join_scales(const std::vector<int>& scales) {
  std::string s;
  for (std::size_t i = 0; i < scales.size(); ++i) s += (i ? "," : "") + std::to_string(scales[i]);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                     const std::vector<std::pair<std::string, std::string>>& extra_config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << "zstad-checkpoint 1\n";
  out << "config in_channels " << cfg.in_channels << '\n'
      << "config channels " << cfg.channels << '\n'
      << "config improved_dim " << cfg.improved_dim << '\n'
      << "config embed_dim " << cfg.embed_dim << '\n'
      << "config hidden " << cfg.hidden << '\n'
      << "config bins " << cfg.bins << '\n'
      << "config num_classes " << cfg.num_classes << '\n'
      << "config num_seen " << cfg.num_seen << '\n'
      << "config scales " << join_scales(cfg.scales) << '\n';
  for (const auto& [k, v] : extra_config) out << "echo " << k << ' ' << v << '\n';
  params.for_each([&](const char* name, const Mat& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
      out << '\n';
    }
  });
  out << "end\n";
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::string& path,
                                                    std::vector<std::pair<std::string, std::string>>* echo) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open checkpoint");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != "zstad-checkpoint 1")
    throw ParseError(path, line_no, "not a version-1 checkpoint");

  ModelConfig cfg;
  bool params_ready = false;
  ModelParams params;
  std::vector<std::string> names;
  std::vector<Mat*> slots;
  std::size_t seen_tensors = 0;
  bool ended = false;

  auto read_int = [&](const std::string& v) {
    try {
      return std::stoi(v);
    } catch (...) {
      throw ParseError(path, line_no, "invalid integer '" + v + "'");
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    if (kind == "config") {
      std::string key, value;
      ss >> key >> value;
      if (key == "in_channels") cfg.in_channels = read_int(value);
      else if (key == "channels") cfg.channels = read_int(value);
      else if (key == "improved_dim") cfg.improved_dim = read_int(value);
      else if (key == "embed_dim") cfg.embed_dim = read_int(value);
      else if (key == "hidden") cfg.hidden = read_int(value);
      else if (key == "bins") cfg.bins = read_int(value);
      else if (key == "num_classes") cfg.num_classes = read_int(value);
      else if (key == "num_seen") cfg.num_seen = read_int(value);
      else if (key == "scales") {
        cfg.scales.clear();
        std::stringstream vs(value);
        std::string item;
        while (std::getline(vs, item, ',')) cfg.scales.push_back(read_int(item));
      } else {
        throw ParseError(path, line_no, "unknown config key '" + key + "'");
      }
    } else if (kind == "echo") {
      std::string key, value;
      ss >> key;
      std::getline(ss >> std::ws, value);
      if (echo) echo->emplace_back(key, value);
    } else if (kind == "tensor") {
      if (!params_ready) {
        try {
          params = ModelParams::zeros(cfg);
        } catch (const DomainError& e) {
          throw ParseError(path, line_no, e.what());
        }
        params.for_each([&](const char* name, Mat& m) {
          names.emplace_back(name);
          slots.push_back(&m);
        });
        params_ready = true;
      }
      std::string name;
      long rows = 0, cols = 0;
      ss >> name >> rows >> cols;
      if (seen_tensors >= names.size() || name != names[seen_tensors])
        throw ParseError(path, line_no, "unexpected tensor '" + name + "'");
      Mat& m = *slots[seen_tensors++];
      if (rows != m.rows() || cols != m.cols())
        throw ParseError(path, line_no,
                         "tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                             ", config implies " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (!std::getline(in, line)) throw ParseError(path, line_no, "truncated tensor '" + name + "'");
        ++line_no;
        std::istringstream rs(line);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          std::string tok;
          if (!(rs >> tok)) throw ParseError(path, line_no, "short row in tensor '" + name + "'");
          if (!parse_double(tok, m(i, j))) throw ParseError(path, line_no, "invalid value '" + tok + "'");
        }
      }
    } else if (kind == "end") {
      ended = true;
      break;
    } else {
      throw ParseError(path, line_no, "unknown record '" + kind + "'");
    }
  }
  if (!ended || !params_ready || seen_tensors != names.size())
    throw ParseError(path, line_no, "incomplete checkpoint");
  return {cfg, params};
}

}  // namespace zstad
