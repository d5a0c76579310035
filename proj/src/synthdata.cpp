#include "zstad/synthdata.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

namespace zstad {

void SynthConfig::validate() const {
  if (num_classes < 2) throw DomainError("synthetic corpus needs c >= 2");
  if (num_seen < 1 || num_seen >= num_classes) throw DomainError("synthetic corpus needs 1 <= c_s < c");
  if (num_superclasses < 1 || num_superclasses > num_classes)
    throw DomainError("planted super-class count must lie in [1, c]");
  if (num_seen < num_superclasses)
    throw DomainError("c_s must be at least the planted super-class count so every super-class has a seen label");
  if (embed_dim < 1 || embed_rank < 1 || embed_rank > embed_dim)
    throw DomainError("embedding rank must lie in [1, d]");
  if (in_channels < 1) throw DomainError("C_in must be positive");
  if (length < kFeatureStride || length % kFeatureStride != 0)
    throw DomainError("video length must be a positive multiple of 8");
  if (min_segments < 0 || max_segments < min_segments) throw DomainError("invalid segments-per-video range");
  if (min_segment_length < 2 || max_segment_length < min_segment_length || max_segment_length > length)
    throw DomainError("invalid segment length range");
  if (noise < 0.0 || label_jitter < 0.0) throw DomainError("noise levels must be non-negative");
  if (train_videos < 0 || test_videos < 0) throw DomainError("video counts must be non-negative");
}

std::pair<EmbeddingTable, SuperClassPartition> gen_embeddings(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const int c = cfg.num_classes;
  const int q = cfg.num_superclasses;
  const int r = cfg.embed_rank;
  const int d = cfg.embed_dim;

  Mat gauss(d, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < d; ++i) gauss(i, j) = rng.normal();
  const Mat basis = Eigen::HouseholderQR<Mat>(gauss).householderQ() * Mat::Identity(d, r);

  auto random_unit = [&](int dim) {
    Vec v(dim);
    do {
      for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    } while (v.norm() < 1e-12);
    return Vec(v.normalized());
  };

  std::vector<Vec> centers;
  constexpr int kAttempts = 200;
  for (int attempt = 0; attempt < kAttempts && static_cast<int>(centers.size()) < q; ++attempt) {
    centers.clear();
    int failures = 0;
    while (static_cast<int>(centers.size()) < q && failures < 1000) {
      Vec cand = random_unit(r);
      bool ok = true;
      for (const Vec& other : centers) ok = ok && cand.dot(other) <= cfg.max_center_cosine;
      if (ok) {
        centers.push_back(cand);
      } else {
        ++failures;
      }
    }
  }
  if (static_cast<int>(centers.size()) < q)
    throw DomainError("cannot place " + std::to_string(q) + " super-class centres with pairwise cosine <= " +
                      format_double(cfg.max_center_cosine) + " in " + std::to_string(r) +
                      " dimensions; increase the embedding dimension or rank");

  // Slot i belongs to super-class i mod q.
  std::vector<int> slot_super(c);
  for (int i = 0; i < c; ++i) slot_super[i] = i % q;
  // label_jitter is a per-coordinate spread in d dimensions; drawing it in the
  // rank-r subspace instead keeps the same expected norm.
  const double jitter = cfg.label_jitter * std::sqrt(static_cast<double>(d) / r);
  std::vector<Vec> slot_vec(c);
  auto separated = [&] {
    double within = 2.0, between = -2.0;
    for (int a = 0; a < c; ++a)
      for (int b = a + 1; b < c; ++b) {
        const double cs = slot_vec[a].dot(slot_vec[b]);
        if (slot_super[a] == slot_super[b]) within = std::min(within, cs);
        else between = std::max(between, cs);
      }
    return within > between;
  };
  // Redraw the jitter until every pair inside a super-class is closer than
  // every pair across super-classes.
  constexpr int kJitterAttempts = 1000;
  for (int attempt = 0;; ++attempt) {
    for (int i = 0; i < c; ++i) {
      Vec v = centers[slot_super[i]];
      if (q < c)
        for (int k = 0; k < r; ++k) v[k] += jitter * rng.normal();
      slot_vec[i] = basis * v.normalized();
    }
    if (q < 2 || q == c || separated()) break;
    if (attempt + 1 == kJitterAttempts)
      throw DomainError("label jitter " + format_double(cfg.label_jitter) +
                        " blurs the planted super-classes; lower it or max_center_cosine");
  }

  std::vector<bool> slot_seen(c, false);
  std::vector<int> rest;
  for (int s = 0; s < q; ++s) {
    std::vector<int> members;
    for (int i = 0; i < c; ++i)
      if (slot_super[i] == s) members.push_back(i);
    const int pick = members[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(members.size()) - 1))];
    slot_seen[pick] = true;
  }
  for (int i = 0; i < c; ++i)
    if (!slot_seen[i]) rest.push_back(i);
  shuffle(rest, rng);
  for (int i = 0; i < cfg.num_seen - q; ++i) slot_seen[rest[i]] = true;

  std::vector<int> order;
  for (int i = 0; i < c; ++i)
    if (slot_seen[i]) order.push_back(i);
  for (int i = 0; i < c; ++i)
    if (!slot_seen[i]) order.push_back(i);

  std::vector<std::string> labels;
  std::vector<Vec> vectors;
  std::vector<bool> seen;
  std::vector<int> planted;
  std::map<int, int> canon;
  for (std::size_t j = 0; j < order.size(); ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "act%02zu", j + 1);
    labels.emplace_back(name);
    vectors.push_back(slot_vec[order[j]]);
    seen.push_back(slot_seen[order[j]]);
    const int sc = slot_super[order[j]];
    auto it = canon.find(sc);
    if (it == canon.end()) it = canon.emplace(sc, static_cast<int>(canon.size()) + 1).first;
    planted.push_back(it->second);
  }
  return {EmbeddingTable(std::move(labels), std::move(vectors), std::move(seen)),
          SuperClassPartition(std::move(planted), q)};
}

Mat gen_transfer_map(const SynthConfig& cfg, Rng& rng) {
  Mat w(cfg.in_channels, cfg.embed_dim);
  for (int j = 0; j < w.cols(); ++j)
    for (int i = 0; i < w.rows(); ++i) w(i, j) = cfg.transfer_scale * rng.normal();
  return w;
}

std::vector<Video> gen_videos(const SynthConfig& cfg, const EmbeddingTable& table, const Mat& w_true,
                              bool train_split, Rng& rng) {
  cfg.validate();
  if (w_true.rows() != cfg.in_channels || w_true.cols() != table.dim())
    throw DomainError("transfer map shape does not match C_in x d");
  std::vector<int> seen_ids, unseen_ids, all_ids;
  for (int j = 0; j < table.num_classes(); ++j) {
    (table.is_seen(j) ? seen_ids : unseen_ids).push_back(j);
    all_ids.push_back(j);
  }
  if (!train_split && cfg.max_segments < 1)
    throw DomainError("test videos need at least one segment to hold an unseen activity");
  if (!train_split && unseen_ids.empty()) throw DomainError("test split needs unseen classes");

  const int count = train_split ? cfg.train_videos : cfg.test_videos;
  std::vector<Video> videos;
  videos.reserve(static_cast<std::size_t>(count));
  for (int v = 0; v < count; ++v) {
    Rng vr = rng.fork(static_cast<std::uint64_t>(v));
    Video video;
    char id[32];
    std::snprintf(id, sizeof(id), "%s_%04d", train_split ? "train" : "test", v);
    video.id = id;

    int n_seg = static_cast<int>(vr.uniform_int(cfg.min_segments, cfg.max_segments));
    if (!train_split) n_seg = std::max(n_seg, 1);
    std::vector<std::pair<int, int>> spans;
    int rejections = 0;
    while (static_cast<int>(spans.size()) < n_seg) {
      const int len = static_cast<int>(vr.uniform_int(cfg.min_segment_length, cfg.max_segment_length));
      const int start = static_cast<int>(vr.uniform_int(0, cfg.length - len));
      bool overlaps = false;
      for (const auto& [s, e] : spans) overlaps = overlaps || (start < e && s < start + len);
      if (overlaps) {
        if (++rejections >= 1000)
          throw DataError("cannot place " + std::to_string(n_seg) + " non-overlapping segments in video " + video.id);
        continue;
      }
      spans.emplace_back(start, start + len);
    }

    Mat x(cfg.in_channels, cfg.length);
    for (int t = 0; t < cfg.length; ++t)
      for (int ch = 0; ch < cfg.in_channels; ++ch) x(ch, t) = cfg.noise * vr.normal();

    for (std::size_t i = 0; i < spans.size(); ++i) {
      int label;
      if (train_split) {
        label = seen_ids[static_cast<std::size_t>(vr.uniform_int(0, static_cast<int>(seen_ids.size()) - 1))];
      } else if (i == 0) {
        label = unseen_ids[static_cast<std::size_t>(vr.uniform_int(0, static_cast<int>(unseen_ids.size()) - 1))];
      } else {
        label = all_ids[static_cast<std::size_t>(vr.uniform_int(0, static_cast<int>(all_ids.size()) - 1))];
      }
      const Vec signal = w_true * table.vector(label);
      for (int t = spans[i].first; t < spans[i].second; ++t) x.col(t) += signal;
      video.gts.push_back({Segment(spans[i].first, spans[i].second), label + 1});
    }
    std::sort(video.gts.begin(), video.gts.end(),
              [](const GroundTruth& a, const GroundTruth& b) { return a.segment.start < b.segment.start; });
    video.features.values = std::move(x);
    videos.push_back(std::move(video));
  }
  return videos;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  Rng emb_rng = root.fork(1);
  Rng map_rng = root.fork(2);
  Rng train_rng = root.fork(3);
  Rng test_rng = root.fork(4);
  auto [table, planted] = gen_embeddings(cfg, emb_rng);
  Mat w = gen_transfer_map(cfg, map_rng);
  auto train = gen_videos(cfg, table, w, true, train_rng);
  auto test = gen_videos(cfg, table, w, false, test_rng);
  return SynthDataset{std::move(table), std::move(planted), std::move(train), std::move(test), std::move(w)};
}

namespace {

constexpr char kMagic[4] = {'Z', 'S', 'V', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError(path, 0, "truncated video container");
  return v;
}

}  // namespace

void write_videos(const std::vector<Video>& videos, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, videos.size());
  for (const Video& v : videos) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.id.size()));
    out.write(v.id.data(), static_cast<std::streamsize>(v.id.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.features.channels()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v.features.length()));
    for (int ch = 0; ch < v.features.channels(); ++ch)
      for (int t = 0; t < v.features.length(); ++t) put<double>(out, v.features.values(ch, t));
  }
}

std::vector<Video> read_videos(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open video container");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError(path, 0, "bad magic");
  if (get<std::uint32_t>(in, path) != kVersion) throw ParseError(path, 0, "unsupported container version");
  const auto count = get<std::uint64_t>(in, path);
  std::vector<Video> videos;
  for (std::uint64_t i = 0; i < count; ++i) {
    Video v;
    const auto id_len = get<std::uint32_t>(in, path);
    if (id_len == 0 || id_len > 4096) throw ParseError(path, 0, "invalid video id length");
    v.id.resize(id_len);
    if (!in.read(v.id.data(), id_len)) throw ParseError(path, 0, "truncated video id");
    const auto channels = get<std::uint32_t>(in, path);
    const auto length = get<std::uint32_t>(in, path);
    if (channels == 0 || length == 0 || channels > (1u << 16) || length > (1u << 26))
      throw ParseError(path, 0, "implausible video shape for " + v.id);
    v.features.values.resize(channels, length);
    for (std::uint32_t ch = 0; ch < channels; ++ch)
      for (std::uint32_t t = 0; t < length; ++t) v.features.values(ch, t) = get<double>(in, path);
    videos.push_back(std::move(v));
  }
  return videos;
}

void write_ground_truth(const std::vector<Video>& videos, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# video_id class_id start end\n";
  std::vector<DetectionRecord> records;
  for (const Video& v : videos)
    for (const GroundTruth& g : v.gts) records.push_back({v.id, Detection{g.segment, g.class_id, 1.0}});
  write_detections(records, out, true);
}

void attach_ground_truth(std::vector<Video>& videos, const std::string& path) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    index[videos[i].id] = i;
    videos[i].gts.clear();
  }
  for (const auto& rec : load_detections(path, true)) {
    auto it = index.find(rec.video_id);
    if (it == index.end()) throw DataError(path + ": annotation for unknown video '" + rec.video_id + "'");
    videos[it->second].gts.push_back({rec.det.segment, rec.det.class_id});
  }
}

void save_dataset(const SynthDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "test");
  fs::create_directories(fs::path(dir) / "oracle");
  save_embeddings(ds.table, (fs::path(dir) / "embeddings.txt").string());
  save_partition(ds.planted, (fs::path(dir) / "oracle" / "planted_partition.txt").string());
  for (const auto& [name, split] : {std::pair{"train", &ds.train}, std::pair{"test", &ds.test}}) {
    write_videos(*split, (fs::path(dir) / name / "videos.bin").string());
    write_ground_truth(*split, (fs::path(dir) / name / "gt.txt").string());
  }
  std::ofstream w((fs::path(dir) / "oracle" / "W_true.txt").string());
  if (!w) throw DataError("cannot write oracle transfer map");
  w << ds.w_true.rows() << ' ' << ds.w_true.cols() << '\n';
  for (Eigen::Index i = 0; i < ds.w_true.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.w_true.cols(); ++j) w << (j ? " " : "") << format_double(ds.w_true(i, j));
    w << '\n';
  }
}

std::vector<Video> load_split(const std::string& dir, const std::string& split) {
  namespace fs = std::filesystem;
  auto videos = read_videos((fs::path(dir) / split / "videos.bin").string());
  const auto gt = fs::path(dir) / split / "gt.txt";
  if (fs::exists(gt)) attach_ground_truth(videos, gt.string());
  return videos;
}

}  // namespace zstad
