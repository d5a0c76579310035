#pragma once

#include <string>
#include <vector>

#include "zstad/model.hpp"
#include "zstad/superclass.hpp"

namespace zstad {

struct Video {
  std::string id;
  FeatureSequence features;
  std::vector<GroundTruth> gts;
};

struct SynthConfig {
  int num_classes = 20;         // c
  int num_seen = 12;            // c_s
  int num_superclasses = 5;     // planted c+
  int embed_dim = 16;           // d
  int embed_rank = 6;           // labels live in a random subspace of this dimension
  int in_channels = 8;          // C_in
  int length = 256;             // frames per video
  int train_videos = 200;
  int test_videos = 50;
  int min_segments = 1;
  int max_segments = 3;
  int min_segment_length = 16;
  int max_segment_length = 80;
  double noise = 0.1;           // sigma of the per-frame Gaussian noise
  double label_jitter = 0.1;    // per-coordinate spread of labels around their center
  double max_center_cosine = 0.3;
  double transfer_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  EmbeddingTable table;
  SuperClassPartition planted;
  std::vector<Video> train;
  std::vector<Video> test;
  Mat w_true;  // C_in x d; persisted for oracle tests only
};

/// Planted super-class centres with pairwise cosine <= max_center_cosine and
/// labels jittered around them. Seen labels come first; every super-class
/// receives at least one seen label.
std::pair<EmbeddingTable, SuperClassPartition> gen_embeddings(const SynthConfig& cfg, Rng& rng);

Mat gen_transfer_map(const SynthConfig& cfg, Rng& rng);

/// Background frames ~ N(0, noise^2); segment frames of class j are
/// W_true l_j plus the same noise. Train videos hold seen classes only; each
/// test video has at least one unseen segment.
std::vector<Video> gen_videos(const SynthConfig& cfg, const EmbeddingTable& table, const Mat& w_true,
                              bool train_split, Rng& rng);

SynthDataset generate_dataset(const SynthConfig& cfg);

// videos.bin: "ZSVB" magic, u32 version, u64 count, then per video a
// length-prefixed id, u32 channels, u32 length and row-major float64 values.
void write_videos(const std::vector<Video>& videos, const std::string& path);
std::vector<Video> read_videos(const std::string& path);
// gt.txt: `video_id class_id start end`.
void write_ground_truth(const std::vector<Video>& videos, const std::string& path);
void attach_ground_truth(std::vector<Video>& videos, const std::string& path);

void save_dataset(const SynthDataset& ds, const std::string& dir);
std::vector<Video> load_split(const std::string& dir, const std::string& split);

}  // namespace zstad
