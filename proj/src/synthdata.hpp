#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace wvad {

struct SynthConfig {
  std::size_t n_normal_train = 40;
  std::size_t n_abnormal_train = 40;
  std::size_t n_normal_test = 15;
  std::size_t n_abnormal_test = 15;
  std::size_t snippets = 32;
  std::size_t frames_per_snippet = 16;
  std::size_t feature_dim = 32;
  double anomaly_shift = 4.0;     // delta, added on the first D/4 coordinates
  double subtle_fraction = 0.3;   // share of regions shifted by delta/4
  bool edge_blend = true;         // first/last snippet of a region blended with normal content
  double distractor_prob = 0.5;   // chance a normal video carries a burst on coordinates D/2..3D/4
  std::size_t region_len_min = 4;
  std::size_t region_len_max = 10;
  std::size_t max_regions = 2;
  bool orthogonal_mixing = false;  // rotate every feature vector by one fixed random orthogonal matrix
  std::uint64_t seed = 7;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

enum class Split { Train, Test };

struct VideoRecord {
  std::string id;
  Split split = Split::Train;
  int video_label = 0;
  std::size_t num_frames = 0;
  std::string feature_file;  // relative to the dataset directory
  std::string label_file;    // test split only, otherwise empty
};

struct Video {
  VideoRecord record;
  Tensor features;                       // [T x D]
  std::vector<std::uint8_t> frame_labels;  // empty for the train split
};

struct Dataset {
  std::filesystem::path root;
  std::size_t snippets = 0;
  std::size_t feature_dim = 0;
  std::size_t frames_per_snippet = 0;
  std::vector<Video> videos;

  std::vector<const Video*> split(Split s) const;
};

// Writes manifest.json, features/<id>.wvfd and labels/<id>.bin (test split).
void generate_dataset(const SynthConfig& config, const std::filesystem::path& dir);

// Loads the manifest and every feature/label file it lists.
Dataset load_dataset(const std::filesystem::path& dir);

// Feature file: "WVFD", u32 version=1, u32 T, u32 D, then T*D little-endian
// f32 in row-major order.
void write_features(const Tensor& features, const std::filesystem::path& path);
Tensor load_features(const std::filesystem::path& path);

void write_frame_labels(const std::vector<std::uint8_t>& labels, const std::filesystem::path& path);
std::vector<std::uint8_t> load_frame_labels(const std::filesystem::path& path, std::size_t expected);

// Random orthogonal matrix (Gram-Schmidt on a Gaussian draw).
Tensor random_orthogonal(std::size_t dim, std::uint64_t seed);

std::string split_name(Split s);

}  // namespace wvad
