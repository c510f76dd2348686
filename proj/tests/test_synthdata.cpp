#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "error.hpp"
#include "metrics.hpp"
#include "synthdata.hpp"
#include "test_util.hpp"

using namespace wvad;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

SynthConfig small() {
  SynthConfig c;
  c.n_normal_train = 6;
  c.n_abnormal_train = 6;
  c.n_normal_test = 4;
  c.n_abnormal_test = 4;
  c.snippets = 16;
  c.feature_dim = 8;
  c.frames_per_snippet = 4;
  c.region_len_max = 6;
  return c;
}

}  // namespace

TEST(Synth, DeterministicBytes) {
  testutil::TempDir a, b, c;
  generate_dataset(small(), a.path());
  generate_dataset(small(), b.path());
  EXPECT_EQ(tree(a.path()), tree(b.path()));
  SynthConfig other = small();
  other.seed = 8;
  generate_dataset(other, c.path());
  EXPECT_NE(tree(a.path()), tree(c.path()));
}

TEST(Synth, LoadMatchesConfig) {
  testutil::TempDir d;
  generate_dataset(small(), d.path());
  const Dataset ds = load_dataset(d.path());
  EXPECT_EQ(ds.snippets, 16u);
  EXPECT_EQ(ds.feature_dim, 8u);
  EXPECT_EQ(ds.split(Split::Train).size(), 12u);
  EXPECT_EQ(ds.split(Split::Test).size(), 8u);
  for (const auto& v : ds.videos) {
    EXPECT_EQ(v.features.shape(), (Shape{16, 8}));
    EXPECT_EQ(v.record.num_frames, 64u);
    if (v.record.split == Split::Test) {
      ASSERT_EQ(v.frame_labels.size(), 64u);
      std::size_t ones = 0;
      for (auto l : v.frame_labels) ones += l;
      if (v.record.video_label == 0) EXPECT_EQ(ones, 0u) << v.record.id;
      else EXPECT_GT(ones, 0u) << v.record.id;
    } else {
      EXPECT_TRUE(v.frame_labels.empty());
    }
  }
}

TEST(Synth, NoAbnormalTrainingVideos) {
  SynthConfig c = small();
  c.n_abnormal_train = 0;
  testutil::TempDir d;
  generate_dataset(c, d.path());
  const Dataset ds = load_dataset(d.path());
  for (const Video* v : ds.split(Split::Train)) EXPECT_EQ(v->record.video_label, 0);
}

TEST(Synth, FeatureRoundTrip) {
  testutil::TempDir d;
  for (Shape s : {Shape{1, 1}, Shape{3, 5}}) {
    Tensor t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 0.25 * static_cast<double>(i) - 1.0;
    write_features(t, d.path() / "x.wvfd");
    EXPECT_EQ(load_features(d.path() / "x.wvfd"), t);
  }
  write_frame_labels({0, 1, 1, 0}, d.path() / "l.bin");
  EXPECT_EQ(load_frame_labels(d.path() / "l.bin", 4), (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_THROW(load_frame_labels(d.path() / "l.bin", 5), FormatError);
  EXPECT_THROW(load_frame_labels(d.path() / "l.bin", 3), FormatError);
}

TEST(Synth, CorruptFeatureFiles) {
  testutil::TempDir d;
  Tensor t({2, 3}, 1.5);
  write_features(t, d.path() / "x.wvfd");
  std::string bytes = slurp(d.path() / "x.wvfd");

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::ofstream(d.path() / "m.wvfd", std::ios::binary) << bad_magic;
  EXPECT_THROW(load_features(d.path() / "m.wvfd"), FormatError);

  std::ofstream(d.path() / "t.wvfd", std::ios::binary) << bytes.substr(0, bytes.size() - 2);
  EXPECT_THROW(load_features(d.path() / "t.wvfd"), FormatError);

  std::ofstream(d.path() / "long.wvfd", std::ios::binary) << bytes << "xx";
  EXPECT_THROW(load_features(d.path() / "long.wvfd"), FormatError);

  EXPECT_THROW(load_features(d.path() / "missing.wvfd"), IoError);
  EXPECT_THROW(load_dataset(d.path() / "nowhere"), IoError);
}

TEST(Synth, ConfigValidation) {
  SynthConfig c = small();
  c.region_len_max = 17;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.subtle_fraction = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

namespace {

// Snippet labels and the mean of the first D/4 coordinates for test videos.
struct Probe {
  std::vector<double> score;
  std::vector<std::uint8_t> label;
};

Probe probe(const Dataset& ds) {
  Probe p;
  for (const Video* v : ds.split(Split::Test))
    for (std::size_t t = 0; t < ds.snippets; ++t) {
      double s = 0.0;
      for (std::size_t d = 0; d < ds.feature_dim / 4; ++d) s += v->features.at(t, d);
      p.score.push_back(s);
      p.label.push_back(v->frame_labels[t * ds.frames_per_snippet]);
    }
  return p;
}

}  // namespace

TEST(Synth, LinearProbeSeparatesStrongShift) {
  SynthConfig c;
  c.anomaly_shift = 6.0;
  c.n_normal_train = c.n_abnormal_train = 1;
  c.n_normal_test = c.n_abnormal_test = 30;
  testutil::TempDir d;
  generate_dataset(c, d.path());
  const Probe p = probe(load_dataset(d.path()));
  EXPECT_GT(roc_auc({p.score, p.label}), 0.99);
}

TEST(Synth, SubtleRegionShare) {
  SynthConfig c;
  c.n_normal_train = c.n_abnormal_train = 1;
  c.n_normal_test = 1;
  c.n_abnormal_test = 300;
  c.edge_blend = false;
  c.max_regions = 1;
  testutil::TempDir d;
  generate_dataset(c, d.path());
  const Dataset ds = load_dataset(d.path());
  // With one region per video, classify each by its mean shift (delta vs delta/4).
  std::size_t subtle = 0, total = 0;
  for (const Video* v : ds.split(Split::Test)) {
    if (v->record.video_label != 1) continue;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < ds.snippets; ++t) {
      if (!v->frame_labels[t * ds.frames_per_snippet]) continue;
      for (std::size_t dd = 0; dd < ds.feature_dim / 4; ++dd) sum += v->features.at(t, dd);
      n += ds.feature_dim / 4;
    }
    ++total;
    if (sum / static_cast<double>(n) < c.anomaly_shift * 0.625) ++subtle;
  }
  const double share = static_cast<double>(subtle) / static_cast<double>(total);
  EXPECT_NEAR(share, c.subtle_fraction, 0.08);
}

TEST(Synth, OrthogonalMixingPreservesNorms) {
  const Tensor q = random_orthogonal(6, 3);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 6; ++k) dot += q.at(i, k) * q.at(j, k);
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
    }
}
