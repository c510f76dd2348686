#include "synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "binary_io.hpp"
#include "error.hpp"

namespace wvad {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint64_t kMaxFeatureElements = 1ull << 28;

struct Region {
  std::size_t begin = 0, length = 0;
  bool subtle = false;
};

std::mt19937_64 video_rng(std::uint64_t seed, Split split, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(split == Split::Train ? 0x7261u : 0x7465u),
                    static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

// Non-overlapping runs separated by at least one snippet.
std::vector<Region> place_regions(const SynthConfig& c, std::size_t count, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len_dist(c.region_len_min, c.region_len_max);
  std::bernoulli_distribution subtle(c.subtle_fraction);
  std::vector<Region> regions;
  for (std::size_t r = 0; r < count; ++r) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Region reg;
      reg.length = len_dist(rng);
      std::uniform_int_distribution<std::size_t> start(0, c.snippets - reg.length);
      reg.begin = start(rng);
      const bool clash = std::any_of(regions.begin(), regions.end(), [&](const Region& o) {
        return reg.begin <= o.begin + o.length && o.begin <= reg.begin + reg.length;
      });
      if (clash) continue;
      reg.subtle = subtle(rng);
      regions.push_back(reg);
      break;
    }
  }
  std::sort(regions.begin(), regions.end(), [](const Region& a, const Region& b) { return a.begin < b.begin; });
  return regions;
}

Tensor gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Tensor t({rows, cols});
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.data()) v = n(rng);
  return t;
}

struct Generated {
  Tensor features;
  std::vector<std::uint8_t> snippet_labels;
};

Generated generate_video(const SynthConfig& c, int label, std::mt19937_64& rng) {
  const std::size_t T = c.snippets, D = c.feature_dim;
  Generated g{gaussian(T, D, rng), std::vector<std::uint8_t>(T, 0)};
  if (label == 1) {
    std::uniform_int_distribution<std::size_t> nreg(1, c.max_regions);
    const auto regions = place_regions(c, nreg(rng), rng);
    std::uniform_real_distribution<double> lambda_dist(0.3, 0.7);
    std::normal_distribution<double> n(0.0, 1.0);
    for (const auto& r : regions) {
      const double shift = r.subtle ? c.anomaly_shift / 4.0 : c.anomaly_shift;
      for (std::size_t t = r.begin; t < r.begin + r.length; ++t) {
        g.snippet_labels[t] = 1;
        const bool edge = c.edge_blend && (t == r.begin || t + 1 == r.begin + r.length);
        if (edge) {
          // lambda * abnormal + (1 - lambda) * normal, each drawn independently.
          const double lambda = lambda_dist(rng);
          for (std::size_t d = 0; d < D; ++d) {
            double abnormal = n(rng) + (d < D / 4 ? shift : 0.0);
            g.features.at(t, d) = lambda * abnormal + (1.0 - lambda) * g.features.at(t, d);
          }
        } else {
          for (std::size_t d = 0; d < D / 4; ++d) g.features.at(t, d) += shift;
        }
      }
    }
  } else {
    std::bernoulli_distribution has_burst(c.distractor_prob);
    if (has_burst(rng)) {
      SynthConfig one = c;
      one.subtle_fraction = 0.0;
      for (const auto& r : place_regions(one, 1, rng))
        for (std::size_t t = r.begin; t < r.begin + r.length; ++t)
          for (std::size_t d = D / 2; d < 3 * D / 4; ++d) g.features.at(t, d) += c.anomaly_shift;
    }
  }
  return g;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}

json config_json(const SynthConfig& c) {
  return json{{"n_normal_train", c.n_normal_train},
              {"n_abnormal_train", c.n_abnormal_train},
              {"n_normal_test", c.n_normal_test},
              {"n_abnormal_test", c.n_abnormal_test},
              {"snippets", c.snippets},
              {"frames_per_snippet", c.frames_per_snippet},
              {"feature_dim", c.feature_dim},
              {"anomaly_shift", c.anomaly_shift},
              {"subtle_fraction", c.subtle_fraction},
              {"edge_blend", c.edge_blend},
              {"distractor_prob", c.distractor_prob},
              {"region_len_min", c.region_len_min},
              {"region_len_max", c.region_len_max},
              {"max_regions", c.max_regions},
              {"orthogonal_mixing", c.orthogonal_mixing},
              {"seed", c.seed}};
}

}  // namespace

std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

void SynthConfig::validate() const {
  if (snippets < 2) throw ConfigError("snippets must be >= 2");
  if (frames_per_snippet < 1) throw ConfigError("frames_per_snippet must be >= 1");
  if (feature_dim < 4) throw ConfigError("feature_dim must be >= 4");
  if (!(anomaly_shift >= 0.0)) throw ConfigError("anomaly_shift must be non-negative");
  if (subtle_fraction < 0.0 || subtle_fraction > 1.0) throw ConfigError("subtle_fraction must lie in [0,1]");
  if (distractor_prob < 0.0 || distractor_prob > 1.0) throw ConfigError("distractor_prob must lie in [0,1]");
  if (region_len_min < 1 || region_len_min > region_len_max || region_len_max > snippets)
    throw ConfigError("need 1 <= region_len_min <= region_len_max <= snippets");
  if (max_regions < 1) throw ConfigError("max_regions must be >= 1");
}

std::vector<const Video*> Dataset::split(Split s) const {
  std::vector<const Video*> out;
  for (const auto& v : videos)
    if (v.record.split == s) out.push_back(&v);
  return out;
}

Tensor random_orthogonal(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor q = gaussian(dim, dim, rng);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += q.at(i, d) * q.at(j, d);
      for (std::size_t d = 0; d < dim; ++d) q.at(i, d) -= dot * q.at(j, d);
    }
    double norm = 0.0;
    for (std::size_t d = 0; d < dim; ++d) norm += q.at(i, d) * q.at(i, d);
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < dim; ++d) q.at(i, d) /= norm;
  }
  return q;
}

void write_features(const Tensor& features, const fs::path& path) {
  if (features.rank() != 2) throw DimensionError("features must be a matrix");
  if (!features.all_finite()) throw NumericError("refusing to write non-finite features to " + path.string());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  BinaryWriter w(f);
  w.magic("WVFD");
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(features.rows()));
  w.u32(static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) w.f32(static_cast<float>(v));
  f.flush();
  if (!f) throw IoError("failed writing " + path.string());
}

Tensor load_features(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  BinaryReader r(f);
  r.expect_magic("WVFD");
  const auto version_at = r.offset();
  if (const auto v = r.u32(); v != kFeatureVersion)
    throw FormatError("unsupported feature file version " + std::to_string(v), version_at);
  const auto shape_at = r.offset();
  const std::uint64_t T = r.u32();
  const std::uint64_t D = r.u32();
  if (T == 0 || D == 0 || T * D > kMaxFeatureElements)
    throw FormatError("invalid feature shape " + std::to_string(T) + "x" + std::to_string(D), shape_at);
  Tensor out({static_cast<std::size_t>(T), static_cast<std::size_t>(D)});
  for (double& v : out.data()) v = static_cast<double>(r.f32());
  if (!r.at_end()) throw FormatError("trailing bytes after feature data", r.offset());
  return out;
}

void write_frame_labels(const std::vector<std::uint8_t>& labels, const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<std::uint8_t> load_frame_labels(const fs::path& path, std::size_t expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out(expected);
  f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(f.gcount()) != expected)
    throw FormatError("frame label file " + path.string() + " is truncated", static_cast<std::uint64_t>(f.gcount()));
  if (f.peek() != std::char_traits<char>::eof())
    throw FormatError("frame label file " + path.string() + " is longer than num_frames", expected);
  for (std::size_t i = 0; i < expected; ++i)
    if (out[i] > 1) throw FormatError("frame label must be 0x00 or 0x01", i);
  return out;
}

void generate_dataset(const SynthConfig& c, const fs::path& dir) {
  c.validate();
  ensure_dir(dir / "features");
  ensure_dir(dir / "labels");
  const Tensor mixing = c.orthogonal_mixing ? random_orthogonal(c.feature_dim, c.seed ^ 0x6d697869ull) : Tensor();
  const std::size_t num_frames = c.snippets * c.frames_per_snippet;

  json videos = json::array();
  auto emit = [&](Split split, int label, std::size_t count, std::size_t index_base) {
    for (std::size_t i = 0; i < count; ++i) {
      auto rng = video_rng(c.seed, split, index_base + i);
      Generated g = generate_video(c, label, rng);
      if (c.orthogonal_mixing) {
        Tensor mixed(g.features.shape(), 0.0);
        for (std::size_t t = 0; t < c.snippets; ++t)
          for (std::size_t r = 0; r < c.feature_dim; ++r) {
            double s = 0.0;
            for (std::size_t d = 0; d < c.feature_dim; ++d) s += mixing.at(r, d) * g.features.at(t, d);
            mixed.at(t, r) = s;
          }
        g.features = std::move(mixed);
      }
      char id[64];
      std::snprintf(id, sizeof id, "%s_%s_%03zu", split_name(split).c_str(), label ? "abnormal" : "normal", i);
      const std::string feature_file = std::string("features/") + id + ".wvfd";
      write_features(g.features, dir / feature_file);
      json rec{{"id", id}, {"split", split_name(split)}, {"video_label", label}, {"num_frames", num_frames},
               {"feature_file", feature_file}};
      if (split == Split::Test) {
        std::vector<std::uint8_t> frames(num_frames);
        for (std::size_t f = 0; f < num_frames; ++f) frames[f] = g.snippet_labels[f / c.frames_per_snippet];
        const std::string label_file = std::string("labels/") + id + ".bin";
        write_frame_labels(frames, dir / label_file);
        rec["label_file"] = label_file;
      }
      videos.push_back(std::move(rec));
    }
  };
  // Index bases keep per-video seeds distinct across classes within a split.
  emit(Split::Train, 0, c.n_normal_train, 0);
  emit(Split::Train, 1, c.n_abnormal_train, 1u << 20);
  emit(Split::Test, 0, c.n_normal_test, 0);
  emit(Split::Test, 1, c.n_abnormal_test, 1u << 20);

  json manifest{{"format", "wvad-dataset"},
                {"version", 1},
                {"snippets", c.snippets},
                {"feature_dim", c.feature_dim},
                {"frames_per_snippet", c.frames_per_snippet},
                {"generator", config_json(c)},
                {"videos", std::move(videos)}};
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
  if (!f) throw IoError("failed writing manifest");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream f(mpath);
  if (!f) throw IoError("no dataset manifest at " + mpath.string());
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), 0);
  }
  Dataset ds;
  ds.root = dir;
  try {
    ds.snippets = m.at("snippets").get<std::size_t>();
    ds.feature_dim = m.at("feature_dim").get<std::size_t>();
    ds.frames_per_snippet = m.at("frames_per_snippet").get<std::size_t>();
    for (const auto& r : m.at("videos")) {
      Video v;
      v.record.id = r.at("id").get<std::string>();
      const auto split = r.at("split").get<std::string>();
      if (split != "train" && split != "test") throw FormatError("unknown split " + split, 0);
      v.record.split = split == "train" ? Split::Train : Split::Test;
      v.record.video_label = r.at("video_label").get<int>();
      if (v.record.video_label != 0 && v.record.video_label != 1) throw FormatError("video_label must be 0 or 1", 0);
      v.record.num_frames = r.at("num_frames").get<std::size_t>();
      v.record.feature_file = r.at("feature_file").get<std::string>();
      if (r.contains("label_file")) v.record.label_file = r.at("label_file").get<std::string>();
      v.features = load_features(dir / v.record.feature_file);
      if (v.features.rows() != ds.snippets || v.features.cols() != ds.feature_dim)
        throw FormatError(v.record.feature_file + " has shape " + shape_string(v.features.shape()), 12);
      if (!v.record.label_file.empty()) {
        v.frame_labels = load_frame_labels(dir / v.record.label_file, v.record.num_frames);
        const bool any = std::find(v.frame_labels.begin(), v.frame_labels.end(), 1) != v.frame_labels.end();
        if (any != (v.record.video_label == 1))
          throw FormatError("frame labels of " + v.record.id + " disagree with its video label", 0);
      }
      ds.videos.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what(), 0);
  }
  return ds;
}

}  // namespace wvad
