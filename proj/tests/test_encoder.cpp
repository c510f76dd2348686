#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "encoder.hpp"
#include "error.hpp"

using namespace wvad;

namespace {

Tensor random_features(std::size_t T, std::size_t D, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({T, D});
  for (double& v : t.data()) v = n(rng);
  return t;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.snippets = 6;
  c.input_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.depth = 2;
  return c;
}

struct Outputs {
  std::vector<double> snippets;
  double video;
  Tensor tokens;
};

Outputs run(const ModelParams& p, const Tensor& x) {
  Tape tape;
  Forward f(tape, p, false);
  EncodedVideo e = f.encode(x);
  return {f.snippet_scores(e).value().values(), f.video_score(e).value().item(), e.tokens.value()};
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat o(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) o[i][j] += a[i][k] * b[k][j];
  return o;
}

void add_bias(Mat& m, const Tensor& b) {
  for (auto& row : m)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
}

// Token projection written out directly: cls row through the pointwise
// kernel only, snippet rows through a replicate-padded depthwise conv first.
Mat project(const Mat& tokens, const Tensor& depth, const Tensor& point, const Tensor& bias) {
  const std::size_t n = tokens.size(), D = tokens[0].size(), W = depth.cols();
  const long r = static_cast<long>(W / 2), T = static_cast<long>(n - 1);
  Mat hidden(n, std::vector<double>(D, 0.0));
  hidden[0] = tokens[0];
  for (long t = 0; t < T; ++t)
    for (std::size_t c = 0; c < D; ++c)
      for (long j = 0; j < static_cast<long>(W); ++j) {
        long src = std::clamp(t + j - r, 0L, T - 1);
        hidden[t + 1][c] += depth.at(c, j) * tokens[src + 1][c];
      }
  Mat out = mm(hidden, to_mat(point));
  add_bias(out, bias);
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(EncoderConfig, Validation) {
  EncoderConfig c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.depth = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.conv_width = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(InitParams, DeterministicAndSeedSensitive) {
  const auto c = small_config();
  EXPECT_TRUE(init_params(c, 5) == init_params(c, 5));
  EXPECT_FALSE(init_params(c, 5) == init_params(c, 6));
  for (const auto& e : init_params(c, 5).entries)
    if (e.name.ends_with(".bias")) {
      for (double v : e.value.data()) EXPECT_EQ(v, 0.0) << e.name;
    }
}

TEST(InitParams, ScoresStrictlyInsideUnitInterval) {
  const auto c = small_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto o = run(init_params(c, seed), random_features(c.snippets, c.input_dim, seed + 100));
    for (double s : o.snippets) {
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
    }
    EXPECT_GT(o.video, 0.0);
    EXPECT_LT(o.video, 1.0);
  }
}

TEST(Encode, ShapesAndDimensionErrors) {
  const auto c = small_config();
  const auto p = init_params(c, 1);
  const auto o = run(p, random_features(c.snippets, c.input_dim, 2));
  EXPECT_EQ(o.tokens.rows(), c.snippets + 1);
  EXPECT_EQ(o.tokens.cols(), c.model_dim);
  EXPECT_EQ(o.snippets.size(), c.snippets);
  EXPECT_TRUE(o.tokens.all_finite());
  Tape tape;
  Forward f(tape, p);
  EXPECT_THROW(f.encode(random_features(c.snippets, c.input_dim + 1, 2)), DimensionError);
}

TEST(Encode, IdenticalTokensStayIdentical) {
  const auto c = small_config();
  ModelParams p = zero_params(c);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : p.get("cls_token").data()) v = u(rng);
  for (auto& e : p.entries)
    if (e.name.ends_with(".gain")) e.value.fill(1.0);
  const auto o = run(p, Tensor({c.snippets, c.input_dim}, 0.0));
  for (std::size_t t = 2; t <= c.snippets; ++t)
    for (std::size_t d = 0; d < c.model_dim; ++d) EXPECT_EQ(o.tokens.at(t, d), o.tokens.at(1, d));
}

TEST(Encode, SwappingDistantSnippetsChangesTheirTokens) {
  const auto c = small_config();
  const auto p = init_params(c, 3);
  Tensor x = random_features(c.snippets, c.input_dim, 4);
  Tensor swapped = x;
  for (std::size_t d = 0; d < c.input_dim; ++d) std::swap(swapped.at(0, d), swapped.at(5, d));
  const auto a = run(p, x), b = run(p, swapped);
  // Without positional information a swap would just permute rows 1 and 6.
  bool differs = false;
  for (std::size_t d = 0; d < c.model_dim; ++d) differs |= a.tokens.at(1, d) != b.tokens.at(6, d);
  EXPECT_TRUE(differs);
}

TEST(Encode, MatchesHandWrittenSingleBlock) {
  EncoderConfig c;
  c.snippets = 4;
  c.input_dim = 3;
  c.model_dim = 2;
  c.heads = 1;
  c.depth = 1;
  const ModelParams p = init_params(c, 17);
  const Tensor x = random_features(c.snippets, c.input_dim, 18);
  const auto got = run(p, x);

  Mat tokens = mm(to_mat(x), to_mat(p.get("input.weight")));
  add_bias(tokens, p.get("input.bias"));
  tokens.insert(tokens.begin(), to_mat(p.get("cls_token"))[0]);
  auto proj = [&](const std::string& w) {
    return project(tokens, p.get("block0." + w + ".depth"), p.get("block0." + w + ".point"), p.get("block0." + w + ".bias"));
  };
  const Mat q = proj("query"), k = proj("key"), v = proj("value");
  const std::size_t n = tokens.size();
  Mat attn(n, std::vector<double>(2, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(n);
    double mx = -1e300, z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / std::sqrt(2.0);
      mx = std::max(mx, w[j]);
    }
    for (auto& e : w) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t d = 0; d < 2; ++d) attn[i][d] += w[j] / z * v[j][d];
  }
  Mat a = mm(attn, to_mat(p.get("block0.out.weight")));
  add_bias(a, p.get("block0.out.bias"));
  const Tensor& gain = p.get("block0.norm.gain");
  const Tensor& nb = p.get("block0.norm.bias");
  Mat out(n, std::vector<double>(2));
  for (std::size_t i = 0; i < n; ++i) {
    const double r0 = tokens[i][0] + a[i][0], r1 = tokens[i][1] + a[i][1];
    const double mu = (r0 + r1) / 2, var = ((r0 - mu) * (r0 - mu) + (r1 - mu) * (r1 - mu)) / 2;
    const double h[2] = {(r0 - mu) / std::sqrt(var + 1e-5) * gain[0] + nb[0],
                         (r1 - mu) / std::sqrt(var + 1e-5) * gain[1] + nb[1]};
    const Tensor& w1 = p.get("block0.ff1.weight");
    const Tensor& b1 = p.get("block0.ff1.bias");
    const Tensor& w2 = p.get("block0.ff2.weight");
    const Tensor& b2 = p.get("block0.ff2.bias");
    double hidden[4];
    for (std::size_t j = 0; j < 4; ++j) hidden[j] = gelu(h[0] * w1.at(0, j) + h[1] * w1.at(1, j) + b1[j]);
    for (std::size_t d = 0; d < 2; ++d) {
      double f = b2[d];
      for (std::size_t j = 0; j < 4; ++j) f += hidden[j] * w2.at(j, d);
      out[i][d] = h[d] + f;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(got.tokens.at(i, d), out[i][d], 1e-10);
  const Tensor& sw = p.get("snippet_head.weight");
  const Tensor& vw = p.get("video_head.weight");
  for (std::size_t t = 0; t < c.snippets; ++t)
    EXPECT_NEAR(got.snippets[t], sigmoid(out[t + 1][0] * sw[0] + out[t + 1][1] * sw[1] + p.get("snippet_head.bias")[0]), 1e-10);
  EXPECT_NEAR(got.video, sigmoid(out[0][0] * vw[0] + out[0][1] * vw[1] + p.get("video_head.bias")[0]), 1e-10);
}

TEST(SnippetHead, ZeroWeightsGiveOneHalf) {
  const auto c = small_config();
  ModelParams p = init_params(c, 2);
  p.get("snippet_head.weight").fill(0.0);
  p.get("video_head.weight").fill(0.0);
  const auto o = run(p, random_features(c.snippets, c.input_dim, 3));
  for (double s : o.snippets) EXPECT_EQ(s, 0.5);
  EXPECT_EQ(o.video, 0.5);
}

TEST(SnippetHead, BiasIsMonotone) {
  const auto c = small_config();
  ModelParams p = init_params(c, 2);
  const Tensor x = random_features(c.snippets, c.input_dim, 3);
  const auto before = run(p, x);
  p.get("snippet_head.bias")[0] += 0.25;
  const auto after = run(p, x);
  for (std::size_t t = 0; t < c.snippets; ++t) EXPECT_GT(after.snippets[t], before.snippets[t]);
}

TEST(Encode, AttentionRowsSumToOneAndSingleTokenIsExact) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rnd = [&](Shape s) {
    Tensor t(s);
    for (double& v : t.data()) v = n(rng);
    return t;
  };
  Tape tape;
  auto proj = [&](std::size_t D) {
    return TokenProjection{tape.constant(rnd({D, 3})), tape.constant(rnd({D, D})), tape.constant(rnd({D}))};
  };
  AttentionParams ap{proj(4), proj(4), proj(4)};
  AttentionTrace trace;
  Var tokens = tape.constant(rnd({3, 4}));
  Var out = multi_head_self_attention(tokens, ap, 2, &trace);
  ASSERT_EQ(trace.weights.size(), 2u);
  for (const auto& w : trace.weights)
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double s = 0;
      for (std::size_t cidx = 0; cidx < w.cols(); ++cidx) s += w.at(r, cidx);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }

  Var single = tape.constant(rnd({1, 4}));
  AttentionTrace t1;
  Var o1 = multi_head_self_attention(single, ap, 2, &t1);
  for (const auto& w : t1.weights) EXPECT_EQ(w.at(0, 0), 1.0);
  Var vproj = conv_token_projection(single, ap.value);
  for (std::size_t d = 0; d < 4; ++d) EXPECT_DOUBLE_EQ(o1.value().at(0, d), vproj.value().at(0, d));

  Var same = tape.constant(Tensor({3, 4}, 0.3));
  Var os = multi_head_self_attention(same, ap, 2);
  for (std::size_t d = 0; d < 4; ++d) {
    EXPECT_DOUBLE_EQ(os.value().at(1, d), os.value().at(2, d));
  }
  EXPECT_THROW(multi_head_self_attention(tokens, ap, 3), ConfigError);
}

TEST(Encode, DeterministicWithoutDropout) {
  const auto c = small_config();
  const auto p = init_params(c, 8);
  const Tensor x = random_features(c.snippets, c.input_dim, 9);
  EXPECT_EQ(run(p, x).tokens, run(p, x).tokens);
}

TEST(Encode, BaselineReadsRawFeatures) {
  EncoderConfig c = small_config();
  c.use_transformer = false;
  const ModelParams p = init_params(c, 4);
  EXPECT_EQ(p.count(), 4u);
  const Tensor x = random_features(c.snippets, c.input_dim, 5);
  const auto o = run(p, x);
  const Tensor& w = p.get("snippet_head.weight");
  for (std::size_t t = 0; t < c.snippets; ++t) {
    double z = p.get("snippet_head.bias")[0];
    for (std::size_t d = 0; d < c.input_dim; ++d) z += x.at(t, d) * w[d];
    EXPECT_NEAR(o.snippets[t], sigmoid(z), 1e-12);
  }
}

TEST(Checkpoint, ParamsRoundTripExactly) {
  auto c = small_config();
  c.positional_embedding = true;
  ModelParams p = init_params(c, 11);
  const auto path = std::filesystem::temp_directory_path() / "wvad_params_roundtrip.wvck";
  save_params(path.string(), p);
  const ModelParams q = load_params(path.string());
  EXPECT_TRUE(p == q);
  EXPECT_EQ(q.config, c);
  std::filesystem::remove(path);
}
