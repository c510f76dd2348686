#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "tiny_config.hpp"
#include "wvad/wvad.h"

namespace fs = std::filesystem;

namespace {

struct Config {
  wvad_config* p = nullptr;
  Config() { EXPECT_EQ(wvad_config_from_string(kTinyConfig, &p), WVAD_OK) << wvad_last_error(); }
  ~Config() { wvad_config_free(p); }
};

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST(CApi, VersionAndConfigErrors) {
  EXPECT_NE(std::string(wvad_version()), "");
  wvad_config* c = nullptr;
  EXPECT_EQ(wvad_config_from_string("{\"nope\": 1}", &c), WVAD_ERR_CONFIG);
  EXPECT_EQ(c, nullptr);
  EXPECT_NE(std::string(wvad_last_error()).find("nope"), std::string::npos);
  EXPECT_EQ(wvad_config_from_file("/nonexistent.json", &c), WVAD_ERR_CONFIG);
  EXPECT_EQ(wvad_config_from_string(kTinyConfig, nullptr), WVAD_ERR_CONFIG);
}

TEST(CApi, ConfigJsonAndSeed) {
  Config c;
  ASSERT_EQ(wvad_config_set_seed(c.p, 99), WVAD_OK);
  const char* json = nullptr;
  ASSERT_EQ(wvad_config_to_json(c.p, &json), WVAD_OK);
  EXPECT_NE(std::string(json).find("\"seed\": 99"), std::string::npos);
}

TEST(CApi, EndToEnd) {
  testutil::TempDir root;
  const std::string data = (root.path() / "data").string(), run = (root.path() / "run").string(),
                    eval = (root.path() / "eval").string();
  Config c;
  ASSERT_EQ(wvad_synth(c.p, data.c_str()), WVAD_OK) << wvad_last_error();
  std::vector<std::string> lines;
  ASSERT_EQ(wvad_train(c.p, data.c_str(), run.c_str(), nullptr, collect, &lines), WVAD_OK) << wvad_last_error();
  EXPECT_FALSE(lines.empty());
  EXPECT_TRUE(fs::exists(fs::path(run) / "run.json"));

  const std::string ckpt = (fs::path(run) / "checkpoint.wvck").string();
  double auc = -1, ap = -1;
  ASSERT_EQ(wvad_eval(ckpt.c_str(), data.c_str(), eval.c_str(), &auc, &ap), WVAD_OK) << wvad_last_error();
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);
  EXPECT_GT(ap, 0.0);

  ASSERT_EQ(wvad_export_scores(ckpt.c_str(), data.c_str(), eval.c_str(), "all"), WVAD_OK) << wvad_last_error();
  EXPECT_EQ(wvad_export_scores(ckpt.c_str(), data.c_str(), eval.c_str(), "dev"), WVAD_ERR_CONFIG);
  std::size_t mined = 0;
  const std::string scores = (fs::path(eval) / "scores.csv").string();
  ASSERT_EQ(wvad_mine(c.p, scores.c_str(), eval.c_str(), &mined), WVAD_OK) << wvad_last_error();
  EXPECT_GT(mined, 0u);

  wvad_model* m = nullptr;
  ASSERT_EQ(wvad_model_load(ckpt.c_str(), &m), WVAD_OK);
  std::size_t T = 0, D = 0;
  ASSERT_EQ(wvad_model_dims(m, &T, &D), WVAD_OK);
  EXPECT_EQ(T, 16u);
  EXPECT_EQ(D, 8u);
  std::vector<float> feats(T * D, 0.25f);
  std::vector<double> s(T);
  double v = -1;
  ASSERT_EQ(wvad_model_score(m, feats.data(), T, D, s.data(), &v), WVAD_OK);
  for (double x : s) {
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_GT(v, 0.0);
  EXPECT_EQ(wvad_model_score(m, feats.data(), T, D + 1, s.data(), &v), WVAD_ERR_CONFIG);
  wvad_model_free(m);
}

TEST(CApi, IoErrors) {
  testutil::TempDir root;
  Config c;
  const std::string missing = (root.path() / "missing").string(), out = (root.path() / "out").string();
  EXPECT_EQ(wvad_train(c.p, missing.c_str(), out.c_str(), nullptr, nullptr, nullptr), WVAD_ERR_IO);
  wvad_model* m = nullptr;
  EXPECT_EQ(wvad_model_load(missing.c_str(), &m), WVAD_ERR_IO);
  EXPECT_EQ(m, nullptr);
}

TEST(CApi, GradcheckReportsThroughFlag) {
  Config c;
  std::vector<std::string> lines;
  int passed = -1;
  ASSERT_EQ(wvad_gradcheck(c.p, 0, nullptr, collect, &lines, &passed), WVAD_OK) << wvad_last_error();
  EXPECT_EQ(passed, 1);
  EXPECT_FALSE(lines.empty());
  ASSERT_EQ(wvad_gradcheck(c.p, 1, nullptr, nullptr, nullptr, &passed), WVAD_OK);
  EXPECT_EQ(passed, 0);
}
