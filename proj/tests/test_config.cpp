#include <gtest/gtest.h>

#include "config.hpp"
#include "error.hpp"
#include "tiny_config.hpp"

using namespace wvad;

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig c = parse_config_text("{}");
  EXPECT_EQ(c.train.epochs, 50u);
  EXPECT_EQ(c.train.encoder, EncoderConfig{});
  EXPECT_EQ(c.train.loss, LossConfig{});
  EXPECT_EQ(c.synth, SynthConfig{});
  EXPECT_EQ(c.ablation_seeds, (std::vector<std::uint64_t>{0, 1, 2}));
}

TEST(Config, RoundTripThroughJson) {
  RunConfig c = parse_config_text(kTinyConfig);
  c.train.loss.pairing = PairingRule::AllPairs;
  c.train.loss.contrastive_reduction = Reduction::Sum;
  const RunConfig r = parse_config(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_EQ(r.train.loss, c.train.loss);
  EXPECT_EQ(r.train.encoder.model_dim, 8u);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(parse_config_text(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"epoch": 3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"loss": {"weights": {"contrast": 1}}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"epochs": "ten"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"epochs": -1}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"encoder": {"use_transformer": 1}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"loss": {"tau": "hot"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"loss": {"pairing": "random"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"loss": {"contrastive_reduction": "max"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"([1, 2])"), ConfigError);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(parse_config_text(R"({"encoder": {"heads": 3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"mining": {"erosion_width": 4}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"train": {"batch_normal": 0}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"ablation": {"seeds": []}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"loss": {"k": 40}})"), ConfigError);
}

TEST(Config, SeedOverride) {
  RunConfig c = default_config();
  c.override_seed(42);
  EXPECT_EQ(c.synth.seed, 42u);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.ablation_seeds, (std::vector<std::uint64_t>{42}));
}

TEST(Config, MissingFile) { EXPECT_THROW(load_config("/nonexistent/wvad.json"), ConfigError); }
