#include "config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "error.hpp"

namespace wvad {
using nlohmann::json;

namespace {

// Dispatches every key of an object to a handler; unknown keys are errors.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  template <class T>
  Section& field(const std::string& key, T& dst) {
    handlers_[key] = [this, key, &dst](const json& v) {
      try {
        if constexpr (std::is_same_v<T, bool>) {
          if (!v.is_boolean()) throw ConfigError(path_ + "." + key + " must be a boolean");
        } else if constexpr (std::is_unsigned_v<T>) {
          if (!v.is_number_unsigned()) throw ConfigError(path_ + "." + key + " must be a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
          if (!v.is_number()) throw ConfigError(path_ + "." + key + " must be a number");
        }
        dst = v.get<T>();
      } catch (const json::exception&) {
        throw ConfigError(path_ + "." + key + " has the wrong type");
      }
    };
    return *this;
  }

  Section& custom(const std::string& key, std::function<void(const json&)> fn) {
    handlers_[key] = std::move(fn);
    return *this;
  }

  void run() {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      auto h = handlers_.find(it.key());
      if (h == handlers_.end()) throw ConfigError("unknown key " + path_ + "." + it.key());
      h->second(it.value());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::map<std::string, std::function<void(const json&)>> handlers_;
};

PairingRule parse_pairing(const json& v) {
  if (v == "matched") return PairingRule::Matched;
  if (v == "all_pairs") return PairingRule::AllPairs;
  throw ConfigError("loss.pairing must be \"matched\" or \"all_pairs\"");
}

Reduction parse_reduction(const json& v) {
  if (v == "sum") return Reduction::Sum;
  if (v == "mean") return Reduction::Mean;
  throw ConfigError("loss.contrastive_reduction must be \"sum\" or \"mean\"");
}

}  // namespace

void RunConfig::validate() const {
  synth.validate();
  train.validate();
  if (ablation_seeds.empty()) throw ConfigError("ablation.seeds must not be empty");
  if (gradcheck.seeds < 1) throw ConfigError("gradcheck.seeds must be >= 1");
  if (!(gradcheck.step > 0.0) || !(gradcheck.tolerance > 0.0)) throw ConfigError("gradcheck step/tolerance must be positive");
}

void RunConfig::override_seed(std::uint64_t seed) {
  synth.seed = seed;
  train.seed = seed;
  ablation_seeds = {seed};
}

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const json& j) {
  RunConfig c = default_config();
  Section root(j, "config");
  root.custom("synth", [&](const json& v) {
    auto& s = c.synth;
    Section(v, "synth")
        .field("n_normal_train", s.n_normal_train)
        .field("n_abnormal_train", s.n_abnormal_train)
        .field("n_normal_test", s.n_normal_test)
        .field("n_abnormal_test", s.n_abnormal_test)
        .field("snippets", s.snippets)
        .field("frames_per_snippet", s.frames_per_snippet)
        .field("feature_dim", s.feature_dim)
        .field("anomaly_shift", s.anomaly_shift)
        .field("subtle_fraction", s.subtle_fraction)
        .field("edge_blend", s.edge_blend)
        .field("distractor_prob", s.distractor_prob)
        .field("region_len_min", s.region_len_min)
        .field("region_len_max", s.region_len_max)
        .field("max_regions", s.max_regions)
        .field("orthogonal_mixing", s.orthogonal_mixing)
        .field("seed", s.seed)
        .run();
  });
  root.custom("encoder", [&](const json& v) {
    auto& e = c.train.encoder;
    Section(v, "encoder")
        .field("snippets", e.snippets)
        .field("input_dim", e.input_dim)
        .field("model_dim", e.model_dim)
        .field("heads", e.heads)
        .field("depth", e.depth)
        .field("conv_width", e.conv_width)
        .field("dropout_rate", e.dropout_rate)
        .field("use_transformer", e.use_transformer)
        .field("positional_embedding", e.positional_embedding)
        .run();
  });
  root.custom("loss", [&](const json& v) {
    auto& l = c.train.loss;
    Section(v, "loss")
        .field("k", l.k)
        .field("alpha", l.alpha)
        .field("beta", l.beta)
        .field("tau", l.tau)
        .custom("pairing", [&](const json& p) { l.pairing = parse_pairing(p); })
        .custom("contrastive_reduction", [&](const json& r) { l.contrastive_reduction = parse_reduction(r); })
        .custom("weights",
                [&](const json& w) {
                  Section(w, "loss.weights")
                      .field("contrastive", l.weights.contrastive)
                      .field("snippet", l.weights.snippet)
                      .field("video", l.weights.video)
                      .field("regularisation", l.weights.regularisation)
                      .run();
                })
        .run();
  });
  root.custom("mining", [&](const json& v) {
    auto& m = c.train.mining;
    Section(v, "mining")
        .field("threshold", m.threshold)
        .field("erosion_width", m.erosion_width)
        .field("region_length", m.region_length)
        .field("region_min_count", m.region_min_count)
        .field("k_hard_normal", m.k_hard_normal)
        .field("k_easy", m.k_easy)
        .run();
  });
  root.custom("train", [&](const json& v) {
    auto& t = c.train;
    Section(v, "train")
        .field("epochs", t.epochs)
        .field("lr", t.adam.lr)
        .field("beta1", t.adam.beta1)
        .field("beta2", t.adam.beta2)
        .field("eps", t.adam.eps)
        .field("weight_decay", t.adam.weight_decay)
        .field("batch_normal", t.batch_normal)
        .field("batch_abnormal", t.batch_abnormal)
        .field("seed", t.seed)
        .field("mining_warmup_epochs", t.mining_warmup_epochs)
        .run();
  });
  root.custom("ablation", [&](const json& v) {
    Section(v, "ablation").field("seeds", c.ablation_seeds).run();
  });
  root.custom("gradcheck", [&](const json& v) {
    Section(v, "gradcheck")
        .field("seeds", c.gradcheck.seeds)
        .field("step", c.gradcheck.step)
        .field("tolerance", c.gradcheck.tolerance)
        .run();
  });
  root.run();
  c.validate();
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const RunConfig& c) {
  const auto& s = c.synth;
  const auto& t = c.train;
  const auto& e = t.encoder;
  const auto& l = t.loss;
  const auto& m = t.mining;
  return json{
      {"synth",
       {{"n_normal_train", s.n_normal_train},
        {"n_abnormal_train", s.n_abnormal_train},
        {"n_normal_test", s.n_normal_test},
        {"n_abnormal_test", s.n_abnormal_test},
        {"snippets", s.snippets},
        {"frames_per_snippet", s.frames_per_snippet},
        {"feature_dim", s.feature_dim},
        {"anomaly_shift", s.anomaly_shift},
        {"subtle_fraction", s.subtle_fraction},
        {"edge_blend", s.edge_blend},
        {"distractor_prob", s.distractor_prob},
        {"region_len_min", s.region_len_min},
        {"region_len_max", s.region_len_max},
        {"max_regions", s.max_regions},
        {"orthogonal_mixing", s.orthogonal_mixing},
        {"seed", s.seed}}},
      {"encoder",
       {{"snippets", e.snippets},
        {"input_dim", e.input_dim},
        {"model_dim", e.model_dim},
        {"heads", e.heads},
        {"depth", e.depth},
        {"conv_width", e.conv_width},
        {"dropout_rate", e.dropout_rate},
        {"use_transformer", e.use_transformer},
        {"positional_embedding", e.positional_embedding}}},
      {"loss",
       {{"k", l.k},
        {"alpha", l.alpha},
        {"beta", l.beta},
        {"tau", l.tau},
        {"pairing", l.pairing == PairingRule::Matched ? "matched" : "all_pairs"},
        {"contrastive_reduction", l.contrastive_reduction == Reduction::Sum ? "sum" : "mean"},
        {"weights",
         {{"contrastive", l.weights.contrastive},
          {"snippet", l.weights.snippet},
          {"video", l.weights.video},
          {"regularisation", l.weights.regularisation}}}}},
      {"mining",
       {{"threshold", m.threshold},
        {"erosion_width", m.erosion_width},
        {"region_length", m.region_length},
        {"region_min_count", m.region_min_count},
        {"k_hard_normal", m.k_hard_normal},
        {"k_easy", m.k_easy}}},
      {"train",
       {{"epochs", t.epochs},
        {"lr", t.adam.lr},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"eps", t.adam.eps},
        {"weight_decay", t.adam.weight_decay},
        {"batch_normal", t.batch_normal},
        {"batch_abnormal", t.batch_abnormal},
        {"seed", t.seed},
        {"mining_warmup_epochs", t.mining_warmup_epochs}}},
      {"ablation", {{"seeds", c.ablation_seeds}}},
      {"gradcheck", {{"seeds", c.gradcheck.seeds}, {"step", c.gradcheck.step}, {"tolerance", c.gradcheck.tolerance}}}};
}

}  // namespace wvad
