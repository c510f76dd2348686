#include "encoder.hpp"

#include <cmath>
#include <fstream>

#include "error.hpp"

namespace wvad {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kFlagTransformer = 1u << 0;
constexpr std::uint32_t kFlagPositional = 1u << 1;

void add(ModelParams& p, std::string name, ParamGroup g, Shape shape) {
  p.entries.push_back({std::move(name), g, Tensor(std::move(shape), 0.0)});
}

bool is_bias_like(const std::string& name) {
  return name.ends_with(".bias");
}
}  // namespace

void EncoderConfig::validate() const {
  if (snippets < 1) throw ConfigError("snippets must be >= 1");
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must lie in [0,1)");
  if (!use_transformer) return;
  if (model_dim < 1) throw ConfigError("model_dim must be >= 1");
  if (heads < 1 || model_dim % heads != 0)
    throw ConfigError("model_dim (" + std::to_string(model_dim) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (conv_width < 1 || conv_width % 2 == 0) throw ConfigError("conv_width must be odd");
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

std::size_t ModelParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return i;
  throw ArgumentError("no parameter named " + name);
}

const Tensor& ModelParams::get(const std::string& name) const { return entries[index_of(name)].value; }
Tensor& ModelParams::get(const std::string& name) { return entries[index_of(name)].value; }

bool ModelParams::all_finite() const {
  for (const auto& e : entries)
    if (!e.value.all_finite()) return false;
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config) || a.entries.size() != b.entries.size()) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i)
    if (a.entries[i].name != b.entries[i].name || !(a.entries[i].value == b.entries[i].value)) return false;
  return true;
}

ModelParams zero_params(const EncoderConfig& c) {
  c.validate();
  ModelParams p;
  p.config = c;
  if (!c.use_transformer) {
    add(p, "snippet_head.weight", ParamGroup::SnippetHead, {c.input_dim, 1});
    add(p, "snippet_head.bias", ParamGroup::SnippetHead, {1});
    add(p, "video_head.weight", ParamGroup::VideoHead, {c.input_dim, 1});
    add(p, "video_head.bias", ParamGroup::VideoHead, {1});
    return p;
  }
  const std::size_t D = c.model_dim;
  add(p, "input.weight", ParamGroup::Encoder, {c.input_dim, D});
  add(p, "input.bias", ParamGroup::Encoder, {D});
  add(p, "cls_token", ParamGroup::Encoder, {1, D});
  if (c.positional_embedding) add(p, "position", ParamGroup::Encoder, {c.snippets, D});
  for (std::size_t b = 0; b < c.depth; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    for (const char* qkv : {"query", "key", "value"}) {
      add(p, pre + qkv + ".depth", ParamGroup::Encoder, {D, c.conv_width});
      add(p, pre + qkv + ".point", ParamGroup::Encoder, {D, D});
      add(p, pre + qkv + ".bias", ParamGroup::Encoder, {D});
    }
    add(p, pre + "out.weight", ParamGroup::Encoder, {D, D});
    add(p, pre + "out.bias", ParamGroup::Encoder, {D});
    add(p, pre + "norm.gain", ParamGroup::Encoder, {D});
    add(p, pre + "norm.bias", ParamGroup::Encoder, {D});
    add(p, pre + "ff1.weight", ParamGroup::Encoder, {D, 2 * D});
    add(p, pre + "ff1.bias", ParamGroup::Encoder, {2 * D});
    add(p, pre + "ff2.weight", ParamGroup::Encoder, {2 * D, D});
    add(p, pre + "ff2.bias", ParamGroup::Encoder, {D});
  }
  add(p, "snippet_head.weight", ParamGroup::SnippetHead, {D, 1});
  add(p, "snippet_head.bias", ParamGroup::SnippetHead, {1});
  add(p, "video_head.weight", ParamGroup::VideoHead, {D, 1});
  add(p, "video_head.bias", ParamGroup::VideoHead, {1});
  return p;
}

ModelParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  ModelParams p = zero_params(config);
  std::mt19937_64 rng(seed);
  for (auto& e : p.entries) {
    if (e.name.ends_with(".gain")) {
      e.value.fill(1.0);
      continue;
    }
    if (is_bias_like(e.name)) continue;
    // Depth kernels mix W taps; every other matrix mixes its row count. The
    // cls token and positional table are scaled like a model_dim fan-in.
    std::size_t fan_in = e.value.rows();
    if (e.name.ends_with(".depth")) fan_in = e.value.cols();
    if (e.name == "cls_token" || e.name == "position") fan_in = e.value.cols();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : e.value.data()) v = u(rng);
  }
  round_to_f32(p);
  return p;
}

void round_to_f32(ModelParams& params) {
  for (auto& e : params.entries)
    for (double& v : e.value.data()) v = static_cast<double>(static_cast<float>(v));
}

Var conv_token_projection(Var tokens, const TokenProjection& proj) {
  const std::size_t rows = tokens.value().rows();
  Var cls = ops::slice_rows(tokens, 0, 1);
  Var cls_proj = ops::matmul(cls, proj.point_kernel);
  if (rows == 1) return ops::add_row(cls_proj, proj.bias);
  Var snippets = ops::slice_rows(tokens, 1, rows - 1);
  Var conv = ops::dws_conv1d(snippets, proj.depth_kernel, proj.point_kernel);
  const Var parts[] = {cls_proj, conv};
  return ops::add_row(ops::concat_rows(parts), proj.bias);
}

Var multi_head_self_attention(Var tokens, const AttentionParams& params, std::size_t heads, AttentionTrace* trace) {
  const std::size_t D = tokens.value().cols();
  if (heads == 0 || D % heads != 0)
    throw ConfigError("attention width " + std::to_string(D) + " is not divisible by " + std::to_string(heads) + " heads");
  Var q = conv_token_projection(tokens, params.query);
  Var k = conv_token_projection(tokens, params.key);
  Var v = conv_token_projection(tokens, params.value);
  const std::size_t dh = D / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  if (trace) trace->weights.clear();
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = ops::slice_cols(q, h * dh, dh);
    Var kh = ops::slice_cols(k, h * dh, dh);
    Var vh = ops::slice_cols(v, h * dh, dh);
    Var attn = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt));
    if (trace) trace->weights.push_back(attn.value());
    outs.push_back(ops::matmul(attn, vh));
  }
  return heads == 1 ? outs[0] : ops::concat_cols(outs);
}

Forward::Forward(Tape& tape, const ModelParams& params, bool requires_grad) : tape_(tape), params_(params) {
  leaves_.reserve(params.entries.size());
  for (const auto& e : params.entries) leaves_.push_back(tape.leaf(e.value, requires_grad));
}

Forward::Forward(Tape& tape, const ModelParams& layout, std::span<const Var> leaves)
    : tape_(tape), params_(layout), leaves_(leaves.begin(), leaves.end()) {
  if (leaves_.size() != layout.entries.size()) throw ArgumentError("Forward: one leaf per parameter");
  for (std::size_t i = 0; i < leaves_.size(); ++i)
    if (leaves_[i].shape() != layout.entries[i].value.shape())
      throw DimensionError("Forward: leaf " + layout.entries[i].name + " has shape " + shape_string(leaves_[i].shape()));
}

Var Forward::leaf(const std::string& name) const { return leaves_[params_.index_of(name)]; }

EncodedVideo Forward::encode(const Tensor& features, std::mt19937_64* dropout_rng,
                             std::vector<AttentionTrace>* traces) const {
  const EncoderConfig& c = params_.config;
  if (features.rank() != 2 || features.cols() != c.input_dim || features.rows() < 1)
    throw DimensionError("features " + shape_string(features.shape()) + " do not match input_dim " +
                         std::to_string(c.input_dim));
  Var raw = tape_.constant(features);
  if (!c.use_transformer) return EncodedVideo{raw, raw, Var()};
  if (c.positional_embedding && features.rows() != c.snippets)
    throw DimensionError("positional embedding needs exactly " + std::to_string(c.snippets) + " snippets");

  Var x = ops::add_row(ops::matmul(raw, leaf("input.weight")), leaf("input.bias"));
  if (c.positional_embedding) x = ops::add(x, leaf("position"));
  const Var parts[] = {leaf("cls_token"), x};
  Var tokens = ops::concat_rows(parts);
  const double rate = dropout_rng ? c.dropout_rate : 0.0;
  if (traces) traces->clear();

  for (std::size_t b = 0; b < c.depth; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    auto proj = [&](const std::string& which) {
      return TokenProjection{leaf(pre + which + ".depth"), leaf(pre + which + ".point"), leaf(pre + which + ".bias")};
    };
    AttentionParams ap{proj("query"), proj("key"), proj("value")};
    AttentionTrace trace;
    Var attn = multi_head_self_attention(tokens, ap, c.heads, traces ? &trace : nullptr);
    if (traces) traces->push_back(std::move(trace));
    Var attn_out = ops::add_row(ops::matmul(attn, leaf(pre + "out.weight")), leaf(pre + "out.bias"));
    if (rate > 0.0) attn_out = ops::dropout(attn_out, rate, *dropout_rng);
    Var h = ops::layer_norm(ops::add(tokens, attn_out), leaf(pre + "norm.gain"), leaf(pre + "norm.bias"));
    Var ff = ops::gelu(ops::add_row(ops::matmul(h, leaf(pre + "ff1.weight")), leaf(pre + "ff1.bias")));
    ff = ops::add_row(ops::matmul(ff, leaf(pre + "ff2.weight")), leaf(pre + "ff2.bias"));
    if (rate > 0.0) ff = ops::dropout(ff, rate, *dropout_rng);
    tokens = ops::add(h, ff);
  }
  const std::size_t T = features.rows();
  return EncodedVideo{tokens, ops::slice_rows(tokens, 1, T), ops::slice_rows(tokens, 0, 1)};
}

Var Forward::snippet_scores(const EncodedVideo& enc) const {
  Var logits = ops::add_row(ops::matmul(enc.snippet_features, leaf("snippet_head.weight")), leaf("snippet_head.bias"));
  return ops::reshape(ops::sigmoid(logits), {enc.snippet_features.value().rows()});
}

Var Forward::video_score(const EncodedVideo& enc) const {
  Var pooled = enc.cls;
  if (!params_.config.use_transformer) {
    const std::size_t T = enc.snippet_features.value().rows();
    Var avg = tape_.constant(Tensor({1, T}, 1.0 / static_cast<double>(T)));
    pooled = ops::matmul(avg, enc.snippet_features);
  }
  Var logit = ops::add_row(ops::matmul(pooled, leaf("video_head.weight")), leaf("video_head.bias"));
  return ops::reshape(ops::sigmoid(logit), {1});
}

void write_params(BinaryWriter& out, const ModelParams& params) {
  const EncoderConfig& c = params.config;
  out.magic("WVCK");
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(c.snippets));
  out.u32(static_cast<std::uint32_t>(c.input_dim));
  out.u32(static_cast<std::uint32_t>(c.model_dim));
  out.u32(static_cast<std::uint32_t>(c.heads));
  out.u32(static_cast<std::uint32_t>(c.depth));
  out.u32(static_cast<std::uint32_t>(c.conv_width));
  out.u32((c.use_transformer ? kFlagTransformer : 0u) | (c.positional_embedding ? kFlagPositional : 0u));
  out.f32(static_cast<float>(c.dropout_rate));
  for (const auto& e : params.entries)
    for (double v : e.value.data()) out.f32(static_cast<float>(v));
}

ModelParams read_params(BinaryReader& in) {
  in.expect_magic("WVCK");
  const auto version_at = in.offset();
  if (const auto v = in.u32(); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);
  const auto config_at = in.offset();
  EncoderConfig c;
  c.snippets = in.u32();
  c.input_dim = in.u32();
  c.model_dim = in.u32();
  c.heads = in.u32();
  c.depth = in.u32();
  c.conv_width = in.u32();
  const auto flags = in.u32();
  c.use_transformer = (flags & kFlagTransformer) != 0;
  c.positional_embedding = (flags & kFlagPositional) != 0;
  c.dropout_rate = static_cast<double>(in.f32());
  constexpr std::size_t kLimit = 1u << 16;
  if (c.snippets > kLimit || c.input_dim > kLimit || c.model_dim > kLimit || c.depth > 1024 || c.conv_width > 1024)
    throw FormatError("implausible model dimensions in checkpoint", config_at);
  ModelParams p;
  try {
    p = zero_params(c);
  } catch (const ConfigError& e) {
    throw FormatError(e.what(), config_at);
  }
  for (auto& e : p.entries)
    for (double& v : e.value.data()) v = static_cast<double>(in.f32());
  return p;
}

void save_params(const std::string& path, const ModelParams& params) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  BinaryWriter w(f);
  write_params(w, params);
  f.flush();
  if (!f) throw IoError("failed writing " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  BinaryReader r(f);
  return read_params(r);
}

}  // namespace wvad
