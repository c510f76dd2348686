#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "binary_io.hpp"

namespace wvad {

struct EncoderConfig {
  std::size_t snippets = 32;   // T
  std::size_t input_dim = 32;  // D_in
  std::size_t model_dim = 32;  // D_model
  std::size_t heads = 4;
  std::size_t depth = 2;
  std::size_t conv_width = 3;
  double dropout_rate = 0.0;
  // false: no encoder at all, the snippet head reads raw features (the
  // linear top-k MIL baseline).
  bool use_transformer = true;
  bool positional_embedding = false;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

enum class ParamGroup { Encoder, SnippetHead, VideoHead };

struct NamedParam {
  std::string name;
  ParamGroup group;
  Tensor value;
};

// All learnable tensors, kept in declaration order. That order is the
// checkpoint order and the order of Forward::leaves().
struct ModelParams {
  EncoderConfig config;
  std::vector<NamedParam> entries;

  std::size_t count() const { return entries.size(); }
  std::size_t scalar_count() const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::size_t index_of(const std::string& name) const;
  bool all_finite() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit
// layer-norm gains.
ModelParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Creates zero-filled parameters with the layout implied by `config`.
ModelParams zero_params(const EncoderConfig& config);

struct EncodedVideo {
  Var tokens;            // [(T+1) x D_model], row 0 is the cls token
  Var snippet_features;  // rows 1..T of tokens, or the raw features for the baseline
  Var cls;               // [1 x D_model]
};

// Per-head attention weights from the last forward, for inspection.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

struct TokenProjection {
  Var depth_kernel;  // [D x W]
  Var point_kernel;  // [D x D]
  Var bias;          // [D]
};

struct AttentionParams {
  TokenProjection query, key, value;
};

// Projects tokens: the snippet rows (1..) pass through the depthwise-separable
// temporal convolution, the cls row (0) only through the pointwise kernel.
Var conv_token_projection(Var tokens, const TokenProjection& proj);

// Multi-head scaled dot-product self-attention over all T+1 tokens. Returns
// the concatenated per-head outputs (before any output projection), so each
// head's slice of a row is a convex combination of value rows.
Var multi_head_self_attention(Var tokens, const AttentionParams& params, std::size_t heads,
                              AttentionTrace* trace = nullptr);

// Binds a ModelParams onto a tape as leaves and runs the network.
class Forward {
 public:
  Forward(Tape& tape, const ModelParams& params, bool requires_grad = true);
  // Binds existing leaves (one per entry of `layout`, same shapes) instead of
  // creating new ones. Used by finite-difference checks.
  Forward(Tape& tape, const ModelParams& layout, std::span<const Var> leaves);

  EncodedVideo encode(const Tensor& features, std::mt19937_64* dropout_rng = nullptr,
                      std::vector<AttentionTrace>* traces = nullptr) const;
  Var snippet_scores(const EncodedVideo& enc) const;  // shape {T}, each in (0,1)
  Var video_score(const EncodedVideo& enc) const;     // scalar in (0,1)

  const std::vector<Var>& leaves() const noexcept { return leaves_; }
  const ModelParams& params() const noexcept { return params_; }

 private:
  Var leaf(const std::string& name) const;
  Tape& tape_;
  const ModelParams& params_;
  std::vector<Var> leaves_;
};

// Checkpoint parameter section: "WVCK", u32 version, config block, then every
// parameter tensor in declaration order as little-endian f32.
void write_params(BinaryWriter& out, const ModelParams& params);
ModelParams read_params(BinaryReader& in);
void save_params(const std::string& path, const ModelParams& params);
ModelParams load_params(const std::string& path);

// Rounds every parameter to the nearest f32 so a checkpoint round-trip is exact.
void round_to_f32(ModelParams& params);

}  // namespace wvad
