#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vfd/numerics/rng.hpp"
#include "vfd/numerics/tensor.hpp"

namespace vfd::encoder {

inline constexpr double kInitStddev = 0.02;

// Geometry and width of one modality's identity encoder.
struct EncoderConfig {
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t token_dim = 64;
  std::size_t output_dim = 64;
  std::size_t patch_h = 16;
  std::size_t patch_w = 16;
  std::size_t channels = 3;
  std::size_t input_h = 224;
  std::size_t input_w = 224;
  std::size_t num_identities = 2;
  // Feed-forward sub-layer after attention in every block.
  bool feed_forward = true;
  // Bare attention blocks: one head, softmax(QK^T / sqrt(D)) V, no norms,
  // residuals, output projection or feed-forward.
  bool literal_mode = false;

  static EncoderConfig face_default();
  static EncoderConfig voice_default();
  // 12 blocks x 12 heads at width 768; documented, not exercised at desk scale.
  static EncoderConfig full_scale(EncoderConfig base);

  std::size_t grid_h() const { return input_h / patch_h; }
  std::size_t grid_w() const { return input_w / patch_w; }
  std::size_t num_patches() const { return grid_h() * grid_w(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return channels * patch_h * patch_w; }
  std::size_t head_dim() const { return token_dim / heads; }

  // Throws ConfigError describing the first violated constraint.
  void validate() const;
  // Numeric encoding used by checkpoints and the config hash.
  std::vector<double> to_vector() const;
  static EncoderConfig from_vector(const std::vector<double>& values);
  bool operator==(const EncoderConfig&) const = default;
};

struct BlockState {
  num::Tensor norm1_gain, norm1_bias;
  num::Tensor w_q, w_k, w_v;  // [D x D]
  num::Tensor w_o, b_o;       // attention output map
  num::Tensor norm2_gain, norm2_bias;
  num::Tensor ff1_w, ff1_b;  // [D x 4D]
  num::Tensor ff2_w, ff2_b;  // [4D x D]
};

struct EncoderState {
  EncoderConfig config;
  num::Tensor patch_kernel;  // [patch_dim x D]
  num::Tensor patch_bias;    // [D]
  num::Tensor class_token;   // [1 x D]
  num::Tensor positions;     // [F' x D]
  std::vector<BlockState> blocks;
  num::Tensor final_gain, final_bias;
  num::Tensor out_w;       // [D x V]
  num::Tensor out_b;       // [V]
  num::Tensor classifier;  // [C x V]

  // Parameters in a fixed order, names prefixed with `prefix`.
  num::ParameterList parameters(const std::string& prefix) const;
  EncoderState clone() const;
};

// Weight matrices, class token and positional table ~ N(0, 0.02^2); biases
// zero; norm gains one.
EncoderState init_encoder(const EncoderConfig& config, num::Rng& rng);

// [C x H x W] (or [H x W] for one channel) -> [F x D], raster patch order.
num::Tensor patch_project(num::Tape& tape, const num::Tensor& input, const EncoderState& state);
// [F x D] -> [F' x D]: class token prepended, positional table added.
num::Tensor add_class_and_position(num::Tape& tape, const num::Tensor& patches,
                                   const EncoderState& state);
// With class_row_only the block returns just the class row [1 x D]; keys
// and values still come from every token.
num::Tensor attention_block(num::Tape& tape, const num::Tensor& tokens, const BlockState& block,
                            const EncoderConfig& config, bool class_row_only = false);
// Row-stochastic attention weights of one head, for inspection.
num::Tensor attention_weights(num::Tape& tape, const num::Tensor& tokens,
                              const BlockState& block, const EncoderConfig& config,
                              std::size_t head);

// Token rows [F x D] after patch projection -> embedding of length V.
num::Tensor encode_patches(num::Tape& tape, const num::Tensor& patches, const EncoderState& state);
num::Tensor encode(num::Tape& tape, const num::Tensor& input, const EncoderState& state);
// Identity logits W f, length C.
num::Tensor classify_identity(num::Tape& tape, const num::Tensor& embedding,
                              const EncoderState& state);

}  // namespace vfd::encoder
