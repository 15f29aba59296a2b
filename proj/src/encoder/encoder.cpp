#include "vfd/encoder/encoder.hpp"

#include <array>
#include <cmath>

#include "vfd/errors.hpp"
#include "vfd/numerics/ops.hpp"

namespace vfd::encoder {

using num::Shape;
using num::Tape;
using num::Tensor;

EncoderConfig EncoderConfig::face_default() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::voice_default() {
  EncoderConfig config;
  config.patch_h = 32;
  config.patch_w = 20;
  config.channels = 1;
  config.input_h = 512;
  config.input_w = 300;
  return config;
}

EncoderConfig EncoderConfig::full_scale(EncoderConfig base) {
  base.depth = 12;
  base.heads = 12;
  base.token_dim = 768;
  base.output_dim = 768;
  return base;
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("encoder config: " + what); };
  if (depth == 0) fail("depth must be positive");
  if (heads == 0) fail("heads must be positive");
  if (token_dim < 2) fail("token_dim must be at least 2");
  if (output_dim == 0) fail("output_dim must be positive");
  if (token_dim % heads != 0) {
    fail("token_dim " + std::to_string(token_dim) + " is not divisible by heads " +
         std::to_string(heads));
  }
  if (patch_h == 0 || patch_w == 0) fail("patch size must be positive");
  if (channels == 0 || input_h == 0 || input_w == 0) fail("input shape must be positive");
  if (input_h % patch_h != 0 || input_w % patch_w != 0) {
    fail("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
         " is not tiled by " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
         " patches");
  }
  if (num_identities < 2) fail("num_identities must be at least 2");
  if (literal_mode && heads != 1) fail("literal_mode mode uses a single head");
}

std::vector<double> EncoderConfig::to_vector() const {
  auto d = [](std::size_t v) { return static_cast<double>(v); };
  return {d(depth),    d(heads),   d(token_dim), d(output_dim),
          d(patch_h),  d(patch_w), d(channels),  d(input_h),
          d(input_w),  d(num_identities), feed_forward ? 1.0 : 0.0,
          literal_mode ? 1.0 : 0.0};
}

EncoderConfig EncoderConfig::from_vector(const std::vector<double>& v) {
  if (v.size() != 12) throw FormatError("encoder config record must hold 12 values");
  for (double x : v) {
    if (!(x >= 0.0) || x != std::floor(x)) throw FormatError("encoder config record is corrupt");
  }
  auto s = [](double x) { return static_cast<std::size_t>(x); };
  EncoderConfig c;
  c.depth = s(v[0]);
  c.heads = s(v[1]);
  c.token_dim = s(v[2]);
  c.output_dim = s(v[3]);
  c.patch_h = s(v[4]);
  c.patch_w = s(v[5]);
  c.channels = s(v[6]);
  c.input_h = s(v[7]);
  c.input_w = s(v[8]);
  c.num_identities = s(v[9]);
  c.feed_forward = v[10] != 0.0;
  c.literal_mode = v[11] != 0.0;
  return c;
}

num::ParameterList EncoderState::parameters(const std::string& prefix) const {
  num::ParameterList out;
  auto add = [&](const std::string& name, const Tensor& t) {
    out.push_back(num::NamedParameter{prefix + name, t});
  };
  add("patch.kernel", patch_kernel);
  add("patch.bias", patch_bias);
  add("class_token", class_token);
  add("positions", positions);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockState& b = blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    if (config.literal_mode) {
      add(p + "w_q", b.w_q);
      add(p + "w_k", b.w_k);
      add(p + "w_v", b.w_v);
      continue;
    }
    add(p + "norm1.gain", b.norm1_gain);
    add(p + "norm1.bias", b.norm1_bias);
    add(p + "w_q", b.w_q);
    add(p + "w_k", b.w_k);
    add(p + "w_v", b.w_v);
    add(p + "w_o", b.w_o);
    add(p + "b_o", b.b_o);
    if (config.feed_forward) {
      add(p + "norm2.gain", b.norm2_gain);
      add(p + "norm2.bias", b.norm2_bias);
      add(p + "ff1.w", b.ff1_w);
      add(p + "ff1.b", b.ff1_b);
      add(p + "ff2.w", b.ff2_w);
      add(p + "ff2.b", b.ff2_b);
    }
  }
  if (!config.literal_mode) {
    add("final_norm.gain", final_gain);
    add("final_norm.bias", final_bias);
  }
  add("out.w", out_w);
  add("out.b", out_b);
  add("classifier", classifier);
  return out;
}

EncoderState EncoderState::clone() const {
  EncoderState copy = *this;
  auto deep = [](Tensor& t) { t = t.clone(); };
  deep(copy.patch_kernel);
  deep(copy.patch_bias);
  deep(copy.class_token);
  deep(copy.positions);
  for (BlockState& b : copy.blocks) {
    for (Tensor* t : {&b.norm1_gain, &b.norm1_bias, &b.w_q, &b.w_k, &b.w_v, &b.w_o, &b.b_o,
                      &b.norm2_gain, &b.norm2_bias, &b.ff1_w, &b.ff1_b, &b.ff2_w, &b.ff2_b}) {
      deep(*t);
    }
  }
  deep(copy.final_gain);
  deep(copy.final_bias);
  deep(copy.out_w);
  deep(copy.out_b);
  deep(copy.classifier);
  return copy;
}

EncoderState init_encoder(const EncoderConfig& config, num::Rng& rng) {
  config.validate();
  const std::size_t d = config.token_dim;
  auto weight = [&](Shape shape) {
    return num::normal_tensor(std::move(shape), kInitStddev, rng).set_requires_grad(true);
  };
  auto constant = [](Shape shape, double value) {
    return Tensor(std::move(shape), value).set_requires_grad(true);
  };

  EncoderState state;
  state.config = config;
  state.patch_kernel = weight({config.patch_dim(), d});
  state.patch_bias = constant({d}, 0.0);
  state.class_token = weight({1, d});
  state.positions = weight({config.num_tokens(), d});
  for (std::size_t i = 0; i < config.depth; ++i) {
    BlockState b;
    b.w_q = weight({d, d});
    b.w_k = weight({d, d});
    b.w_v = weight({d, d});
    if (!config.literal_mode) {
      b.norm1_gain = constant({d}, 1.0);
      b.norm1_bias = constant({d}, 0.0);
      b.w_o = weight({d, d});
      b.b_o = constant({d}, 0.0);
      if (config.feed_forward) {
        b.norm2_gain = constant({d}, 1.0);
        b.norm2_bias = constant({d}, 0.0);
        b.ff1_w = weight({d, 4 * d});
        b.ff1_b = constant({4 * d}, 0.0);
        b.ff2_w = weight({4 * d, d});
        b.ff2_b = constant({d}, 0.0);
      }
    }
    state.blocks.push_back(std::move(b));
  }
  if (!config.literal_mode) {
    state.final_gain = constant({d}, 1.0);
    state.final_bias = constant({d}, 0.0);
  }
  state.out_w = weight({d, config.output_dim});
  state.out_b = constant({config.output_dim}, 0.0);
  state.classifier = weight({config.num_identities, config.output_dim});
  return state;
}

Tensor patch_project(Tape& tape, const Tensor& input, const EncoderState& state) {
  const EncoderConfig& c = state.config;
  const Shape full{c.channels, c.input_h, c.input_w};
  const bool matches = input.shape() == full ||
                       (c.channels == 1 && input.shape() == Shape{c.input_h, c.input_w});
  if (!matches) {
    throw ConfigError("encoder expects input " + num::to_string(full) + ", got " +
                      num::to_string(input.shape()));
  }
  Tensor patches = num::patchify(tape, input, c.patch_h, c.patch_w);
  return num::add_row(tape, num::matmul(tape, patches, state.patch_kernel), state.patch_bias);
}

Tensor add_class_and_position(Tape& tape, const Tensor& patches, const EncoderState& state) {
  const std::array<Tensor, 2> parts{state.class_token, patches};
  Tensor tokens = num::concat_rows(tape, parts);
  if (tokens.shape() != state.positions.shape()) {
    throw ShapeError("token matrix " + num::to_string(tokens.shape()) +
                     " does not match positional table " +
                     num::to_string(state.positions.shape()));
  }
  return num::add(tape, tokens, state.positions);
}

namespace {

// q arrives already scaled; scaling it touches T*d values instead of T*T.
Tensor head_weights(Tape& tape, const Tensor& q, const Tensor& k, std::size_t head,
                    std::size_t head_dim) {
  Tensor qh = q.cols() == head_dim ? q : num::slice_cols(tape, q, head * head_dim, head_dim);
  Tensor kh = k.cols() == head_dim ? k : num::slice_cols(tape, k, head * head_dim, head_dim);
  return num::softmax_rows(tape, num::matmul_nt(tape, qh, kh));
}

double score_scale(const EncoderConfig& c) {
  // Literal mode divides by sqrt(D); multi-head attention by sqrt(D / heads).
  const double width = c.literal_mode ? static_cast<double>(c.token_dim)
                                           : static_cast<double>(c.head_dim());
  return 1.0 / std::sqrt(width);
}

}  // namespace

Tensor attention_weights(Tape& tape, const Tensor& tokens, const BlockState& block,
                         const EncoderConfig& config, std::size_t head) {
  if (head >= config.heads) throw ContractError("attention head index out of range");
  Tensor h = config.literal_mode
                 ? tokens
                 : num::layer_norm(tape, tokens, block.norm1_gain, block.norm1_bias);
  Tensor q = num::scale(tape, num::matmul(tape, h, block.w_q), score_scale(config));
  Tensor k = num::matmul(tape, h, block.w_k);
  return head_weights(tape, q, k, head, config.head_dim());
}

Tensor attention_block(Tape& tape, const Tensor& tokens, const BlockState& block,
                       const EncoderConfig& config, bool class_row_only) {
  const double scale = score_scale(config);
  const std::size_t head_dim = config.head_dim();
  if (config.literal_mode) {
    Tensor rows = class_row_only ? num::slice_rows(tape, tokens, 0, 1) : tokens;
    Tensor q = num::scale(tape, num::matmul(tape, rows, block.w_q), scale);
    Tensor k = num::matmul(tape, tokens, block.w_k);
    Tensor v = num::matmul(tape, tokens, block.w_v);
    return num::matmul(tape, head_weights(tape, q, k, 0, head_dim), v);
  }

  Tensor h = num::layer_norm(tape, tokens, block.norm1_gain, block.norm1_bias);
  Tensor q = num::matmul(tape, class_row_only ? num::slice_rows(tape, h, 0, 1) : h, block.w_q);
  q = num::scale(tape, q, scale);
  Tensor k = num::matmul(tape, h, block.w_k);
  Tensor v = num::matmul(tape, h, block.w_v);
  std::vector<Tensor> heads;
  heads.reserve(config.heads);
  for (std::size_t i = 0; i < config.heads; ++i) {
    Tensor weights = head_weights(tape, q, k, i, head_dim);
    Tensor vh = config.heads == 1 ? v : num::slice_cols(tape, v, i * head_dim, head_dim);
    heads.push_back(num::matmul(tape, weights, vh));
  }
  Tensor attended = config.heads == 1 ? heads[0] : num::concat_cols(tape, heads);
  Tensor projected = num::add_row(tape, num::matmul(tape, attended, block.w_o), block.b_o);
  Tensor x = num::add(tape, class_row_only ? num::slice_rows(tape, tokens, 0, 1) : tokens, projected);
  if (!config.feed_forward) return x;

  Tensor h2 = num::layer_norm(tape, x, block.norm2_gain, block.norm2_bias);
  Tensor hidden = num::gelu(tape, num::add_row(tape, num::matmul(tape, h2, block.ff1_w), block.ff1_b));
  Tensor ff = num::add_row(tape, num::matmul(tape, hidden, block.ff2_w), block.ff2_b);
  return num::add(tape, x, ff);
}

Tensor encode_patches(Tape& tape, const Tensor& patches, const EncoderState& state) {
  const EncoderConfig& c = state.config;
  Tensor tokens = add_class_and_position(tape, patches, state);
  // Non-class rows leaving the last block never reach the output.
  for (std::size_t i = 0; i < state.blocks.size(); ++i) {
    tokens = attention_block(tape, tokens, state.blocks[i], c, i + 1 == state.blocks.size());
  }
  // Only the class-token row of the final linear map is read out, so the
  // map is applied to that row alone.
  Tensor cls = num::slice_rows(tape, tokens, 0, 1);
  if (!c.literal_mode) cls = num::layer_norm(tape, cls, state.final_gain, state.final_bias);
  Tensor out = num::add_row(tape, num::matmul(tape, cls, state.out_w), state.out_b);
  return num::reshape(tape, out, Shape{c.output_dim});
}

Tensor encode(Tape& tape, const Tensor& input, const EncoderState& state) {
  return encode_patches(tape, patch_project(tape, input, state), state);
}

Tensor classify_identity(Tape& tape, const Tensor& embedding, const EncoderState& state) {
  if (embedding.size() != state.config.output_dim) {
    throw ShapeError("embedding of shape " + num::to_string(embedding.shape()) +
                     " does not match encoder output_dim " +
                     std::to_string(state.config.output_dim));
  }
  Tensor row = num::reshape(tape, embedding, Shape{1, state.config.output_dim});
  Tensor logits = num::matmul_nt(tape, row, state.classifier);
  return num::reshape(tape, logits, Shape{state.config.num_identities});
}

}  // namespace vfd::encoder
