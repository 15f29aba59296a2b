#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "vfd/encoder/encoder.hpp"
#include "vfd/encoder/model.hpp"
#include "vfd/errors.hpp"
#include "vfd/numerics/gradcheck.hpp"
#include "vfd/numerics/ops.hpp"
#include "vfd/objectives/objectives.hpp"

using namespace vfd;
using encoder::EncoderConfig;
using encoder::EncoderState;
using num::Tape;
using num::Tensor;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.depth = 1;
  c.heads = 2;
  c.token_dim = 4;
  c.output_dim = 3;
  c.patch_h = 2;
  c.patch_w = 2;
  c.channels = 1;
  c.input_h = 4;
  c.input_w = 4;
  c.num_identities = 3;
  return c;
}

// Redraws every parameter at a scale where the nonlinearities matter.
void roughen(EncoderState& state, std::uint64_t seed) {
  num::Rng rng(seed);
  for (auto& p : state.parameters("")) {
    for (double& v : p.tensor.values()) v = 0.5 * rng.normal() + (p.name.find("gain") != std::string::npos ? 1.0 : 0.0);
  }
}

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Matrix mm(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Matrix layer_norm_ref(const Matrix& x, const Tensor& g, const Tensor& b) {
  Matrix out = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    double mu = 0.0;
    for (double v : x[r]) mu += v;
    mu /= static_cast<double>(x[r].size());
    double var = 0.0;
    for (double v : x[r]) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x[r].size());
    for (std::size_t c = 0; c < x[r].size(); ++c) out[r][c] = (x[r][c] - mu) / std::sqrt(var + 1e-5) * g[c] + b[c];
  }
  return out;
}

void add_bias(Matrix& m, const Tensor& b) {
  for (auto& row : m)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
}

// Pre-norm multi-head attention and GELU feed-forward with plain loops.
Matrix block_reference(const Matrix& x, const encoder::BlockState& blk, const EncoderConfig& c) {
  const std::size_t t = x.size();
  const std::size_t hd = c.head_dim();
  const Matrix h = layer_norm_ref(x, blk.norm1_gain, blk.norm1_bias);
  const Matrix q = mm(h, to_matrix(blk.w_q));
  const Matrix k = mm(h, to_matrix(blk.w_k));
  const Matrix v = mm(h, to_matrix(blk.w_v));
  Matrix att(t, std::vector<double>(c.token_dim, 0.0));
  for (std::size_t head = 0; head < c.heads; ++head) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> s(t);
      double mx = -1e300;
      for (std::size_t j = 0; j < t; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < hd; ++d) dot += q[i][head * hd + d] * k[j][head * hd + d];
        s[j] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t d = 0; d < hd; ++d) att[i][head * hd + d] += s[j] / z * v[j][head * hd + d];
    }
  }
  Matrix proj = mm(att, to_matrix(blk.w_o));
  add_bias(proj, blk.b_o);
  Matrix res = x;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t d = 0; d < c.token_dim; ++d) res[i][d] += proj[i][d];
  Matrix hidden = mm(layer_norm_ref(res, blk.norm2_gain, blk.norm2_bias), to_matrix(blk.ff1_w));
  add_bias(hidden, blk.ff1_b);
  for (auto& row : hidden)
    for (double& e : row) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
  Matrix ff = mm(hidden, to_matrix(blk.ff2_w));
  add_bias(ff, blk.ff2_b);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t d = 0; d < c.token_dim; ++d) res[i][d] += ff[i][d];
  return res;
}

}  // namespace

TEST(PatchProject, FaceAndVoiceTokenCounts) {
  num::Rng rng(1);
  EncoderState face = encoder::init_encoder(EncoderConfig::face_default(), rng);
  EncoderState voice = encoder::init_encoder(EncoderConfig::voice_default(), rng);
  Tape tape = Tape::inference();
  EXPECT_EQ(encoder::patch_project(tape, Tensor({3, 224, 224}, 0.1), face).shape(), (num::Shape{196, 64}));
  EXPECT_EQ(encoder::patch_project(tape, Tensor({1, 512, 300}, 0.1), voice).shape(), (num::Shape{240, 64}));
  EXPECT_THROW(encoder::patch_project(tape, Tensor({3, 200, 224}), face), ConfigError);
}

TEST(PatchProject, ConstantInputGivesIdenticalRows) {
  num::Rng rng(2);
  EncoderState s = encoder::init_encoder(tiny_config(), rng);
  for (std::size_t j = 0; j < s.patch_kernel.cols(); ++j)
    for (std::size_t i = 0; i < s.patch_kernel.rows(); ++i) s.patch_kernel.at(i, j) = 1.0 / s.patch_kernel.rows();
  Tape tape = Tape::inference();
  Tensor rows = encoder::patch_project(tape, Tensor({1, 4, 4}, 0.7), s);
  for (std::size_t r = 1; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < rows.cols(); ++c) EXPECT_EQ(rows.at(r, c), rows.at(0, c));
  EXPECT_NEAR(rows.at(0, 0), 0.7, 1e-15);
}

TEST(ClassAndPosition, ZeroEncodingPrependsClassRow) {
  EncoderConfig c = tiny_config();
  c.token_dim = 2;
  c.heads = 1;
  c.input_h = 2;
  c.input_w = 4;  // F = 2
  num::Rng rng(3);
  EncoderState s = encoder::init_encoder(c, rng);
  for (double& v : s.class_token.values()) v = 0.0;
  for (double& v : s.positions.values()) v = 0.0;
  Tape tape = Tape::inference();
  Tensor m = encoder::add_class_and_position(tape, Tensor::matrix(2, 2, {1, 2, 3, 4}), s);
  EXPECT_EQ(std::vector<double>(m.values().begin(), m.values().end()), (std::vector<double>{0, 0, 1, 2, 3, 4}));
}

TEST(ClassAndPosition, AdditiveAndUnitGradient) {
  num::Rng rng(4);
  EncoderState s = encoder::init_encoder(tiny_config(), rng);
  Tensor patches = num::normal_tensor({4, 4}, 1.0, rng);
  Tape tape;
  s.positions.drop_grad();
  Tensor m = encoder::add_class_and_position(tape, patches, s);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(m.at(0, c), s.class_token.at(0, c) + s.positions.at(0, c));
  for (std::size_t r = 1; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(m.at(r, c), patches.at(r - 1, c) + s.positions.at(r, c));
  tape.backward(num::sum(tape, m));
  for (double g : s.positions.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Attention, EqualScoresGiveUniformWeights) {
  EncoderConfig c = tiny_config();
  c.heads = 1;
  num::Rng rng(5);
  EncoderState s = encoder::init_encoder(c, rng);
  for (double& v : s.blocks[0].w_q.values()) v = 0.0;
  Tape tape = Tape::inference();
  Tensor w = encoder::attention_weights(tape, num::normal_tensor({5, 4}, 1.0, rng), s.blocks[0], c, 0);
  for (double v : w.values()) EXPECT_NEAR(v, 1.0 / 5.0, 1e-15);
}

TEST(Attention, RowsSumToOne) {
  EncoderConfig c = tiny_config();
  num::Rng rng(6);
  EncoderState s = encoder::init_encoder(c, rng);
  roughen(s, 60);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape = Tape::inference();
    Tensor tokens = num::normal_tensor({5, 4}, 2.0, rng);
    for (std::size_t h = 0; h < c.heads; ++h) {
      Tensor w = encoder::attention_weights(tape, tokens, s.blocks[0], c, h);
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) total += w.at(r, j);
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(Attention, TwoTokenHandComputation) {
  // Literal single-head block: softmax(X Wq (X Wk)^T / sqrt(2)) X Wv.
  EncoderConfig c = tiny_config();
  c.token_dim = 2;
  c.heads = 1;
  c.literal_mode = true;
  num::Rng rng(7);
  EncoderState s = encoder::init_encoder(c, rng);
  auto& b = s.blocks[0];
  std::copy_n(std::vector<double>{1, 0, 0, 1}.begin(), 4, b.w_q.values().begin());
  std::copy_n(std::vector<double>{1, 0, 0, 1}.begin(), 4, b.w_k.values().begin());
  std::copy_n(std::vector<double>{1, 2, 3, 4}.begin(), 4, b.w_v.values().begin());
  Tape tape = Tape::inference();
  Tensor out = encoder::attention_block(tape, Tensor::matrix(2, 2, {1, 0, 0, 1}), b, c);
  // Scores are diag(1/sqrt2): the matching token gets weight a.
  const double a = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
  EXPECT_NEAR(out.at(0, 0), a * 1 + (1 - a) * 3, 1e-9);
  EXPECT_NEAR(out.at(0, 1), a * 2 + (1 - a) * 4, 1e-9);
  EXPECT_NEAR(out.at(1, 0), (1 - a) * 1 + a * 3, 1e-9);
  EXPECT_NEAR(out.at(1, 1), (1 - a) * 2 + a * 4, 1e-9);
}

TEST(Attention, FullBlockMatchesLoopReference) {
  EncoderConfig c = tiny_config();
  c.token_dim = 8;
  num::Rng rng(8);
  EncoderState s = encoder::init_encoder(c, rng);
  roughen(s, 80);
  Tensor tokens = num::normal_tensor({5, 8}, 1.0, rng);
  Tape tape = Tape::inference();
  Tensor out = encoder::attention_block(tape, tokens, s.blocks[0], c);
  Tensor cls = encoder::attention_block(tape, tokens, s.blocks[0], c, true);
  const Matrix ref = block_reference(to_matrix(tokens), s.blocks[0], c);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(out.at(r, d), ref[r][d], 1e-12);
  ASSERT_EQ(cls.shape(), (num::Shape{1, 8}));
  for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(cls.at(0, d), ref[0][d], 1e-12);
}

TEST(Encode, ShapeChainAndDeterminism) {
  auto model = encoder::VfdModel::create(EncoderConfig::voice_default(), EncoderConfig::face_default(), 9);
  num::Rng rng(10);
  Tensor face = num::normal_tensor({3, 224, 224}, 0.5, rng);
  Tensor spec = num::normal_tensor({1, 512, 300}, 1.0, rng);
  Tape tape = Tape::inference();
  Tensor f1 = encoder::encode(tape, face, model.face);
  Tensor f2 = encoder::encode(tape, face, model.face);
  Tensor v = encoder::encode(tape, spec, model.voice);
  EXPECT_EQ(f1.shape(), (num::Shape{64}));
  EXPECT_EQ(v.shape(), (num::Shape{64}));
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(f1[i], f2[i]);
  EXPECT_TRUE(f1.all_finite());
  EXPECT_TRUE(v.all_finite());
  EXPECT_EQ(encoder::add_class_and_position(tape, encoder::patch_project(tape, face, model.face), model.face).rows(), 197u);
  EXPECT_EQ(encoder::add_class_and_position(tape, encoder::patch_project(tape, spec, model.voice), model.voice).rows(), 241u);
}

TEST(Encode, PositionalTableBreaksPermutationSymmetry) {
  EncoderConfig c = tiny_config();
  num::Rng rng(11);
  EncoderState s = encoder::init_encoder(c, rng);
  roughen(s, 110);
  Tensor patches = num::normal_tensor({4, 4}, 1.0, rng);
  Tensor swapped = patches.clone();
  for (std::size_t d = 0; d < 4; ++d) std::swap(swapped.at(1, d), swapped.at(3, d));
  Tape tape = Tape::inference();

  for (double& v : s.positions.values()) v = 0.0;
  Tensor a = encoder::encode_patches(tape, patches, s);
  Tensor b = encoder::encode_patches(tape, swapped, s);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);

  num::Rng pos_rng(12);
  for (double& v : s.positions.values()) v = pos_rng.normal();
  a = encoder::encode_patches(tape, patches, s);
  b = encoder::encode_patches(tape, swapped, s);
  double max_delta = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) max_delta = std::max(max_delta, std::abs(a[i] - b[i]));
  EXPECT_GT(max_delta, 1e-6);
}

TEST(Classify, IdentityLikeAndZeroEmbedding) {
  EncoderConfig c = tiny_config();
  c.output_dim = 3;
  c.num_identities = 3;
  num::Rng rng(13);
  EncoderState s = encoder::init_encoder(c, rng);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) s.classifier.at(i, j) = i == j ? 1.0 : 0.0;
  Tape tape = Tape::inference();
  Tensor logits = encoder::classify_identity(tape, Tensor::vector({1, 0, 0}), s);
  EXPECT_EQ(std::vector<double>(logits.values().begin(), logits.values().end()), (std::vector<double>{1, 0, 0}));
  roughen(s, 130);
  Tensor zero = encoder::classify_identity(tape, Tensor::vector({0, 0, 0}), s);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
}

TEST(Classify, GradientMatchesFiniteDifferences) {
  num::Rng rng(14);
  EncoderState s = encoder::init_encoder(tiny_config(), rng);
  roughen(s, 140);
  Tensor f = num::normal_tensor({3}, 1.0, rng);
  Tensor w = num::normal_tensor({3}, 1.0, rng);
  auto loss = [&](Tape& t, const Tensor& emb) { return num::sum(t, num::mul(t, encoder::classify_identity(t, emb, s), w)); };
  Tensor x = f.clone().set_requires_grad(true);
  Tape tape;
  tape.backward(loss(tape, x));
  Tensor numeric = num::finite_difference_gradient([&](const Tensor& p) { Tape t = Tape::inference(); return loss(t, p).item(); }, f, 1e-5);
  EXPECT_LE(num::relative_error(x.grad(), numeric.values()), 1e-6);
}

TEST(Encode, TinyConfigGradientCheckOverEveryParameter) {
  for (bool literal : {false, true}) {
    EncoderConfig c = tiny_config();
    if (literal) {
      c.heads = 1;
      c.literal_mode = true;
    }
    num::Rng rng(15);
    EncoderState s = encoder::init_encoder(c, rng);
    roughen(s, 150);
    Tensor input = num::normal_tensor({1, 4, 4}, 1.0, rng);
    Tensor w = num::normal_tensor({c.output_dim}, 1.0, rng);
    auto loss_value = [&]() {
      Tape t = Tape::inference();
      Tensor f = encoder::encode(t, input, s);
      double total = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) total += f[i] * w[i];
      return total;
    };
    num::ParameterList params = s.parameters("");
    for (auto& p : params) p.tensor.drop_grad();
    Tape tape;
    tape.backward(num::sum(tape, num::mul(tape, encoder::encode(tape, input, s), w)));
    for (auto& p : params) {
      if (p.name == "classifier") continue;
      Tensor original = p.tensor.clone();
      Tensor numeric = num::finite_difference_gradient(
          [&](const Tensor& probe) {
            std::copy(probe.values().begin(), probe.values().end(), p.tensor.values().begin());
            const double v = loss_value();
            std::copy(original.values().begin(), original.values().end(), p.tensor.values().begin());
            return v;
          },
          original, 1e-5);
      ASSERT_TRUE(p.tensor.has_grad()) << p.name;
      EXPECT_LE(num::relative_error(p.tensor.grad(), numeric.values()), 1e-4) << p.name << " literal=" << literal;
    }
  }
}

TEST(Model, EncodersAreDisjoint) {
  EncoderConfig vc = tiny_config();
  EncoderConfig fc = tiny_config();
  fc.channels = 3;
  auto model = encoder::VfdModel::create(vc, fc, 16);
  auto voice_params = model.voice.parameters("");
  auto face_params = model.face.parameters("");
  for (const auto& a : voice_params)
    for (const auto& b : face_params) EXPECT_FALSE(a.tensor.same_storage(b.tensor)) << a.name << " " << b.name;

  num::Rng rng(17);
  Tensor spec = num::normal_tensor({1, 4, 4}, 1.0, rng);
  Tape tape = Tape::inference();
  Tensor before = encoder::encode(tape, spec, model.voice).clone();
  for (auto& p : face_params)
    for (double& v : p.tensor.values()) v += 1.0;
  Tensor after = encoder::encode(tape, spec, model.voice);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);

  auto all = model.parameters();
  auto enc = model.encoder_parameters();
  EXPECT_EQ(all.size(), voice_params.size() + face_params.size());
  EXPECT_EQ(enc.size() + 2, all.size());
  for (const auto& p : enc) EXPECT_EQ(p.name.find("classifier"), std::string::npos);
}

TEST(Model, NoDeadParametersAtDeskScale) {
  EncoderConfig vc = EncoderConfig::voice_default();
  EncoderConfig fc = EncoderConfig::face_default();
  vc.num_identities = fc.num_identities = 5;
  auto model = encoder::VfdModel::create(vc, fc, 18);
  num::Rng rng(19);
  Tensor spec = num::normal_tensor({1, 512, 300}, 1.0, rng);
  Tensor face = num::uniform_tensor({3, 224, 224}, -1.0, 1.0, rng);
  auto params = model.parameters();
  for (auto& p : params) p.tensor.drop_grad();
  Tape tape;
  Tensor v = encoder::encode(tape, spec, model.voice);
  Tensor f = encoder::encode(tape, face, model.face);
  std::vector<Tensor> terms{objectives::cosine_similarity(tape, v, f),
                            objectives::identity_cross_entropy(tape, encoder::classify_identity(tape, v, model.voice), 1),
                            objectives::identity_cross_entropy(tape, encoder::classify_identity(tape, f, model.face), 3)};
  tape.backward(num::mean_of(tape, terms));
  for (auto& p : params) {
    ASSERT_TRUE(p.tensor.has_grad()) << p.name;
    const bool any = std::any_of(p.tensor.grad().begin(), p.tensor.grad().end(), [](double g) { return g != 0.0; });
    EXPECT_TRUE(any) << p.name;
  }
}

TEST(Config, ValidationAndVectorRoundTrip) {
  EncoderConfig c = EncoderConfig::face_default();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(EncoderConfig::from_vector(c.to_vector()), c);
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EncoderConfig::face_default();
  c.patch_h = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  EncoderConfig big = EncoderConfig::full_scale(EncoderConfig::face_default());
  EXPECT_EQ(big.depth, 12u);
  EXPECT_EQ(big.heads, 12u);
  EXPECT_NO_THROW(big.validate());
}
