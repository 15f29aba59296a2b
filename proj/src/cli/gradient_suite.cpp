#include "vfd/cli/gradient_suite.hpp"

#include <algorithm>
#include <functional>
#include <iomanip>

#include "vfd/encoder/encoder.hpp"
#include "vfd/numerics/gradcheck.hpp"
#include "vfd/numerics/ops.hpp"
#include "vfd/numerics/rng.hpp"
#include "vfd/objectives/objectives.hpp"

namespace vfd::cli {
namespace {

using num::Rng;
using num::Shape;
using num::Tape;
using num::Tensor;

// One random instance: the tensors to differentiate and a scalar function of
// them. The function reads the tensors by handle, so perturbing their values
// in place changes its output.
struct Instance {
  std::vector<Tensor> inputs;
  std::function<Tensor(Tape&)> loss;
};

using Factory = std::function<Instance(Rng&)>;

struct Check {
  std::string name;
  Factory make;
};

Tensor randn(Shape shape, Rng& rng, double sd = 1.0) { return num::normal_tensor(std::move(shape), sd, rng); }

// Contracts a non-scalar output against fixed random weights so every
// output entry contributes to the checked scalar.
Tensor project(Tape& tape, const Tensor& out, const Tensor& weights) {
  return num::sum(tape, num::mul(tape, out, weights));
}

Instance unary(Rng& rng, Shape in_shape, Shape out_shape,
               std::function<Tensor(Tape&, const Tensor&)> op) {
  Tensor x = randn(std::move(in_shape), rng);
  Tensor w = randn(std::move(out_shape), rng);
  return {{x}, [x, w, op](Tape& t) { return project(t, op(t, x), w); }};
}

Instance binary(Rng& rng, Shape a_shape, Shape b_shape, Shape out_shape,
                std::function<Tensor(Tape&, const Tensor&, const Tensor&)> op) {
  Tensor a = randn(std::move(a_shape), rng);
  Tensor b = randn(std::move(b_shape), rng);
  Tensor w = randn(std::move(out_shape), rng);
  return {{a, b}, [a, b, w, op](Tape& t) { return project(t, op(t, a, b), w); }};
}

encoder::EncoderConfig tiny_config(bool literal) {
  encoder::EncoderConfig c;
  c.depth = 2;
  c.heads = literal ? 1 : 2;
  c.token_dim = 8;
  c.output_dim = 4;
  c.patch_h = 4;
  c.patch_w = 4;
  c.channels = 1;
  c.input_h = 8;
  c.input_w = 8;
  c.num_identities = 3;
  c.literal_mode = literal;
  return c;
}

// Parameters redrawn at unit-ish scale so the check exercises curvature
// that N(0, 0.02^2) weights would hide.
encoder::EncoderState tiny_encoder(bool literal, Rng& rng) {
  encoder::EncoderState s = encoder::init_encoder(tiny_config(literal), rng);
  for (num::NamedParameter& p : s.parameters("")) {
    const bool gain = p.name.find("gain") != std::string::npos;
    for (double& v : p.tensor.values()) v = (gain ? 1.0 : 0.0) + 0.4 * rng.normal();
  }
  return s;
}

std::vector<Tensor> param_tensors(const encoder::EncoderState& s) {
  std::vector<Tensor> out;
  for (const num::NamedParameter& p : s.parameters("")) out.push_back(p.tensor);
  return out;
}

std::vector<Check> build_checks() {
  std::vector<Check> c;
  c.push_back({"matmul", [](Rng& r) {
                 return binary(r, {3, 4}, {4, 5}, {3, 5}, [](Tape& t, const Tensor& a, const Tensor& b) {
                   return num::matmul(t, a, b);
                 });
               }});
  c.push_back({"matmul_nt", [](Rng& r) {
                 return binary(r, {3, 4}, {5, 4}, {3, 5}, [](Tape& t, const Tensor& a, const Tensor& b) {
                   return num::matmul_nt(t, a, b);
                 });
               }});
  c.push_back({"transpose", [](Rng& r) {
                 return unary(r, {3, 4}, {4, 3}, [](Tape& t, const Tensor& x) { return num::transpose(t, x); });
               }});
  c.push_back({"add", [](Rng& r) {
                 return binary(r, {3, 4}, {3, 4}, {3, 4},
                               [](Tape& t, const Tensor& a, const Tensor& b) { return num::add(t, a, b); });
               }});
  c.push_back({"add_row", [](Rng& r) {
                 return binary(r, {3, 4}, {4}, {3, 4},
                               [](Tape& t, const Tensor& a, const Tensor& b) { return num::add_row(t, a, b); });
               }});
  c.push_back({"mul", [](Rng& r) {
                 return binary(r, {3, 4}, {3, 4}, {3, 4},
                               [](Tape& t, const Tensor& a, const Tensor& b) { return num::mul(t, a, b); });
               }});
  c.push_back({"scale", [](Rng& r) {
                 const double f = r.normal();
                 return unary(r, {3, 4}, {3, 4}, [f](Tape& t, const Tensor& x) { return num::scale(t, x, f); });
               }});
  c.push_back({"log", [](Rng& r) {
                 Tensor x = num::uniform_tensor({3, 4}, 0.5, 2.0, r);
                 Tensor w = randn({3, 4}, r);
                 return Instance{{x}, [x, w](Tape& t) { return project(t, num::log(t, x), w); }};
               }});
  c.push_back({"gelu", [](Rng& r) {
                 return unary(r, {3, 4}, {3, 4}, [](Tape& t, const Tensor& x) { return num::gelu(t, x); });
               }});
  c.push_back({"sum", [](Rng& r) {
                 Tensor x = randn({3, 4}, r);
                 return Instance{{x}, [x](Tape& t) { return num::sum(t, num::mul(t, x, x)); }};
               }});
  c.push_back({"mean", [](Rng& r) {
                 Tensor x = randn({3, 4}, r);
                 return Instance{{x}, [x](Tape& t) { return num::mean(t, num::mul(t, x, x)); }};
               }});
  c.push_back({"mean_of", [](Rng& r) {
                 std::vector<Tensor> xs;
                 for (int i = 0; i < 3; ++i) xs.push_back(Tensor::scalar(r.normal()));
                 return Instance{xs, [xs](Tape& t) {
                                   std::vector<Tensor> sq;
                                   for (const Tensor& x : xs) sq.push_back(num::mul(t, x, x));
                                   return num::mean_of(t, sq);
                                 }};
               }});
  c.push_back({"softmax_rows", [](Rng& r) {
                 return unary(r, {3, 5}, {3, 5}, [](Tape& t, const Tensor& x) { return num::softmax_rows(t, x); });
               }});
  c.push_back({"cross_entropy", [](Rng& r) {
                 Tensor x = randn({6}, r);
                 const std::size_t target = r.below(6);
                 return Instance{{x}, [x, target](Tape& t) { return num::cross_entropy(t, x, target); }};
               }});
  c.push_back({"layer_norm", [](Rng& r) {
                 Tensor x = randn({3, 6}, r);
                 Tensor g = randn({6}, r);
                 Tensor b = randn({6}, r);
                 Tensor w = randn({3, 6}, r);
                 return Instance{{x, g, b}, [x, g, b, w](Tape& t) { return project(t, num::layer_norm(t, x, g, b), w); }};
               }});
  c.push_back({"slice_rows", [](Rng& r) {
                 return unary(r, {4, 3}, {2, 3}, [](Tape& t, const Tensor& x) { return num::slice_rows(t, x, 1, 2); });
               }});
  c.push_back({"slice_cols", [](Rng& r) {
                 return unary(r, {3, 5}, {3, 2}, [](Tape& t, const Tensor& x) { return num::slice_cols(t, x, 2, 2); });
               }});
  c.push_back({"concat_rows", [](Rng& r) {
                 return binary(r, {2, 3}, {1, 3}, {3, 3}, [](Tape& t, const Tensor& a, const Tensor& b) {
                   const std::vector<Tensor> parts{a, b};
                   return num::concat_rows(t, parts);
                 });
               }});
  c.push_back({"concat_cols", [](Rng& r) {
                 return binary(r, {3, 2}, {3, 1}, {3, 3}, [](Tape& t, const Tensor& a, const Tensor& b) {
                   const std::vector<Tensor> parts{a, b};
                   return num::concat_cols(t, parts);
                 });
               }});
  c.push_back({"concat", [](Rng& r) {
                 Tensor a = Tensor::scalar(r.normal());
                 Tensor b = randn({3}, r);
                 Tensor w = randn({4}, r);
                 return Instance{{a, b}, [a, b, w](Tape& t) {
                                   const std::vector<Tensor> parts{a, b};
                                   return project(t, num::concat(t, parts), w);
                                 }};
               }});
  c.push_back({"reshape", [](Rng& r) {
                 return unary(r, {3, 4}, {2, 6}, [](Tape& t, const Tensor& x) { return num::reshape(t, x, {2, 6}); });
               }});
  c.push_back({"patchify", [](Rng& r) {
                 return unary(r, {2, 4, 6}, {4, 12}, [](Tape& t, const Tensor& x) { return num::patchify(t, x, 2, 3); });
               }});
  c.push_back({"cosine_similarity", [](Rng& r) {
                 Tensor v = randn({5}, r);
                 Tensor f = randn({5}, r);
                 return Instance{{v, f}, [v, f](Tape& t) { return objectives::cosine_similarity(t, v, f); }};
               }});

  for (bool literal : {false, true}) {
    const std::string suffix = literal ? " (literal)" : "";
    c.push_back({"patch_project" + suffix, [literal](Rng& r) {
                   auto s = std::make_shared<encoder::EncoderState>(tiny_encoder(literal, r));
                   Tensor x = randn({1, 8, 8}, r);
                   Tensor w = randn({4, 8}, r);
                   return Instance{{x, s->patch_kernel, s->patch_bias},
                                   [s, x, w](Tape& t) { return project(t, encoder::patch_project(t, x, *s), w); }};
                 }});
    c.push_back({"add_class_and_position" + suffix, [literal](Rng& r) {
                   auto s = std::make_shared<encoder::EncoderState>(tiny_encoder(literal, r));
                   Tensor x = randn({4, 8}, r);
                   Tensor w = randn({5, 8}, r);
                   return Instance{{x, s->class_token, s->positions}, [s, x, w](Tape& t) {
                                     return project(t, encoder::add_class_and_position(t, x, *s), w);
                                   }};
                 }});
    c.push_back({"attention_block" + suffix, [literal](Rng& r) {
                   auto s = std::make_shared<encoder::EncoderState>(tiny_encoder(literal, r));
                   Tensor x = randn({5, 8}, r);
                   Tensor w = randn({5, 8}, r);
                   std::vector<Tensor> inputs{x};
                   for (const num::NamedParameter& p : s->parameters("")) {
                     if (p.name.starts_with("block0.")) inputs.push_back(p.tensor);
                   }
                   return Instance{inputs, [s, x, w](Tape& t) {
                                     return project(t, encoder::attention_block(t, x, s->blocks[0], s->config), w);
                                   }};
                 }});
    c.push_back({"encode" + suffix, [literal](Rng& r) {
                   auto s = std::make_shared<encoder::EncoderState>(tiny_encoder(literal, r));
                   Tensor x = randn({1, 8, 8}, r);
                   Tensor w = randn({4}, r);
                   std::vector<Tensor> inputs = param_tensors(*s);
                   inputs.push_back(x);
                   return Instance{inputs, [s, x, w](Tape& t) { return project(t, encoder::encode(t, x, *s), w); }};
                 }});
  }

  c.push_back({"loss: identity cross-entropy", [](Rng& r) {
                 auto s = std::make_shared<encoder::EncoderState>(tiny_encoder(false, r));
                 Tensor f = randn({4}, r);
                 const std::size_t label = r.below(3);
                 return Instance{{f, s->classifier}, [s, f, label](Tape& t) {
                                   return objectives::identity_cross_entropy(
                                       t, encoder::classify_identity(t, f, *s), label);
                                 }};
               }});
  for (auto form : {objectives::InfoNceForm::kStandard, objectives::InfoNceForm::kLiteral}) {
    const std::string name = form == objectives::InfoNceForm::kStandard ? "loss: InfoNCE"
                                                                        : "loss: InfoNCE (literal)";
    c.push_back({name, [form](Rng& r) {
                   objectives::ContrastiveBatch b;
                   b.anchor_voice = randn({6}, r);
                   b.positive_face = randn({6}, r);
                   for (int i = 0; i < 3; ++i) b.negative_faces.push_back(randn({6}, r));
                   b.temperature = 0.1 + r.uniform();
                   std::vector<Tensor> inputs{b.anchor_voice, b.positive_face};
                   inputs.insert(inputs.end(), b.negative_faces.begin(), b.negative_faces.end());
                   return Instance{inputs, [b, form](Tape& t) { return objectives::info_nce(t, b, form); }};
                 }});
  }
  c.push_back({"loss: RFC", [](Rng& r) {
                 objectives::RfcBatch b;
                 b.real_voice = randn({6}, r);
                 b.real_face = randn({6}, r);
                 for (int i = 0; i < 3; ++i) {
                   b.fake_voices.push_back(randn({6}, r));
                   b.fake_faces.push_back(randn({6}, r));
                 }
                 std::vector<Tensor> inputs{b.real_voice, b.real_face};
                 inputs.insert(inputs.end(), b.fake_voices.begin(), b.fake_voices.end());
                 inputs.insert(inputs.end(), b.fake_faces.begin(), b.fake_faces.end());
                 return Instance{inputs, [b](Tape& t) { return objectives::rfc_loss(t, b); }};
               }});
  return c;
}

double check_instance(Instance& inst, double h, bool flip) {
  for (Tensor& x : inst.inputs) {
    x.set_requires_grad(true);
    x.drop_grad();
  }
  Tape tape;
  tape.backward(inst.loss(tape));
  std::vector<double> analytic;
  std::vector<double> numeric;
  for (Tensor& x : inst.inputs) {
    if (x.has_grad()) {
      for (double g : std::as_const(x).grad()) analytic.push_back(flip ? -g : g);
    } else {
      analytic.insert(analytic.end(), x.size(), 0.0);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double original = x[i];
      Tape probe = Tape::inference();
      x[i] = original + h;
      const double upper = inst.loss(probe).item();
      x[i] = original - h;
      const double lower = inst.loss(probe).item();
      x[i] = original;
      numeric.push_back((upper - lower) / (2.0 * h));
    }
  }
  return num::relative_error(analytic, numeric);
}

}  // namespace

std::vector<std::string> gradient_check_names() {
  std::vector<std::string> names;
  for (const Check& c : build_checks()) names.push_back(c.name);
  return names;
}

std::vector<GradientCheckRow> run_gradient_suite(const GradientSuiteOptions& options) {
  std::vector<GradientCheckRow> rows;
  const std::vector<Check> checks = build_checks();
  for (std::size_t k = 0; k < checks.size(); ++k) {
    GradientCheckRow row;
    row.name = checks[k].name;
    row.threshold = options.threshold;
    row.instances = options.instances;
    const bool flip = checks[k].name == options.inject_fault;
    for (std::size_t i = 0; i < options.instances; ++i) {
      Rng rng = Rng(options.seed).fork((k << 20) + i);
      Instance inst = checks[k].make(rng);
      row.max_relative_error = std::max(row.max_relative_error, check_instance(inst, options.step, flip));
    }
    row.passed = row.max_relative_error <= options.threshold;
    rows.push_back(row);
  }
  return rows;
}

void print_gradient_table(std::ostream& out, const std::vector<GradientCheckRow>& rows) {
  out << std::left << std::setw(36) << "op" << std::setw(16) << "max_rel_err" << std::setw(12)
      << "threshold" << "result\n";
  for (const GradientCheckRow& r : rows) {
    out << std::left << std::setw(36) << r.name << std::setw(16) << std::scientific
        << std::setprecision(3) << r.max_relative_error << std::setw(12) << r.threshold
        << std::defaultfloat << (r.passed ? "PASS" : "FAIL") << '\n';
  }
}

}  // namespace vfd::cli
