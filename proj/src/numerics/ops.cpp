#include "vfd/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "vfd/errors.hpp"

namespace vfd::num {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap view(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

MatrixMap view(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

[[maybe_unused]] MatrixMap grad_view(Tensor& t) {
  return MatrixMap(t.grad().data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " needs a matrix, got " + to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
}

void mark(Tensor& out, const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (tape.tracks(inputs)) out.set_requires_grad(true);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions of " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " disagree");
  }
  Tensor out(Shape{a.rows(), b.cols()});
  view(out).noalias() = view(a) * view(b);
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    tape.record("matmul", out, [a = a, b = b, out]() mutable {
      auto dc = ConstMatrixMap(out.grad().data(), out.rows(), out.cols());
      if (a.requires_grad()) grad_view(a).noalias() += dc * view(std::as_const(b)).transpose();
      if (b.requires_grad()) grad_view(b).noalias() += view(std::as_const(a)).transpose() * dc;
    });
  }
  return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions of " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + "^T disagree");
  }
  Tensor out(Shape{a.rows(), b.rows()});
  view(out).noalias() = view(a) * view(b).transpose();
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    tape.record("matmul_nt", out, [a = a, b = b, out]() mutable {
      auto dc = ConstMatrixMap(out.grad().data(), out.rows(), out.cols());
      if (a.requires_grad()) grad_view(a).noalias() += dc * view(std::as_const(b));
      if (b.requires_grad()) grad_view(b).noalias() += dc.transpose() * view(std::as_const(a));
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_matrix(a, "transpose");
  Tensor out(Shape{a.cols(), a.rows()});
  view(out) = view(a).transpose();
  mark(out, tape, {&a});
  if (out.requires_grad()) {
    tape.record("transpose", out, [a = a, out]() mutable {
      grad_view(a) += ConstMatrixMap(out.grad().data(), out.rows(), out.cols()).transpose();
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    tape.record("add", out, [a = a, b = b, out]() mutable {
      auto g = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row) {
  require_matrix(a, "add_row");
  if (row.size() != a.cols()) {
    throw ShapeError("add_row: row of shape " + to_string(row.shape()) +
                     " does not match matrix " + to_string(a.shape()));
  }
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Tensor out(a.shape());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a[r * n + c] + row[c];
  }
  mark(out, tape, {&a, &row});
  if (out.requires_grad()) {
    tape.record("add_row", out, [a = a, row = row, out, m, n]() mutable {
      auto g = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (row.requires_grad()) {
        auto gr = row.grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) gr[c] += g[r * n + c];
        }
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  mark(out, tape, {&a, &b});
  if (out.requires_grad()) {
    tape.record("mul", out, [a = a, b = b, out]() mutable {
      auto g = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  mark(out, tape, {&a});
  if (out.requires_grad()) {
    tape.record("scale", out, [a = a, out, factor]() mutable {
      auto g = std::as_const(out).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor log(Tape& tape, const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a[i]);
  mark(out, tape, {&a});
  if (out.requires_grad()) {
    tape.record("log", out, [a = a, out]() mutable {
      auto g = std::as_const(out).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
    });
  }
  return out;
}

Tensor gelu(Tape& tape, const Tensor& a) {
  Tensor out(a.shape());
  std::vector<double> cdf(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    cdf[i] = 0.5 * (1.0 + std::erf(a[i] * kInvSqrt2));
    out[i] = a[i] * cdf[i];
  }
  mark(out, tape, {&a});
  if (out.requires_grad()) {
    tape.record("gelu", out, [a = a, out, cdf = std::move(cdf)]() mutable {
      const auto count = static_cast<Eigen::Index>(a.size());
      Eigen::Map<const Eigen::ArrayXd> x(a.data(), count);
      Eigen::Map<const Eigen::ArrayXd> phi(cdf.data(), count);
      Eigen::Map<const Eigen::ArrayXd> g(std::as_const(out).grad().data(), count);
      Eigen::Map<Eigen::ArrayXd> ga(a.grad().data(), count);
      ga += g * (phi + x * kInvSqrt2Pi * (-0.5 * x.square()).exp());
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor out = Tensor::scalar(total);
  mark(out, tape, {&a});
  if (out.requires_grad()) {
    tape.record("sum", out, [a = a, out]() mutable {
      const double g = std::as_const(out).grad()[0];
      for (double& ga : a.grad()) ga += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_of(Tape& tape, std::span<const Tensor> scalars) {
  if (scalars.empty()) throw ContractError("mean_of needs at least one term");
  Tensor total = scalars[0];
  for (std::size_t i = 1; i < scalars.size(); ++i) total = add(tape, total, scalars[i]);
  return scale(tape, total, 1.0 / static_cast<double>(scalars.size()));
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out(x.shape());
  auto in = view(x).array();
  auto y = view(out).array();
  for (std::size_t r = 0; r < m; ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    y.row(row) = (in.row(row) - in.row(row).maxCoeff()).exp();
    y.row(row) /= y.row(row).sum();
  }
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    tape.record("softmax_rows", out, [x = x, out, m, n]() mutable {
      auto g = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < m; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * out[r * n + c];
        for (std::size_t c = 0; c < n; ++c) {
          gx[r * n + c] += out[r * n + c] * (g[r * n + c] - dot);
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t target) {
  const std::size_t n = logits.size();
  if (target >= n) {
    throw ContractError("cross_entropy: target " + std::to_string(target) +
                        " out of range for " + std::to_string(n) + " classes");
  }
  const double peak = *std::max_element(logits.values().begin(), logits.values().end());
  double rest = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != target) rest += std::exp(logits[i] - peak);
  }
  const double own = std::exp(logits[target] - peak);
  const double log_normalizer = peak + std::log(own + rest);
  // log1p keeps tiny losses accurate when the target holds the peak.
  const double loss = logits[target] == peak ? std::log1p(rest) : log_normalizer - logits[target];
  Tensor out = Tensor::scalar(loss);
  mark(out, tape, {&logits});
  if (out.requires_grad()) {
    tape.record("cross_entropy", out, [logits = logits, out, target, log_normalizer]() mutable {
      const double g = std::as_const(out).grad()[0];
      auto gl = logits.grad();
      for (std::size_t i = 0; i < gl.size(); ++i) {
        const double p = std::exp(logits[i] - log_normalizer);
        gl[i] += g * (p - (i == target ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  if (n < 2) throw ShapeError("layer_norm needs at least 2 columns");
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias of shapes " + to_string(gain.shape()) + "/" +
                     to_string(bias.shape()) + " do not match " + to_string(x.shape()));
  }
  Tensor out(x.shape());
  Tensor normalized(x.shape());
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = x.data() + r * n;
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += in[c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t c = 0; c < n; ++c) {
      const double xhat = (in[c] - mu) * inv_std[r];
      normalized[r * n + c] = xhat;
      out[r * n + c] = gain[c] * xhat + bias[c];
    }
  }
  mark(out, tape, {&x, &gain, &bias});
  if (out.requires_grad()) {
    tape.record("layer_norm", out,
                [x = x, gain = gain, bias = bias, out, normalized, inv_std = std::move(inv_std), m, n]() mutable {
      auto g = std::as_const(out).grad();
      if (gain.requires_grad()) {
        auto gg = gain.grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) gg[c] += g[r * n + c] * normalized[r * n + c];
        }
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
        }
      }
      if (x.requires_grad()) {
        auto gx = x.grad();
        const double count = static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double sum_d = 0.0;
          double sum_dx = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double d = g[r * n + c] * gain[c];
            sum_d += d;
            sum_dx += d * normalized[r * n + c];
          }
          for (std::size_t c = 0; c < n; ++c) {
            const double d = g[r * n + c] * gain[c];
            gx[r * n + c] +=
                inv_std[r] / count * (count * d - sum_d - normalized[r * n + c] * sum_dx);
          }
        }
      }
    });
  }
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  if (count == 0 || begin + count > x.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + to_string(x.shape()));
  }
  const std::size_t n = x.cols();
  Tensor out(Shape{count, n});
  std::copy_n(x.data() + begin * n, count * n, out.data());
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    tape.record("slice_rows", out, [x = x, out, begin, n]() mutable {
      auto g = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  if (count == 0 || begin + count > x.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + to_string(x.shape()));
  }
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  Tensor out(Shape{m, count});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(x.data() + r * n + begin, count, out.data() + r * count);
  }
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    tape.record("slice_cols", out, [x = x, out, begin, count, m, n]() mutable {
      auto g = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < count; ++c) gx[r * n + begin + c] += g[r * count + c];
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one part");
  const std::size_t n = parts[0].cols();
  std::size_t rows = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column counts differ (" + to_string(parts[0].shape()) +
                       " vs " + to_string(p.shape()) + ")");
    }
    rows += p.rows();
    track = track || tape.tracks({&p});
  }
  Tensor out(Shape{rows, n});
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy_n(p.data(), p.size(), out.data() + offset);
    offset += p.size();
  }
  if (track) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record("concat_rows", out, [inputs = std::move(inputs), out]() mutable {
      auto g = std::as_const(out).grad();
      std::size_t offset = 0;
      for (Tensor& p : inputs) {
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols needs at least one part");
  const std::size_t m = parts[0].rows();
  std::size_t cols = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row counts differ (" + to_string(parts[0].shape()) +
                       " vs " + to_string(p.shape()) + ")");
    }
    cols += p.cols();
    track = track || tape.tracks({&p});
  }
  Tensor out(Shape{m, cols});
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(p.data() + r * w, w, out.data() + r * cols + offset);
    }
    offset += w;
  }
  if (track) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record("concat_cols", out, [inputs = std::move(inputs), out, m, cols]() mutable {
      auto g = std::as_const(out).grad();
      std::size_t offset = 0;
      for (Tensor& p : inputs) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * cols + offset + c];
          }
        }
        offset += w;
      }
    });
  }
  return out;
}

Tensor concat(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat needs at least one part");
  std::vector<double> values;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.rank() > 1) throw ShapeError("concat takes scalars and vectors, got " + to_string(p.shape()));
    values.insert(values.end(), p.values().begin(), p.values().end());
    track = track || tape.tracks({&p});
  }
  Tensor out = Tensor::vector(std::move(values));
  if (track) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record("concat", out, [inputs = std::move(inputs), out]() mutable {
      auto g = std::as_const(out).grad();
      std::size_t offset = 0;
      for (Tensor& p : inputs) {
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += p.size();
      }
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape) +
                     " changes the element count");
  }
  Tensor out(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  mark(out, tape, {&x});
  if (out.requires_grad()) {
    tape.record("reshape", out, [x = x, out]() mutable {
      auto g = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor patchify(Tape& tape, const Tensor& image, std::size_t patch_h, std::size_t patch_w) {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  if (image.rank() == 3) {
    channels = image.shape()[0];
    height = image.shape()[1];
    width = image.shape()[2];
  } else if (image.rank() == 2) {
    height = image.shape()[0];
    width = image.shape()[1];
  } else {
    throw ShapeError("patchify needs a [C x H x W] or [H x W] input, got " +
                     to_string(image.shape()));
  }
  if (patch_h == 0 || patch_w == 0 || height % patch_h != 0 || width % patch_w != 0) {
    throw ShapeError("patchify: " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                     " patches do not tile " + to_string(image.shape()));
  }
  const std::size_t grid_h = height / patch_h;
  const std::size_t grid_w = width / patch_w;
  const std::size_t patch_dim = channels * patch_h * patch_w;
  Tensor out(Shape{grid_h * grid_w, patch_dim});
  // Index map from output slot to image element, reused by backward.
  const bool track = tape.tracks({&image});
  std::vector<std::size_t> source(track ? out.size() : 0);
  for (std::size_t gy = 0; gy < grid_h; ++gy) {
    for (std::size_t gx = 0; gx < grid_w; ++gx) {
      const std::size_t row = gy * grid_w + gx;
      std::size_t k = row * patch_dim;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t py = 0; py < patch_h; ++py) {
          const std::size_t base = (ch * height + gy * patch_h + py) * width + gx * patch_w;
          for (std::size_t px = 0; px < patch_w; ++px, ++k) {
            if (track) source[k] = base + px;
            out[k] = image[base + px];
          }
        }
      }
    }
  }
  if (track) {
    out.set_requires_grad(true);
    tape.record("patchify", out, [image = image, out, source = std::move(source)]() mutable {
      auto g = std::as_const(out).grad();
      auto gi = image.grad();
      for (std::size_t k = 0; k < g.size(); ++k) gi[source[k]] += g[k];
    });
  }
  return out;
}

}  // namespace vfd::num
