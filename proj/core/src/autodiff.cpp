#include "toposeg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "toposeg/error.hpp"

namespace toposeg {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::clamp: return "clamp";
    case OpKind::log: return "log";
    case OpKind::affine: return "affine";
    case OpKind::reshape: return "reshape";
    case OpKind::matmul: return "matmul";
    case OpKind::max_pool: return "max_pool";
    case OpKind::min_pool: return "min_pool";
    case OpKind::conv_dw3x3: return "conv_dw3x3";
    case OpKind::conv_pw1x1: return "conv_pw1x1";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw ValueError("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const {
  if (!tape_) throw ValueError("use of an unbound Var");
  return tape_->requires_grad(id_);
}

const Tensor& Gradients::at(const Var& v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw ValueError("no gradient recorded for node " + std::to_string(v.id()));
  return it->second;
}

const Tensor* Gradients::find(const Var& v) const {
  auto it = grads_.find(v.id());
  return it == grads_.end() ? nullptr : &it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (value.empty()) throw ShapeError("tape leaves must be non-empty tensors");
  Node node;
  node.kind = OpKind::leaf;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (!owns(in)) throw ValueError(std::string(op_name(kind)) + ": input is not on this tape");
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) const {
  if (!owns(loss)) throw ValueError("backward: loss node is not on this tape");
  const Tensor& loss_value = nodes_[loss.id_].value;
  if (loss_value.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_to_string(loss_value.shape()));
  }

  std::vector<std::optional<Tensor>> grads(loss.id_ + 1);
  grads[loss.id_] = Tensor(loss_value.shape(), 1.0);

  Gradients result;
  std::vector<Tensor*> slots;
  for (std::size_t k = loss.id_ + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (node.kind == OpKind::leaf) {
      if (!node.requires_grad) continue;
      result.grads_.emplace(k, grads[k] ? std::move(*grads[k]) : Tensor(node.value.shape(), 0.0));
      continue;
    }
    if (!grads[k] || !node.backward) continue;

    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const NodeId in = node.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      slots[i] = &*grads[in];
    }
    node.backward(*grads[k], slots);
    grads[k].reset();
  }
  return result;
}

namespace {

Tape& common_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid()) throw ValueError(std::string(op) + ": unbound operand");
  if (a.tape() != b.tape()) throw ValueError(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(const Var& x, const char* op) {
  if (!x.valid()) throw ValueError(std::string(op) + ": unbound operand");
  return *x.tape();
}

// Shape of a binary elementwise result under scalar broadcasting.
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.numel() == 1) return b.shape();
  if (b.numel() == 1) return a.shape();
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                   shape_to_string(b.shape()));
}

// Adds contribution[i] into grad, reducing to a single element when the
// operand was broadcast.
void accumulate(Tensor* grad, const std::vector<double>& contribution) {
  if (!grad) return;
  auto g = grad->mutable_data();
  if (g.size() == contribution.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
  } else {
    double total = 0.0;
    for (double c : contribution) total += c;
    g[0] += total;
  }
}

template <typename Forward, typename Backward>
Var binary_op(OpKind kind, const Var& a, const Var& b, Forward forward, Backward backward) {
  Tape& tape = common_tape(a, b, op_name(kind).data());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Shape shape = broadcast_shape(av, bv, op_name(kind).data());
  const std::size_t n = shape_numel(shape);
  const bool a_bcast = av.numel() != n;
  const bool b_bcast = bv.numel() != n;

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = forward(av[a_bcast ? 0 : i], bv[b_bcast ? 0 : i]);
  }
  Tensor result(std::move(shape), std::move(out));

  // Saved context: copies of the operand values.
  BackwardFn fn = [av, bv, a_bcast, b_bcast, n, backward](const Tensor& g,
                                                         std::span<Tensor* const> grads) {
    std::vector<double> ga(grads[0] ? n : 0), gb(grads[1] ? n : 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = av[a_bcast ? 0 : i];
      const double y = bv[b_bcast ? 0 : i];
      auto [da, db] = backward(x, y, g[i]);
      if (grads[0]) ga[i] = da;
      if (grads[1]) gb[i] = db;
    }
    accumulate(grads[0], ga);
    accumulate(grads[1], gb);
  };
  return tape.record(kind, std::move(result), {a, b}, std::move(fn));
}

template <typename Forward, typename Derivative>
Var unary_op(OpKind kind, const Var& x, Forward forward, Derivative derivative) {
  Tape& tape = tape_of(x, op_name(kind).data());
  const Tensor& xv = x.value();
  std::vector<double> out(xv.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xv[i]);
  Tensor result(xv.shape(), std::move(out));

  BackwardFn fn = [xv, y = result, derivative](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    auto gx = grads[0]->mutable_data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * derivative(xv[i], y[i]);
  };
  return tape.record(kind, std::move(result), {x}, std::move(fn));
}

struct Planes {
  std::size_t channels, height, width;
};

Planes planes_of(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected a CxHxW tensor, got " + shape_to_string(t.shape()));
  }
  return {t.dim(0), t.dim(1), t.dim(2)};
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_op(
      OpKind::add, a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      OpKind::sub, a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      OpKind::mul, a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Var div(const Var& a, const Var& b) {
  for (double d : b.value().data()) {
    if (d == 0.0) throw NumericError("div: division by zero");
  }
  return binary_op(
      OpKind::div, a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g) { return std::pair{g / y, -g * x / (y * y)}; });
}

Var relu(const Var& x) {
  return unary_op(
      OpKind::relu, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary_op(
      OpKind::sigmoid, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp(const Var& x, double lo, double hi) {
  if (!(lo <= hi)) throw ValueError("clamp: lo must not exceed hi");
  return unary_op(
      OpKind::clamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary_op(
      OpKind::log, x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Var affine(const Var& x, double scale, double shift) {
  return unary_op(
      OpKind::affine, x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Var reshape(const Var& x, Shape shape) {
  Tape& tape = tape_of(x, "reshape");
  Tensor result = x.value().reshaped(std::move(shape));
  BackwardFn fn = [](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    auto gx = grads[0]->mutable_data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  };
  return tape.record(OpKind::reshape, std::move(result), {x}, std::move(fn));
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2) throw ShapeError("matmul: operands must be matrices");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_to_string(av.shape()) + " x " +
                     shape_to_string(bv.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  BackwardFn fn = [av, bv, m, k, n](const Tensor& g, std::span<Tensor* const> grads) {
    // grad_a = g * b^T, grad_b = a^T * g
    if (grads[0]) {
      auto ga = grads[0]->mutable_data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (grads[1]) {
      auto gb = grads[1]->mutable_data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  };
  return tape.record(OpKind::matmul, Tensor({m, n}, std::move(out)), {a, b}, std::move(fn));
}

Var morph_pool(PoolKind kind, const Var& x) {
  Tape& tape = tape_of(x, "morph_pool");
  const Tensor& xv = x.value();
  const auto [channels, height, width] = planes_of(xv, "morph_pool");
  const double sign = kind == PoolKind::max ? 1.0 : -1.0;
  constexpr std::ptrdiff_t kPadded = -1;

  const std::size_t n = xv.numel();
  std::vector<double> out(n);
  // Source index per output, or kPadded when the zero pad won.
  std::vector<std::ptrdiff_t> source(n);
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t base = c * height * width;
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        double best = 0.0;
        std::ptrdiff_t best_idx = kPadded;
        bool first = true;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(i) + dy;
            const std::ptrdiff_t xj = static_cast<std::ptrdiff_t>(j) + dx;
            const bool inside = yi >= 0 && xj >= 0 && yi < static_cast<std::ptrdiff_t>(height) &&
                                xj < static_cast<std::ptrdiff_t>(width);
            const std::ptrdiff_t idx =
                inside ? static_cast<std::ptrdiff_t>(base) + yi * static_cast<std::ptrdiff_t>(width) + xj
                       : kPadded;
            const double v = inside ? sign * xv[static_cast<std::size_t>(idx)] : 0.0;
            if (first || v > best) {
              best = v;
              best_idx = idx;
              first = false;
            }
          }
        }
        const std::size_t o = base + i * width + j;
        out[o] = sign * best;
        source[o] = best_idx;
      }
    }
  }
  BackwardFn fn = [source = std::move(source)](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    auto gx = grads[0]->mutable_data();
    for (std::size_t o = 0; o < source.size(); ++o) {
      if (source[o] != kPadded) gx[static_cast<std::size_t>(source[o])] += g[o];
    }
  };
  return tape.record(kind == PoolKind::max ? OpKind::max_pool : OpKind::min_pool,
                     Tensor(xv.shape(), std::move(out)), {x}, std::move(fn));
}

Var conv_dw3x3(const Var& x, const Var& weight, const Var& bias) {
  Tape& tape = common_tape(x, weight, "conv_dw3x3");
  common_tape(x, bias, "conv_dw3x3");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  const auto [channels, height, width] = planes_of(xv, "conv_dw3x3");
  if (wv.shape() != Shape{channels, 3, 3}) {
    throw ShapeError("conv_dw3x3: weight must be " + shape_to_string({channels, 3, 3}) + ", got " +
                     shape_to_string(wv.shape()));
  }
  if (bv.shape() != Shape{channels}) {
    throw ShapeError("conv_dw3x3: bias must have " + std::to_string(channels) + " entries");
  }

  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  // Calls visit(c, tap, out_offset, in_offset, i0, i1, j0, j1) once per channel and tap; rows
  // [i0, i1) and columns [j0, j1) of the output read an in-image input at the given offsets.
  auto for_each_tap = [=](auto&& visit) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(c * height * width);
      for (std::ptrdiff_t ky = 0; ky < 3; ++ky)
        for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
          const std::ptrdiff_t dy = ky - 1, dx = kx - 1;
          visit(c, c * 9 + static_cast<std::size_t>(ky * 3 + kx), plane, plane + dy * w + dx,
                std::max<std::ptrdiff_t>(0, -dy), std::min(h, h - dy), std::max<std::ptrdiff_t>(0, -dx),
                std::min(w, w - dx));
        }
    }
  };

  std::vector<double> out(xv.numel());
  for (std::size_t c = 0; c < channels; ++c)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(c * height * width), height * width, bv[c]);
  const double* xp = xv.data().data();
  for_each_tap([&](std::size_t, std::size_t tap, std::ptrdiff_t o, std::ptrdiff_t in, std::ptrdiff_t i0,
                   std::ptrdiff_t i1, std::ptrdiff_t j0, std::ptrdiff_t j1) {
    const double k = wv[tap];
    for (std::ptrdiff_t i = i0; i < i1; ++i) {
      double* dst = out.data() + o + i * w;
      const double* src = xp + in + i * w;
      for (std::ptrdiff_t j = j0; j < j1; ++j) dst[j] += k * src[j];
    }
  });

  BackwardFn fn = [xv, wv, for_each_tap, height, width, channels, w](const Tensor& g,
                                                                    std::span<Tensor* const> grads) {
    double* gx = grads[0] ? grads[0]->mutable_data().data() : nullptr;
    double* gw = grads[1] ? grads[1]->mutable_data().data() : nullptr;
    double* gb = grads[2] ? grads[2]->mutable_data().data() : nullptr;
    const double* gp = g.data().data();
    const double* xp = xv.data().data();
    if (gx || gw) {
      for_each_tap([&](std::size_t, std::size_t tap, std::ptrdiff_t o, std::ptrdiff_t in, std::ptrdiff_t i0,
                       std::ptrdiff_t i1, std::ptrdiff_t j0, std::ptrdiff_t j1) {
        const double k = wv[tap];
        double s = 0.0;
        for (std::ptrdiff_t i = i0; i < i1; ++i) {
          const double* go = gp + o + i * w;
          if (gx) {
            double* dst = gx + in + i * w;
            for (std::ptrdiff_t j = j0; j < j1; ++j) dst[j] += k * go[j];
          }
          if (gw) {
            const double* src = xp + in + i * w;
            for (std::ptrdiff_t j = j0; j < j1; ++j) s += src[j] * go[j];
          }
        }
        if (gw) gw[tap] += s;
      });
    }
    if (gb) {
      for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < height * width; ++p) s += gp[c * height * width + p];
        gb[c] += s;
      }
    }
  };
  return tape.record(OpKind::conv_dw3x3, Tensor(xv.shape(), std::move(out)), {x, weight, bias},
                     std::move(fn));
}

namespace {

// dst[p] += sum_k coef[k * stride] * src[k * pixels + p], four source rows per pass.
void mix_rows(double* dst, const double* src, const double* coef, std::size_t stride, std::size_t rows,
              std::size_t pixels) {
  std::size_t k = 0;
  for (; k + 4 <= rows; k += 4) {
    const double c0 = coef[k * stride], c1 = coef[(k + 1) * stride];
    const double c2 = coef[(k + 2) * stride], c3 = coef[(k + 3) * stride];
    const double* s0 = src + k * pixels;
    const double* s1 = s0 + pixels;
    const double* s2 = s1 + pixels;
    const double* s3 = s2 + pixels;
    for (std::size_t p = 0; p < pixels; ++p) dst[p] += c0 * s0[p] + c1 * s1[p] + c2 * s2[p] + c3 * s3[p];
  }
  for (; k < rows; ++k) {
    const double ck = coef[k * stride];
    const double* sk = src + k * pixels;
    for (std::size_t p = 0; p < pixels; ++p) dst[p] += ck * sk[p];
  }
}

}  // namespace

Var conv_pw1x1(const Var& x, const Var& weight, std::optional<Var> bias) {
  Tape& tape = common_tape(x, weight, "conv_pw1x1");
  if (bias) common_tape(x, *bias, "conv_pw1x1");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const auto [channels, height, width] = planes_of(xv, "conv_pw1x1");
  if (wv.rank() != 2 || wv.dim(1) != channels) {
    throw ShapeError("conv_pw1x1: weight " + shape_to_string(wv.shape()) +
                     " does not accept " + std::to_string(channels) + " input channels");
  }
  const std::size_t out_channels = wv.dim(0);
  const std::size_t pixels = height * width;
  std::vector<double> bias_values(out_channels, 0.0);
  if (bias) {
    const Tensor& bv = bias->value();
    if (bv.shape() != Shape{out_channels}) {
      throw ShapeError("conv_pw1x1: bias must have " + std::to_string(out_channels) + " entries");
    }
    bias_values.assign(bv.data().begin(), bv.data().end());
  }

  std::vector<double> out(out_channels * pixels);
  for (std::size_t o = 0; o < out_channels; ++o) {
    double* row = out.data() + o * pixels;
    std::fill_n(row, pixels, 0.0);
    mix_rows(row, xv.data().data(), wv.data().data() + o * channels, 1, channels, pixels);
    for (std::size_t p = 0; p < pixels; ++p) row[p] += bias_values[o];
  }

  BackwardFn fn = [xv, wv, channels, out_channels, pixels](const Tensor& g,
                                                          std::span<Tensor* const> grads) {
    if (grads[0]) {
      auto gx = grads[0]->mutable_data();
      for (std::size_t c = 0; c < channels; ++c)
        mix_rows(gx.data() + c * pixels, g.data().data(), wv.data().data() + c, channels, out_channels,
                 pixels);
    }
    if (grads[1]) {
      auto gw = grads[1]->mutable_data();
      for (std::size_t o = 0; o < out_channels; ++o)
        for (std::size_t c = 0; c < channels; ++c) {
          const double* xs = xv.data().data() + c * pixels;
          const double* gs = g.data().data() + o * pixels;
          double acc[4] = {0.0, 0.0, 0.0, 0.0};
          std::size_t p = 0;
          for (; p + 4 <= pixels; p += 4)
            for (std::size_t l = 0; l < 4; ++l) acc[l] += xs[p + l] * gs[p + l];
          for (; p < pixels; ++p) acc[0] += xs[p] * gs[p];
          gw[o * channels + c] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
        }
    }
    if (grads.size() > 2 && grads[2]) {
      auto gb = grads[2]->mutable_data();
      for (std::size_t o = 0; o < out_channels; ++o) {
        double s = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) s += g[o * pixels + p];
        gb[o] += s;
      }
    }
  };
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return tape.record(OpKind::conv_pw1x1, Tensor({out_channels, height, width}, std::move(out)),
                     std::move(inputs), std::move(fn));
}

Var reduce(ReduceKind kind, const Var& x) {
  Tape& tape = tape_of(x, "reduce");
  const Tensor& xv = x.value();
  if (xv.empty()) throw ShapeError("reduce: empty tensor");
  double total = 0.0;
  for (double v : xv.data()) total += v;
  const double n = static_cast<double>(xv.numel());
  const double factor = kind == ReduceKind::mean ? 1.0 / n : 1.0;
  const double value = kind == ReduceKind::mean ? total / n : total;
  BackwardFn fn = [factor](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    const double d = g[0] * factor;
    for (double& v : grads[0]->mutable_data()) v += d;
  };
  return tape.record(kind == ReduceKind::mean ? OpKind::mean : OpKind::sum, Tensor::scalar(value),
                     {x}, std::move(fn));
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ValueError("finite_diff_grad: step must be positive");
  Tensor probe = x;
  std::vector<double> grad(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(grad));
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) throw ShapeError("max_relative_error: shape mismatch");
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

}  // namespace toposeg
