#include "dbkd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "dbkd/errors.hpp"

namespace dbkd {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(what));
    }
  }
}

void check_shape(const Shape& shape, std::size_t size) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in shape " + to_string(shape));
  }
  if (numel(shape) != size) {
    throw DimensionError("shape " + to_string(shape) + " does not hold " + std::to_string(size) +
                         " values");
  }
}

}  // namespace

Tensor::Tensor(Shape s, std::vector<double> d, bool rg)
    : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
  check_shape(shape, data.size());
  check_finite(data, "tensor construction");
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (data.size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape));
  return data[0];
}

void Tensor::zero_grad() {
  if (grad) {
    std::fill(grad->begin(), grad->end(), 0.0);
  } else {
    grad.emplace(data.size(), 0.0);
  }
}

// ---------------------------------------------------------------------------

const Shape& Var::shape() const { return tape_->shape_of(id_); }
std::span<const double> Var::value() const { return tape_->value_of(id_); }

double Var::item() const {
  const auto v = value();
  if (v.size() != 1) throw ContractError("item() on non-scalar " + to_string(shape()));
  return v[0];
}

Tensor Var::to_tensor() const {
  const auto v = value();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------

Var Tape::constant(Tensor value) { return constant(std::move(value.shape), std::move(value.data)); }

Var Tape::constant(Shape shape, std::vector<double> value) {
  check_shape(shape, value.size());
  check_finite(value, "constant");
  Node n;
  n.op = "constant";
  n.shape = std::move(shape);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& t) {
  check_shape(t.shape, t.data.size());
  check_finite(t.data, "parameter");
  Node n;
  n.op = "parameter";
  n.shape = t.shape;
  n.value = t.data;
  n.needs_grad = t.requires_grad;
  n.leaf = &t;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Shape shape, std::vector<double> value,
                 std::vector<Var> inputs, BackwardFn backward) {
  check_shape(shape, value.size());
  check_finite(value, op);
  Node n;
  n.op = std::string(op);
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    n.inputs.push_back(in.id());
    n.needs_grad = n.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw ContractError("variable does not belong to this tape");
  }
}

bool Tape::needs_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].needs_grad;
}

std::string_view Tape::op(Var v) const {
  check_owned(v);
  return nodes_[v.id()].op;
}

void Tape::accumulate(std::size_t id, std::span<const double> g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::note_relu_input(double v) { relu_margin_ = std::min(relu_margin_, std::abs(v)); }

void Tape::backward(Var loss) {
  check_owned(loss);
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        to_string(nodes_[loss.id()].shape));
  }
  if (!nodes_[loss.id()].needs_grad) return;
  const double one = 1.0;
  accumulate(loss.id(), std::span<const double>(&one, 1));
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    check_finite(n.grad, "backward of " + n.op);
    if (n.leaf != nullptr) {
      Tensor& t = *n.leaf;
      if (!t.grad) t.grad.emplace(t.data.size(), 0.0);
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*t.grad)[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

void require_same_shape(Var a, Var b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
}

std::vector<double> copy(std::span<const double> v) { return {v.begin(), v.end()}; }

// Elementwise unary op with derivative expressed in terms of input x and output y.
template <typename F, typename D>
Var unary(Var a, std::string_view name, F f, D dfdx) {
  const auto x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t in = a.id();
  return a.tape()->record(name, a.shape(), std::move(y), {a},
                          [in, dfdx](Tape& t, std::size_t self) {
                            const auto& g = t.grad_of(self);
                            const auto& xv = t.value_of(in);
                            const auto& yv = t.value_of(self);
                            std::vector<double> gx(g.size());
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * dfdx(xv[i], yv[i]);
                            t.accumulate(in, gx);
                          });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  auto y = copy(a.value());
  const auto bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", a.shape(), std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, t.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  auto y = copy(a.value());
  const auto bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", a.shape(), std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    t.accumulate(ia, g);
    std::vector<double> neg(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
    t.accumulate(ib, neg);
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  auto y = copy(a.value());
  const auto bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("mul", a.shape(), std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& av = t.value_of(ia);
    const auto& bv = t.value_of(ib);
    std::vector<double> ga(g.size()), gb(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bv[i];
      gb[i] = g[i] * av[i];
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

Var affine(Var a, double factor, double offset) {
  return unary(
      a, "affine", [factor, offset](double x) { return x * factor + offset; },
      [factor](double, double) { return factor; });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var relu(Var a) {
  Tape& tape = *a.tape();
  for (double v : a.value()) tape.note_relu_input(v);
  // Subgradient at exactly 0 is taken as 0.
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  }
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record("sum", {1}, {s}, {a}, [ia](Tape& t, std::size_t self) {
    std::vector<double> g(t.value_of(ia).size(), t.grad_of(self)[0]);
    t.accumulate(ia, g);
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw DimensionError("matmul: " + to_string(sa) + " . " + to_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> y(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * bv[p * n + j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", {m, n}, std::move(y), {a, b},
                          [ia, ib, m, k, n](Tape& t, std::size_t self) {
                            const auto& g = t.grad_of(self);
                            const auto& av = t.value_of(ia);
                            const auto& bv = t.value_of(ib);
                            if (t.needs_grad(ia)) {
                              std::vector<double> ga(m * k, 0.0);
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                  double s = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                                  ga[i * k + p] = s;
                                }
                              t.accumulate(ia, ga);
                            }
                            if (t.needs_grad(ib)) {
                              std::vector<double> gb(k * n, 0.0);
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t p = 0; p < k; ++p) {
                                  const double aip = av[i * k + p];
                                  for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                                }
                              t.accumulate(ib, gb);
                            }
                          });
}

Var conv1d(Var x, Var kernels, std::size_t stride, std::size_t groups) {
  require_same_tape(x, kernels);
  if (stride == 0) throw ParameterError("conv1d: stride must be positive");
  if (groups == 0) throw ParameterError("conv1d: groups must be positive");
  const Shape& sx = x.shape();
  const Shape& sk = kernels.shape();
  if ((sx.size() != 2 && sx.size() != 3) || sk.size() != 3) {
    throw DimensionError("conv1d: input " + to_string(sx) + ", kernels " + to_string(sk));
  }
  const bool batched = sx.size() == 3;
  const std::size_t batch = batched ? sx[0] : 1;
  const std::size_t chans = sx[sx.size() - 2];
  const std::size_t len = sx[sx.size() - 1];
  const std::size_t outc = sk[0], kc = sk[1], klen = sk[2];
  if (chans % groups != 0 || outc % groups != 0 || kc != chans / groups) {
    throw DimensionError("conv1d: kernels " + to_string(sk) + " incompatible with " +
                         std::to_string(chans) + " channels in " + std::to_string(groups) + " groups");
  }
  if (klen > len) {
    throw DimensionError("conv1d: kernel length " + std::to_string(klen) + " exceeds input length " +
                         std::to_string(len));
  }
  const std::size_t outlen = (len - klen) / stride + 1;
  const std::size_t out_per_group = outc / groups;
  const auto xv = x.value();
  const auto kv = kernels.value();
  std::vector<double> y(batch * outc * outlen, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < outc; ++o) {
      const std::size_t g0 = (o / out_per_group) * kc;
      double* yrow = &y[(b * outc + o) * outlen];
      for (std::size_t c = 0; c < kc; ++c) {
        const double* xrow = &xv[(b * chans + g0 + c) * len];
        const double* krow = &kv[(o * kc + c) * klen];
        for (std::size_t t = 0; t < outlen; ++t) {
          const double* xs = xrow + t * stride;
          double s = 0.0;
          for (std::size_t j = 0; j < klen; ++j) s += xs[j] * krow[j];
          yrow[t] += s;
        }
      }
    }
  }
  Shape out_shape = batched ? Shape{batch, outc, outlen} : Shape{outc, outlen};
  const std::size_t ix = x.id(), ik = kernels.id();
  return x.tape()->record(
      "conv1d", std::move(out_shape), std::move(y), {x, kernels},
      [=](Tape& t, std::size_t self) {
        const auto& g = t.grad_of(self);
        const auto& xv = t.value_of(ix);
        const auto& kv = t.value_of(ik);
        const bool want_x = t.needs_grad(ix);
        const bool want_k = t.needs_grad(ik);
        std::vector<double> gx(want_x ? xv.size() : 0, 0.0);
        std::vector<double> gk(want_k ? kv.size() : 0, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t o = 0; o < outc; ++o) {
            const std::size_t g0 = (o / out_per_group) * kc;
            const double* grow = &g[(b * outc + o) * outlen];
            for (std::size_t c = 0; c < kc; ++c) {
              const std::size_t xoff = (b * chans + g0 + c) * len;
              const std::size_t koff = (o * kc + c) * klen;
              for (std::size_t tt = 0; tt < outlen; ++tt) {
                const double go = grow[tt];
                if (go == 0.0) continue;
                const std::size_t xs = xoff + tt * stride;
                for (std::size_t j = 0; j < klen; ++j) {
                  if (want_k) gk[koff + j] += go * xv[xs + j];
                  if (want_x) gx[xs + j] += go * kv[koff + j];
                }
              }
            }
          }
        }
        if (want_x) t.accumulate(ix, gx);
        if (want_k) t.accumulate(ik, gk);
      });
}

Var add_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  const Shape& sx = x.shape();
  if (sx.size() < 2 || bias.shape().size() != 1 || bias.shape()[0] != sx[1]) {
    throw DimensionError("add_bias: " + to_string(sx) + " + " + to_string(bias.shape()));
  }
  const std::size_t outer = sx[0], chans = sx[1];
  const std::size_t inner = numel(sx) / (outer * chans);
  auto y = copy(x.value());
  const auto bv = bias.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < chans; ++c)
      for (std::size_t i = 0; i < inner; ++i) y[(o * chans + c) * inner + i] += bv[c];
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape()->record("add_bias", sx, std::move(y), {x, bias},
                          [=](Tape& t, std::size_t self) {
                            const auto& g = t.grad_of(self);
                            t.accumulate(ix, g);
                            if (!t.needs_grad(ib)) return;
                            std::vector<double> gb(chans, 0.0);
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t c = 0; c < chans; ++c)
                                for (std::size_t i = 0; i < inner; ++i) gb[c] += g[(o * chans + c) * inner + i];
                            t.accumulate(ib, gb);
                          });
}

Var reshape(Var a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  const std::size_t ia = a.id();
  return a.tape()->record("reshape", std::move(shape), copy(a.value()), {a},
                          [ia](Tape& t, std::size_t self) { t.accumulate(ia, t.grad_of(self)); });
}

Var mean_last_axis(Var a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("mean_last_axis: rank < 2 in " + to_string(s));
  const std::size_t len = s.back();
  const std::size_t rows = a.size() / len;
  const auto av = a.value();
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += av[r * len + i];
    y[r] = acc / static_cast<double>(len);
  }
  Shape out(s.begin(), s.end() - 1);
  const std::size_t ia = a.id();
  return a.tape()->record("mean_last_axis", std::move(out), std::move(y), {a},
                          [ia, rows, len](Tape& t, std::size_t self) {
                            const auto& g = t.grad_of(self);
                            std::vector<double> ga(rows * len);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t i = 0; i < len; ++i)
                                ga[r * len + i] = g[r] / static_cast<double>(len);
                            t.accumulate(ia, ga);
                          });
}

Var channel_correlation(Var x) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw DimensionError("channel_correlation: expected [B x C x L], got " + to_string(s));
  const std::size_t batch = s[0], chans = s[1], len = s[2];
  const auto xv = x.value();
  const double inv = 1.0 / static_cast<double>(len);
  std::vector<double> y(batch * chans * chans, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < chans; ++i)
      for (std::size_t j = 0; j < chans; ++j) {
        const double* xi = &xv[(b * chans + i) * len];
        const double* xj = &xv[(b * chans + j) * len];
        double acc = 0.0;
        for (std::size_t k = 0; k < len; ++k) acc += xi[k] * xj[k];
        y[(b * chans + i) * chans + j] = acc * inv;
      }
  const std::size_t ix = x.id();
  return x.tape()->record("channel_correlation", {batch, chans, chans}, std::move(y), {x},
                          [=](Tape& t, std::size_t self) {
                            const auto& g = t.grad_of(self);
                            const auto& xv = t.value_of(ix);
                            std::vector<double> gx(xv.size(), 0.0);
                            // d y_ij / d x_ik = x_jk / L and d y_ij / d x_jk = x_ik / L
                            for (std::size_t b = 0; b < batch; ++b)
                              for (std::size_t i = 0; i < chans; ++i)
                                for (std::size_t j = 0; j < chans; ++j) {
                                  const double gij = g[(b * chans + i) * chans + j] * inv;
                                  const std::size_t oi = (b * chans + i) * len;
                                  const std::size_t oj = (b * chans + j) * len;
                                  for (std::size_t k = 0; k < len; ++k) {
                                    gx[oi + k] += gij * xv[oj + k];
                                    gx[oj + k] += gij * xv[oi + k];
                                  }
                                }
                            t.accumulate(ix, gx);
                          });
}

Var softmax_rows(Var logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("softmax temperature must be positive and finite");
  }
  const Shape& s = logits.shape();
  if (s.size() != 2) throw DimensionError("softmax_rows: expected [B x M], got " + to_string(s));
  const std::size_t rows = s[0], cols = s[1];
  const auto z = logits.value();
  std::vector<double> p(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = &z[r * cols];
    const double zmax = *std::max_element(zr, zr + cols);
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[r * cols + c] = std::exp((zr[c] - zmax) / temperature);
      denom += p[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] /= denom;
  }
  const std::size_t iz = logits.id();
  return logits.tape()->record("softmax", s, std::move(p), {logits},
                               [iz, rows, cols, temperature](Tape& t, std::size_t self) {
                                 const auto& g = t.grad_of(self);
                                 const auto& p = t.value_of(self);
                                 std::vector<double> gz(rows * cols);
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * p[r * cols + c];
                                   for (std::size_t c = 0; c < cols; ++c)
                                     gz[r * cols + c] = p[r * cols + c] * (g[r * cols + c] - dot) / temperature;
                                 }
                                 t.accumulate(iz, gz);
                               });
}

Var pick(Var a, std::span<const int> index) {
  const Shape& s = a.shape();
  if (s.size() != 2 || index.size() != s[0]) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + to_string(s));
  }
  const std::size_t rows = s[0], cols = s[1];
  const auto av = a.value();
  std::vector<int> idx(index.begin(), index.end());
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols) {
      throw DataError("class index " + std::to_string(idx[r]) + " outside [0, " + std::to_string(cols) + ")");
    }
    y[r] = av[r * cols + static_cast<std::size_t>(idx[r])];
  }
  const std::size_t ia = a.id();
  return a.tape()->record("pick", {rows}, std::move(y), {a},
                          [ia, rows, cols, idx = std::move(idx)](Tape& t, std::size_t self) {
                            const auto& g = t.grad_of(self);
                            std::vector<double> ga(rows * cols, 0.0);
                            for (std::size_t r = 0; r < rows; ++r) ga[r * cols + static_cast<std::size_t>(idx[r])] = g[r];
                            t.accumulate(ia, ga);
                          });
}

Var detach(Var a, Tape& tape) {
  const auto v = a.value();
  return tape.constant(a.shape(), std::vector<double>(v.begin(), v.end()));
}

}  // namespace dbkd
