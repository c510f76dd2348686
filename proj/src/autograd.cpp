#include "autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "error.hpp"

namespace wvad {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  if (n.requires_grad) n.backward = std::move(backward);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  static const Tensor kEmpty;
  return nodes_[id].grad.empty() ? kEmpty : nodes_[id].grad;
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor();
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ArgumentError("backward root belongs to another tape");
  const std::size_t r = root.id();
  if (nodes_[r].value.size() != 1) throw DimensionError("backward root must be a scalar");
  backward_order_.clear();
  // Intermediate gradients are per-pass; leaf gradients accumulate.
  for (std::size_t i = 0; i <= r; ++i)
    if (nodes_[i].backward) nodes_[i].grad = Tensor();
  grad_slot(r)[0] += 1.0;
  for (std::size_t i = r + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    backward_order_.push_back(i);
    if (n.backward) n.backward(*this, i);
  }
}

namespace ops {
namespace {

Tape& tape_of(Var v) {
  if (!v.valid()) throw ArgumentError("operation on an unbound variable");
  return *v.tape();
}

void same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ArgumentError("operands recorded on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class Forward, class Derivative>
Var unary(Var a, Forward f, Derivative df) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, df](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& xv = tp.value(ia);
    const Tensor& yv = tp.value(self);
    Tensor& ga = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) throw DimensionError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor c({m, n}, 0.0);
  gemm_nn(av.data().data(), bv.data().data(), c.data().data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(c), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) gemm_nt(g.data().data(), t.value(ib).data().data(), t.grad_slot(ia).data().data(), m, n, k);
    if (t.requires_grad(ib)) gemm_tn(t.value(ia).data().data(), g.data().data(), t.grad_slot(ib).data().data(), k, m, n);
  });
}

Var matmul_nt(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) throw DimensionError("matmul_nt: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()) + "^T");
  Tensor c({m, n}, 0.0);
  gemm_nt(av.data().data(), bv.data().data(), c.data().data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(c), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) gemm_nn(g.data().data(), t.value(ib).data().data(), t.grad_slot(ia).data().data(), m, n, k);
    if (t.requires_grad(ib)) gemm_tn(g.data().data(), t.value(ia).data().data(), t.grad_slot(ib).data().data(), n, m, k);
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(j, i) = x[i * n + j];
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {ia}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      Tensor& gi = t.grad_slot(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_slot(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_slot(ia);
      const Tensor& bv2 = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_slot(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var add_row(Var a, Var row) {
  same_tape(a, row);
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (r.size() != n) throw DimensionError("add_row: row of " + std::to_string(r.size()) + " for " + std::to_string(n) + " columns");
  Tensor y = x;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] += r[j];
  const std::size_t ia = a.id(), ir = row.id();
  return tape_of(a).record(std::move(y), {ia, ir}, [ia, ir, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ir)) {
      Tensor& gr = t.grad_slot(ir);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    }
  });
}

Var add_col(Var a, Var col) {
  same_tape(a, col);
  const Tensor& x = a.value();
  const Tensor& c = col.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (c.size() != m) throw DimensionError("add_col: column of " + std::to_string(c.size()) + " for " + std::to_string(m) + " rows");
  Tensor y = x;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] += c[i];
  const std::size_t ia = a.id(), ic = col.id();
  return tape_of(a).record(std::move(y), {ia, ic}, [ia, ic, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ic)) {
      Tensor& gc = t.grad_slot(ic);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gc[i] += g[i * n + j];
    }
  });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var gelu(Var a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))); },
      [](double x, double) {
        const double th = std::tanh(kC * (x + kA * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kC * (1.0 + 3.0 * kA * x * x);
      });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t ia = a.id();
  return tape_of(a).record(Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i] += x[i * n + j];
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {ia}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
  });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = x.data().data() + i * n;
    double* yr = y.data().data() + i * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {ia}, [ia, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * yv[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += yv[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  same_tape(x, gain);
  same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n)
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  Tensor y(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[i * n + j] - mu) * is;
      (*xhat)[i * n + j] = h;
      y[i * n + j] = h * gv[j] + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape_of(x).record(std::move(y), {ix, ig, ib}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& gv2 = t.value(ig);
    if (t.requires_grad(ig)) {
      Tensor& gg = t.grad_slot(ig);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * (*xhat)[i * n + j];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_slot(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad_slot(ix);
      const double nn = static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[i * n + j] * gv2[j];
          s1 += dh;
          s2 += dh * (*xhat)[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[i * n + j] * gv2[j];
          gx[i * n + j] += (*inv_std)[i] / nn * (nn * dh - s1 - (*xhat)[i * n + j] * s2);
        }
      }
    }
  });
}

Var l2_normalize_rows(Var a, double eps) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  auto norms = std::make_shared<std::vector<double>>(m);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double s = eps;
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j] * x[i * n + j];
    const double nr = std::sqrt(s);
    (*norms)[i] = nr;
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] / nr;
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {ia}, [ia, m, n, norms](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * yv[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (g[i * n + j] - yv[i * n + j] * dot) / (*norms)[i];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t n = x.cols();
  if (count == 0 || begin + count > x.rows())
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                         std::to_string(x.rows()) + " rows");
  std::vector<double> d(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                        x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  const std::size_t ia = a.id();
  return tape_of(a).record(Tensor({count, n}, std::move(d)), {ia}, [ia, begin, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n)
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " +
                         std::to_string(n) + " columns");
  Tensor y({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = x[i * n + begin + j];
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {ia}, [ia, begin, m, n, count](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += g[i * count + j];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no operands");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  std::vector<std::size_t> ids;
  std::vector<double> d;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.value().cols() != n) throw DimensionError("concat_rows: column mismatch");
    m += p.value().rows();
    ids.push_back(p.id());
    d.insert(d.end(), p.value().data().begin(), p.value().data().end());
  }
  return tape_of(parts[0]).record(Tensor({m, n}, std::move(d)), ids, [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t sz = t.value(id).size();
      if (t.requires_grad(id)) {
        Tensor& gi = t.grad_slot(id);
        for (std::size_t i = 0; i < sz; ++i) gi[i] += g[off + i];
      }
      off += sz;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no operands");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.value().rows() != m) throw DimensionError("concat_cols: row mismatch");
    n += p.value().cols();
    ids.push_back(p.id());
  }
  Tensor y({m, n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t c = v.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) y[i * n + off + j] = v[i * c + j];
    off += c;
  }
  return tape_of(parts[0]).record(std::move(y), ids, [ids, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    std::size_t off2 = 0;
    for (std::size_t id : ids) {
      const std::size_t c = t.value(id).cols();
      if (t.requires_grad(id)) {
        Tensor& gi = t.grad_slot(id);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) gi[i * c + j] += g[i * n + off2 + j];
      }
      off2 += c;
    }
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  const std::size_t n = x.cols();
  if (rows.empty()) throw ArgumentError("gather_rows: empty index set");
  Tensor y({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.rows()) throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " out of range");
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = x[rows[r] * n + j];
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return tape_of(a).record(std::move(y), {ia}, [ia, n, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += g[r * n + j];
  });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0,1)");
  if (rate == 0.0) return a;
  const Tensor& x = a.value();
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = keep(rng) ? s : 0.0;
    y[i] = x[i] * (*mask)[i];
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {ia}, [ia, mask](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
  });
}

Var dws_conv1d(Var x, Var depth_kernel, Var point_kernel) {
  same_tape(x, depth_kernel);
  same_tape(x, point_kernel);
  const Tensor& xv = x.value();
  const Tensor& dk = depth_kernel.value();
  const Tensor& pk = point_kernel.value();
  const std::size_t T = xv.rows(), C = xv.cols();
  if (dk.rank() != 2 || dk.rows() != C)
    throw DimensionError("dws_conv1d: depth kernel " + shape_string(dk.shape()) + " for " + std::to_string(C) + " channels");
  if (pk.rank() != 2 || pk.rows() != C)
    throw DimensionError("dws_conv1d: point kernel " + shape_string(pk.shape()) + " for " + std::to_string(C) + " channels");
  const std::size_t W = dk.cols();
  if (W % 2 == 0) throw ArgumentError("dws_conv1d: kernel width must be odd");
  const std::size_t Cout = pk.cols();
  const auto radius = static_cast<std::ptrdiff_t>(W / 2);
  const auto last = static_cast<std::ptrdiff_t>(T) - 1;
  auto src = [radius, last](std::size_t t, std::size_t j) {
    return static_cast<std::size_t>(std::clamp(static_cast<std::ptrdiff_t>(t + j) - radius, std::ptrdiff_t{0}, last));
  };

  auto hidden = std::make_shared<Tensor>(Shape{T, C}, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t s = src(t, j);
      for (std::size_t c = 0; c < C; ++c) (*hidden)[t * C + c] += dk[c * W + j] * xv[s * C + c];
    }
  Tensor y({T, Cout}, 0.0);
  gemm_nn(hidden->data().data(), pk.data().data(), y.data().data(), T, C, Cout);

  const std::size_t ix = x.id(), id = depth_kernel.id(), ip = point_kernel.id();
  return tape_of(x).record(std::move(y), {ix, id, ip}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (t.requires_grad(ip)) gemm_tn(hidden->data().data(), g.data().data(), t.grad_slot(ip).data().data(), C, T, Cout);
    if (!t.requires_grad(ix) && !t.requires_grad(id)) return;
    Tensor dh({T, C}, 0.0);
    gemm_nt(g.data().data(), t.value(ip).data().data(), dh.data().data(), T, Cout, C);
    const Tensor& xv2 = t.value(ix);
    const Tensor& dk2 = t.value(id);
    if (t.requires_grad(id)) {
      Tensor& gd = t.grad_slot(id);
      for (std::size_t tt = 0; tt < T; ++tt)
        for (std::size_t j = 0; j < W; ++j) {
          const std::size_t s = src(tt, j);
          for (std::size_t c = 0; c < C; ++c) gd[c * W + j] += dh[tt * C + c] * xv2[s * C + c];
        }
    }
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad_slot(ix);
      for (std::size_t tt = 0; tt < T; ++tt)
        for (std::size_t j = 0; j < W; ++j) {
          const std::size_t s = src(tt, j);
          for (std::size_t c = 0; c < C; ++c) gx[s * C + c] += dh[tt * C + c] * dk2[c * W + j];
        }
    }
  });
}

std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k) {
  if (k == 0 || k > values.size())
    throw ArgumentError("top-k with k=" + std::to_string(k) + " over " + std::to_string(values.size()) + " entries");
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  idx.resize(k);
  return idx;
}

Var topk_mean(Var scores, std::size_t k) {
  const Tensor& s = scores.value();
  auto idx = topk_indices(s.data(), k);
  double acc = 0.0;
  for (std::size_t i : idx) acc += s[i];
  const double inv_k = 1.0 / static_cast<double>(k);
  const std::size_t ia = scores.id();
  return tape_of(scores).record(Tensor::scalar(acc * inv_k), {ia}, [ia, inv_k, idx = std::move(idx)](Tape& t, std::size_t self) {
    const double g = t.out_grad(self)[0];
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i : idx) ga[i] += g * inv_k;
  });
}

}  // namespace ops
}  // namespace wvad
