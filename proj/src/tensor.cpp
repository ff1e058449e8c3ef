#include "tass/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <utility>

namespace tass {

namespace {

std::atomic<std::uint64_t> g_tape_counter{0};

std::size_t checked_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0)
      throw DimensionError(detail::msg("zero extent in shape ", shape_str(shape)));
    n *= e;
  }
  return n;
}

using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;

void ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape) {
  return full(shape, 0.0);
}

Tensor Tensor::full(const Shape& shape, double v) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.assign(checked_size(shape), v);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) {
  return from_data({}, {v});
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> values) {
  std::size_t expect = checked_size(shape);
  if (values.size() != expect)
    throw DimensionError(detail::msg("shape ", shape_str(shape), " needs ",
                                     expect, " values, got ", values.size()));
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  std::size_t count = checked_size(shape);
  std::vector<double> v(count);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return from_data(shape, std::move(v));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value.size();
}

std::span<const double> Tensor::values() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError(detail::msg("item() on tensor of shape ",
                                    shape_str(shape())));
  return node_->value[0];
}

bool Tensor::requires_grad() const {
  return node_ && node_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of undefined tensor");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad())
    throw ContractError("gradient not populated; run backward first");
  return node_->grad;
}

void Tensor::clear_grad() {
  if (node_) node_->grad.clear();
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() : id_(++g_tape_counter) {}

bool Tape::live(const Tensor& t) const {
  if (!t.defined()) return false;
  return t.node()->requires_grad || t.node()->tape_id == id_;
}

void Tape::record(const Tensor& out, std::function<void()> adjoint) {
  out.node()->tape_id = id_;
  steps_.push_back(std::move(adjoint));
}

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.size() != 1)
    throw ContractError(detail::msg("loss must be scalar, got shape ",
                                    shape_str(loss.shape())));
  if (loss.node()->tape_id != tape.id())
    throw StaleTapeError("loss was not produced through this tape");
  if (tape.consumed_)
    throw StaleTapeError("backward already ran on this tape; run a new forward");
  tape.consumed_ = true;
  ensure_grad(*loss.node());
  loss.node()->grad[0] = 1.0;
  for (auto it = tape.steps_.rbegin(); it != tape.steps_.rend(); ++it) (*it)();
}

// ---- op helpers -----------------------------------------------------------

namespace {

// Emit an op result: if any input is live on the tape, register the adjoint.
template <class Adjoint>
Tensor emit(Tape& tape, Shape shape, std::vector<double> value,
            std::initializer_list<Tensor> inputs, Adjoint&& make_adjoint) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(value));
  bool any_live = false;
  for (const Tensor& in : inputs)
    if (tape.live(in)) any_live = true;
  if (any_live) tape.record(out, make_adjoint(out));
  return out;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(detail::msg(op, ": shapes differ, ",
                                     shape_str(a.shape()), " vs ",
                                     shape_str(b.shape()),
                                     " (broadcast not supported)"));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw DimensionError(detail::msg(op, ": expected rank-2 tensor, got shape ",
                                     shape_str(t.shape())));
}

}  // namespace

// ---- matmul / transpose ----------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw DimensionError(detail::msg("matmul: inner dimensions disagree, ",
                                     shape_str(a.shape()), " vs ",
                                     shape_str(b.shape())));
  std::vector<double> c(m * n, 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }

  auto an = a.node(), bn = b.node();
  bool la = tape.live(a), lb = tape.live(b);
  return emit(tape, {m, n}, std::move(c), {a, b}, [=](const Tensor& out) {
    auto on = out.node();
    return [an, bn, on, la, lb, m, k, n]() {
      if (on->grad.empty()) return;
      const double* g = on->grad.data();
      if (la) {
        ensure_grad(*an);
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = bn->value.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[i * k + p] += acc;
          }
      }
      if (lb) {
        ensure_grad(*bn);
        // dB = A^T * dC
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t i = 0; i < m; ++i) {
            const double av = an->value[i * k + p];
            const double* grow = g + i * n;
            double* brow = bn->grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    };
  });
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_rank2("transpose", x);
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> v(m * n);
  const double* px = x.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = px[i * n + j];

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, {n, m}, std::move(v), {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, m, n]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          xn->grad[i * n + j] += on->grad[j * m + i];
    };
  });
}

// ---- softmax ----------------------------------------------------------------

Tensor softmax_lastdim(Tape& tape, const Tensor& x) {
  if (x.rank() == 0)
    throw DimensionError("softmax_lastdim: scalar has no trailing dimension");
  const std::size_t n = x.shape().back();
  const std::size_t slices = x.size() / n;
  std::vector<double> y(x.size());
  const double* px = x.values().data();
  for (std::size_t s = 0; s < slices; ++s) {
    const double* in = px + s * n;
    double* out = y.data() + s * n;
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(in[i] - mx);
      sum += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
  }

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, x.shape(), std::move(y), {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, n, slices]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (std::size_t s = 0; s < slices; ++s) {
        const double* yv = on->value.data() + s * n;
        const double* gy = on->grad.data() + s * n;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += yv[i] * gy[i];
        double* gx = xn->grad.data() + s * n;
        for (std::size_t i = 0; i < n; ++i) gx[i] += yv[i] * (gy[i] - dot);
      }
    };
  });
}

// ---- elementwise -------------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor binary_elementwise(const char* name, Tape& tape, const Tensor& a,
                          const Tensor& b, Fwd fwd, Bwd bwd) {
  require_same_shape(name, a, b);
  std::vector<double> v(a.size());
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(pa[i], pb[i]);

  auto an = a.node(), bn = b.node();
  bool la = tape.live(a), lb = tape.live(b);
  return emit(tape, a.shape(), std::move(v), {a, b}, [=](const Tensor& out) {
    auto on = out.node();
    return [an, bn, on, la, lb, bwd]() {
      if (on->grad.empty()) return;
      const std::size_t n = on->grad.size();
      if (la) ensure_grad(*an);
      if (lb) ensure_grad(*bn);
      for (std::size_t i = 0; i < n; ++i) {
        auto [da, db] = bwd(an->value[i], bn->value[i]);
        if (la) an->grad[i] += da * on->grad[i];
        if (lb) bn->grad[i] += db * on->grad[i];
      }
    };
  });
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", tape, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", tape, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", tape, a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

namespace {

template <class Fwd, class Dydx>
Tensor unary_from_output(Tape& tape, const Tensor& x, Fwd fwd, Dydx dydx) {
  std::vector<double> v(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(px[i]);

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, x.shape(), std::move(v), {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, dydx]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += dydx(on->value[i]) * on->grad[i];
    };
  });
}

}  // namespace

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary_from_output(
      tape, x, [](double v) { return std::tanh(v); },
      [](double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_from_output(
      tape, x,
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                     : std::exp(v) / (1.0 + std::exp(v)); },
      [](double y) { return y * (1.0 - y); });
}

Tensor unary_map(Tape& tape, const Tensor& x, double (*f)(double),
                 double (*df)(double)) {
  std::vector<double> v(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(px[i]);

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, x.shape(), std::move(v), {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, df]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += df(xn->value[i]) * on->grad[i];
    };
  });
}

// ---- concat / slice / gather -------------------------------------------------

Tensor concat_lastdim(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || b.rank() == 0 || a.rank() != b.rank())
    throw DimensionError(detail::msg("concat_lastdim: ranks incompatible, ",
                                     shape_str(a.shape()), " vs ",
                                     shape_str(b.shape())));
  Shape sa = a.shape(), sb = b.shape();
  for (std::size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i])
      throw DimensionError(detail::msg(
          "concat_lastdim: leading extents differ, ", shape_str(sa), " vs ",
          shape_str(sb)));
  const std::size_t na = sa.back(), nb = sb.back();
  const std::size_t slices = a.size() / na;
  Shape so = sa;
  so.back() = na + nb;
  std::vector<double> v(slices * (na + nb));
  for (std::size_t s = 0; s < slices; ++s) {
    std::copy_n(a.values().data() + s * na, na, v.data() + s * (na + nb));
    std::copy_n(b.values().data() + s * nb, nb, v.data() + s * (na + nb) + na);
  }

  auto an = a.node(), bn = b.node();
  bool la = tape.live(a), lb = tape.live(b);
  return emit(tape, std::move(so), std::move(v), {a, b},
              [=](const Tensor& out) {
                auto on = out.node();
                return [an, bn, on, la, lb, na, nb, slices]() {
                  if (on->grad.empty()) return;
                  if (la) ensure_grad(*an);
                  if (lb) ensure_grad(*bn);
                  for (std::size_t s = 0; s < slices; ++s) {
                    const double* g = on->grad.data() + s * (na + nb);
                    if (la)
                      for (std::size_t i = 0; i < na; ++i)
                        an->grad[s * na + i] += g[i];
                    if (lb)
                      for (std::size_t i = 0; i < nb; ++i)
                        bn->grad[s * nb + i] += g[na + i];
                  }
                };
              });
}

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2("concat_rows", a);
  require_rank2("concat_rows", b);
  if (a.shape()[1] != b.shape()[1])
    throw DimensionError(detail::msg("concat_rows: widths differ, ",
                                     shape_str(a.shape()), " vs ",
                                     shape_str(b.shape())));
  const std::size_t ra = a.shape()[0], rb = b.shape()[0], d = a.shape()[1];
  std::vector<double> v;
  v.reserve((ra + rb) * d);
  v.insert(v.end(), a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());

  auto an = a.node(), bn = b.node();
  bool la = tape.live(a), lb = tape.live(b);
  return emit(tape, {ra + rb, d}, std::move(v), {a, b},
              [=](const Tensor& out) {
                auto on = out.node();
                return [an, bn, on, la, lb, ra, rb, d]() {
                  if (on->grad.empty()) return;
                  if (la) {
                    ensure_grad(*an);
                    for (std::size_t i = 0; i < ra * d; ++i)
                      an->grad[i] += on->grad[i];
                  }
                  if (lb) {
                    ensure_grad(*bn);
                    for (std::size_t i = 0; i < rb * d; ++i)
                      bn->grad[i] += on->grad[ra * d + i];
                  }
                };
              });
}

Tensor slice_lastdim(Tape& tape, const Tensor& x, std::size_t start,
                     std::size_t len) {
  if (x.rank() == 0)
    throw DimensionError("slice_lastdim: scalar has no trailing dimension");
  const std::size_t n = x.shape().back();
  if (len == 0 || start + len > n)
    throw IndexError(detail::msg("slice_lastdim: range [", start, ", ",
                                 start + len, ") out of extent ", n));
  const std::size_t slices = x.size() / n;
  Shape so = x.shape();
  so.back() = len;
  std::vector<double> v(slices * len);
  for (std::size_t s = 0; s < slices; ++s)
    std::copy_n(x.values().data() + s * n + start, len, v.data() + s * len);

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, std::move(so), std::move(v), {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, n, start, len, slices]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (std::size_t s = 0; s < slices; ++s)
        for (std::size_t i = 0; i < len; ++i)
          xn->grad[s * n + start + i] += on->grad[s * len + i];
    };
  });
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::vector<std::size_t> idx) {
  require_rank2("gather_rows", x);
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  for (std::size_t i : idx)
    if (i >= rows)
      throw IndexError(detail::msg("gather_rows: row ", i, " out of ", rows));
  std::vector<double> v(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x.values().data() + idx[r] * d, d, v.data() + r * d);

  auto xn = x.node();
  bool lx = tape.live(x);
  const std::size_t out_rows = idx.size();
  return emit(tape, {out_rows, d}, std::move(v), {x}, [=, idx = std::move(idx)](
                                                          const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, d, idx]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j)
          xn->grad[idx[r] * d + j] += on->grad[r * d + j];
    };
  });
}

Tensor gather_lastdim(Tape& tape, const Tensor& x,
                      std::vector<std::size_t> idx) {
  if (x.rank() == 0)
    throw DimensionError("gather_lastdim: scalar has no trailing dimension");
  const std::size_t n = x.shape().back();
  for (std::size_t i : idx)
    if (i >= n)
      throw IndexError(detail::msg("gather_lastdim: index ", i, " out of ", n));
  const std::size_t slices = x.size() / n;
  Shape so = x.shape();
  so.back() = idx.size();
  std::vector<double> v(slices * idx.size());
  for (std::size_t s = 0; s < slices; ++s)
    for (std::size_t r = 0; r < idx.size(); ++r)
      v[s * idx.size() + r] = x.values()[s * n + idx[r]];

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, std::move(so), std::move(v), {x},
              [=, idx = std::move(idx)](const Tensor& out) {
                auto on = out.node();
                return [xn, on, lx, n, slices, idx]() {
                  if (on->grad.empty() || !lx) return;
                  ensure_grad(*xn);
                  for (std::size_t s = 0; s < slices; ++s)
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      xn->grad[s * n + idx[r]] +=
                          on->grad[s * idx.size() + r];
                };
              });
}

Tensor select_row(Tape& tape, const Tensor& x, std::size_t row) {
  return gather_rows(tape, x, {row});
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows given");
  const std::size_t d = rows[0].size();
  for (const Tensor& r : rows) {
    require_rank2("stack_rows", r);
    if (r.shape()[0] != 1 || r.size() != d)
      throw DimensionError(detail::msg("stack_rows: expected 1x", d,
                                       " rows, got ", shape_str(r.shape())));
  }
  std::vector<double> v(rows.size() * d);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(rows[r].values().data(), d, v.data() + r * d);

  std::vector<NodePtr> nodes;
  std::vector<bool> live;
  bool any_live = false;
  for (const Tensor& r : rows) {
    nodes.push_back(r.node());
    live.push_back(tape.live(r));
    any_live = any_live || live.back();
  }
  Tensor out = Tensor::from_data({rows.size(), d}, std::move(v));
  if (any_live) {
    auto on = out.node();
    tape.record(out, [on, d, nodes = std::move(nodes), live = std::move(live)]() {
      if (on->grad.empty()) return;
      for (std::size_t r = 0; r < nodes.size(); ++r) {
        if (!live[r]) continue;
        ensure_grad(*nodes[r]);
        for (std::size_t j = 0; j < d; ++j)
          nodes[r]->grad[j] += on->grad[r * d + j];
      }
    });
  }
  return out;
}

// ---- reductions / scaling ----------------------------------------------------

Tensor mean_axis(Tape& tape, const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw DimensionError(detail::msg("mean_axis: axis ", axis,
                                     " out of rank ", x.rank()));
  const Shape& sx = x.shape();
  const std::size_t extent = sx[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sx[i];
  for (std::size_t i = axis + 1; i < sx.size(); ++i) inner *= sx[i];
  Shape so;
  for (std::size_t i = 0; i < sx.size(); ++i)
    if (i != axis) so.push_back(sx[i]);
  std::vector<double> v(outer * inner, 0.0);
  const double* px = x.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i)
        v[o * inner + i] += px[(o * extent + e) * inner + i];
  for (auto& t : v) t /= static_cast<double>(extent);

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, std::move(so), std::move(v), {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, outer, inner, extent]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      const double inv = 1.0 / static_cast<double>(extent);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e)
          for (std::size_t i = 0; i < inner; ++i)
            xn->grad[(o * extent + e) * inner + i] +=
                inv * on->grad[o * inner + i];
    };
  });
}

Tensor scalar_scale(Tape& tape, const Tensor& x, double c) {
  std::vector<double> v(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = px[i] * c;

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, x.shape(), std::move(v), {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx, c]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += c * on->grad[i];
    };
  });
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, {}, {s}, {x}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, on, lx]() {
      if (on->grad.empty() || !lx) return;
      ensure_grad(*xn);
      for (auto& g : xn->grad) g += on->grad[0];
    };
  });
}

Tensor div_by_scalar(Tape& tape, const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    throw DimensionError(detail::msg("div_by_scalar: divisor must be a single "
                                     "value, got shape ",
                                     shape_str(s.shape())));
  const double sv = s.values()[0];
  if (sv == 0.0) throw DomainError("div_by_scalar: division by zero");
  std::vector<double> v(x.size());
  const double* px = x.values().data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = px[i] / sv;

  auto xn = x.node(), sn = s.node();
  bool lx = tape.live(x), ls = tape.live(s);
  return emit(tape, x.shape(), std::move(v), {x, s}, [=](const Tensor& out) {
    auto on = out.node();
    return [xn, sn, on, lx, ls, sv]() {
      if (on->grad.empty()) return;
      if (lx) {
        ensure_grad(*xn);
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          xn->grad[i] += on->grad[i] / sv;
      }
      if (ls) {
        ensure_grad(*sn);
        double acc = 0.0;
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          acc -= xn->value[i] / (sv * sv) * on->grad[i];
        sn->grad[0] += acc;
      }
    };
  });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  std::size_t expect = 1;
  for (std::size_t e : shape) {
    if (e == 0)
      throw DimensionError(detail::msg("reshape: zero extent in ",
                                       shape_str(shape)));
    expect *= e;
  }
  if (expect != x.size())
    throw DimensionError(detail::msg("reshape: size ", x.size(),
                                     " incompatible with ", shape_str(shape)));
  std::vector<double> v(x.values().begin(), x.values().end());

  auto xn = x.node();
  bool lx = tape.live(x);
  return emit(tape, std::move(shape), std::move(v), {x},
              [=](const Tensor& out) {
                auto on = out.node();
                return [xn, on, lx]() {
                  if (on->grad.empty() || !lx) return;
                  ensure_grad(*xn);
                  for (std::size_t i = 0; i < on->grad.size(); ++i)
                    xn->grad[i] += on->grad[i];
                };
              });
}

// ---- losses -------------------------------------------------------------------

Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     const std::vector<std::size_t>& labels) {
  require_rank2("cross_entropy", logits);
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != batch)
    throw DimensionError(detail::msg("cross_entropy: ", labels.size(),
                                     " labels for batch of ", batch));
  for (std::size_t i = 0; i < batch; ++i)
    if (labels[i] >= classes)
      throw IndexError(detail::msg("cross_entropy: label ", labels[i],
                                   " out of range [0, ", classes, ") at row ",
                                   i));
  // softmax probabilities are kept for the adjoint
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  const double* pl = logits.values().data();
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = pl + i * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[i * classes + c] = std::exp(row[c] - mx);
      sum += probs[i * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[i * classes + c] /= sum;
    loss += std::log(sum) + mx - row[labels[i]];
  }
  loss /= static_cast<double>(batch);

  auto ln = logits.node();
  bool ll = tape.live(logits);
  return emit(tape, {}, {loss}, {logits},
              [=, probs = std::move(probs)](const Tensor& out) {
                auto on = out.node();
                return [ln, on, ll, probs, labels, batch, classes]() {
                  if (on->grad.empty() || !ll) return;
                  ensure_grad(*ln);
                  const double g = on->grad[0] / static_cast<double>(batch);
                  for (std::size_t i = 0; i < batch; ++i)
                    for (std::size_t c = 0; c < classes; ++c) {
                      double p = probs[i * classes + c];
                      ln->grad[i * classes + c] +=
                          g * (p - (c == labels[i] ? 1.0 : 0.0));
                    }
                };
              });
}

namespace {

// d/dp of p*log(p/m) terms; clamped so that exact zeros stay finite.
double half_log_ratio(double p, double m) {
  const double tiny = 1e-300;
  return 0.5 * std::log(std::max(p, tiny) / std::max(m, tiny));
}

}  // namespace

Tensor js_divergence(Tape& tape, const Tensor& p, const Tensor& q) {
  require_same_shape("js_divergence", p, q);
  auto check = [](const char* which, const Tensor& t) {
    double sum = 0.0;
    for (double v : t.values()) {
      if (v < 0.0)
        throw DomainError(detail::msg("js_divergence: negative entry ", v,
                                      " in ", which));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw DomainError(detail::msg("js_divergence: ", which, " sums to ", sum,
                                    ", not a probability vector"));
  };
  check("p", p);
  check("q", q);

  const double* pp = p.values().data();
  const double* pq = q.values().data();
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (pp[i] + pq[i]);
    if (pp[i] > 0.0) js += 0.5 * pp[i] * std::log(pp[i] / m);
    if (pq[i] > 0.0) js += 0.5 * pq[i] * std::log(pq[i] / m);
  }
  js = std::max(js, 0.0);  // guard against -0.0 rounding at p == q

  auto pn = p.node(), qn = q.node();
  bool lp = tape.live(p), lq = tape.live(q);
  return emit(tape, {}, {js}, {p, q}, [=](const Tensor& out) {
    auto on = out.node();
    return [pn, qn, on, lp, lq]() {
      if (on->grad.empty()) return;
      const double g = on->grad[0];
      const std::size_t n = pn->value.size();
      if (lp) ensure_grad(*pn);
      if (lq) ensure_grad(*qn);
      for (std::size_t i = 0; i < n; ++i) {
        const double m = 0.5 * (pn->value[i] + qn->value[i]);
        if (lp) pn->grad[i] += g * half_log_ratio(pn->value[i], m);
        if (lq) qn->grad[i] += g * half_log_ratio(qn->value[i], m);
      }
    };
  });
}

// ---- finite differences ---------------------------------------------------------

FdReport finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           const Tensor& x, double step, double tolerance) {
  if (step <= 0.0) throw ContractError("finite_diff_check: step must be > 0");

  Tensor probe = Tensor::from_data(
      x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  probe.set_requires_grad(true);
  Tape tape;
  Tensor loss = f(tape, probe);
  if (loss.size() != 1)
    throw ContractError("finite_diff_check: f must produce a scalar");
  backward(loss, tape);
  std::vector<double> analytic(probe.size(), 0.0);
  if (probe.has_grad()) {
    auto g = probe.grad();
    analytic.assign(g.begin(), g.end());
  }

  auto eval_at = [&](const std::vector<double>& values) {
    Tensor t = Tensor::from_data(x.shape(), values);
    Tape local;
    return f(local, t).item();
  };

  FdReport report;
  report.pass = true;
  std::vector<double> base(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += step;
    minus[i] -= step;
    const double numeric = (eval_at(plus) - eval_at(minus)) / (2.0 * step);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.analytic = analytic[i];
      report.numeric = numeric;
    }
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace tass
