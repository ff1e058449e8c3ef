#ifndef TASS_TENSOR_HPP
#define TASS_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tass/error.hpp"
#include "tass/rng.hpp"

namespace tass {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 = leaf, otherwise id of the producing tape
};

}  // namespace detail

/// Dense row-major tensor of doubles. Copies share the underlying node, so a
/// Tensor behaves as a lightweight handle; op outputs are never mutated after
/// creation. Leaf tensors (parameters, inputs) may be rewritten in place via
/// mutable_values() between forward passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor scalar(double v);
  static Tensor from_data(const Shape& shape, std::vector<double> values);
  /// Seeded uniform values in [lo, hi).
  static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> values() const;
  std::vector<double>& mutable_values();
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  /// Stable identity of the underlying node (for tests / bookkeeping).
  const void* node_id() const { return node_.get(); }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend class Tape;
};

/// A named parameter handle, used for optimizer updates, checkpoints and
/// gradient checks.
struct ParamRef {
  std::string name;
  Tensor tensor;
};

/// Ordered record of executed differentiable operations. One forward/backward
/// pair per tape; backward replays adjoint steps in exact reverse order.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t num_records() const { return steps_.size(); }
  bool consumed() const { return consumed_; }

  /// True when gradients must flow out of `t` on this tape.
  bool live(const Tensor& t) const;

  /// Low-level hook: register `out` as produced on this tape with the given
  /// adjoint step. Ops use this; tests may use it to build custom ops.
  void record(const Tensor& out, std::function<void()> adjoint);

 private:
  std::uint64_t id_;
  bool consumed_ = false;
  std::vector<std::function<void()>> steps_;

  friend void backward(const Tensor& loss, Tape& tape);
};

/// Runs reverse-mode accumulation from a scalar loss produced on `tape`.
/// Populates grad on every reachable tensor that requires it.
void backward(const Tensor& loss, Tape& tape);

// ---- differentiable operations ------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);
Tensor softmax_lastdim(Tape& tape, const Tensor& x);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
/// Elementwise map with caller-supplied value and derivative functions.
Tensor unary_map(Tape& tape, const Tensor& x, double (*f)(double),
                 double (*df)(double));

Tensor concat_lastdim(Tape& tape, const Tensor& a, const Tensor& b);
Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_lastdim(Tape& tape, const Tensor& x, std::size_t start,
                     std::size_t len);
Tensor gather_rows(Tape& tape, const Tensor& x, std::vector<std::size_t> idx);
Tensor gather_lastdim(Tape& tape, const Tensor& x,
                      std::vector<std::size_t> idx);
Tensor select_row(Tape& tape, const Tensor& x, std::size_t row);
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);

Tensor mean_axis(Tape& tape, const Tensor& x, std::size_t axis);
Tensor scalar_scale(Tape& tape, const Tensor& x, double c);
Tensor sum_all(Tape& tape, const Tensor& x);
/// x / s where s is a single-element tensor; differentiable in both.
Tensor div_by_scalar(Tape& tape, const Tensor& x, const Tensor& s);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

/// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     const std::vector<std::size_t>& labels);

/// Jensen-Shannon divergence of two probability vectors, natural log.
/// 0*log(0/x) is treated as 0. Value lies in [0, ln 2].
Tensor js_divergence(Tape& tape, const Tensor& p, const Tensor& q);

// ---- finite-difference oracle -------------------------------------------

struct FdReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // backward gradient at the worst entry
  double numeric = 0.0;   // central difference at the worst entry
};

/// Central-difference comparison against reverse-mode gradients. `f` must
/// deterministically map x (through the provided fresh tape) to a scalar.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
FdReport finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           const Tensor& x, double step, double tolerance);

}  // namespace tass

#endif  // TASS_TENSOR_HPP
