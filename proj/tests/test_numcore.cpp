#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tass/tensor.hpp"

using namespace tass;

namespace {

Tensor t2(std::size_t r, std::size_t c, std::vector<double> v) {
  return Tensor::from_data({r, c}, std::move(v));
}

double sum_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

TEST_CASE("tensor construction enforces invariants") {
  CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), DimensionError);
  Tensor s = Tensor::scalar(4.5);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 4.5);
}

TEST_CASE("matmul identity and hand values") {
  Tape tape;
  Tensor eye = t2(2, 2, {1, 0, 0, 1});
  Tensor a = t2(2, 2, {1, 2, 3, 4});
  Tensor c = matmul(tape, eye, a);
  CHECK(c.values()[0] == 1);
  CHECK(c.values()[1] == 2);
  CHECK(c.values()[2] == 3);
  CHECK(c.values()[3] == 4);

  Tensor row = t2(1, 2, {1, 2});
  Tensor col = t2(2, 1, {3, 4});
  CHECK(matmul(tape, row, col).item() == doctest::Approx(11).epsilon(1e-15));

  CHECK_THROWS_AS(matmul(tape, t2(2, 3, {1, 2, 3, 4, 5, 6}), t2(2, 2, {1, 2, 3, 4})),
                  DimensionError);
}

TEST_CASE("matmul gradient matches central finite differences") {
  Rng rng(7);
  Tensor b = Tensor::uniform({3, 3}, rng, -1.0, 1.0);
  Tensor a0 = Tensor::uniform({3, 3}, rng, -1.0, 1.0);
  auto f = [&](Tape& tape, const Tensor& a) {
    return sum_all(tape, matmul(tape, a, b));
  };
  FdReport rep = finite_diff_check(f, a0, 1e-5, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-6);

  // and with respect to the right operand
  auto g = [&](Tape& tape, const Tensor& bb) {
    return sum_all(tape, matmul(tape, a0, bb));
  };
  CHECK(finite_diff_check(g, b, 1e-5, 1e-6).pass);
}

TEST_CASE("softmax basics") {
  Tape tape;
  Tensor z = softmax_lastdim(tape, t2(1, 4, {0, 0, 0, 0}));
  for (double v : z.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  // max subtraction keeps huge logits finite
  Tensor big = softmax_lastdim(tape, t2(1, 2, {1000, 0}));
  CHECK(big.values()[0] == doctest::Approx(1.0));
  CHECK(big.values()[1] >= 0.0);
  CHECK(std::isfinite(big.values()[0]));

  Tensor hand =
      softmax_lastdim(tape, t2(1, 2, {std::log(1.0), std::log(3.0)}));
  CHECK(hand.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(hand.values()[1] == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(softmax_lastdim(tape, Tensor::scalar(1.0)), DimensionError);
}

TEST_CASE("softmax slices sum to one") {
  Rng rng(11);
  Tensor x = Tensor::uniform({5, 7}, rng, -30.0, 30.0);
  Tape tape;
  Tensor y = softmax_lastdim(tape, x);
  for (std::size_t s = 0; s < 5; ++s) {
    double sum = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      double v = y.values()[s * 7 + i];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("elementwise suite") {
  Tape tape;
  Tensor a = t2(1, 3, {1, 2, 3});
  Tensor z = t2(1, 3, {0, 0, 0});
  Tensor m = mul(tape, a, z);
  for (double v : m.values()) CHECK(v == 0.0);

  Tensor c = concat_lastdim(tape, t2(1, 2, {1, 2}), t2(1, 1, {3}));
  CHECK(c.shape() == Shape{1, 3});
  CHECK(c.values()[2] == 3);

  Tensor mm = mean_axis(tape, t2(2, 2, {1, 3, 5, 7}), 0);
  CHECK(mm.shape() == Shape{2});
  CHECK(mm.values()[0] == doctest::Approx(3));
  CHECK(mm.values()[1] == doctest::Approx(5));

  // no implicit broadcast
  CHECK_THROWS_AS(add(tape, t2(1, 3, {1, 2, 3}), t2(1, 2, {1, 2})),
                  DimensionError);
  CHECK_THROWS_AS(mul(tape, t2(2, 2, {1, 2, 3, 4}), Tensor::scalar(2.0)),
                  DimensionError);

  Tensor s = scalar_scale(tape, a, 2.0);
  CHECK(s.values()[2] == 6.0);
}

TEST_CASE("elementwise gradients") {
  Rng rng(3);
  Tensor x0 = Tensor::uniform({2, 3}, rng, -2.0, 2.0);
  Tensor other = Tensor::uniform({2, 3}, rng, -2.0, 2.0);

  auto check = [&](auto make) {
    FdReport rep = finite_diff_check(make, x0, 1e-5, 1e-5);
    CHECK(rep.pass);
  };
  check([&](Tape& t, const Tensor& x) { return sum_all(t, add(t, x, other)); });
  check([&](Tape& t, const Tensor& x) { return sum_all(t, sub(t, other, x)); });
  check([&](Tape& t, const Tensor& x) { return sum_all(t, mul(t, x, other)); });
  check([&](Tape& t, const Tensor& x) { return sum_all(t, tanh(t, x)); });
  check([&](Tape& t, const Tensor& x) { return sum_all(t, sigmoid(t, x)); });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, mul(t, softmax_lastdim(t, x), other));
  });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, mul(t, transpose(t, x), transpose(t, other)));
  });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, slice_lastdim(t, x, 1, 2));
  });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, gather_rows(t, x, {1, 0, 1}));
  });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, gather_lastdim(t, x, {2, 2, 0}));
  });
  check([&](Tape& t, const Tensor& x) { return sum_all(t, mean_axis(t, x, 1)); });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, reshape(t, x, {3, 2}));
  });
  check([&](Tape& t, const Tensor& x) {
    return div_by_scalar(t, sum_all(t, x), Tensor::scalar(3.0));
  });
  check([&](Tape& t, const Tensor& x) {
    // divisor path of div_by_scalar
    Tensor s = sum_all(t, x);
    return sum_all(t, div_by_scalar(t, other, s));
  });
  check([&](Tape& t, const Tensor& x) {
    Tensor r0 = select_row(t, x, 0);
    Tensor r1 = select_row(t, x, 1);
    std::vector<Tensor> rows{r1, r0, r1};
    return sum_all(t, stack_rows(t, rows));
  });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, concat_rows(t, x, other));
  });
  check([&](Tape& t, const Tensor& x) {
    return sum_all(t, concat_lastdim(t, x, other));
  });
}

TEST_CASE("cross entropy values and gradient") {
  Tape tape;
  Tensor uniform = cross_entropy(tape, t2(1, 2, {0, 0}), {0});
  CHECK(uniform.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // independent hand evaluation: -log sigmoid(20) == log1p(exp(-20))
  Tensor sharp = cross_entropy(tape, t2(1, 2, {10, -10}), {0});
  const double expected = std::log1p(std::exp(-20.0));
  CHECK(sharp.item() == doctest::Approx(expected).epsilon(1e-9));
  CHECK(sharp.item() == doctest::Approx(2.0611536e-9).epsilon(1e-4));

  CHECK_THROWS_AS(cross_entropy(tape, t2(1, 2, {0, 0}), {2}), IndexError);

  Rng rng(17);
  Tensor logits = Tensor::uniform({4, 5}, rng, -3.0, 3.0);
  std::vector<std::size_t> labels{0, 3, 2, 4};
  auto f = [&](Tape& t, const Tensor& x) {
    return cross_entropy(t, x, labels);
  };
  FdReport rep = finite_diff_check(f, logits, 1e-5, 1e-6);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("js divergence algebra") {
  Tape tape;
  Tensor p = Tensor::from_data({2}, {0.3, 0.7});
  Tensor q = Tensor::from_data({2}, {0.3, 0.7});
  CHECK(js_divergence(tape, p, q).item() == doctest::Approx(0.0).epsilon(1e-12));

  // hand oracle: 0.5*KL(p||m) + 0.5*KL(q||m) evaluated directly
  auto js_oracle = [](std::vector<double> a, std::vector<double> b) {
    double out = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double m = 0.5 * (a[i] + b[i]);
      if (a[i] > 0) out += 0.5 * a[i] * std::log(a[i] / m);
      if (b[i] > 0) out += 0.5 * b[i] * std::log(b[i] / m);
    }
    return out;
  };
  Tensor ph = Tensor::from_data({2}, {1.0, 0.0});
  Tensor qh = Tensor::from_data({2}, {0.5, 0.5});
  double got = js_divergence(tape, ph, qh).item();
  CHECK(got == doctest::Approx(js_oracle({1, 0}, {0.5, 0.5})).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.2157615543).epsilon(1e-6));

  // symmetry on random distribution pairs
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng.index(6);
    std::vector<double> a(n), b(n);
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform() + 1e-3;
      b[i] = rng.uniform() + 1e-3;
      sa += a[i];
      sb += b[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      a[i] /= sa;
      b[i] /= sb;
    }
    Tensor ta = Tensor::from_data({n}, a);
    Tensor tb = Tensor::from_data({n}, b);
    double ab = js_divergence(tape, ta, tb).item();
    double ba = js_divergence(tape, tb, ta).item();
    CHECK(std::abs(ab - ba) < 1e-12);
    CHECK(ab >= 0.0);
    CHECK(ab <= std::log(2.0) + 1e-12);
  }

  CHECK_THROWS_AS(
      js_divergence(tape, Tensor::from_data({2}, {-0.1, 1.1}), qh),
      DomainError);
  CHECK_THROWS_AS(
      js_divergence(tape, Tensor::from_data({2}, {0.4, 0.4}), qh),
      DomainError);
}

TEST_CASE("js divergence gradient") {
  // step stays inside the 1e-6 sum tolerance of the domain check
  Rng rng(31);
  std::vector<double> a(5), b(5);
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    a[i] = rng.uniform() + 0.05;
    b[i] = rng.uniform() + 0.05;
    sa += a[i];
    sb += b[i];
  }
  for (std::size_t i = 0; i < 5; ++i) {
    a[i] /= sa;
    b[i] /= sb;
  }
  Tensor q = Tensor::from_data({5}, b);
  auto f = [&](Tape& t, const Tensor& p) { return js_divergence(t, p, q); };
  FdReport rep = finite_diff_check(f, Tensor::from_data({5}, a), 5e-7, 1e-5);
  CHECK(rep.pass);

  // and through a softmax front end, which keeps the domain valid
  Tensor logits = Tensor::uniform({1, 5}, rng, -1.0, 1.0);
  auto g = [&](Tape& t, const Tensor& x) {
    Tensor p = reshape(t, softmax_lastdim(t, x), {5});
    return js_divergence(t, p, q);
  };
  CHECK(finite_diff_check(g, logits, 1e-5, 1e-5).pass);
}

TEST_CASE("backward fills gradients and rejects misuse") {
  {
    Tape tape;
    Tensor x = t2(2, 3, {1, -2, 3, 0.5, 0, -1}).set_requires_grad(true);
    Tensor loss = sum_all(tape, x);
    backward(loss, tape);
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  {
    Tape tape;
    Tensor x = t2(1, 4, {0, 0, 0, 0}).set_requires_grad(true);
    Tensor loss = sum_all(tape, tanh(tape, x));
    backward(loss, tape);
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0).epsilon(1e-15));
  }
  {
    // second backward without a new forward is rejected
    Tape tape;
    Tensor x = t2(1, 2, {1, 2}).set_requires_grad(true);
    Tensor loss = sum_all(tape, x);
    backward(loss, tape);
    CHECK_THROWS_AS(backward(loss, tape), StaleTapeError);
  }
  {
    // non-scalar loss
    Tape tape;
    Tensor x = t2(1, 2, {1, 2}).set_requires_grad(true);
    Tensor y = add(tape, x, x);
    CHECK_THROWS_AS(backward(y, tape), ContractError);
  }
  {
    // loss detached from the tape
    Tape tape;
    Tensor x = t2(1, 2, {1, 2}).set_requires_grad(true);
    Tape other;
    Tensor loss = sum_all(other, x);
    CHECK_THROWS_AS(backward(loss, tape), StaleTapeError);
  }
}

TEST_CASE("finite_diff_check on simple functions") {
  // f(x) = x^2 at x=3: analytic 6
  Tensor x = Tensor::scalar(3.0);
  auto square = [](Tape& t, const Tensor& v) { return mul(t, v, v); };
  FdReport rep = finite_diff_check(square, x, 1e-5, 1e-8);
  CHECK(rep.pass);
  CHECK(rep.analytic == doctest::Approx(6.0).epsilon(1e-10));
  CHECK(rep.numeric == doctest::Approx(6.0).epsilon(1e-8));

  // softmax-then-cross-entropy composite
  Rng rng(5);
  Tensor logits = Tensor::uniform({3, 4}, rng, -2.0, 2.0);
  std::vector<std::size_t> labels{1, 0, 3};
  auto comp = [&](Tape& t, const Tensor& v) {
    return cross_entropy(t, scalar_scale(t, v, 1.7), labels);
  };
  CHECK(finite_diff_check(comp, logits, 1e-5, 1e-5).pass);

  // negative control: a deliberately corrupted adjoint must be caught
  auto bad_tanh = [](Tape& t, const Tensor& v) {
    Tensor y = unary_map(
        t, v, [](double a) { return std::tanh(a); },
        [](double a) { return 2.0 * (1.0 - std::tanh(a) * std::tanh(a)); });
    return sum_all(t, y);
  };
  Tensor probe = Tensor::from_data({3}, {0.3, -0.8, 1.2});
  CHECK_FALSE(finite_diff_check(bad_tanh, probe, 1e-5, 1e-5).pass);
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(41);
  Tensor a = Tensor::uniform({4, 4}, rng, -1.0, 1.0);
  Tensor b = Tensor::uniform({4, 4}, rng, -1.0, 1.0);
  auto run = [&]() {
    Tape tape;
    Tensor y = softmax_lastdim(tape, matmul(tape, tanh(tape, a), b));
    return std::vector<double>(y.values().begin(), y.values().end());
  };
  auto r1 = run(), r2 = run();
  CHECK(r1 == r2);
}
