#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "exgnas/autodiff.hpp"
#include "exgnas/grad_check.hpp"
#include "exgnas/optim.hpp"
#include "test_util.hpp"

using namespace exgnas;
using exgnas::testing::random_matrix;

namespace {

// sum(w .* x) for a constant w, so every output entry gets a distinct weight.
Var weighted_sum(Var x, Matrix w) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += w[i] * xv[i];
  Var in[] = {x};
  const std::size_t self = t.size();
  return t.record(Matrix(1, 1, s), in, [x, w = std::move(w), self](Tape& tp) {
    const double g = tp.grad(Var{&tp, self})[0];
    for (std::size_t i = 0; i < w.size(); ++i) tp.grad(x)[i] += g * w[i];
  });
}

CsrMatrix random_csr(std::size_t rows, std::size_t cols, double density, std::mt19937_64& rng, bool ensure_row = false) {
  std::uniform_real_distribution<double> coin(0.0, 1.0), val(-2.0, 2.0);
  CsrMatrix s;
  s.rows = rows;
  s.cols = cols;
  for (std::size_t r = 0; r < rows; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c)
      if (coin(rng) < density || (ensure_row && !any && c + 1 == cols)) {
        s.col_idx.push_back(c);
        s.values.push_back(val(rng));
        any = true;
      }
    s.row_ptr.push_back(s.col_idx.size());
  }
  return s;
}

void expect_passes(const TapeFunction& f, const std::vector<Matrix>& inputs, const char* what) {
  const auto rep = grad_check(f, inputs, {.tol = 1e-4, .step = 1e-5});
  EXPECT_TRUE(rep.passed) << what << " max rel err " << rep.max_rel_error;
  EXPECT_GT(rep.entries_checked, 0u);
}

}  // namespace

TEST(Ops, ReluForwardBackward) {
  Tape t;
  Var x = t.variable(Matrix{{-1.0, 2.0}});
  Var y = ops::relu(x);
  EXPECT_EQ(t.value(y), (Matrix{{0.0, 2.0}}));
  t.backward(y, Matrix{{1.0, 1.0}});
  EXPECT_EQ(t.grad(x), (Matrix{{0.0, 1.0}}));
}

TEST(Ops, MatmulIdentity) {
  std::mt19937_64 rng(1);
  for (std::size_t k = 1; k < 6; ++k) {
    const Matrix b = random_matrix(2, k, rng);
    EXPECT_EQ(matmul(Matrix::identity(2), b), b);
  }
}

TEST(Ops, DimensionErrorMessage) {
  Tape t;
  Var a = t.variable(Matrix(2, 3));
  Var b = t.variable(Matrix(2, 3));
  try {
    ops::matmul(a, b);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(std::string(e.what()), "dimension error (matmul, got 2x3, expected 3x3)");
  }
  EXPECT_THROW(ops::add(a, t.variable(Matrix(3, 2))), DimensionError);
  EXPECT_THROW(ops::leaky_relu(a, 1.5), std::invalid_argument);
}

TEST(Ops, TanhGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(3, 3, rng);
  const Matrix w = random_matrix(3, 3, rng);
  const auto rep = grad_check([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::tanh(v[0]), w); }, {x},
                              {.tol = 1e-6, .step = 1e-5});
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Ops, EveryPrimitivePassesGradientCheck) {
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix a = random_matrix(4, 3, rng), b = random_matrix(3, 5, rng), c = random_matrix(4, 3, rng);
    const Matrix w45 = random_matrix(4, 5, rng), w43 = random_matrix(4, 3, rng), w46 = random_matrix(4, 6, rng);
    const Matrix bias = random_matrix(1, 3, rng);
    auto unary = [&](auto op, const char* name) {
      expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(op(v[0]), w43); }, {a}, name);
    };
    unary([](Var x) { return ops::relu(x); }, "relu");
    unary([](Var x) { return ops::sigmoid(x); }, "sigmoid");
    unary([](Var x) { return ops::tanh(x); }, "tanh");
    unary([](Var x) { return ops::leaky_relu(x, 0.2); }, "leaky_relu");
    unary([](Var x) { return ops::identity(x); }, "identity");
    unary([](Var x) { return ops::scale(x, -1.7); }, "scale");
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::matmul(v[0], v[1]), w45); }, {a, b},
                  "matmul");
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::add(v[0], v[1]), w43); }, {a, c}, "add");
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::add_bias(v[0], v[1]), w43); },
                  {a, bias}, "add_bias");
    expect_passes(
        [&](Tape&, std::span<const Var> v) {
          Var parts[] = {v[0], v[1]};
          return weighted_sum(ops::concat_cols(parts), w46);
        },
        {a, c}, "concat_cols");
    const Matrix w42 = random_matrix(4, 2, rng);
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::slice_cols(v[0], 1, 2), w42); },
                  {a}, "slice_cols");
    expect_passes(
        [&](Tape&, std::span<const Var> v) {
          Var parts[] = {v[0], v[1]};
          return weighted_sum(ops::rowwise_max(parts), w43);
        },
        {a, c}, "rowwise_max");
    expect_passes([&](Tape&, std::span<const Var> v) { return ops::sum(v[0]); }, {a}, "sum");

    const std::vector<int> labels{0, 2, 1, 2};
    const std::vector<std::size_t> mask{0, 1, 3};
    expect_passes([&](Tape&, std::span<const Var> v) { return ops::softmax_cross_entropy(v[0], labels, mask); }, {a},
                  "softmax_cross_entropy");

    const CsrMatrix s = random_csr(4, 4, 0.5, rng, true);
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::spmm(s, v[0]), w43); }, {a}, "spmm");
    const Matrix ew = random_matrix(s.nnz(), 1, rng);
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::spmm_values(s, v[0], v[1]), w43); },
                  {ew, a}, "spmm_values");
    const Matrix src = random_matrix(4, 1, rng), dst = random_matrix(4, 1, rng);
    const Matrix wn = random_matrix(s.nnz(), 1, rng);
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::edge_scores(s, v[0], v[1]), wn); },
                  {src, dst}, "edge_scores");
    expect_passes([&](Tape&, std::span<const Var> v) { return weighted_sum(ops::segment_softmax(s, v[0]), wn); }, {ew},
                  "segment_softmax");
  }
}

TEST(Ops, SpmmEqualsDenseMatmul) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 50, k = 1 + rng() % 6;
    const CsrMatrix s = random_csr(n, n, 0.15, rng);
    const Matrix x = random_matrix(n, k, rng);
    Tape t;
    const Matrix sparse = t.value(ops::spmm(s, t.constant(x)));
    const Matrix dense = matmul(s.to_dense(), x);
    for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(sparse[i], dense[i], 1e-10);
  }
}

TEST(Ops, ConcatThenSliceRecoversOperands) {
  std::mt19937_64 rng(8);
  Tape t;
  Var a = t.constant(random_matrix(3, 2, rng));
  Var b = t.constant(random_matrix(3, 4, rng));
  Var parts[] = {a, b};
  Var cat = ops::concat_cols(parts);
  const Var left = ops::slice_cols(cat, 0, 2), right = ops::slice_cols(cat, 2, 4);
  EXPECT_EQ(t.value(left), t.value(a));
  EXPECT_EQ(t.value(right), t.value(b));
}

TEST(Ops, RowwiseMaxTiesRouteToLowestOperand) {
  Tape t;
  Var a = t.variable(Matrix{{1.0, 5.0, 2.0}});
  Var b = t.variable(Matrix{{1.0, 3.0, 4.0}});
  Var c = t.variable(Matrix{{0.0, 5.0, 4.0}});
  Var parts[] = {a, b, c};
  Var m = ops::rowwise_max(parts);
  EXPECT_EQ(t.value(m), (Matrix{{1.0, 5.0, 4.0}}));
  t.backward(m, Matrix{{1.0, 1.0, 1.0}});
  EXPECT_EQ(t.grad(a), (Matrix{{1.0, 1.0, 0.0}}));
  EXPECT_EQ(t.grad(b), (Matrix{{0.0, 0.0, 1.0}}));
  EXPECT_EQ(t.grad(c), (Matrix{{0.0, 0.0, 0.0}}));
}

TEST(Loss, SaturatedRowIsNearZero) {
  Tape t;
  Var z = t.variable(Matrix{{1000.0, 0.0}});
  const std::vector<std::size_t> mask{0};
  EXPECT_NEAR(t.value(ops::softmax_cross_entropy(z, {0}, mask))[0], 0.0, 1e-12);
}

TEST(Loss, UniformLogits) {
  Tape t;
  Var z = t.variable(Matrix(3, 4, 0.7));
  const std::vector<std::size_t> mask{0, 2};
  EXPECT_NEAR(t.value(ops::softmax_cross_entropy(z, {0, 1, 3}, mask))[0], std::log(4.0), 1e-12);
}

TEST(Loss, MatchesBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = random_matrix(5, 3, rng);
    const std::vector<int> labels{0, 1, 2, 1, 0};
    const std::vector<std::size_t> mask{0, 2, 3, 4};
    double oracle = 0.0;
    for (auto r : mask) {
      double denom = 0.0;
      for (std::size_t c = 0; c < 3; ++c) denom += std::exp(z(r, c));
      oracle += -std::log(std::exp(z(r, static_cast<std::size_t>(labels[r]))) / denom);
    }
    oracle /= static_cast<double>(mask.size());
    Tape t;
    EXPECT_NEAR(t.value(ops::softmax_cross_entropy(t.variable(z), labels, mask))[0], oracle, 1e-12);
  }
}

TEST(Loss, GradientOnlyThroughMaskedRows) {
  std::mt19937_64 rng(12);
  Tape t;
  Var z = t.variable(random_matrix(4, 3, rng));
  const std::vector<std::size_t> mask{1, 3};
  t.backward(ops::softmax_cross_entropy(z, {0, 1, 2, 0}, mask));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(t.grad(z)(0, c), 0.0);
    EXPECT_EQ(t.grad(z)(2, c), 0.0);
  }
}

TEST(Loss, EmptyMask) {
  Tape t;
  Var z = t.variable(Matrix(2, 2));
  EXPECT_THROW(ops::softmax_cross_entropy(z, {0, 1}, {}), std::invalid_argument);
}

TEST(Adam, FirstStepOnScalar) {
  Parameter p(Matrix(1, 1, 1.0));
  p.grad[0] = 1.0;
  Adam adam({.lr = 0.01, .weight_decay = 0.0});
  Parameter* ps[] = {&p};
  adam.step(ps);
  // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 1.0 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[0], 0.99, 1e-9);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Parameter p(Matrix{{0.3, -2.0}});
  Adam adam({.lr = 0.01, .weight_decay = 0.0});
  Parameter* ps[] = {&p};
  adam.step(ps);
  EXPECT_EQ(p.value, (Matrix{{0.3, -2.0}}));
}

TEST(Adam, Deterministic) {
  std::mt19937_64 rng(4);
  const Matrix v = random_matrix(3, 3, rng), g = random_matrix(3, 3, rng);
  auto run = [&] {
    Parameter p(v);
    Adam adam;
    Parameter* ps[] = {&p};
    for (int i = 0; i < 3; ++i) {
      p.grad = g;
      adam.step(ps);
    }
    return p.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, TanhOfLinearMap) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix w = random_matrix(3, 4, rng), x = random_matrix(4, 2, rng);
    const auto rep = grad_check(
        [](Tape&, std::span<const Var> v) { return ops::sum(ops::tanh(ops::matmul(v[0], v[1]))); }, {w, x},
        {.tol = 1e-4});
    EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  }
}

TEST(GradCheck, LinearSumIsExact) {
  std::mt19937_64 rng(6);
  const auto rep = grad_check([](Tape&, std::span<const Var> v) { return ops::sum(v[0]); }, {random_matrix(3, 3, rng)});
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.max_rel_error, 1e-9);
}

TEST(GradCheck, DetectsCorruptedBackward) {
  std::mt19937_64 rng(7);
  // square with a backward rule of x instead of 2x
  auto broken_square = [](Tape& t, std::span<const Var> v) {
    Matrix out = t.value(v[0]);
    for (auto& e : out.data()) e *= e;
    const Var x = v[0];
    const std::size_t self = t.size();
    Var in[] = {x};
    Var y = t.record(std::move(out), in, [x, self](Tape& tp) {
      for (std::size_t i = 0; i < tp.value(x).size(); ++i) tp.grad(x)[i] += tp.grad(Var{&tp, self})[i] * tp.value(x)[i];
    });
    return ops::sum(y);
  };
  const auto rep = grad_check(broken_square, {random_matrix(2, 2, rng, 0.5, 2.0)});
  EXPECT_FALSE(rep.passed);
}

TEST(GradCheck, NonFiniteValue) {
  auto f = [](Tape&, std::span<const Var> v) {
    return ops::sum(ops::scale(v[0], std::numeric_limits<double>::infinity()));
  };
  EXPECT_THROW(grad_check(f, {Matrix(1, 1, 1.0)}), NonFiniteError);
}
