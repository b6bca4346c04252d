#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "pflab/autodiff.hpp"
#include "pflab/errors.hpp"
#include "pflab/rng.hpp"

using namespace pflab;
using namespace pflab::nn;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Compares the reverse sweep of a scalar function of one matrix against
// central differences.
void check_gradient(const std::function<Var(Graph&, Var)>& f, const Matrix& x0, double tol = 1e-6) {
  Graph g;
  Var x = g.variable(x0);
  Var y = f(g, x);
  g.backward(y);
  const Matrix analytic = g.grad(x);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Matrix xp = x0, xm = x0;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    Graph gp, gm;
    const double fp = f(gp, gp.constant(xp)).value()(0, 0);
    const double fm = f(gm, gm.constant(xm)).value()(0, 0);
    const double fd = (fp - fm) / (2 * h);
    EXPECT_NEAR(analytic.data()[i], fd, tol * std::max(1.0, std::abs(fd))) << "entry " << i;
  }
}

}  // namespace

TEST(Autodiff, LinearMapDerivative) {
  Graph g;
  Var x = g.variable(Matrix::Constant(1, 1, 2.0));
  Var w = g.variable(Matrix::Constant(1, 1, 3.0));
  Var b = g.variable(Matrix::Constant(1, 1, 0.5));
  Var y = g.linear(x, w, b);
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x)(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(g.grad(w)(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.grad(b)(0, 0), 1.0);
}

TEST(Autodiff, SquaredResidualWeightGradient) {
  const double x = 1.5, w0 = -0.7, b0 = 0.2, y = 0.9;
  Graph g;
  Var w = g.variable(Matrix::Constant(1, 1, w0));
  Var b = g.variable(Matrix::Constant(1, 1, b0));
  Var out = g.linear(g.constant(Matrix::Constant(1, 1, x)), w, b);
  Var loss = 0.5 * g.square(out - g.constant(Matrix::Constant(1, 1, y)));
  g.backward(loss);
  EXPECT_NEAR(g.grad(w)(0, 0), (w0 * x + b0 - y) * x, 1e-15);
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
  Rng rng(3);
  const Matrix x0 = random_matrix(rng, 4, 3);
  check_gradient([](Graph& g, Var x) { return g.sum(g.exp(g.scale(x, 0.3))); }, x0);
  check_gradient([](Graph& g, Var x) { return g.mean(g.log(g.add_scalar(g.square(x), 1.0))); }, x0);
  check_gradient([](Graph& g, Var x) { return g.sum(g.sigmoid(x) * g.silu(x)); }, x0);
  check_gradient([](Graph& g, Var x) { return g.sum(g.leaky_relu(x, 0.2)); }, x0);
  check_gradient([](Graph& g, Var x) { return g.sum(g.abs(x)); }, x0);
  check_gradient([](Graph& g, Var x) { return g.max(g.square(x)); }, x0);
  check_gradient([](Graph& g, Var x) { return g.sum(g.min_zero(x)); }, x0);
  check_gradient([](Graph& g, Var x) { return g.sum(g.clamp_min(x, 0.1)); }, x0);
  check_gradient([](Graph& g, Var x) { return g.sum(g.square(g.concat_cols(x, g.scale(x, -2.0)))); }, x0);
  check_gradient([](Graph& g, Var x) { return g.sum((x - 1.0) * (x + 2.0)) + g.mean(-x); }, x0);
}

TEST(Autodiff, ScalarBroadcast) {
  Rng rng(4);
  const Matrix x0 = random_matrix(rng, 5, 2);
  check_gradient(
      [](Graph& g, Var x) {
        Var s = g.mean(x);
        return g.sum(g.square(g.sub(x, s)));
      },
      x0);
}

TEST(Autodiff, LinearLayerMatchesFiniteDifferences) {
  Rng rng(5);
  const Matrix w0 = random_matrix(rng, 3, 4);
  const Matrix x0 = random_matrix(rng, 6, 4);
  const Matrix b0 = random_matrix(rng, 1, 3);
  check_gradient(
      [&](Graph& g, Var w) { return g.sum(g.silu(g.linear(g.constant(x0), w, g.constant(b0)))); }, w0);
  check_gradient(
      [&](Graph& g, Var x) { return g.sum(g.square(g.linear(x, g.constant(w0), g.constant(b0)))); }, x0);
}

TEST(Autodiff, SpectralWeightIsDifferentiatedThroughSigma) {
  Rng rng(6);
  const Matrix w0 = random_matrix(rng, 3, 5);
  Eigen::JacobiSVD<Matrix> svd(w0, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector u = svd.matrixU().col(0);
  const Vector v = svd.matrixV().col(0);
  const Matrix x0 = random_matrix(rng, 4, 5);
  check_gradient(
      [&](Graph& g, Var w) {
        Var wn = g.spectral_weight(w, u, v);
        return g.sum(g.square(g.linear(g.constant(x0), wn, g.constant(Matrix::Zero(1, 3)))));
      },
      w0);
  Graph g;
  Var wn = g.spectral_weight(g.constant(w0), u, v);
  EXPECT_NEAR(svd.singularValues()(0) * wn.value()(0, 0), w0(0, 0), 1e-12);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Graph g;
  Var c = g.constant(Matrix::Constant(2, 2, 1.0));
  Var x = g.variable(Matrix::Constant(2, 2, 2.0));
  g.backward(g.sum(c * x));
  EXPECT_FALSE(g.requires_grad(c));
  EXPECT_EQ(g.grad(c).norm(), 0.0);
  EXPECT_EQ(g.grad(x)(1, 1), 1.0);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Graph g;
  Var a = g.variable(Matrix::Zero(2, 3));
  Var b = g.variable(Matrix::Zero(3, 2));
  EXPECT_ANY_THROW(g.add(a, b));
  EXPECT_ANY_THROW(g.linear(a, b, g.constant(Matrix::Zero(1, 4))));
}
