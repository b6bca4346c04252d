#pragma once

// Reverse-mode automatic differentiation over an append-only tape of dense
// matrices. Rows index batch samples; scalars are 1x1 matrices.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace pflab::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

enum class Op : std::uint8_t {
  leaf,
  linear,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  square,
  abs,
  exp,
  log,
  sigmoid,
  leaky_relu,
  silu,
  concat_cols,
  mean,
  sum,
  max,
  min_zero,
  clamp_min,
  spectral_weight,
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives an adjoint.
  Var constant(Matrix value);
  /// Leaf whose adjoint is accumulated by backward().
  Var variable(Matrix value);

  /// x * w^T + b, with w of shape [out x in] and b of shape [1 x out].
  Var linear(Var x, Var w, Var b);
  Var add(Var a, Var b);  // same shape, or either operand 1x1
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var square(Var a);
  Var abs(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sigmoid(Var a);
  /// Derivative at 0 is the negative slope.
  Var leaky_relu(Var a, double slope);
  Var silu(Var a);
  Var concat_cols(Var a, Var b);
  Var mean(Var a);
  Var sum(Var a);
  /// Largest entry (first occurrence receives the adjoint).
  Var max(Var a);
  /// min(0, a) elementwise.
  Var min_zero(Var a);
  /// max(floor, a) elementwise; clamped entries pass no gradient.
  Var clamp_min(Var a, double floor);
  /// w / sigma with sigma = u^T w v, differentiated through sigma.
  Var spectral_weight(Var w, const Vector& u, const Vector& v);

  /// Runs the reverse sweep from `output`, seeded with `seed` (same shape).
  void backward(Var output, const Matrix& seed);
  /// Scalar output, seed 1.
  void backward(Var output);

  /// Adjoint of a node after backward(); zero matrix if none reached it.
  Matrix grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }

 private:
  struct Node {
    Op op = Op::leaf;
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t c = 0;
    double param = 0.0;
    bool requires_grad = false;
    Matrix value;
    Matrix adjoint;
  };
  struct SpectralAux {
    Vector u;
    Vector v;
    double sigma;
  };

  Var push(Node node);
  Var unary(Op op, Var a, Matrix value, double param = 0.0);
  Var binary(Op op, Var a, Var b, Matrix value);
  void check(Var v) const;
  void accumulate(std::size_t id, const Matrix& delta);
  void propagate(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<SpectralAux> spectral_;
  bool backward_done_ = false;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator-(Var a, double c);

}  // namespace pflab::nn
