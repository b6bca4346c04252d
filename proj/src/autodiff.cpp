#include "pflab/autodiff.hpp"

#include <cmath>
#include <string>

#include "pflab/errors.hpp"

namespace pflab::nn {

namespace {

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

void check_broadcast(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return;
  if (is_scalar(a) || is_scalar(b)) return;
  throw ConfigError(std::string("Graph::") + op + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
}

// Reduces an adjoint to the shape of the operand it flows into.
Matrix reduce_to(const Matrix& delta, const Matrix& target) {
  if (is_scalar(target) && !is_scalar(delta)) return Matrix::Constant(1, 1, delta.sum());
  return delta;
}

}  // namespace

const Matrix& Var::value() const { return graph->value(id); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  backward_done_ = false;
  return Var{this, nodes_.size() - 1};
}

void Graph::check(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw UsageError("Graph: variable belongs to another graph");
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::unary(Op op, Var a, Matrix value, double param) {
  check(a);
  Node n;
  n.op = op;
  n.a = a.id;
  n.param = param;
  n.requires_grad = nodes_[a.id].requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::binary(Op op, Var a, Var b, Matrix value) {
  check(a);
  check(b);
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::linear(Var x, Var w, Var b) {
  check(x);
  check(w);
  check(b);
  const Matrix& xv = nodes_[x.id].value;
  const Matrix& wv = nodes_[w.id].value;
  const Matrix& bv = nodes_[b.id].value;
  if (xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows()) {
    throw ConfigError("Graph::linear: input width " + std::to_string(xv.cols()) + " does not match weight " +
                      std::to_string(wv.rows()) + "x" + std::to_string(wv.cols()));
  }
  Matrix out(xv.rows(), wv.rows());
  out.noalias() = xv * wv.transpose();
  out.rowwise() += bv.row(0);
  Node n;
  n.op = Op::linear;
  n.a = x.id;
  n.b = w.id;
  n.c = b.id;
  n.requires_grad = nodes_[x.id].requires_grad || nodes_[w.id].requires_grad || nodes_[b.id].requires_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  check(a);
  check(b);
  const Matrix& av = nodes_[a.id].value;
  const Matrix& bv = nodes_[b.id].value;
  check_broadcast(av, bv, "add");
  Matrix out;
  if (is_scalar(bv) && !is_scalar(av)) {
    out = av.array() + bv(0, 0);
  } else if (is_scalar(av) && !is_scalar(bv)) {
    out = bv.array() + av(0, 0);
  } else {
    out = av + bv;
  }
  return binary(Op::add, a, b, std::move(out));
}

Var Graph::sub(Var a, Var b) {
  check(a);
  check(b);
  const Matrix& av = nodes_[a.id].value;
  const Matrix& bv = nodes_[b.id].value;
  check_broadcast(av, bv, "sub");
  Matrix out;
  if (is_scalar(bv) && !is_scalar(av)) {
    out = av.array() - bv(0, 0);
  } else if (is_scalar(av) && !is_scalar(bv)) {
    out = av(0, 0) - bv.array();
  } else {
    out = av - bv;
  }
  return binary(Op::sub, a, b, std::move(out));
}

Var Graph::mul(Var a, Var b) {
  check(a);
  check(b);
  const Matrix& av = nodes_[a.id].value;
  const Matrix& bv = nodes_[b.id].value;
  check_broadcast(av, bv, "mul");
  Matrix out;
  if (is_scalar(bv) && !is_scalar(av)) {
    out = av * bv(0, 0);
  } else if (is_scalar(av) && !is_scalar(bv)) {
    out = bv * av(0, 0);
  } else {
    out = av.cwiseProduct(bv);
  }
  return binary(Op::mul, a, b, std::move(out));
}

Var Graph::scale(Var a, double c) {
  check(a);
  return unary(Op::scale, a, nodes_[a.id].value * c, c);
}

Var Graph::add_scalar(Var a, double c) {
  check(a);
  return unary(Op::add_scalar, a, nodes_[a.id].value.array() + c, c);
}

Var Graph::square(Var a) {
  check(a);
  return unary(Op::square, a, nodes_[a.id].value.array().square());
}

Var Graph::abs(Var a) {
  check(a);
  return unary(Op::abs, a, nodes_[a.id].value.cwiseAbs());
}

Var Graph::exp(Var a) {
  check(a);
  return unary(Op::exp, a, nodes_[a.id].value.array().exp());
}

Var Graph::log(Var a) {
  check(a);
  return unary(Op::log, a, nodes_[a.id].value.array().log());
}

Var Graph::sigmoid(Var a) {
  check(a);
  const Matrix& av = nodes_[a.id].value;
  Matrix out = av.unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return unary(Op::sigmoid, a, std::move(out));
}

Var Graph::leaky_relu(Var a, double slope) {
  check(a);
  Matrix out = nodes_[a.id].value.unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return unary(Op::leaky_relu, a, std::move(out), slope);
}

Var Graph::silu(Var a) {
  check(a);
  Matrix out = nodes_[a.id].value.unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
  return unary(Op::silu, a, std::move(out));
}

Var Graph::concat_cols(Var a, Var b) {
  check(a);
  check(b);
  const Matrix& av = nodes_[a.id].value;
  const Matrix& bv = nodes_[b.id].value;
  if (av.rows() != bv.rows()) throw ConfigError("Graph::concat_cols: row count mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  return binary(Op::concat_cols, a, b, std::move(out));
}

Var Graph::mean(Var a) {
  check(a);
  const Matrix& av = nodes_[a.id].value;
  return unary(Op::mean, a, Matrix::Constant(1, 1, av.mean()));
}

Var Graph::sum(Var a) {
  check(a);
  return unary(Op::sum, a, Matrix::Constant(1, 1, nodes_[a.id].value.sum()));
}

Var Graph::max(Var a) {
  check(a);
  const Matrix& av = nodes_[a.id].value;
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  const double m = av.maxCoeff(&r, &c);
  Var out = unary(Op::max, a, Matrix::Constant(1, 1, m));
  nodes_[out.id].b = static_cast<std::size_t>(r);
  nodes_[out.id].c = static_cast<std::size_t>(c);
  return out;
}

Var Graph::min_zero(Var a) {
  check(a);
  return unary(Op::min_zero, a, nodes_[a.id].value.cwiseMin(0.0));
}

Var Graph::clamp_min(Var a, double floor) {
  check(a);
  return unary(Op::clamp_min, a, nodes_[a.id].value.cwiseMax(floor), floor);
}

Var Graph::spectral_weight(Var w, const Vector& u, const Vector& v) {
  check(w);
  const Matrix& wv = nodes_[w.id].value;
  if (u.size() != wv.rows() || v.size() != wv.cols()) {
    throw ConfigError("Graph::spectral_weight: singular vector size mismatch");
  }
  const double sigma = u.dot(wv * v);
  Var out = unary(Op::spectral_weight, w, wv / sigma);
  nodes_[out.id].b = spectral_.size();
  spectral_.push_back({u, v, sigma});
  return out;
}

void Graph::accumulate(std::size_t id, const Matrix& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.adjoint.size() == 0) {
    n.adjoint = delta;
  } else {
    n.adjoint += delta;
  }
}

void Graph::propagate(std::size_t id) {
  Node& n = nodes_[id];
  if (n.adjoint.size() == 0 || n.op == Op::leaf) return;
  const Matrix& g = n.adjoint;

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::linear: {
      if (nodes_[n.a].requires_grad) accumulate(n.a, g * nodes_[n.b].value);
      if (nodes_[n.b].requires_grad) {
        Matrix dw = g.transpose() * nodes_[n.a].value;
        accumulate(n.b, dw);
      }
      if (nodes_[n.c].requires_grad) accumulate(n.c, g.colwise().sum());
      break;
    }
    case Op::add:
      if (nodes_[n.a].requires_grad) accumulate(n.a, reduce_to(g, nodes_[n.a].value));
      if (nodes_[n.b].requires_grad) accumulate(n.b, reduce_to(g, nodes_[n.b].value));
      break;
    case Op::sub:
      if (nodes_[n.a].requires_grad) accumulate(n.a, reduce_to(g, nodes_[n.a].value));
      if (nodes_[n.b].requires_grad) accumulate(n.b, reduce_to(-g, nodes_[n.b].value));
      break;
    case Op::mul: {
      const Matrix& av = nodes_[n.a].value;
      const Matrix& bv = nodes_[n.b].value;
      auto partial = [&](const Matrix& other, const Matrix& self) -> Matrix {
        if (is_scalar(other) && !is_scalar(g)) return reduce_to(g * other(0, 0), self);
        if (is_scalar(self) && !is_scalar(g)) return Matrix::Constant(1, 1, g.cwiseProduct(other).sum());
        return g.cwiseProduct(other);
      };
      if (nodes_[n.a].requires_grad) accumulate(n.a, partial(bv, av));
      if (nodes_[n.b].requires_grad) accumulate(n.b, partial(av, bv));
      break;
    }
    case Op::scale:
      accumulate(n.a, g * n.param);
      break;
    case Op::add_scalar:
      accumulate(n.a, g);
      break;
    case Op::square:
      accumulate(n.a, 2.0 * g.cwiseProduct(nodes_[n.a].value));
      break;
    case Op::abs: {
      Matrix sign = nodes_[n.a].value.unaryExpr([](double x) { return double((x > 0.0) - (x < 0.0)); });
      accumulate(n.a, g.cwiseProduct(sign));
      break;
    }
    case Op::exp:
      accumulate(n.a, g.cwiseProduct(n.value));
      break;
    case Op::log:
      accumulate(n.a, g.cwiseQuotient(nodes_[n.a].value));
      break;
    case Op::sigmoid: {
      Matrix d = n.value.array() * (1.0 - n.value.array());
      accumulate(n.a, g.cwiseProduct(d));
      break;
    }
    case Op::leaky_relu: {
      const double slope = n.param;
      Matrix d = nodes_[n.a].value.unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
      accumulate(n.a, g.cwiseProduct(d));
      break;
    }
    case Op::silu: {
      Matrix d = nodes_[n.a].value.unaryExpr([](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
      accumulate(n.a, g.cwiseProduct(d));
      break;
    }
    case Op::concat_cols: {
      const Eigen::Index ca = nodes_[n.a].value.cols();
      const Eigen::Index cb = nodes_[n.b].value.cols();
      if (nodes_[n.a].requires_grad) accumulate(n.a, g.leftCols(ca));
      if (nodes_[n.b].requires_grad) accumulate(n.b, g.rightCols(cb));
      break;
    }
    case Op::mean: {
      const Matrix& av = nodes_[n.a].value;
      accumulate(n.a, Matrix::Constant(av.rows(), av.cols(), g(0, 0) / static_cast<double>(av.size())));
      break;
    }
    case Op::sum: {
      const Matrix& av = nodes_[n.a].value;
      accumulate(n.a, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
      break;
    }
    case Op::max: {
      const Matrix& av = nodes_[n.a].value;
      Matrix d = Matrix::Zero(av.rows(), av.cols());
      d(static_cast<Eigen::Index>(n.b), static_cast<Eigen::Index>(n.c)) = g(0, 0);
      accumulate(n.a, d);
      break;
    }
    case Op::min_zero: {
      Matrix d = nodes_[n.a].value.unaryExpr([](double x) { return x < 0.0 ? 1.0 : 0.0; });
      accumulate(n.a, g.cwiseProduct(d));
      break;
    }
    case Op::clamp_min: {
      const double floor = n.param;
      Matrix d = nodes_[n.a].value.unaryExpr([floor](double x) { return x > floor ? 1.0 : 0.0; });
      accumulate(n.a, g.cwiseProduct(d));
      break;
    }
    case Op::spectral_weight: {
      const SpectralAux& aux = spectral_[n.b];
      const Matrix& w = nodes_[n.a].value;
      const double inner = g.cwiseProduct(w).sum();
      Matrix d = g / aux.sigma;
      d.noalias() -= (inner / (aux.sigma * aux.sigma)) * (aux.u * aux.v.transpose());
      accumulate(n.a, d);
      break;
    }
  }
}

void Graph::backward(Var output, const Matrix& seed) {
  if (nodes_.empty()) throw UsageError("Graph::backward: no forward pass recorded");
  check(output);
  const Matrix& ov = nodes_[output.id].value;
  if (seed.rows() != ov.rows() || seed.cols() != ov.cols()) {
    throw ConfigError("Graph::backward: seed shape does not match output");
  }
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  if (nodes_[output.id].requires_grad) nodes_[output.id].adjoint = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) propagate(i);
  backward_done_ = true;
}

void Graph::backward(Var output) {
  check(output);
  const Matrix& ov = nodes_.at(output.id).value;
  if (!is_scalar(ov)) throw ConfigError("Graph::backward: implicit seed needs a scalar output");
  backward(output, Matrix::Ones(1, 1));
}

Matrix Graph::grad(Var v) const {
  check(v);
  if (!backward_done_) throw UsageError("Graph::grad: backward() has not been run");
  const Node& n = nodes_[v.id];
  if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

Var operator+(Var a, Var b) { return a.graph->add(a, b); }
Var operator-(Var a, Var b) { return a.graph->sub(a, b); }
Var operator*(Var a, Var b) { return a.graph->mul(a, b); }
Var operator-(Var a) { return a.graph->scale(a, -1.0); }
Var operator*(double c, Var a) { return a.graph->scale(a, c); }
Var operator*(Var a, double c) { return a.graph->scale(a, c); }
Var operator+(Var a, double c) { return a.graph->add_scalar(a, c); }
Var operator-(Var a, double c) { return a.graph->add_scalar(a, -c); }

}  // namespace pflab::nn
