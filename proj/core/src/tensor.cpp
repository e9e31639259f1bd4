#include "psim/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "psim/error.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "autodiff-core";

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ArgumentError(kModule, "operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw ArgumentError(kModule, "operands live on different tapes");
  return t;
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArgumentError(kModule, std::string(op) + ": shape mismatch " + shape(a.value()) +
                                     " vs " + shape(b.value()));
  }
}

void require_scalar(const char* op, Var a) {
  if (a.rows() != 1 || a.cols() != 1) {
    throw ArgumentError(kModule, std::string(op) + ": expected 1x1, got " + shape(a.value()));
  }
}

void require_row(const char* op, Var a) {
  if (a.rows() != 1) {
    throw ArgumentError(kModule, std::string(op) + ": expected a row vector, got " +
                                     shape(a.value()));
  }
}

/// x * 0 is 0 for finite x and NaN otherwise.
bool all_finite(const Matrix& m) { return (m.array() * 0.0).sum() == 0.0; }

double stable_logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

Parameter& ParameterSet::add(std::string name, Matrix value) {
  if (index_.count(name)) throw ArgumentError(kModule, "duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError(kModule, "no parameter named '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += static_cast<std::size_t>(p.value.size());
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw ArgumentError(kModule, "snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i];
}

void ParameterSet::perturb(double radius, Rng& rng) {
  if (!(radius >= 0.0)) throw ArgumentError(kModule, "perturb: radius must be non-negative");
  std::uniform_real_distribution<double> noise(-radius, radius);
  for (auto& p : params_) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += noise(rng);
  }
}

const Matrix& Var::value() const {
  if (!tape_) throw ArgumentError(kModule, "value of an unbound Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ArgumentError(kModule, "scalar() on a " + shape(v) + " value");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  if (!all_finite(value)) throw NumericError(kModule, "constant: non-finite input");
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  if (!all_finite(p.value)) throw NumericError(kModule, "parameter '" + p.name + "' is non-finite");
  nodes_.push_back(Node{p.value, {}, record_, {}, &p});
  bound_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(const char* op, Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return push(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Var Tape::push(const char* op, Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) needs |= nodes_[in.id()].requires_grad;
  return push_node(op, std::move(value), needs, std::move(backward));
}

Var Tape::push_node(const char* op, Matrix value, bool any_input_requires_grad, Backward backward) {
  if (!all_finite(value)) {
    throw NumericError(kModule, std::string(op) + ": produced a non-finite value");
  }
  const bool needs = record_ && any_input_requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var output) {
  if (output.tape() != this) throw ArgumentError(kModule, "backward: Var from another tape");
  if (output.value().size() != 1) {
    throw ArgumentError(kModule, "backward: output must be scalar, got " + shape(output.value()));
  }
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[output.id()].requires_grad) return;
  nodes_[output.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.parameter) node.parameter->grad += node.grad;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw ArgumentError(kModule, "matmul: shape mismatch " + shape(a.value()) + " * " +
                                     shape(b.value()));
  }
  const auto ia = a.id(), ib = b.id();
  return t.push("matmul", a.value() * b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push("transpose", a.value().transpose(), {a},
                [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g.transpose()); });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a, b);
  const auto ia = a.id(), ib = b.id();
  return t.push("add", a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a, b);
  const auto ia = a.id(), ib = b.id();
  return t.push("sub", a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("mul", a, b);
  const auto ia = a.id(), ib = b.id();
  return t.push("mul", a.value().cwiseProduct(b.value()), {a, b},
                [ia, ib](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
                  if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
                });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ArgumentError(kModule, "add_row: cannot broadcast " + shape(row.value()) + " over " +
                                     shape(a.value()));
  }
  const auto ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push("add_row", std::move(out), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
  });
}

Var scale(Var a, Var s) {
  Tape& t = tape_of(a, s);
  require_scalar("scale", s);
  const auto ia = a.id(), is = s.id();
  return t.push("scale", a.value() * s.scalar(), {a, s}, [ia, is](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(is)(0, 0));
    if (tp.requires_grad(is)) {
      tp.accumulate(is, Matrix::Constant(1, 1, g.cwiseProduct(tp.value(ia)).sum()));
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push("scale", a.value() * s, {a},
                [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError(kModule, "concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ArgumentError(kModule, "concat_cols: operands on different tapes");
    if (p.rows() != rows) throw ArgumentError(kModule, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), p.cols());
    offset += p.cols();
  }
  return t.push("concat_cols", std::move(out), parts, [layout](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& [id, width] : layout) {
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleCols(off, width));
      off += width;
    }
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  const auto rows = a.rows();
  return t.push("row_sum", a.value().colwise().sum(), {a}, [ia, rows](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.replicate(rows, 1));
  });
}

Var row_mean(Var a) {
  Tape& t = tape_of(a);
  if (a.rows() < 1) throw ArgumentError(kModule, "row_mean: no rows");
  const auto ia = a.id();
  const auto rows = a.rows();
  const double inv = 1.0 / static_cast<double>(rows);
  return t.push("row_mean", a.value().colwise().mean(), {a},
                [ia, rows, inv](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, (g * inv).replicate(rows, 1));
                });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push("sum", Matrix::Constant(1, 1, a.value().sum()), {a},
                [ia](Tape& tp, const Matrix& g) {
                  const Matrix& v = tp.value(ia);
                  tp.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), g(0, 0)));
                });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().tanh().matrix();
  const auto ia = a.id();
  const auto io = t.size();
  return t.push("tanh", std::move(out), {a}, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    tp.accumulate(ia, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var logistic(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([](double x) { return stable_logistic(x); });
  const auto ia = a.id();
  const auto io = t.size();
  return t.push("logistic", std::move(out), {a}, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    tp.accumulate(ia, g.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var prelu(Var a, Var slope) {
  Tape& t = tape_of(a, slope);
  require_scalar("prelu", slope);
  const double s = slope.scalar();
  Matrix out = a.value().unaryExpr([s](double x) { return x > 0 ? x : s * x; });
  const auto ia = a.id(), is = slope.id();
  return t.push("prelu", std::move(out), {a, slope}, [ia, is](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    const double s = tp.value(is)(0, 0);
    if (tp.requires_grad(ia)) {
      tp.accumulate(ia, g.binaryExpr(x, [s](double gi, double xi) { return xi > 0 ? gi : s * gi; }));
    }
    if (tp.requires_grad(is)) {
      const double ds = g.binaryExpr(x, [](double gi, double xi) { return xi > 0 ? 0.0 : gi * xi; }).sum();
      tp.accumulate(is, Matrix::Constant(1, 1, ds));
    }
  });
}

Var row_softmax(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  const auto ia = a.id();
  const auto io = t.size();
  return t.push("row_softmax", std::move(out), {a}, [ia, io](Tape& tp, const Matrix& g) {
    const Matrix& y = tp.value(io);
    const Eigen::VectorXd inner = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = g;
    dx.colwise() -= inner;
    tp.accumulate(ia, dx.cwiseProduct(y));
  });
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_row("dot", a);
  require_same_shape("dot", a, b);
  const auto ia = a.id(), ib = b.id();
  return t.push("dot", Matrix::Constant(1, 1, a.value().row(0).dot(b.value().row(0))), {a, b},
                [ia, ib](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia)) tp.accumulate(ia, tp.value(ib) * g(0, 0));
                  if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia) * g(0, 0));
                });
}

Var l2_norm(Var a) {
  Tape& t = tape_of(a);
  const double n = a.value().norm();
  const auto ia = a.id();
  return t.push("l2_norm", Matrix::Constant(1, 1, n), {a}, [ia, n](Tape& tp, const Matrix& g) {
    // Subgradient 0 at the origin.
    if (n == 0.0) return;
    tp.accumulate(ia, tp.value(ia) * (g(0, 0) / n));
  });
}

Var cosine(Var a, Var b, double eps) {
  Tape& t = tape_of(a, b);
  require_row("cosine", a);
  require_same_shape("cosine", a, b);
  const double d = a.value().row(0).dot(b.value().row(0));
  const double na = a.value().norm();
  const double nb = b.value().norm();
  const double denom = na * nb + eps;
  const auto ia = a.id(), ib = b.id();
  return t.push("cosine", Matrix::Constant(1, 1, d / denom), {a, b},
                [ia, ib, d, na, nb, denom](Tape& tp, const Matrix& g) {
                  const double go = g(0, 0);
                  const Matrix& va = tp.value(ia);
                  const Matrix& vb = tp.value(ib);
                  const double c2 = d / (denom * denom);
                  if (tp.requires_grad(ia)) {
                    Matrix ga = vb / denom;
                    if (na > 0.0) ga -= va * (c2 * nb / na);
                    tp.accumulate(ia, ga * go);
                  }
                  if (tp.requires_grad(ib)) {
                    Matrix gb = va / denom;
                    if (nb > 0.0) gb -= vb * (c2 * na / nb);
                    tp.accumulate(ib, gb * go);
                  }
                });
}

Var gather_rows(Var a, std::vector<int> index) {
  Tape& t = tape_of(a);
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= a.rows()) throw ArgumentError(kModule, "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(index[k]);
  }
  const auto ia = a.id();
  const auto rows = a.rows();
  return t.push("gather_rows", std::move(out), {a},
                [ia, rows, index = std::move(index)](Tape& tp, const Matrix& g) {
                  Matrix ga = Matrix::Zero(rows, g.cols());
                  for (std::size_t k = 0; k < index.size(); ++k) {
                    ga.row(index[k]) += g.row(static_cast<Eigen::Index>(k));
                  }
                  tp.accumulate(ia, ga);
                });
}

Var scatter_add_rows(Var a, std::vector<int> index, Eigen::Index rows) {
  Tape& t = tape_of(a);
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) {
    throw ArgumentError(kModule, "scatter_add_rows: index length must equal row count");
  }
  Matrix out = Matrix::Zero(rows, a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= rows) throw ArgumentError(kModule, "scatter_add_rows: index out of range");
    out.row(index[k]) += a.value().row(static_cast<Eigen::Index>(k));
  }
  const auto ia = a.id();
  return t.push("scatter_add_rows", std::move(out), {a},
                [ia, index = std::move(index)](Tape& tp, const Matrix& g) {
                  Matrix ga(static_cast<Eigen::Index>(index.size()), g.cols());
                  for (std::size_t k = 0; k < index.size(); ++k) {
                    ga.row(static_cast<Eigen::Index>(k)) = g.row(index[k]);
                  }
                  tp.accumulate(ia, ga);
                });
}

Var neighbor_sum(Var a, const Graph& g) {
  Tape& t = tape_of(a);
  if (a.rows() != static_cast<Eigen::Index>(g.node_count())) {
    throw ArgumentError(kModule, "neighbor_sum: feature rows do not match node count");
  }
  auto aggregate = [edges = std::vector<Edge>(g.edges().begin(), g.edges().end())](const Matrix& x) {
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (const auto& e : edges) {
      out.row(e.u) += x.row(e.v);
      out.row(e.v) += x.row(e.u);
    }
    return out;
  };
  const auto ia = a.id();
  // The adjacency operator is symmetric, so the backward pass is the same sum.
  return t.push("neighbor_sum", aggregate(a.value()), {a},
                [ia, aggregate](Tape& tp, const Matrix& gr) { tp.accumulate(ia, aggregate(gr)); });
}

Var permute_cols(Var a, std::vector<int> order) {
  Tape& t = tape_of(a);
  require_row("permute_cols", a);
  if (static_cast<Eigen::Index>(order.size()) != a.cols()) {
    throw ArgumentError(kModule, "permute_cols: order length must equal column count");
  }
  Matrix out(1, a.cols());
  for (std::size_t k = 0; k < order.size(); ++k) out(0, static_cast<Eigen::Index>(k)) = a.value()(0, order[k]);
  const auto ia = a.id();
  const auto cols = a.cols();
  return t.push("permute_cols", std::move(out), {a},
                [ia, cols, order = std::move(order)](Tape& tp, const Matrix& g) {
                  Matrix ga(1, cols);
                  for (std::size_t k = 0; k < order.size(); ++k) ga(0, order[k]) = g(0, static_cast<Eigen::Index>(k));
                  tp.accumulate(ia, ga);
                });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ArgumentError(kModule, "slice_rows: rows [" + std::to_string(start) + ", " +
                                     std::to_string(start + count) + ") outside " + shape(a.value()));
  }
  const auto ia = a.id();
  const Eigen::Index rows = a.rows();
  return t.push("slice_rows", a.value().middleRows(start, count), {a},
                [ia, rows, start, count](Tape& tp, const Matrix& g) {
                  Matrix ga = Matrix::Zero(rows, g.cols());
                  ga.middleRows(start, count) = g;
                  tp.accumulate(ia, ga);
                });
}

Var gather_flat(Var a, Eigen::Index rows, Eigen::Index cols, std::vector<int> index) {
  Tape& t = tape_of(a);
  if (static_cast<Eigen::Index>(index.size()) != rows * cols) {
    throw ArgumentError(kModule, "gather_flat: index length must equal rows * cols");
  }
  const Eigen::Index ac = a.cols();
  const Eigen::Index total = a.value().size();
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= total) throw ArgumentError(kModule, "gather_flat: index out of range");
    const auto kk = static_cast<Eigen::Index>(k);
    out(kk / cols, kk % cols) = a.value()(index[k] / ac, index[k] % ac);
  }
  const auto ia = a.id();
  const Eigen::Index ar = a.rows();
  return t.push("gather_flat", std::move(out), {a},
                [ia, ar, ac, cols, index = std::move(index)](Tape& tp, const Matrix& g) {
                  Matrix ga = Matrix::Zero(ar, ac);
                  for (std::size_t k = 0; k < index.size(); ++k) {
                    const auto kk = static_cast<Eigen::Index>(k);
                    ga(index[k] / ac, index[k] % ac) += g(kk / cols, kk % cols);
                  }
                  tp.accumulate(ia, ga);
                });
}

Var mul_col(Var a, Var col) {
  Tape& t = tape_of(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ArgumentError(kModule, "mul_col: expected a " + std::to_string(a.rows()) +
                                     "x1 column, got " + shape(col.value()));
  }
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  const auto ia = a.id(), ic = col.id();
  return t.push("mul_col", std::move(out), {a, col}, [ia, ic](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) {
      tp.accumulate(ia, g.array().colwise() * tp.value(ic).col(0).array());
    }
    if (tp.requires_grad(ic)) tp.accumulate(ic, g.cwiseProduct(tp.value(ia)).rowwise().sum());
  });
}

Var row_dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("row_dot", a, b);
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  const auto ia = a.id(), ib = b.id();
  return t.push("row_dot", std::move(out), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, tp.value(ib).array().colwise() * g.col(0).array());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).array().colwise() * g.col(0).array());
  });
}

Var cosine_rows(Var a, Var b, double eps) {
  Tape& t = tape_of(a, b);
  require_same_shape("cosine_rows", a, b);
  const Eigen::VectorXd d = a.value().cwiseProduct(b.value()).rowwise().sum();
  const Eigen::VectorXd na = a.value().rowwise().norm();
  const Eigen::VectorXd nb = b.value().rowwise().norm();
  const Eigen::VectorXd denom = (na.array() * nb.array() + eps).matrix();
  Matrix out = d.cwiseQuotient(denom);
  const auto ia = a.id(), ib = b.id();
  return t.push("cosine_rows", std::move(out), {a, b},
                [ia, ib, d, na, nb, denom](Tape& tp, const Matrix& g) {
                  const Matrix& va = tp.value(ia);
                  const Matrix& vb = tp.value(ib);
                  Matrix ga = Matrix::Zero(va.rows(), va.cols());
                  Matrix gb = Matrix::Zero(vb.rows(), vb.cols());
                  for (Eigen::Index r = 0; r < va.rows(); ++r) {
                    const double go = g(r, 0);
                    const double c2 = d(r) / (denom(r) * denom(r));
                    ga.row(r) = vb.row(r) / denom(r);
                    if (na(r) > 0.0) ga.row(r) -= va.row(r) * (c2 * nb(r) / na(r));
                    gb.row(r) = va.row(r) / denom(r);
                    if (nb(r) > 0.0) gb.row(r) -= vb.row(r) * (c2 * na(r) / nb(r));
                    ga.row(r) *= go;
                    gb.row(r) *= go;
                  }
                  if (tp.requires_grad(ia)) tp.accumulate(ia, ga);
                  if (tp.requires_grad(ib)) tp.accumulate(ib, gb);
                });
}

Var block_cross_attention(Var self, Var other, std::vector<RowRange> self_blocks,
                          std::vector<RowRange> other_blocks, bool uniform) {
  Tape& t = tape_of(self, other);
  if (self.cols() != other.cols()) throw ArgumentError(kModule, "block_cross_attention: width mismatch");
  if (self_blocks.size() != other_blocks.size()) {
    throw ArgumentError(kModule, "block_cross_attention: block lists differ in length");
  }
  for (std::size_t b = 0; b < self_blocks.size(); ++b) {
    const auto& s = self_blocks[b];
    const auto& o = other_blocks[b];
    if (s.start < 0 || s.count < 0 || s.start + s.count > self.rows() || o.start < 0 ||
        o.count < 1 || o.start + o.count > other.rows()) {
      throw ArgumentError(kModule, "block_cross_attention: block " + std::to_string(b) +
                                       " out of range");
    }
  }
  const Matrix& hs = self.value();
  const Matrix& ho = other.value();
  Matrix out = Matrix::Zero(hs.rows(), hs.cols());
  std::vector<Matrix> attention(uniform ? 0 : self_blocks.size());
  for (std::size_t b = 0; b < self_blocks.size(); ++b) {
    const auto& s = self_blocks[b];
    const auto& o = other_blocks[b];
    const Matrix S = hs.middleRows(s.start, s.count);
    const Matrix O = ho.middleRows(o.start, o.count);
    if (uniform) {
      const Eigen::RowVectorXd mean = O.colwise().mean();
      out.middleRows(s.start, s.count) = S.rowwise() - mean;
    } else {
      Matrix a = S.lazyProduct(O.transpose());
      for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const double m = a.row(r).maxCoeff();
        a.row(r) = (a.row(r).array() - m).exp().matrix();
        a.row(r) /= a.row(r).sum();
      }
      out.middleRows(s.start, s.count) = S - a.lazyProduct(O);
      attention[b] = std::move(a);
    }
  }
  const auto is = self.id(), io = other.id();
  return t.push(
      "block_cross_attention", std::move(out), {self, other},
      [is, io, uniform, self_blocks = std::move(self_blocks), other_blocks = std::move(other_blocks),
       attention = std::move(attention)](Tape& tp, const Matrix& g) {
        const Matrix& hs = tp.value(is);
        const Matrix& ho = tp.value(io);
        Matrix gs = Matrix::Zero(hs.rows(), hs.cols());
        Matrix go = Matrix::Zero(ho.rows(), ho.cols());
        for (std::size_t b = 0; b < self_blocks.size(); ++b) {
          const auto& s = self_blocks[b];
          const auto& o = other_blocks[b];
          const Matrix G = g.middleRows(s.start, s.count);
          gs.middleRows(s.start, s.count) += G;
          if (uniform) {
            const Eigen::RowVectorXd total = G.colwise().sum() / static_cast<double>(o.count);
            go.middleRows(o.start, o.count).rowwise() -= total;
            continue;
          }
          const Matrix& a = attention[b];
          const Matrix S = hs.middleRows(s.start, s.count);
          const Matrix O = ho.middleRows(o.start, o.count);
          const Matrix da = -G.lazyProduct(O.transpose());
          Matrix ds = da;
          ds.colwise() -= da.cwiseProduct(a).rowwise().sum();
          ds = ds.cwiseProduct(a);
          gs.middleRows(s.start, s.count) += ds.lazyProduct(O);
          go.middleRows(o.start, o.count) += ds.transpose().lazyProduct(S) - a.transpose().lazyProduct(G);
        }
        if (tp.requires_grad(is)) tp.accumulate(is, gs);
        if (tp.requires_grad(io)) tp.accumulate(io, go);
      });
}

GradCheckReport grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                           double step, double floor) {
  if (!(step > 0.0)) throw ArgumentError(kModule, "grad_check: step must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
  }
  GradCheckReport report;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      auto at = [&](double offset) {
        x = saved + offset;
        Tape tape(false);
        return f(tape).scalar();
      };
      // Fourth-order central stencils at h and h / 2. Disagreement means a
      // kink inside the stencil, so the step shrinks.
      double numeric = 0.0;
      double h = step;
      for (int level = 0; level < 3; ++level, h /= 10.0) {
        const double f1 = at(h) - at(-h);
        const double d_coarse = (8.0 * f1 - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        const double d_fine = (8.0 * (at(h / 2.0) - at(-h / 2.0)) - f1) / (6.0 * h);
        numeric = d_fine;
        if (std::abs(d_coarse - d_fine) <=
            1e-3 * std::max({std::abs(d_coarse), std::abs(d_fine), floor})) {
          break;
        }
        if (level == 0) ++report.refined;
      }
      x = saved;
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.coordinates;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace psim
