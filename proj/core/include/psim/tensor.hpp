#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "psim/graph.hpp"
#include "psim/random.hpp"

namespace psim {

using Matrix = Eigen::MatrixXd;

/// A named trainable matrix with its gradient accumulator.
struct Parameter {
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(); }
};

/// Owns model parameters with stable addresses and unique names.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  /// Copies of every value, in registration order.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);
  /// Adds uniform(-radius, radius) noise to every value.
  void perturb(double radius, Rng& rng);

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 result.
  double scalar() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape over immutable dense matrices. Every recorded value is
/// checked for NaN/Inf and a NumericError is raised at the op that produced
/// it. A tape built with `record = false` keeps values only (inference).
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to `p`; gradients reach p.grad on backward(). Binding the
  /// same parameter twice returns the same node.
  Var parameter(Parameter& p);

  /// Propagates d(output)/d(node) through the tape and adds the result to the
  /// grad of every bound Parameter. Node gradients are reset first, parameter
  /// gradients accumulate.
  void backward(Var output);

  /// Gradient of `v` from the last backward(); zero matrix if unreached.
  Matrix grad(Var v) const;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Records an op result. `backward` runs only when some input needs a
  /// gradient and the tape is recording.
  Var push(const char* op, Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var push(const char* op, Matrix value, std::span<const Var> inputs, Backward backward);
  void accumulate(std::size_t id, const Matrix& g);

 private:
  Var push_node(const char* op, Matrix value, bool any_input_requires_grad, Backward backward);

  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* parameter = nullptr;
  };
  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> bound_;
};

// Elementwise and linear algebra. Shapes must match exactly unless noted.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a + row, with a 1 x c row broadcast over every row of a.
Var add_row(Var a, Var row);
/// Every entry of a times the 1x1 value s.
Var scale(Var a, Var s);
Var scale(Var a, double s);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);

// Reductions.
/// Column sums over rows: n x c -> 1 x c.
Var row_sum(Var a);
/// Column means over rows: n x c -> 1 x c (n >= 1).
Var row_mean(Var a);
/// Sum of every entry -> 1 x 1.
Var sum(Var a);

// Nonlinearities.
Var tanh(Var a);
Var logistic(Var a);
/// max(x, 0) + slope * min(x, 0) with one shared 1x1 slope.
Var prelu(Var a, Var slope);
Var row_softmax(Var a);

// Vector similarity on 1 x c rows.
Var dot(Var a, Var b);
/// Frobenius norm -> 1 x 1.
Var l2_norm(Var a);
/// a.b / (|a| |b| + eps).
Var cosine(Var a, Var b, double eps = 1e-12);

// Indexing.
/// out.row(k) = a.row(index[k]).
Var gather_rows(Var a, std::vector<int> index);
/// out.row(index[k]) += a.row(k), out has `rows` rows.
Var scatter_add_rows(Var a, std::vector<int> index, Eigen::Index rows);
/// out.row(v) = sum of a.row(u) over neighbors u of v in g.
Var neighbor_sum(Var a, const Graph& g);
/// out(0, k) = a(0, order[k]) for a 1 x c row.
Var permute_cols(Var a, std::vector<int> order);
/// Rows [start, start + count) of a.
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
/// rows x cols result whose row-major entry k is the row-major entry
/// index[k] of a.
Var gather_flat(Var a, Eigen::Index rows, Eigen::Index cols, std::vector<int> index);

// Row-wise and block operations for batched models.
/// a.row(r) * col(r, 0) for an n x 1 column.
Var mul_col(Var a, Var col);
/// n x 1 column of row dot products.
Var row_dot(Var a, Var b);
/// n x 1 column of row cosines a_r.b_r / (|a_r| |b_r| + eps).
Var cosine_rows(Var a, Var b, double eps = 1e-12);

/// Half-open row range [start, start + count).
struct RowRange {
  Eigen::Index start = 0;
  Eigen::Index count = 0;
};

/// For every block b: S_b - A_b O_b, where S_b and O_b are the rows
/// self_blocks[b] and other_blocks[b] and A_b is the row softmax of
/// S_b O_b^T (or the uniform 1 / |O_b| matrix). Rows outside every self
/// block are zero.
Var block_cross_attention(Var self, Var other, std::vector<RowRange> self_blocks,
                          std::vector<RowRange> other_blocks, bool uniform = false);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  std::size_t refined = 0;
};

/// Compares analytic gradients of the scalar built by `f` against
/// fourth-order central differences, coordinate by coordinate over `params`.
/// Each coordinate compares the estimates at h and h / 2 starting from
/// h = `step`; when they disagree by more than 1e-3 (relative, same floor)
/// h shrinks tenfold, at most twice. `refined` counts such coordinates.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Var(Tape&)>& f,
                           std::span<Parameter* const> params, double step = 1e-6,
                           double floor = 1e-6);

}  // namespace psim
