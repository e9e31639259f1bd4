#pragma once

// Every differentiable primitive wrapped as a scalar function of random
// parameters, for finite-difference audits.

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "psim/graph.hpp"
#include "psim/random.hpp"
#include "psim/tensor.hpp"

namespace opcat {

using psim::Matrix;
using psim::Tape;
using psim::Var;

struct OpCase {
  std::string name;
  std::vector<std::pair<int, int>> shapes;
  std::function<Var(Tape&, const std::vector<Var>&)> build;
};

inline Matrix random_matrix(int rows, int cols, psim::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Operations at shapes drawn from `rng`, so repeated calls vary the sizes.
inline std::vector<OpCase> catalog(psim::Rng& rng) {
  std::uniform_int_distribution<int> dim(1, 5);
  const int n = dim(rng) + 1, c = dim(rng), d = dim(rng);
  const psim::Graph g("g", static_cast<std::size_t>(n),
                      n > 2 ? std::vector<psim::Edge>{{0, 1}, {1, 2}, {0, n - 1}}
                            : std::vector<psim::Edge>{{0, 1}});
  std::vector<int> gather_index;
  for (int i = 0; i < n + 2; ++i) gather_index.push_back(static_cast<int>(psim::uniform_index(rng, n)));
  std::vector<int> scatter_index;
  for (int i = 0; i < n; ++i) scatter_index.push_back(static_cast<int>(psim::uniform_index(rng, 3)));
  std::vector<int> order(static_cast<std::size_t>(c));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> flat;
  for (int i = 0; i < 6; ++i) flat.push_back(static_cast<int>(psim::uniform_index(rng, n * c)));

  std::vector<OpCase> ops;
  ops.push_back({"matmul", {{n, c}, {c, d}}, [](Tape&, auto& v) { return psim::matmul(v[0], v[1]); }});
  ops.push_back({"transpose", {{n, c}}, [](Tape&, auto& v) { return psim::transpose(v[0]); }});
  ops.push_back({"add", {{n, c}, {n, c}}, [](Tape&, auto& v) { return psim::add(v[0], v[1]); }});
  ops.push_back({"sub", {{n, c}, {n, c}}, [](Tape&, auto& v) { return psim::sub(v[0], v[1]); }});
  ops.push_back({"mul", {{n, c}, {n, c}}, [](Tape&, auto& v) { return psim::mul(v[0], v[1]); }});
  ops.push_back({"add_row", {{n, c}, {1, c}}, [](Tape&, auto& v) { return psim::add_row(v[0], v[1]); }});
  ops.push_back({"scale", {{n, c}, {1, 1}}, [](Tape&, auto& v) { return psim::scale(v[0], v[1]); }});
  ops.push_back({"scale_const", {{n, c}}, [](Tape&, auto& v) { return psim::scale(v[0], -1.7); }});
  ops.push_back({"concat_cols", {{n, c}, {n, d}, {n, 1}},
                 [](Tape&, auto& v) { return psim::concat_cols({v[0], v[1], v[2]}); }});
  ops.push_back({"row_sum", {{n, c}}, [](Tape&, auto& v) { return psim::row_sum(v[0]); }});
  ops.push_back({"row_mean", {{n, c}}, [](Tape&, auto& v) { return psim::row_mean(v[0]); }});
  ops.push_back({"sum", {{n, c}}, [](Tape&, auto& v) { return psim::sum(v[0]); }});
  ops.push_back({"tanh", {{n, c}}, [](Tape&, auto& v) { return psim::tanh(v[0]); }});
  ops.push_back({"logistic", {{n, c}}, [](Tape&, auto& v) { return psim::logistic(v[0]); }});
  ops.push_back({"prelu", {{n, c}, {1, 1}}, [](Tape&, auto& v) { return psim::prelu(v[0], v[1]); }});
  ops.push_back({"row_softmax", {{n, c}}, [](Tape&, auto& v) { return psim::row_softmax(v[0]); }});
  ops.push_back({"dot", {{1, c}, {1, c}}, [](Tape&, auto& v) { return psim::dot(v[0], v[1]); }});
  ops.push_back({"l2_norm", {{n, c}}, [](Tape&, auto& v) { return psim::l2_norm(v[0]); }});
  // Width >= 2: the cosine of two scalars is a constant sign.
  ops.push_back({"cosine", {{1, c + 1}, {1, c + 1}}, [](Tape&, auto& v) { return psim::cosine(v[0], v[1]); }});
  ops.push_back({"gather_rows", {{n, c}},
                 [gather_index](Tape&, auto& v) { return psim::gather_rows(v[0], gather_index); }});
  ops.push_back({"scatter_add_rows", {{n, c}},
                 [scatter_index](Tape&, auto& v) { return psim::scatter_add_rows(v[0], scatter_index, 3); }});
  ops.push_back({"neighbor_sum", {{n, c}}, [g](Tape&, auto& v) { return psim::neighbor_sum(v[0], g); }});
  ops.push_back({"permute_cols", {{1, c}}, [order](Tape&, auto& v) { return psim::permute_cols(v[0], order); }});
  ops.push_back({"slice_rows", {{n, c}}, [n](Tape&, auto& v) { return psim::slice_rows(v[0], 1, n - 1); }});
  ops.push_back({"gather_flat", {{n, c}},
                 [flat](Tape&, auto& v) { return psim::gather_flat(v[0], 2, 3, flat); }});
  ops.push_back({"mul_col", {{n, c}, {n, 1}}, [](Tape&, auto& v) { return psim::mul_col(v[0], v[1]); }});
  ops.push_back({"row_dot", {{n, c}, {n, c}}, [](Tape&, auto& v) { return psim::row_dot(v[0], v[1]); }});
  ops.push_back({"cosine_rows", {{n, c + 1}, {n, c + 1}}, [](Tape&, auto& v) { return psim::cosine_rows(v[0], v[1]); }});
  for (bool uniform : {false, true}) {
    ops.push_back({uniform ? "block_cross_attention_uniform" : "block_cross_attention",
                   {{n + 2, c}, {n + 1, c}},
                   [n, uniform](Tape&, auto& v) {
                     std::vector<psim::RowRange> self{{0, 2}, {2, n}};
                     std::vector<psim::RowRange> other{{0, n}, {n, 1}};
                     return psim::block_cross_attention(v[0], v[1], self, other, uniform);
                   }});
  }
  return ops;
}

/// Finite-difference check of sum(op(inputs) * W) for a fixed random W.
inline psim::GradCheckReport check_op(const OpCase& op, psim::Rng& rng, double step = 1e-5,
                                      double floor = 1e-6) {
  psim::ParameterSet params;
  for (std::size_t i = 0; i < op.shapes.size(); ++i) {
    const auto [r, c] = op.shapes[i];
    params.add("in" + std::to_string(i), random_matrix(r, c, rng));
  }
  std::vector<Var> probe;
  Tape shape_tape(false);
  for (auto* p : params.all()) probe.push_back(shape_tape.parameter(*p));
  const Var shape = op.build(shape_tape, probe);
  const Matrix weights = random_matrix(static_cast<int>(shape.rows()), static_cast<int>(shape.cols()), rng);
  auto f = [&](Tape& tape) {
    std::vector<Var> inputs;
    for (auto* p : params.all()) inputs.push_back(tape.parameter(*p));
    return psim::sum(psim::mul(op.build(tape, inputs), tape.constant(weights)));
  };
  const auto all = params.all();
  return psim::grad_check(f, all, step, floor);
}

}  // namespace opcat
