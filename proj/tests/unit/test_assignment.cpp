#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "oracles.hpp"
#include "psim/assignment.hpp"
#include "psim/error.hpp"

using namespace psim;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_permutation(const Assignment& a, Eigen::Index n) {
  REQUIRE(a.row_to_col.size() == static_cast<std::size_t>(n));
  std::vector<int> hits(static_cast<std::size_t>(n), 0);
  for (int c : a.row_to_col) {
    REQUIRE(c >= 0);
    REQUIRE(c < n);
    ++hits[static_cast<std::size_t>(c)];
  }
  for (int h : hits) CHECK(h == 1);
}

double cost_of(const Eigen::MatrixXd& c, const Assignment& a) {
  double s = 0;
  for (std::size_t i = 0; i < a.row_to_col.size(); ++i) s += c(static_cast<Eigen::Index>(i), a.row_to_col[i]);
  return s;
}

}  // namespace

TEST_CASE("known small instances") {
  Eigen::MatrixXd c(3, 3);
  c << 4, 1, 3,
       2, 0, 5,
       3, 2, 2;
  for (auto solver : {AssignmentSolver::kHungarian, AssignmentSolver::kJonkerVolgenant}) {
    const auto a = solve_assignment(c, solver);
    check_permutation(a, 3);
    CHECK(a.cost == doctest::Approx(5.0));
    CHECK(cost_of(c, a) == doctest::Approx(a.cost));
  }
  const Eigen::MatrixXd one = Eigen::MatrixXd::Constant(1, 1, 7.0);
  CHECK(solve_hungarian(one).cost == 7.0);
  CHECK(solve_jonker_volgenant(one).cost == 7.0);
  const Eigen::MatrixXd empty(0, 0);
  CHECK(solve_hungarian(empty).row_to_col.empty());
  CHECK(solve_jonker_volgenant(empty).row_to_col.empty());
}

TEST_CASE("forbidden entries are avoided") {
  Eigen::MatrixXd c(3, 3);
  c << 1, kInf, kInf,
       kInf, 1, kInf,
       0, 0, 5;
  for (auto solver : {AssignmentSolver::kHungarian, AssignmentSolver::kJonkerVolgenant}) {
    const auto a = solve_assignment(c, solver);
    CHECK(a.row_to_col == std::vector<int>{0, 1, 2});
    CHECK(a.cost == doctest::Approx(7.0));
  }
}

TEST_CASE("invalid matrices are rejected") {
  const Eigen::MatrixXd rect(2, 3);
  CHECK_THROWS_AS(solve_hungarian(rect), ArgumentError);
  CHECK_THROWS_AS(solve_jonker_volgenant(rect), ArgumentError);
  Eigen::MatrixXd nan = Eigen::MatrixXd::Zero(2, 2);
  nan(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solve_hungarian(nan), ArgumentError);
  Eigen::MatrixXd neg_inf = Eigen::MatrixXd::Zero(2, 2);
  neg_inf(1, 1) = -kInf;
  CHECK_THROWS_AS(solve_jonker_volgenant(neg_inf), ArgumentError);
}

TEST_CASE("both solvers reach the enumerated optimum on random matrices") {
  Rng rng(42);
  std::uniform_int_distribution<int> size(1, 7);
  std::uniform_int_distribution<int> value(0, 9);  // small range forces ties
  std::bernoulli_distribution forbid(0.15);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size(rng);
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) c(i, j) = value(rng);
    }
    // Forbid some entries but keep the diagonal feasible.
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j && forbid(rng)) c(i, j) = kInf;
      }
    }
    const double best = oracle::brute_force_assignment(c);
    for (auto solver : {AssignmentSolver::kHungarian, AssignmentSolver::kJonkerVolgenant}) {
      const auto a = solve_assignment(c, solver);
      check_permutation(a, n);
      CHECK(a.cost == doctest::Approx(best));
      CHECK(cost_of(c, a) == doctest::Approx(best));
    }
  }
}

TEST_CASE("real-valued random matrices") {
  Rng rng(7);
  std::uniform_real_distribution<double> value(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 7;
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) c(i, j) = value(rng);
    }
    const double best = oracle::brute_force_assignment(c);
    CHECK(solve_hungarian(c).cost == doctest::Approx(best).epsilon(1e-12));
    CHECK(solve_jonker_volgenant(c).cost == doctest::Approx(best).epsilon(1e-12));
  }
}
