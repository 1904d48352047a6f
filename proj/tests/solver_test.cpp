// Copyright 2026 The tpmhe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <limits>

#include "test_util.hpp"

namespace tpmhe {
namespace {

using testing::dense_linear_oracle;
using testing::lm_options;
using testing::make_problem;
using testing::max_state_diff;

TEST(BlockTridiagonal, MatchesDenseSolve) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t K = 2 + static_cast<std::size_t>(trial);
    const Eigen::Index b = 1 + trial % 4;
    BlockTridiagonal H(K, b);
    for (std::size_t k = 0; k < K; ++k) {
      const Mat G = rng.normal_mat(b, b);
      H.diag[k] = G * G.transpose() + 4.0 * static_cast<double>(b) * Mat::Identity(b, b);
      if (k + 1 < K) H.upper[k] = rng.normal_mat(b, b);
    }
    const Vec rhs = rng.normal_vec(static_cast<Eigen::Index>(K) * b);
    Vec x;
    ASSERT_TRUE(solve_block_tridiagonal(H, 0.5, rhs, x));
    const Mat D = H.to_dense() + 0.5 * Mat::Identity(rhs.size(), rhs.size());
    const Vec ref = D.llt().solve(rhs);
    EXPECT_LT((x - ref).norm(), 1e-10 * (1.0 + ref.norm()));
    EXPECT_LT((H.multiply(ref) + 0.5 * ref - rhs).norm(), 1e-9 * (1.0 + rhs.norm()));
  }
}

TEST(BlockTridiagonal, ReportsIndefiniteMatrix) {
  BlockTridiagonal H(2, 1);
  H.diag[0] = Mat::Constant(1, 1, 1.0);
  H.diag[1] = Mat::Constant(1, 1, 1.0);
  H.upper[0] = Mat::Constant(1, 1, 2.0);
  Vec x;
  EXPECT_FALSE(solve_block_tridiagonal(H, 0.0, Vec::Ones(2), x));
}

TEST(Solver, ScalarWindowMatchesDenseOracle) {
  const SystemModel m = scalar_integrator();
  const DataBatch d = scalar_example_data(0, 30);
  const CostSpec c = unit_cost_1d();
  for (int N : {0, 1, 5, 16, 30}) {
    const auto ref = dense_linear_oracle(m, d, c, 0, N);
    const auto exact = solve_linear_horizon(make_problem(m, d, c, 0, N));
    const auto lm = solve_horizon(make_problem(m, d, c, 0, N, lm_options()));
    EXPECT_LT(max_state_diff(exact.xs, ref), 1e-10) << "N=" << N;
    EXPECT_LT(max_state_diff(lm.xs, ref), 1e-7) << "N=" << N;
    EXPECT_EQ(exact.stats.termination, Termination::kExact);
  }
}

TEST(Solver, LinearPathsAgreeWithOracleWithPrior) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto lc = testing::lti_case(4, 2, 2, seed, 40);
    Rng rng(seed);
    Prior pr{rng.normal_vec(4), 2.0 * Mat::Identity(4, 4)};
    auto P = make_problem(lc.model, lc.data, lc.cost, 5, 25);
    P.prior = pr;
    const auto ref = dense_linear_oracle(lc.model, lc.data, lc.cost, 5, 25, pr);
    const auto exact = solve_linear_horizon(P);
    P.options = lm_options();
    const auto lm = solve_horizon(P);
    P.options.force_condensed = true;
    const auto cond = solve_horizon(P);
    const double scale = 1.0;
    EXPECT_LT(max_state_diff(exact.xs, ref), 1e-9 * scale);
    EXPECT_LT(max_state_diff(lm.xs, ref), 1e-6);
    EXPECT_LT(max_state_diff(cond.xs, ref), 1e-6);
    EXPECT_NEAR(lm.cost, exact.cost, 1e-8 * exact.cost);
    EXPECT_NEAR(horizon_cost(P, exact.xs, exact.ws), exact.cost, 1e-12 * exact.cost);
  }
}

TEST(Solver, NonlinearSolutionIsLocallyOptimal) {
  const auto setup = default_setup("reactor", 60);
  const DataBatch d = setup.run(2);
  const CostSpec c = default_cost(setup.model);
  const auto P = make_problem(setup.model, d, c, 10, 40, lm_options());
  const auto sol = solve_horizon(P);
  EXPECT_NE(sol.stats.termination, Termination::kMaxIterations);
  // Not worse than the true trajectory.
  std::vector<Vec> tw(d.truth->w.begin() + 10, d.truth->w.begin() + 50);
  const auto txs = rollout(setup.model, d, 10, d.x_true(10), tw);
  EXPECT_LE(sol.cost, horizon_cost(P, txs, tw));
  // Random feasible perturbations do not decrease the cost.
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    Vec x0 = sol.xs[0] + 1e-4 * rng.normal_vec(2);
    std::vector<Vec> ws = sol.ws;
    for (auto& w : ws) w += 1e-4 * rng.normal_vec(2);
    EXPECT_GE(horizon_cost(P, rollout(setup.model, d, 10, x0, ws), ws), sol.cost - 1e-10 * sol.cost);
  }
  // Lifted and condensed parametrizations agree.
  auto Pc = P;
  Pc.options.force_condensed = true;
  const auto solc = solve_horizon(Pc);
  EXPECT_LT(max_state_diff(sol.xs, solc.xs), 1e-6);
}

TEST(Solver, WarmStartAtOptimumConvergesImmediately) {
  const auto setup = default_setup("cstr", 40);
  const DataBatch d = setup.run(3);
  const CostSpec c = default_cost(setup.model);
  auto P = make_problem(setup.model, d, c, 0, 20);
  P.prior = Prior{setup.x0, 1e-2 * Mat::Identity(3, 3)};
  const auto sol = solve_horizon(P);
  const auto again = solve_horizon(P, WarmStart{sol.xs[0], sol.ws});
  EXPECT_LE(again.stats.iterations, 1);
  EXPECT_LT(max_state_diff(sol.xs, again.xs), 1e-8 * 400.0);
}

TEST(Solver, BoxConstraintsAreEnforcedByPenalty) {
  SystemModel m = scalar_integrator();
  m.W = Box::symmetric(Vec::Constant(1, 0.5));
  const DataBatch d = scalar_example_data(0, 20);
  const CostSpec c = unit_cost_1d();
  // Quadratic penalty: the violation scales like multiplier / (2 mu).
  SolverOptions o;
  o.penalty_mu = 1e4;
  const auto coarse = solve_horizon(make_problem(m, d, c, 0, 20, o));
  o.penalty_mu = 1e6;
  const auto fine = solve_horizon(make_problem(m, d, c, 0, 20, o));
  EXPECT_GT(coarse.stats.max_violation, 0.0);
  EXPECT_NEAR(fine.stats.max_violation / coarse.stats.max_violation, 1e-2, 2e-3);
  EXPECT_LT(fine.stats.max_violation, 1e-4);
  for (const auto& w : fine.ws) EXPECT_LE(std::abs(w(0)), 0.5 + fine.stats.max_violation + 1e-15);
  EXPECT_THROW(solve_linear_horizon(make_problem(m, d, c, 0, 20)), UnsupportedError);
}

TEST(Solver, ValidatesProblems) {
  const SystemModel m = scalar_integrator();
  const DataBatch d = scalar_example_data(0, 10);
  const CostSpec c = unit_cost_1d();
  EXPECT_THROW(solve_horizon(make_problem(m, d, c, 5, 10)), ValidationError);
  EXPECT_THROW(solve_horizon(make_problem(m, d, c, 0, -1)), ValidationError);
  auto P = make_problem(m, d, c, 0, 5);
  P.prior = Prior{Vec::Zero(2), Mat::Identity(2, 2)};
  EXPECT_THROW(solve_horizon(P), ValidationError);
  P.prior = Prior{Vec::Zero(1), Mat::Zero(1, 1)};
  EXPECT_THROW(solve_horizon(P), ValidationError);
  const CostSpec wrong = CostSpec::diagonal(Vec::Ones(2), Vec::Ones(1), Vec::Ones(1));
  EXPECT_THROW(solve_horizon(make_problem(m, d, wrong, 0, 5)), ValidationError);
  EXPECT_THROW(solve_horizon(make_problem(m, d, c, 0, 5), WarmStart{Vec::Zero(1), {}}), ValidationError);
}

TEST(Solver, NonFiniteDataRaisesSolverError) {
  const auto setup = default_setup("cstr", 20);
  DataBatch d = setup.run(1);
  d.outputs[4](0) = std::numeric_limits<double>::quiet_NaN();
  const CostSpec c = default_cost(setup.model);
  try {
    solve_horizon(make_problem(setup.model, d, c, 0, 10));
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverError::Kind::kDiverged);
  }
}

TEST(Solver, UnobservableLinearWindowIsSingular) {
  // C = 0 and no prior: x_0 is not determined by the data.
  const SystemModel m = linear_model("blind", Mat::Identity(1, 1), Mat::Zero(1, 0), Mat::Zero(1, 1));
  DataBatch d = scalar_example_data(0, 5);
  const CostSpec c = unit_cost_1d();
  SolverOptions o;
  o.method = SolveMethod::kExactLinear;
  try {
    solve_horizon(make_problem(m, d, c, 0, 5, o));
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverError::Kind::kSingular);
  }
}

TEST(SolverOptions, JsonRoundTrip) {
  SolverOptions o;
  o.max_iters = 7;
  o.grad_tol = 1e-6;
  o.method = SolveMethod::kLevenbergMarquardt;
  o.force_condensed = true;
  const SolverOptions b = SolverOptions::from_json(o.to_json());
  EXPECT_EQ(b.to_json(), o.to_json());
  EXPECT_THROW(SolverOptions::from_json(Json{{"method", "newton"}}), ValidationError);
}

}  // namespace
}  // namespace tpmhe
