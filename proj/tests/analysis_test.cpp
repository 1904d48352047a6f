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

#include <cmath>

#include "test_util.hpp"

namespace tpmhe {
namespace {

EstimateSequence truth_sequence(const DataBatch& d) {
  EstimateSequence e;
  for (TimeIndex t = d.t0; t <= d.t_end(); ++t) e.estimates[t] = d.x_true(t);
  return e;
}

TEST(Performance, TruthTrajectoryCostIsNoiseEnergy) {
  const auto setup = default_setup("cstr", 80);
  const DataBatch d = setup.run(6);
  const CostSpec c = default_cost(setup.model);
  double expected = 0.0;
  for (TimeIndex t = 10; t < 70; ++t)
    expected += weighted_sq_norm(d.w_true(t), c.Q()) + weighted_sq_norm(d.v_true(t), c.R());
  EXPECT_NEAR(performance(setup.model, d, c, truth_sequence(d), 10, 70), expected, 1e-8 * expected);
}

TEST(Performance, IsAdditiveOverAdjacentIntervals) {
  const auto setup = default_setup("reactor", 100);
  const DataBatch d = setup.run(2);
  const CostSpec c = default_cost(setup.model);
  const auto est = mhe(setup.model, d, c, 20);
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const TimeIndex a = static_cast<TimeIndex>(rng.uniform(0.0, 30.0));
    const TimeIndex b = a + static_cast<TimeIndex>(rng.uniform(0.0, 30.0));
    const TimeIndex e = b + static_cast<TimeIndex>(rng.uniform(0.0, 30.0));
    const double whole = performance(setup.model, d, c, est, a, e);
    const double parts = performance(setup.model, d, c, est, a, b) + performance(setup.model, d, c, est, b, e);
    EXPECT_NEAR(whole, parts, 1e-12 * (1.0 + whole));
  }
  EXPECT_EQ(performance(setup.model, d, c, est, 40, 40), 0.0);
  EXPECT_THROW(performance(setup.model, d, c, est, 50, 40), ValidationError);
}

TEST(Performance, HorizonSolutionAndPublishedStatesAgree) {
  // For additive models the published states determine the disturbances.
  const auto lc = testing::lti_case(3, 1, 2, 5, 40);
  const auto b = ihe_clairvoyant(lc.model, lc.data, lc.cost);
  const double js = performance(lc.model, lc.data, lc.cost, b.solution, 0, 40);
  const double je = performance(lc.model, lc.data, lc.cost, b.estimates, 0, 40);
  EXPECT_NEAR(js, je, 1e-9 * js);
  // J plus the terminal output term is the full-window optimal cost.
  const double term = weighted_sq_norm(lc.data.y(40) - lc.model.output(b.estimates.at(40), lc.data.u(40)), lc.cost.G());
  EXPECT_NEAR(js + term, b.solution.cost, 1e-9 * b.solution.cost);
}

TEST(Regret, BenchmarkAgainstItselfIsZero) {
  const auto lc = testing::lti_case(3, 1, 2, 5, 40);
  const auto b = ihe_clairvoyant(lc.model, lc.data, lc.cost);
  EXPECT_EQ(regret(lc.model, lc.data, lc.cost, b.estimates, b.estimates, 0, 40), 0.0);
  // The full-window solution minimizes J plus the terminal output term, so
  // regret corrected by the terminal terms is nonnegative for any sequence.
  const auto kf = kalman_filter(lc.model, lc.data, spd_inverse(lc.cost.Q()), spd_inverse(lc.cost.R()),
                                Vec::Zero(3), Mat::Identity(3, 3));
  const double r = regret(lc.model, lc.data, lc.cost, kf.estimates, b.estimates, 0, 40);
  const double tk = weighted_sq_norm(lc.data.y(40) - lc.model.output(kf.estimates.at(40), lc.data.u(40)), lc.cost.G());
  const double tb = weighted_sq_norm(lc.data.y(40) - lc.model.output(b.estimates.at(40), lc.data.u(40)), lc.cost.G());
  EXPECT_GE(r + tk - tb, -1e-9);
}

TEST(Sse, MatchesDirectSum) {
  const auto setup = default_setup("reactor", 30);
  const DataBatch d = setup.run(1);
  EstimateSequence e;
  double expected = 0.0;
  for (TimeIndex t = 0; t <= 30; ++t) {
    e.estimates[t] = d.x_true(t) + Vec::Constant(2, 0.1 * static_cast<double>(t % 3));
    if (t >= 5 && t <= 20) expected += 2.0 * std::pow(0.1 * static_cast<double>(t % 3), 2);
  }
  EXPECT_NEAR(sse(e, d, 5, 20), expected, 1e-14);
  EXPECT_EQ(sse(truth_sequence(d), d), 0.0);
  EXPECT_THROW(sse(e, d, 20, 5), ValidationError);
}

TEST(Envelope, RecoversExactExponentials) {
  for (double K : {0.3, 1.0, 7.5})
    for (double lam : {0.2, 0.5, 0.9}) {
      std::vector<std::pair<double, double>> pts;
      for (int d = 0; d < 12; ++d) pts.emplace_back(d, K * std::pow(lam, d));
      const auto fit = fit_exponential_envelope(pts);
      ASSERT_TRUE(fit.ok);
      EXPECT_NEAR(fit.K, K, 1e-10 * K);
      EXPECT_NEAR(fit.lambda, lam, 1e-12);
      EXPECT_LT(fit.residual, 1e-12);
    }
}

TEST(Envelope, ScaleEquivariance) {
  Rng rng(3);
  std::vector<std::pair<double, double>> pts;
  for (int d = 0; d < 15; ++d) pts.emplace_back(d, 0.8 * std::pow(0.6, d) * (1.0 + 0.2 * rng.uniform()));
  const auto base = fit_exponential_envelope(pts);
  for (double c : {1e-3, 2.0, 1e4}) {
    auto scaled = pts;
    for (auto& p : scaled) p.second *= c;
    const auto fit = fit_exponential_envelope(scaled);
    EXPECT_NEAR(fit.lambda, base.lambda, 1e-12);
    EXPECT_NEAR(fit.K, c * base.K, 1e-10 * c * base.K);
  }
}

TEST(Envelope, DegenerateInputsFail) {
  EXPECT_FALSE(fit_exponential_envelope({{1.0, 0.5}}).ok);
  EXPECT_FALSE(fit_exponential_envelope({{1.0, 0.5}, {1.0, 0.4}}).ok);
  EXPECT_FALSE(fit_exponential_envelope({{0.0, 1e-14}, {3.0, 1e-15}}).ok);
  EXPECT_FALSE(fit_exponential_envelope({{0.0, 0.1}, {3.0, 0.5}}).ok);  // growing
}

TEST(TurnpikeProfile, ScalarWindowsShowTwoArcs) {
  const SystemModel m = scalar_integrator();
  const CostSpec c = unit_cost_1d();
  const auto bench = scalar_example_benchmark(30, 1e-10);
  const DataBatch d = scalar_example_data(0, 30);
  std::vector<HorizonSolution> wins;
  for (TimeIndex tau = 0; tau + 20 <= 30; tau += 5)
    wins.push_back(solve_horizon(testing::make_problem(m, d, c, tau, 20)));
  const auto prof = turnpike_profile(wins, bench.solution, 20, 1e-3);
  ASSERT_EQ(prof.state_dev.size(), wins.size());
  for (std::size_t w = 0; w < wins.size(); ++w) {
    const auto& dv = prof.state_dev[w];
    EXPECT_GT(dv.front(), 1e-2);
    EXPECT_GT(dv.back(), 1e-2);
    EXPECT_LT(dv[10], 1e-3);
    EXPECT_GT(prof.approach[w], 0);
    EXPECT_LT(prof.leave[w], 20);
    // Approach arc decays monotonically into the interior.
    for (int j = 0; j + 1 <= prof.approach[w]; ++j) EXPECT_GT(dv[static_cast<std::size_t>(j)], dv[static_cast<std::size_t>(j + 1)]);
  }
  // Stationary filter variance Sigma = phi (golden ratio) gives the error
  // contraction 1 - K = 1 / (1 + phi) per step away from a boundary.
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double lam = 1.0 / (1.0 + phi);
  for (const auto& dv : prof.state_dev) {
    EXPECT_NEAR(dv[2] / dv[1], lam, 1e-6);
    EXPECT_NEAR(dv[18] / dv[19], lam, 1e-6);
  }
  const auto fit = fit_exponential_envelope(prof);
  EXPECT_TRUE(fit.ok);
  EXPECT_NEAR(fit.lambda, lam, 0.02);
  // Published-state overload agrees on the state deviations.
  const auto prof2 = turnpike_profile(wins, bench.estimates, 20, 1e-3);
  for (std::size_t w = 0; w < wins.size(); ++w)
    for (int j = 0; j <= 20; ++j)
      EXPECT_NEAR(prof2.state_dev[w][static_cast<std::size_t>(j)], prof.state_dev[w][static_cast<std::size_t>(j)], 1e-15);
}

TEST(AccuracyBound, ScalarCertificateSatisfiesDissipation) {
  // U(e) = e^2 for the integrator: (e + dw)^2 <= 0.5 e^2 + 2 dw^2 + 2 dh^2
  // with dh = e, since (e + dw)^2 <= 2 e^2 + 2 dw^2.
  Rng rng(9);
  for (int k = 0; k < 10000; ++k) {
    const double e = rng.symmetric(10.0), dw = rng.symmetric(10.0);
    EXPECT_LE((e + dw) * (e + dw), 0.5 * e * e + 2.0 * dw * dw + 2.0 * e * e + 1e-12);
  }
}

TEST(AccuracyBound, ConstantsAndHoldsForFie) {
  const Mat I = Mat::Identity(1, 1);
  const IossCertificate cert(I, I, 2.0 * I, 2.0 * I, 0.5);
  auto setup = default_setup("scalar", 40);
  setup.noise.w_offset.resize(0);
  setup.noise.v_offset.resize(0);
  setup.noise.w_bounds = Vec::Constant(1, 0.2);
  setup.noise.v_bounds = Vec::Constant(1, 0.3);
  const DataBatch d = setup.run(4);
  const CostSpec c = unit_cost_1d();
  const auto est = fie(setup.model, d, c);
  const auto z = reconstruct(setup.model, d, est, 0, 40);
  for (TimeIndex tau = 0; tau <= 40; ++tau) {
    const auto b = accuracy_bound(cert, setup.model, d, z, 0, 40, tau);
    EXPECT_DOUBLE_EQ(b.C1, 1.0);
    EXPECT_DOUBLE_EQ(b.C2, 16.0);
    EXPECT_DOUBLE_EQ(b.C3, 2.0);
    EXPECT_TRUE(b.holds()) << "tau=" << tau << " lhs=" << b.lhs << " rhs=" << b.rhs;
  }
  EXPECT_THROW(accuracy_bound(cert, setup.model, d, z, 0, 40, 41), ValidationError);
}

TEST(Statistics, QuantilesMatchHandValues) {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(median(v), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({5.0}, 0.3), 5.0);
  EXPECT_THROW(quantile({}, 0.5), ValidationError);
}

TEST(Reconstruct, RequiresAdditiveModelsAndCoverage) {
  SystemModel m = scalar_integrator();
  const DataBatch d = scalar_example_data(0, 5);
  EstimateSequence e;
  for (TimeIndex t = 0; t <= 3; ++t) e.estimates[t] = Vec::Constant(1, 1.0 + static_cast<double>(t));
  EXPECT_THROW(reconstruct(m, d, e, 0, 5), ValidationError);
  const auto z = reconstruct(m, d, e, 0, 3);
  EXPECT_EQ(z.w(2)(0), 1.0);
  m.additive_disturbance = false;
  EXPECT_THROW(reconstruct(m, d, e, 0, 3), UnsupportedError);
}

}  // namespace
}  // namespace tpmhe
